//! Network topology for the three fusion schemes.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Where the two modality pathways are joined.
///
/// * `Emf` concatenates raw inputs and stacks shared layers on top.
/// * `Imf` runs independent modality pathways joined once at the top.
/// * `Dmf` puts a shared layer at every level, each fusing the
///   same-level modality activations and the previous shared layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionScheme {
    Emf,
    Imf,
    Dmf,
}

impl fmt::Display for FusionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionScheme::Emf => "emf",
            FusionScheme::Imf => "imf",
            FusionScheme::Dmf => "dmf",
        })
    }
}

impl FromStr for FusionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "emf" => Ok(FusionScheme::Emf),
            "imf" => Ok(FusionScheme::Imf),
            "dmf" => Ok(FusionScheme::Dmf),
            other => Err(Error::InvalidConfig(format!(
                "unknown scheme '{other}' (expected emf|imf|dmf)"
            ))),
        }
    }
}

/// Which head sits on the joint representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelVariant {
    /// Softmax regression over the joint representation.
    Discriminative,
    /// Mirrored decoder reconstructing both modalities.
    EncoderDecoder,
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelVariant::Discriminative => "disc",
            ModelVariant::EncoderDecoder => "encdec",
        })
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "disc" => Ok(ModelVariant::Discriminative),
            "encdec" => Ok(ModelVariant::EncoderDecoder),
            other => Err(Error::InvalidConfig(format!(
                "unknown variant '{other}' (expected disc|encdec)"
            ))),
        }
    }
}

/// Layer-size plan for the two modality pathways and the shared pathway.
///
/// `x_sizes`/`y_sizes` include the input width at index 0, so a pathway
/// of length `k` has `k - 1` hidden levels. For DMF there is one shared
/// layer per hidden level (`s_sizes.len() == x_sizes.len() - 1`); IMF
/// fuses once into the last entry of `s_sizes`; EMF has no modality
/// pathways (`x_sizes`/`y_sizes` are input widths only) and `s_sizes`
/// is the whole stack over the concatenated input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusionTopology {
    pub scheme: FusionScheme,
    pub x_sizes: Vec<usize>,
    pub y_sizes: Vec<usize>,
    pub s_sizes: Vec<usize>,
    pub n_classes: usize,
}

impl FusionTopology {
    pub fn new(
        scheme: FusionScheme,
        x_sizes: Vec<usize>,
        y_sizes: Vec<usize>,
        s_sizes: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        let t = FusionTopology { scheme, x_sizes, y_sizes, s_sizes, n_classes };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_sizes.len() != self.y_sizes.len() {
            return Err(Error::InvalidConfig(format!(
                "pathway lengths disagree: x has {}, y has {}",
                self.x_sizes.len(),
                self.y_sizes.len()
            )));
        }
        if self
            .x_sizes
            .iter()
            .chain(&self.y_sizes)
            .chain(&self.s_sizes)
            .any(|&w| w == 0)
        {
            return Err(Error::InvalidConfig("zero-width layer".to_string()));
        }
        if self.s_sizes.is_empty() {
            return Err(Error::InvalidConfig("empty shared pathway".to_string()));
        }
        match self.scheme {
            FusionScheme::Emf => {
                if self.x_sizes.len() != 1 {
                    return Err(Error::InvalidConfig(format!(
                        "EMF has no modality pathways; x_sizes/y_sizes must be input widths only, got length {}",
                        self.x_sizes.len()
                    )));
                }
            }
            FusionScheme::Imf => {
                if self.x_sizes.len() < 2 {
                    return Err(Error::InvalidConfig(
                        "IMF needs at least one modality level (pathway length >= 2)".to_string(),
                    ));
                }
            }
            FusionScheme::Dmf => {
                if self.x_sizes.len() < 2 {
                    return Err(Error::InvalidConfig(
                        "DMF needs at least one modality level (pathway length >= 2)".to_string(),
                    ));
                }
                if self.s_sizes.len() != self.x_sizes.len() - 1 {
                    return Err(Error::InvalidConfig(format!(
                        "DMF needs one shared layer per level: {} levels but {} shared widths",
                        self.x_sizes.len() - 1,
                        self.s_sizes.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of hidden levels in the modality pathways (0 for EMF).
    pub fn levels(&self) -> usize {
        self.x_sizes.len() - 1
    }

    /// Width of the joint representation every scheme exposes on top.
    pub fn joint_width(&self) -> usize {
        *self.s_sizes.last().expect("validated non-empty")
    }

    /// The benchmark topology for half-digit images: unimodal hidden
    /// stacks of 392, 512, 128 units per pathway and a shared pathway of
    /// 512, 256, 64, so the joint representation is 64-wide for every
    /// scheme and the heads are interchangeable.
    pub fn halves_benchmark(scheme: FusionScheme) -> FusionTopology {
        match scheme {
            FusionScheme::Emf => FusionTopology {
                scheme,
                x_sizes: vec![392],
                y_sizes: vec![392],
                s_sizes: vec![512, 256, 64],
                n_classes: 10,
            },
            FusionScheme::Imf => FusionTopology {
                scheme,
                x_sizes: vec![392, 392, 512, 128],
                y_sizes: vec![392, 392, 512, 128],
                s_sizes: vec![64],
                n_classes: 10,
            },
            FusionScheme::Dmf => FusionTopology {
                scheme,
                x_sizes: vec![392, 392, 512, 128],
                y_sizes: vec![392, 392, 512, 128],
                s_sizes: vec![512, 256, 64],
                n_classes: 10,
            },
        }
    }

    /// A reduced topology with the same proportions, for desk-scale runs
    /// and tests that train in seconds instead of minutes.
    pub fn halves_small(scheme: FusionScheme) -> FusionTopology {
        match scheme {
            FusionScheme::Emf => FusionTopology {
                scheme,
                x_sizes: vec![392],
                y_sizes: vec![392],
                s_sizes: vec![96, 48],
                n_classes: 10,
            },
            FusionScheme::Imf => FusionTopology {
                scheme,
                x_sizes: vec![392, 96, 64],
                y_sizes: vec![392, 96, 64],
                s_sizes: vec![48],
                n_classes: 10,
            },
            FusionScheme::Dmf => FusionTopology {
                scheme,
                x_sizes: vec![392, 96, 64],
                y_sizes: vec![392, 96, 64],
                s_sizes: vec![96, 48],
                n_classes: 10,
            },
        }
    }
}
