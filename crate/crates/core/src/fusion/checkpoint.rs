//! Binary checkpoint format.
//!
//! Little-endian throughout: magic "DMF1", then scheme and variant
//! bytes, class count, the three topology lists, a matrix count, and
//! each matrix as (name length, name bytes, rows, cols, row-major f64
//! data). Matrices are stored in the canonical parameter order so a
//! load/save round trip is bitwise exact.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fusion::params::ParamSet;
use crate::fusion::topology::{FusionScheme, FusionTopology, ModelVariant};

const MAGIC: &[u8; 4] = b"DMF1";

fn scheme_byte(scheme: FusionScheme) -> u8 {
    match scheme {
        FusionScheme::Emf => 0,
        FusionScheme::Imf => 1,
        FusionScheme::Dmf => 2,
    }
}

fn scheme_from_byte(b: u8) -> Result<FusionScheme> {
    match b {
        0 => Ok(FusionScheme::Emf),
        1 => Ok(FusionScheme::Imf),
        2 => Ok(FusionScheme::Dmf),
        other => Err(Error::Checkpoint(format!("unknown scheme byte {other}"))),
    }
}

fn variant_byte(variant: ModelVariant) -> u8 {
    match variant {
        ModelVariant::Discriminative => 0,
        ModelVariant::EncoderDecoder => 1,
    }
}

fn variant_from_byte(b: u8) -> Result<ModelVariant> {
    match b {
        0 => Ok(ModelVariant::Discriminative),
        1 => Ok(ModelVariant::EncoderDecoder),
        other => Err(Error::Checkpoint(format!("unknown variant byte {other}"))),
    }
}

fn write_sizes(out: &mut impl Write, sizes: &[usize]) -> Result<()> {
    out.write_all(&(sizes.len() as u32).to_le_bytes())?;
    for &s in sizes {
        out.write_all(&(s as u32).to_le_bytes())?;
    }
    Ok(())
}

pub fn save(params: &ParamSet, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.write_all(MAGIC)?;
    out.write_all(&[scheme_byte(params.topology.scheme), variant_byte(params.variant())])?;
    out.write_all(&(params.topology.n_classes as u32).to_le_bytes())?;
    write_sizes(&mut out, &params.topology.x_sizes)?;
    write_sizes(&mut out, &params.topology.y_sizes)?;
    write_sizes(&mut out, &params.topology.s_sizes)?;
    let matrices = params.matrices();
    out.write_all(&(matrices.len() as u32).to_le_bytes())?;
    for (name, m) in matrices {
        let bytes = name.as_bytes();
        out.write_all(&(bytes.len() as u32).to_le_bytes())?;
        out.write_all(bytes)?;
        out.write_all(&(m.rows() as u32).to_le_bytes())?;
        out.write_all(&(m.cols() as u32).to_le_bytes())?;
        for &v in m.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(std::fs::write(path, out)?)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() < self.pos + n {
            return Err(Error::Checkpoint(format!(
                "truncated at byte {} while reading {what}",
                self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn sizes(&mut self, what: &str) -> Result<Vec<usize>> {
        let n = self.u32(what)? as usize;
        (0..n).map(|_| Ok(self.u32(what)? as usize)).collect()
    }
}

pub fn load(path: &Path) -> Result<ParamSet> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic, not a checkpoint file".to_string()));
    }
    let scheme = scheme_from_byte(r.take(1, "scheme")?[0])?;
    let variant = variant_from_byte(r.take(1, "variant")?[0])?;
    let n_classes = r.u32("n_classes")? as usize;
    let x_sizes = r.sizes("x_sizes")?;
    let y_sizes = r.sizes("y_sizes")?;
    let s_sizes = r.sizes("s_sizes")?;
    let topology = FusionTopology::new(scheme, x_sizes, y_sizes, s_sizes, n_classes)
        .map_err(|e| Error::Checkpoint(format!("invalid topology: {e}")))?;
    let mut params = ParamSet::zeros(&topology, variant)
        .map_err(|e| Error::Checkpoint(format!("cannot shape parameters: {e}")))?;

    let count = r.u32("matrix count")? as usize;
    let expected = params.matrices().len();
    if count != expected {
        return Err(Error::Checkpoint(format!(
            "matrix count {count} does not match topology (expected {expected})"
        )));
    }
    for (name, m) in params.matrices_mut() {
        let name_len = r.u32("name length")? as usize;
        let stored = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| Error::Checkpoint("matrix name is not utf-8".to_string()))?;
        if stored != name {
            return Err(Error::Checkpoint(format!(
                "matrix order mismatch: found '{stored}', expected '{name}'"
            )));
        }
        let rows = r.u32("rows")? as usize;
        let cols = r.u32("cols")? as usize;
        if (rows, cols) != m.shape() {
            return Err(Error::Checkpoint(format!(
                "matrix '{name}' is {rows}x{cols}, expected {}x{}",
                m.shape().0,
                m.shape().1
            )));
        }
        let raw = r.take(rows * cols * 8, "matrix data")?;
        for (v, chunk) in m.data_mut().iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after the last matrix",
            bytes.len() - r.pos
        )));
    }
    Ok(params)
}
