//! The synth command: write a procedural two-halves digit dataset in
//! the same IDX layout the real files use, for smoke tests and demos
//! on machines without the dataset.

use dmf_core::data::synth;
use dmf_core::Result;

use crate::args::SynthArgs;

pub fn run(args: &SynthArgs) -> Result<()> {
    synth::write_dataset(&args.out, args.train_n, args.test_n, args.seed)?;
    println!(
        "wrote {} train / {} test synthetic digit images to {}",
        args.train_n,
        args.test_n,
        args.out.display()
    );
    Ok(())
}
