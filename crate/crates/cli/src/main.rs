//! Experiment runner for dense multimodal fusion on half-digit images.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data or checkpoint
//! error, 3 numeric abort during a run, 4 gradient verification
//! failure.

mod args;
mod commands;
mod rundir;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use dmf_core::data::load_halves_dir;
use dmf_core::train::EvalModality;

const EXIT_CONFIG: i32 = 1;
const EXIT_DATA: i32 = 2;
const EXIT_RUN: i32 = 3;

fn fail(code: i32, err: impl std::fmt::Display) -> i32 {
    eprintln!("error: {err}");
    code
}

fn main() {
    std::process::exit(dispatch());
}

fn dispatch() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Train(args) => {
            let cfg = match args.flags.resolve() {
                Ok(cfg) => cfg,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            // Data problems surface on load, before any training state
            // exists; split the phases so exit codes stay meaningful.
            let data = match commands::common::load_damaged(
                &cfg.data_dir,
                cfg.train.damage_level,
                cfg.train.seed,
            ) {
                Ok(data) => data,
                Err(e) => return fail(EXIT_DATA, e),
            };
            match commands::train::train_on(&cfg, data) {
                Ok(_) => 0,
                Err(e) => fail(EXIT_RUN, e),
            }
        }
        Command::Eval(args) => {
            let modality: EvalModality = match args.modality.parse() {
                Ok(m) => m,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            if !(0.0..=1.0).contains(&args.damage) {
                return fail(EXIT_CONFIG, format!("damage {} outside [0, 1]", args.damage));
            }
            let params = match dmf_core::fusion::checkpoint::load(&args.checkpoint) {
                Ok(p) => p,
                Err(e) => return fail(EXIT_DATA, e),
            };
            let (_, test_clean) = match load_halves_dir(&args.data_dir) {
                Ok(pair) => pair,
                Err(e) => return fail(EXIT_DATA, e),
            };
            match commands::eval::measure(&params, &test_clean, args.damage, args.seed, modality)
                .and_then(|r| commands::eval::emit(&r, &commands::eval::result_path(&args)))
            {
                Ok(()) => 0,
                Err(e) => fail(EXIT_RUN, e),
            }
        }
        Command::Gradcheck(args) => match commands::gradcheck::run(&args) {
            Ok(code) => code,
            Err(e) => fail(EXIT_RUN, e),
        },
        Command::Sweep(args) => {
            if args.flags.scheme.is_some()
                || args.flags.damage.is_some()
                || args.flags.modality.is_some()
            {
                return fail(
                    EXIT_CONFIG,
                    "sweep spans the full scheme/damage/modality grid; drop those flags",
                );
            }
            let cfg = match args.flags.resolve() {
                Ok(cfg) => cfg,
                Err(e) => return fail(EXIT_CONFIG, e),
            };
            let (train_clean, test_clean) = match load_halves_dir(&cfg.data_dir) {
                Ok(pair) => pair,
                Err(e) => return fail(EXIT_DATA, e),
            };
            match commands::sweep::run(&cfg, args.jobs, &train_clean, &test_clean) {
                Ok(()) => 0,
                Err(e) => fail(EXIT_RUN, e),
            }
        }
        Command::Synth(args) => match commands::synth::run(&args) {
            Ok(()) => 0,
            Err(e) => fail(EXIT_RUN, e),
        },
    }
}
