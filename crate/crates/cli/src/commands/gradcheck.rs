//! The gradcheck command: the finite-difference suite as an exit-coded
//! verification tool.

use dmf_core::gradcheck::{run_gradcheck, GradCheckConfig};
use dmf_core::Result;

use crate::args::GradcheckArgs;

pub fn run(args: &GradcheckArgs) -> Result<i32> {
    let config = GradCheckConfig {
        seeds: args.seeds,
        inject_sign_flip: args.inject_sign_flip,
        ..Default::default()
    };
    let report = run_gradcheck(&config)?;
    println!(
        "{} parameter derivatives checked across {} random topologies per scheme",
        report.checks, args.seeds
    );
    println!("{:<44} {:>12}  worst deviation", "weight family", "rel error");
    for f in &report.families {
        println!(
            "{:<44} {:>12.3e}  {}[{},{}] analytic={:.6e} fd={:.6e}",
            f.family, f.rel_err, f.matrix, f.row, f.col, f.analytic, f.fd
        );
    }
    if report.passed() {
        println!("gradcheck: PASS (worst relative error within {:.0e})", report.tolerance);
        Ok(0)
    } else {
        let worst = report.worst().expect("failing report has families");
        println!(
            "gradcheck: FAIL family {} at {}[{},{}] rel error {:.3e} (analytic {:.6e}, fd {:.6e})",
            worst.family, worst.matrix, worst.row, worst.col, worst.rel_err, worst.analytic, worst.fd
        );
        Ok(4)
    }
}
