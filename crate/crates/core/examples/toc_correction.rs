//! Fingerprint, unfold, descend and refold on a trefoil-dominated
//! wavefront with a barrier on the defocus coordinate.

use causticlab::corrector::{toc_run, Barrier, CorrectionConfig, Stage};
use causticlab::wavefront::{Term, WavefrontSpec};

fn main() -> causticlab::error::Result<()> {
    let w0 = WavefrontSpec::monomial(vec![Term::cos(3, 3, 0.3), Term::radial(2, 0.1), Term::radial(4, 0.05)])?;
    let cfg = CorrectionConfig { barriers: vec![Barrier::coordinate(3, 1, 0.0)], ..Default::default() };
    let trace = toc_run(&w0, &cfg)?;

    println!("label {:?}, modes {:?}", trace.label, trace.modes.iter().map(|m| m.to_string()).collect::<Vec<_>>());
    for stage in [Stage::Fingerprint, Stage::Unfold, Stage::Descend, Stage::Refold] {
        println!("{:<12} {} iterates", stage.to_string(), trace.count(stage));
    }
    let last = trace.last();
    println!("final c = {:.3?}", last.c);
    println!("Strehl {:.12}, injected {}", last.strehl, last.injected);
    Ok(())
}
