//! Defocus balancing of spherical aberration, then descent on the spot size
//! from an unbalanced start.

use causticlab::corrector::{balance_high_order, balance_primary, optimize_caustic, CorrectionConfig};
use causticlab::wavefront::{rms_spot, Term, WavefrontSpec};

fn main() -> causticlab::error::Result<()> {
    let b = balance_primary(1.0);
    println!("printed relation a20 = {:.6}", b.printed[0]);
    println!("spot minimizer   a20 = {:.6}", b.oracle[0]);
    for a20 in [b.printed[0], b.oracle[0]] {
        let w = WavefrontSpec::monomial(vec![Term::radial(4, 1.0), Term::radial(2, a20)])?;
        let m = rms_spot(&w)?;
        println!("  a20 = {a20:+.4}: sigma^2 closed {:.6}, quadrature {:.6}", m.sigma2_closed, m.sigma2_quadrature);
    }
    println!("balancing a60 against [a20, a40] = [0, 1]: {:.4}", balance_high_order(&[0.0, 1.0])?);

    let w0 = WavefrontSpec::monomial(vec![Term::radial(4, 1.0), Term::radial(2, 0.0)])?;
    let cfg = CorrectionConfig { learning_rate: 0.02, frozen: vec![0], ..Default::default() };
    let trace = optimize_caustic(&w0, &cfg, |w| Ok(rms_spot(w)?.sigma2_quadrature))?;
    let last = trace.last();
    println!("descent: {} iterates, a20 -> {:.8}, J = {:.8}", trace.iterates.len(), last.c[1], last.objective);
    Ok(())
}
