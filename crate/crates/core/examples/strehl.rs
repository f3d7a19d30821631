//! Strehl ratio of spherical aberration against quadrature order, with the
//! Maréchal approximation for comparison.

use causticlab::wavefront::{pupil_variance, strehl, Term, WavefrontSpec};
use std::f64::consts::PI;

fn main() -> causticlab::error::Result<()> {
    let k = 2.0 * PI;
    for a in [0.02, 0.05, 0.1, 0.2] {
        let w = WavefrontSpec::monomial(vec![Term::radial(4, a), Term::radial(2, -a)])?;
        let values: Vec<f64> = [16, 24, 32, 48].iter().map(|&o| strehl(&w, k, o)).collect::<Result<_, _>>()?;
        let marechal = (-(k * k) * pupil_variance(&w, 32)).exp();
        println!("a40 = {a:<5} S = {:.12?}  exp(-k^2 var) = {marechal:.6}", values);
    }
    Ok(())
}
