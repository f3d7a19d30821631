//! Projects a wavefront onto a five-actuator mirror basis and reports the
//! uncorrectable residual. Also prints wrapped DOE phases and the
//! fabrication tolerance bound.

use causticlab::corrector::{doe_phase, dm_project, tolerance_bound, MirrorBasis};
use causticlab::wavefront::{Term, WavefrontSpec};

fn main() -> causticlab::error::Result<()> {
    let modes = [Term::radial(2, 1.0), Term::cos(2, 2, 1.0), Term::sin(2, 2, 1.0), Term::cos(3, 1, 1.0), Term::sin(3, 1, 1.0)];
    let basis = MirrorBasis::normalized_specs(
        modes.iter().map(|t| WavefrontSpec::zernike(vec![*t])).collect::<Result<_, _>>()?,
        16,
    )?;
    let w = WavefrontSpec::zernike(vec![Term::radial(2, 0.4), Term::cos(3, 1, -0.2), Term::cos(3, 3, 0.1)])?;
    let p = dm_project(&w, &basis)?;
    println!("condition {:.3}", p.condition);
    println!("actuators {:.6?}", p.coefficients);
    println!("residual rms {:.6} (trefoil is outside the basis)", p.residual_rms);

    let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64 / 4.0, 0.0)).collect();
    println!("DOE phase at 633 nm: {:.4?}", doe_phase(&w, 633e-6, &pts)?);
    for n in [2, 4, 8] {
        println!("tolerance bound n = {n}: {:.4}", tolerance_bound(n, 0.01)?);
    }
    Ok(())
}
