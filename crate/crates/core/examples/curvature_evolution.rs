//! Wavefront curvature along a homogeneous medium: dκ/dz = κ² blows up at
//! z = 1/κ₀, which is the focal point.

use causticlab::caustic::{evolve_curvature, evolve_curvature_partial};
use causticlab::error::Error;

fn main() -> causticlab::error::Result<()> {
    let ev = evolve_curvature(0.5, |_| 0.0, (0.0, 1.9), 19)?;
    for (z, k) in ev.z.iter().zip(&ev.kappa).step_by(3) {
        println!("z = {z:.2}  kappa = {k:.9}  exact = {:.9}", 0.5 / (1.0 - 0.5 * z));
    }

    let ev = evolve_curvature_partial(1.0, |_| 0.0, (0.0, 2.0), 200)?;
    println!("blow-up estimate {:?} (exact 1)", ev.blowup_z);
    match evolve_curvature(1.0, |_| 0.0, (0.0, 2.0), 200) {
        Err(Error::FocalCrossing { z_blowup }) => println!("focal crossing reported at {z_blowup:.6}"),
        other => println!("unexpected {other:?}"),
    }

    // A graded-index profile n'' = -0.2 keeps the curvature bounded.
    let ev = evolve_curvature(0.3, |_| -0.2, (0.0, 5.0), 50)?;
    println!("graded index: kappa(5) = {:.6}", ev.kappa.last().unwrap());
    Ok(())
}
