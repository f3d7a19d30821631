//! Caustic of the sample lens: analytic points, the brute-force crossing of
//! neighbouring rays, and the point where the curve meets the axis.

use causticlab::lens::{brute_force_caustic, caustic_profile, LensPrescription};

fn main() -> causticlab::error::Result<()> {
    let lens = LensPrescription::sample();
    let heights: Vec<f64> = (0..=10).map(|i| 0.3 + 14.7 * i as f64 / 10.0).collect();
    let curve = caustic_profile(&lens, &heights)?;

    println!("{:>7} {:>12} {:>12} {:>10}", "h", "r", "z", "crossing");
    for s in curve.valid_samples() {
        let (r, z) = brute_force_caustic(s.h, 1e-6, &lens)?;
        let dev = (r - s.r_caustic).hypot(z - s.z_caustic);
        println!("{:>7.3} {:>12.6} {:>12.6} {:>10.2e}", s.h, s.r_caustic, s.z_caustic, dev);
    }

    let cusp = caustic_profile(&lens, &[1e-3])?.samples[0];
    println!("cusp near z = {:.6}, sagittal branch z = {:.6}", cusp.z_caustic, cusp.z_sagittal);
    Ok(())
}
