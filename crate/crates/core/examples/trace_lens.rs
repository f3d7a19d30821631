//! Traces a fan of collimated rays through the sample biconvex lens and
//! compares the paraxial focus with the thick-lens matrix.

use causticlab::lens::{trace_through_lens, LensPrescription};
use causticlab::phase_space::{compose, free_propagation, TransferMap};

fn main() -> causticlab::error::Result<()> {
    let lens = LensPrescription::sample();
    println!("rim height {:.4}", lens.rim_height());
    println!("{:>6} {:>12} {:>12} {:>12} {:>12}", "h", "r_e", "z_e", "alpha", "z_axis");
    for h in [0.5, 2.0, 5.0, 8.0, 11.0, 14.0] {
        let ray = trace_through_lens(h, &lens)?;
        let z_axis = ray.z_e + ray.r_e / ray.alpha.tan();
        println!("{h:>6.2} {:>12.6} {:>12.6} {:>12.6} {:>12.6}", ray.r_e, ray.z_e, ray.alpha, z_axis);
    }

    // Meridional thick lens: refraction, glass, refraction.
    let refract = |radius: f64, n1: f64, n2: f64| {
        let mut m = TransferMap::identity().to_row_major();
        m[2 * 4] = -(n2 - n1) / radius;
        m[3 * 4 + 1] = -(n2 - n1) / radius;
        TransferMap::from_row_major(m)
    };
    let m = compose(&[
        refract(lens.r1, 1.0, lens.n),
        free_propagation(lens.d, lens.n)?,
        refract(lens.r2, lens.n, 1.0),
    ])?;
    let (a, c) = (m.entry(1, 1), m.entry(3, 1));
    println!("paraxial focal length {:.9}", -1.0 / c);
    println!("back focal distance  {:.9}", -a / c);
    Ok(())
}
