//! Compares the envelope and Jacobian-determinant criteria on three ray
//! families. Straight-ray families give a determinant that does not depend
//! on the position along the ray, so the zero sets differ.

use causticlab::caustic::{compare_criteria, DetectionGrid, LensExitFamily, ParamDomain, ParabolaNormals, RayFamily, SphericalWave};
use causticlab::lens::LensPrescription;

fn report<F: RayFamily>(name: &str, family: &F) {
    let grid = DetectionGrid::covering(family, 24, 200);
    let c = compare_criteria(family, &grid, 1e-6);
    println!(
        "{name:<10} envelope zeros {:>4} ({} in det set)  det zeros {:>5} ({} in envelope set)",
        c.envelope_zeros, c.envelope_zeros_in_determinant_set, c.determinant_zeros, c.determinant_zeros_in_envelope_set
    );
}

fn main() {
    report("spherical", &SphericalWave::default());
    let lens = LensPrescription::sample();
    report("lens", &LensExitFamily { exit: &lens, domain: ParamDomain { s: (0.5, 14.5), t: (30.0, 70.0) } });
    report("parabola", &ParabolaNormals::default());
}
