//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use causticlab::lens::ExitRay;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Thick-lens effective focal length and back focal distance from the
/// lensmaker equation and the rear principal plane.
pub fn thick_lens_paraxial(n: f64, d: f64, r1: f64, r2: f64) -> (f64, f64) {
    let power = (n - 1.0) * (1.0 / r1 - 1.0 / r2 + (n - 1.0) * d / (n * r1 * r2));
    let f = 1.0 / power;
    let bfd = f * (1.0 - (n - 1.0) * d / (n * r1));
    (f, bfd)
}

/// Paraxial focus of the sample lens, measured from the front vertex.
pub fn sample_lens_focus_z() -> f64 {
    let (_, bfd) = thick_lens_paraxial(1.5, 5.0, 50.0, -50.0);
    5.0 + bfd
}

/// Least-squares crossing of two meridional rays, solved as a 2×2 system
/// `a.p + s a.u = b.p + t b.u` by Cramer's rule.
pub fn crossing(a: &ExitRay, b: &ExitRay) -> (f64, f64) {
    let ua = (-a.alpha.sin(), a.alpha.cos());
    let ub = (-b.alpha.sin(), b.alpha.cos());
    let rhs = (b.r_e - a.r_e, b.z_e - a.z_e);
    let det = ua.0 * (-ub.1) - (-ub.0) * ua.1;
    let s = (rhs.0 * (-ub.1) - (-ub.0) * rhs.1) / det;
    (a.r_e + s * ua.0, a.z_e + s * ua.1)
}

pub fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > tol {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

/// `2π ∫₀¹ (4a₄₀ρ³ + 2a₂₀ρ)² ρ dρ` by composite Simpson.
pub fn spot_variance_simpson(a40: f64, a20: f64) -> f64 {
    let n = 2000;
    let h = 1.0 / n as f64;
    let f = |r: f64| (4.0 * a40 * r.powi(3) + 2.0 * a20 * r).powi(2) * r;
    let mut s = f(0.0) + f(1.0);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    2.0 * std::f64::consts::PI * s * h / 3.0
}

/// Focal length drawn from `[-1e3, 1e3]` away from zero.
pub fn random_focal_length(rng: &mut ChaCha8Rng) -> f64 {
    let mag = rng.gen_range(1e-2..1e3);
    if rng.gen_bool(0.5) { mag } else { -mag }
}

/// `κ₀ / (1 − κ₀ z)`
pub fn homogeneous_curvature(kappa0: f64, z: f64) -> f64 {
    kappa0 / (1.0 - kappa0 * z)
}

/// Plain 4×4 product, row-major.
pub fn matmul4(a: &[f64; 16], b: &[f64; 16]) -> [f64; 16] {
    let mut c = [0.0; 16];
    for i in 0..4 {
        for j in 0..4 {
            c[4 * i + j] = (0..4).map(|k| a[4 * i + k] * b[4 * k + j]).sum();
        }
    }
    c
}
