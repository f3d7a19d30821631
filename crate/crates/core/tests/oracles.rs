mod common;

use causticlab::caustic::{detect_caustic, DetectionGrid, LensExitFamily, ParamDomain};
use causticlab::lens::{
    brute_force_caustic, caustic_point, caustic_profile, default_step, exit_derivatives, trace_meridional, ExitFamily,
    IdealFocuser, LensPrescription, Z_START,
};
use causticlab::phase_space::{apply, compose, free_propagation, thin_lens, RayState};
use causticlab::wavefront::{caustic_from_wavefront, PupilGrid, Term, WavefrontSpec};

fn five_point<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

#[test]
fn paraxial_oracle_values() {
    let (f, bfd) = common::thick_lens_paraxial(1.5, 5.0, 50.0, -50.0);
    assert!((f - 50.847_457_627).abs() < 1e-6);
    assert!((bfd - 49.152_542_372).abs() < 1e-6);
}

#[test]
fn ideal_focuser_caustic_collapses_to_focus() {
    let lens = IdealFocuser { focal_length: 80.0, semi_aperture: 20.0 };
    for h in [1.0, 5.0, 12.0] {
        let p = caustic_point(h, &lens).unwrap();
        let alpha = (h / 80.0).atan();
        assert!((p.t_c - 80.0 / alpha.cos()).abs() < 1e-6);
        assert!(p.r_caustic.abs() < 1e-6);
        assert!((p.z_caustic - 80.0).abs() < 1e-6);
    }
}

#[test]
fn crossing_oracle_converges_at_first_order_or_better() {
    let lens = LensPrescription::sample();
    for h in [2.0, 8.0, 14.0] {
        let p = caustic_point(h, &lens).unwrap();
        let err = |dh: f64| {
            let (r, z) = brute_force_caustic(h, dh, &lens).unwrap();
            (r - p.r_caustic).hypot(z - p.z_caustic)
        };
        let (e1, e2) = (err(1e-2), err(1e-3));
        let order = (e1 / e2).log10();
        assert!(order >= 1.0 - 0.05, "h = {h}: {e1:e} {e2:e}");
        assert!(err(1e-6) < 1e-5);
    }
}

#[test]
fn meridional_jacobian_factorizes() {
    // q(h, φ, t) = (R cosφ, R sinφ, Z) with R = r_e − t sinα, Z = z_e + t cosα
    let lens = LensPrescription::sample();
    let q = |h: f64, phi: f64, t: f64| {
        let e = lens.exit(h).unwrap();
        let (r, z) = e.point_at(t);
        [r * phi.cos(), r * phi.sin(), z]
    };
    for (h, phi, t) in [(3.0, 0.4, 20.0), (9.0, 1.3, 45.0), (13.0, -2.0, 60.0)] {
        let step = 1e-3;
        let col = |k: usize| -> [f64; 3] {
            let mut out = [0.0; 3];
            for (i, o) in out.iter_mut().enumerate() {
                *o = match k {
                    0 => five_point(|x| q(x, phi, t)[i], h, step),
                    1 => five_point(|x| q(h, x, t)[i], phi, step),
                    _ => five_point(|x| q(h, phi, x)[i], t, step),
                };
            }
            out
        };
        let (a, b, c) = (col(0), col(1), col(2));
        let det = a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) + a[2] * (b[0] * c[1] - b[1] * c[0]);

        let e = lens.exit(h).unwrap();
        let d = exit_derivatives(h, &lens, default_step(h, lens.max_height())).unwrap();
        let (sa, ca) = e.alpha.sin_cos();
        let r = e.r_e - t * sa;
        let r_h = d.r_e - t * d.alpha * ca;
        let z_h = d.z_e - t * d.alpha * sa;
        let factored = r * (r_h * ca + z_h * sa);
        assert!((det.abs() - factored.abs()).abs() < 1e-8 * (1.0 + factored.abs()), "{det} {factored}");
    }
}

#[test]
fn rays_touch_the_caustic_tangentially() {
    let lens = LensPrescription::sample();
    let h = 8.0;
    let p = caustic_point(h, &lens).unwrap();
    let ray = lens.exit(h).unwrap();
    let distance_to_curve = |pt: (f64, f64)| {
        let d = |hh: f64| {
            let c = caustic_point(hh, &lens).unwrap();
            (c.r_caustic - pt.0).hypot(c.z_caustic - pt.1)
        };
        let best = common::golden_section(d, h - 1.0, h + 1.0, 1e-10);
        d(best)
    };
    let ratios: Vec<f64> = [1e-1, 1e-2]
        .iter()
        .map(|&eps| distance_to_curve(ray.point_at(p.t_c + eps)) / eps)
        .collect();
    assert!(ratios[1] < 0.2 * ratios[0], "{ratios:?}");
    assert!(ratios[1] < 1e-2);
}

#[test]
fn meridional_section_map_preserves_area() {
    let lens = LensPrescription::sample();
    let z_out = 60.0;
    let map = |x0: f64, p0: f64| {
        let e = trace_meridional(&lens, x0, Z_START, p0).unwrap();
        (e.x + (z_out - e.z) * e.dir.0 / e.dir.1, e.dir.0)
    };
    for (x0, p0) in [(2.0, 0.0), (6.0, 0.02), (11.0, -0.03)] {
        let s = 1e-4;
        let dx = (five_point(|x| map(x, p0).0, x0, s), five_point(|x| map(x, p0).1, x0, s));
        let dp = (five_point(|p| map(x0, p).0, p0, s), five_point(|p| map(x0, p).1, p0, s));
        let det = dx.0 * dp.1 - dp.0 * dx.1;
        assert!((det - 1.0).abs() < 1e-6, "{det}");
    }
}

#[test]
fn lens_family_detection_matches_profile() {
    let lens = LensPrescription::sample();
    let family = LensExitFamily { exit: &lens, domain: ParamDomain { s: (0.5, 14.5), t: (30.0, 70.0) } };
    let grid = DetectionGrid::covering(&family, 20, 400);
    let set = detect_caustic(&family, &grid, 1e-8);
    let meridional: Vec<_> = set.points.iter().filter(|p| p.q[0].abs() > 1e-6).collect();
    assert!(!meridional.is_empty());
    let heights: Vec<f64> = meridional.iter().map(|p| p.s).collect();
    let curve = caustic_profile(&lens, &heights).unwrap();
    for (p, c) in meridional.iter().zip(&curve.samples) {
        assert!((p.q[0] - c.r_caustic).hypot(p.q[2] - c.z_caustic) < 1e-4, "h = {}", p.s);
    }
}

#[test]
fn spherical_aberration_caustic_satisfies_cusp_eliminant() {
    // radial sheet: z = −12a₄₀ρ², r = −8a₄₀ρ³, hence 27a₄₀r² + z³ = 0
    for a40 in [0.2, 1.0, -0.5] {
        let w = WavefrontSpec::monomial(vec![Term::radial(4, a40)]).unwrap();
        let c = caustic_from_wavefront(&w, (-100.0, 100.0), &PupilGrid { n_rho: 16, n_theta: 12 }).unwrap();
        let radial = c.points.iter().filter(|p| (p.z + 12.0 * a40 * p.rho * p.rho).abs() < 1e-9);
        let mut n = 0;
        for p in radial {
            let r2 = p.x * p.x + p.y * p.y;
            assert!((27.0 * a40 * r2 + p.z.powi(3)).abs() < 1e-6);
            n += 1;
        }
        assert_eq!(n, 16 * 12);
    }
}

#[test]
fn defocus_image_map_matches_paraxial_composition() {
    // Collimated pupil ray at height ξ; a unit negative lens turns it to
    // direction ξ, and propagation over 2a₂₀ + z − 1 reproduces x = ∇W + zξ.
    for (a20, z) in [(0.3, -0.2), (-0.7, 1.5), (0.05, 0.0)] {
        let w = WavefrontSpec::monomial(vec![Term::radial(2, a20)]).unwrap();
        let m = compose(&[thin_lens(-1.0).unwrap(), free_propagation(2.0 * a20 + z - 1.0, 1.0).unwrap()]).unwrap();
        for (xi, eta) in [(0.3, 0.1), (-0.5, 0.6), (0.9, -0.2)] {
            let d = w.polar_derivatives(f64::hypot(xi, eta), f64::atan2(eta, xi));
            let [gx, gy] = d.cartesian_gradient(f64::hypot(xi, eta), f64::atan2(eta, xi));
            let out = apply(&m, &RayState { x: xi, y: eta, p_x: 0.0, p_y: 0.0 });
            assert!((out.x - (gx + z * xi)).abs() < 1e-8);
            assert!((out.y - (gy + z * eta)).abs() < 1e-8);
        }
    }
}
