mod common;

use std::f64::consts::PI;
use std::sync::OnceLock;

use causticlab::catastrophe::{classify, unfold_elliptic_umbilic, unfold_elliptic_umbilic_rotated, Thresholds};
use causticlab::corrector::{
    doe_phase, dm_project, dm_residual, gradient_descent, toc_cost, toc_run, Barrier, CorrectionConfig, MirrorBasis,
};
use causticlab::lens::{caustic_point, LensPrescription};
use causticlab::mesh::{caustic_measure, CausticMesh};
use causticlab::phase_space::{
    apply, check_symplectic, compose, free_propagation, lagrange_invariant, thin_lens, RayState, TransferMap,
};
use causticlab::wavefront::{rms_spot_quadrature, strehl, Term, TermKind, WavefrontSpec};
use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;

fn focal() -> impl Strategy<Value = f64> {
    (-1e3..1e3f64).prop_filter("non-zero", |f| *f != 0.0)
}

fn element() -> impl Strategy<Value = TransferMap> {
    prop_oneof![
        (0.0..=1e3f64, 1.0..=2.0f64).prop_map(|(d, n)| free_propagation(d, n).unwrap()),
        focal().prop_map(|f| thin_lens(f).unwrap()),
    ]
}

fn ray() -> impl Strategy<Value = RayState> {
    (-1.0..1.0f64, -1.0..1.0f64, -0.1..0.1f64, -0.1..0.1f64).prop_map(|(x, y, p_x, p_y)| RayState { x, y, p_x, p_y })
}

fn term() -> impl Strategy<Value = Term> {
    (0u32..=6, 0u32..=6, prop_oneof![Just(TermKind::Cos), Just(TermKind::Sin)], -0.5..0.5f64).prop_map(
        |(n, m, kind, a)| {
            let m = m.min(n);
            let m = if (n - m) % 2 == 1 { if m < n { m + 1 } else { m - 1 } } else { m };
            if m == 0 { Term::radial(n, a) } else { Term::new(n, m, kind, a) }
        },
    )
}

fn spec() -> impl Strategy<Value = WavefrontSpec> {
    prop::collection::vec(term(), 1..5).prop_map(|t| WavefrontSpec::monomial(t).unwrap())
}

fn mirror() -> &'static MirrorBasis {
    static BASIS: OnceLock<MirrorBasis> = OnceLock::new();
    BASIS.get_or_init(|| {
        MirrorBasis::normalized_specs(
            vec![
                WavefrontSpec::zernike(vec![Term::radial(2, 1.0)]).unwrap(),
                WavefrontSpec::zernike(vec![Term::cos(2, 2, 1.0)]).unwrap(),
                WavefrontSpec::zernike(vec![Term::sin(2, 2, 1.0)]).unwrap(),
                WavefrontSpec::zernike(vec![Term::cos(3, 1, 1.0)]).unwrap(),
                WavefrontSpec::zernike(vec![Term::sin(3, 1, 1.0)]).unwrap(),
            ],
            16,
        )
        .unwrap()
    })
}

proptest! {
    #[test]
    fn elements_are_symplectic(m in element()) {
        let r = check_symplectic(&m, 1e-10);
        prop_assert!(r.residual <= 1e-10);
        prop_assert!(r.det_minus_one.abs() <= 1e-10);
    }

    #[test]
    fn compositions_are_symplectic(maps in prop::collection::vec(element(), 1..5)) {
        // Rounding in the product grows with the entries; |f| ≈ 1e-3 gives
        // entries near 1e6.
        let m = compose(&maps).unwrap();
        let scale = m.matrix().amax().max(1.0).powi(2);
        let r = check_symplectic(&m, 1e-10 * scale);
        prop_assert!(r.residual <= 1e-10 * scale, "{} at scale {scale:e}", r.residual);
        prop_assert!(r.det_minus_one.abs() <= 1e-10 * scale, "{}", r.det_minus_one);
    }

    #[test]
    fn lagrange_invariant_is_conserved(maps in prop::collection::vec(element(), 1..5), r in ray()) {
        let out = maps.iter().fold(r, |acc, m| apply(m, &acc));
        prop_assert!((lagrange_invariant(&out) - lagrange_invariant(&r)).abs() <= 1e-10);
    }

    #[test]
    fn symplectic_inverse_round_trips(maps in prop::collection::vec(element(), 1..4), r in ray()) {
        let m = compose(&maps).unwrap();
        let back = apply(&m.symplectic_inverse(), &apply(&m, &r));
        for (a, b) in [(back.x, r.x), (back.y, r.y), (back.p_x, r.p_x), (back.p_y, r.p_y)] {
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + m.matrix().amax().powi(2)));
        }
    }

    #[test]
    fn lens_caustic_meets_meridional_condition(h in 0.3..15.0f64) {
        let p = caustic_point(h, &LensPrescription::sample()).unwrap();
        prop_assert!(p.residual.abs() <= 1e-8);
    }

    #[test]
    fn strehl_never_exceeds_one(w in spec()) {
        let s = strehl(&w, 2.0 * PI, 16).unwrap();
        prop_assert!(s <= 1.0);
        let nonconstant = w.terms.iter().any(|t| t.n > 0 && t.a != 0.0);
        if nonconstant {
            prop_assert!(s < 1.0);
        }
    }

    #[test]
    fn spot_quadrature_matches_monomial_integrals(a2 in -1.0..1.0f64, a4 in -1.0..1.0f64, a6 in -1.0..1.0f64) {
        // ∂W/∂ρ = 2a₂ρ + 4a₄ρ³ + 6a₆ρ⁵; 2π ∫ (∂W/∂ρ)² ρ dρ = 2π Σ c_i c_j / (i + j + 2)
        let c = [(2.0 * a2, 1), (4.0 * a4, 3), (6.0 * a6, 5)];
        let mut exact = 0.0;
        for (ci, i) in c {
            for (cj, j) in c {
                exact += ci * cj / (i + j + 2) as f64;
            }
        }
        exact *= 2.0 * PI;
        let w = WavefrontSpec::monomial(vec![Term::radial(2, a2), Term::radial(4, a4), Term::radial(6, a6)]).unwrap();
        prop_assert!((rms_spot_quadrature(&w) - exact).abs() <= 1e-12 * (1.0 + exact));
    }

    #[test]
    fn classify_is_scale_invariant(w in spec(), scale in prop_oneof![1e-3..1e-1f64, 1e1..1e3f64]) {
        let th = Thresholds::default();
        let mut scaled = w.clone();
        for t in &mut scaled.terms {
            t.a *= scale;
        }
        match (classify(&w, &th), classify(&scaled, &th)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.label, b.label),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
    }

    #[test]
    fn rotationally_symmetric_specs_are_never_d_series(coeffs in prop::collection::vec((1u32..=3, -1.0..1.0f64), 1..4)) {
        let w = WavefrontSpec::monomial(coeffs.iter().map(|&(k, a)| Term::radial(2 * k, a)).collect()).unwrap();
        if let Ok(c) = classify(&w, &Thresholds::default()) {
            prop_assert!(!c.label.is_d_series());
        }
    }

    #[test]
    fn unfolding_is_equivariant_under_third_turns(s in prop_oneof![0.2..2.0f64, -2.0..-0.2f64], a in 0.05..1.0f64) {
        let base = unfold_elliptic_umbilic(s, a).unwrap();
        let turned = unfold_elliptic_umbilic_rotated(s, a, 2.0 * PI / 3.0).unwrap();
        prop_assert!((base.radius - turned.radius).abs() <= 1e-8 * base.radius);
        for c in turned.cusps {
            let nearest = base.cusps.iter().map(|b| (b.0 - c.0).hypot(b.1 - c.1)).fold(f64::INFINITY, f64::min);
            prop_assert!(nearest <= 1e-6 * base.radius, "{nearest}");
        }
    }

    #[test]
    fn quadratic_descent_is_monotone(c0 in prop::collection::vec(-2.0..2.0f64, 1..4), curv in prop::collection::vec(0.5..4.0f64, 3)) {
        // J = Σ k_i c_i², curvature bound 2·max k_i; α = 0.9 / max(2k)
        let k = curv[..c0.len()].to_vec();
        let alpha = 0.9 / (2.0 * k.iter().cloned().fold(0.0, f64::max));
        let cfg = CorrectionConfig { learning_rate: alpha, tolerance: 1e-8, max_iterations: 5000, ..Default::default() };
        let j = |c: &[f64]| c.iter().zip(&k).map(|(x, k)| k * x * x).sum::<f64>();
        let path = gradient_descent(&c0, &cfg, |c| Ok(j(c))).unwrap();
        for w in path.windows(2) {
            prop_assert!(j(&w[1]) < j(&w[0]));
        }
    }

    #[test]
    fn doe_phase_is_wrapped(w in spec(), lambda in 1e-4..1e-2f64, pts in prop::collection::vec((0.0..=1.0f64, -PI..PI), 1..50)) {
        for phi in doe_phase(&w, lambda, &pts).unwrap() {
            prop_assert!((0.0..2.0 * PI).contains(&phi));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn caustic_measure_is_rigid_motion_invariant(
        axis in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_filter("axis", |a| a.0.abs() + a.1.abs() + a.2.abs() > 1e-3),
        angle in -PI..PI,
        shift in (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64),
    ) {
        let mesh = CausticMesh::icosphere(1.3, 2);
        let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::new(axis.0, axis.1, axis.2)), angle);
        let t = Vector3::new(shift.0, shift.1, shift.2);
        let moved = CausticMesh::new(mesh.vertices.iter().map(|v| rot * v + t).collect(), mesh.faces.clone()).unwrap();
        let a = caustic_measure(&mesh).unwrap();
        let b = caustic_measure(&moved).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0), "{a} {b}");
    }

    #[test]
    fn dm_residual_is_orthogonal_to_basis(w in spec()) {
        let basis = mirror();
        let p = dm_project(&w, basis).unwrap();
        for i in 0..basis.len() {
            let ip = basis.inner_with(i, |r, t| dm_residual(&w, basis, &p.coefficients, r, t));
            prop_assert!(ip.abs() <= 1e-8, "{ip}");
        }
    }

    #[test]
    fn toc_never_crosses_barriers(trefoil in 0.05..0.5f64, defocus in 0.02..0.3f64) {
        let cfg = CorrectionConfig { barriers: vec![Barrier::coordinate(2, 1, 0.0)], ..Default::default() };
        let w0 = WavefrontSpec::monomial(vec![Term::cos(3, 3, trefoil), Term::radial(2, defocus)]).unwrap();
        let trace = toc_run(&w0, &cfg).unwrap();
        for pair in trace.iterates.windows(2) {
            prop_assert!(!cfg.barriers[0].crosses(&pair[0].c, &pair[1].c, 0.0));
        }
        prop_assert_eq!(trace.last().injected, 0.0);
    }
}

#[test]
fn barrier_cost_grows_without_bound_on_approach() {
    let plane = [Barrier::coordinate(3, 0, 0.5)];
    let mut last = 0.0;
    for k in 1..=12 {
        let d = 10f64.powi(-k);
        let j = toc_cost(&[0.5 - d, 0.1, -0.2], &plane, 1.0, 1e-3).unwrap();
        assert!(j > last);
        last = j;
    }
    assert!(last > 1e8);
}
