//! Caustic detection on two-parameter ray families and the curvature
//! evolution equation along a ray.
//!
//! A [`RayFamily`] is a smooth map `(s, t) ↦ q ∈ ℝ³`, `s` labelling the ray and
//! `t` running along it. Two criteria mark caustic points:
//!
//! * envelope: `‖∂q/∂s × ∂q/∂t‖ = 0`
//! * determinant: `det(∂q/∂s, ∂q/∂t, ∂²q/∂s∂t) = 0`
//!
//! Axially symmetric families describe the meridional section `(R, 0, Z)` of a
//! surface of revolution. Their envelope residual is the swept Jacobian
//! `|R| · ‖∂q/∂s × ∂q/∂t‖`, which splits into the sagittal branch (`R = 0`, the
//! axis) and the meridional branch.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lens::ExitFamily;

/// Finite-difference step as a fraction of each parameter range.
pub const DEFAULT_STEP_FRACTION: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Symmetry {
    General,
    /// `position` returns the meridional section `(R, 0, Z)`.
    Axial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamDomain {
    pub s: (f64, f64),
    pub t: (f64, f64),
}

impl ParamDomain {
    pub fn contains(&self, s: f64, t: f64) -> bool {
        s >= self.s.0 && s <= self.s.1 && t >= self.t.0 && t <= self.t.1
    }
}

pub trait RayFamily: Sync {
    fn position(&self, s: f64, t: f64) -> Vector3<f64>;

    fn domain(&self) -> ParamDomain;

    fn symmetry(&self) -> Symmetry {
        Symmetry::General
    }

    /// Finite-difference steps `(h_s, h_t)`.
    fn steps(&self) -> (f64, f64) {
        let d = self.domain();
        (
            DEFAULT_STEP_FRACTION * (d.s.1 - d.s.0),
            DEFAULT_STEP_FRACTION * (d.t.1 - d.t.0),
        )
    }
}

/// Collimated rays `q = (s, 0, t)`.
#[derive(Debug, Clone, Copy)]
pub struct PlaneWave {
    pub domain: ParamDomain,
}

impl RayFamily for PlaneWave {
    fn position(&self, s: f64, t: f64) -> Vector3<f64> {
        Vector3::new(s, 0.0, t)
    }

    fn domain(&self) -> ParamDomain {
        self.domain
    }
}

/// Rays leaving the origin, `q = t (sinθ cosφ, sinθ sinφ, cosθ)`, written in
/// the meridional section with `s = θ` and swept in `φ`.
#[derive(Debug, Clone, Copy)]
pub struct SphericalWave {
    pub domain: ParamDomain,
}

impl Default for SphericalWave {
    fn default() -> Self {
        Self { domain: ParamDomain { s: (0.05, std::f64::consts::PI - 0.05), t: (-2.0, 2.0) } }
    }
}

impl RayFamily for SphericalWave {
    fn position(&self, theta: f64, t: f64) -> Vector3<f64> {
        Vector3::new(t * theta.sin(), 0.0, t * theta.cos())
    }

    fn domain(&self) -> ParamDomain {
        self.domain
    }

    fn symmetry(&self) -> Symmetry {
        Symmetry::Axial
    }
}

/// Exit rays of a rotationally symmetric lens, `s = h`, `t` along the ray.
#[derive(Debug, Clone, Copy)]
pub struct LensExitFamily<'a, F: ExitFamily + ?Sized> {
    pub exit: &'a F,
    pub domain: ParamDomain,
}

impl<F: ExitFamily + ?Sized> RayFamily for LensExitFamily<'_, F> {
    fn position(&self, h: f64, t: f64) -> Vector3<f64> {
        match self.exit.exit(h) {
            Ok(ray) => {
                let (r, z) = ray.point_at(t);
                Vector3::new(r, 0.0, z)
            }
            Err(_) => Vector3::repeat(f64::NAN),
        }
    }

    fn domain(&self) -> ParamDomain {
        self.domain
    }

    fn symmetry(&self) -> Symmetry {
        Symmetry::Axial
    }

    fn steps(&self) -> (f64, f64) {
        let d = self.domain;
        (1e-3 * (d.s.1 - d.s.0), DEFAULT_STEP_FRACTION * (d.t.1 - d.t.0))
    }
}

/// Normals to the parabola `z = s²/2` in the `xz`-plane. Their envelope is the
/// evolute `(−s³, 0, 1 + 3s²/2)`, a semicubic cusp at `(0, 0, 1)`, reached at
/// `t = (1 + s²)^{3/2}`.
#[derive(Debug, Clone, Copy)]
pub struct ParabolaNormals {
    pub domain: ParamDomain,
}

impl Default for ParabolaNormals {
    fn default() -> Self {
        Self { domain: ParamDomain { s: (-1.0, 1.0), t: (0.0, 4.0) } }
    }
}

impl ParabolaNormals {
    pub fn evolute(s: f64) -> Vector3<f64> {
        Vector3::new(-s * s * s, 0.0, 1.0 + 1.5 * s * s)
    }
}

impl RayFamily for ParabolaNormals {
    fn position(&self, s: f64, t: f64) -> Vector3<f64> {
        let k = 1.0 / (1.0 + s * s).sqrt();
        Vector3::new(s - t * s * k, 0.0, 0.5 * s * s + t * k)
    }

    fn domain(&self) -> ParamDomain {
        self.domain
    }
}

/// First and mixed partial derivatives of a family at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partials {
    pub q: Vector3<f64>,
    pub q_s: Vector3<f64>,
    pub q_t: Vector3<f64>,
    pub q_st: Vector3<f64>,
}

const D1: [(f64, f64); 4] = [(-2.0, 1.0 / 12.0), (-1.0, -8.0 / 12.0), (1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0)];

/// Fourth-order central differences; the mixed partial is the tensor product
/// of the one-dimensional stencil.
pub fn partials<F: RayFamily + ?Sized>(family: &F, s: f64, t: f64) -> Result<Partials> {
    let (hs, ht) = family.steps();
    let dom = family.domain();
    if !dom.contains(s - 2.0 * hs, t - 2.0 * ht) || !dom.contains(s + 2.0 * hs, t + 2.0 * ht) {
        return Err(Error::Domain(format!("stencil around (s, t) = ({s}, {t}) leaves the domain")));
    }
    let q = family.position(s, t);
    let mut q_s = Vector3::zeros();
    let mut q_t = Vector3::zeros();
    let mut q_st = Vector3::zeros();
    for &(ks, ws) in &D1 {
        q_s += ws * family.position(s + ks * hs, t);
        q_t += ws * family.position(s, t + ks * ht);
        for &(kt, wt) in &D1 {
            q_st += ws * wt * family.position(s + ks * hs, t + kt * ht);
        }
    }
    q_s /= hs;
    q_t /= ht;
    q_st /= hs * ht;
    if !(q_s.iter().chain(q_t.iter()).chain(q_st.iter()).all(|v| v.is_finite())) {
        return Err(Error::Domain(format!("family is not finite near (s, t) = ({s}, {t})")));
    }
    Ok(Partials { q, q_s, q_t, q_st })
}

impl Partials {
    pub fn cross(&self) -> Vector3<f64> {
        self.q_s.cross(&self.q_t)
    }

    /// Signed meridional envelope factor `(q_s × q_t)_y` for axial families.
    pub fn meridional(&self) -> f64 {
        self.cross().y
    }

    pub fn determinant(&self) -> f64 {
        Matrix3::from_columns(&[self.q_s, self.q_t, self.q_st]).determinant()
    }

    /// Scale against which [`Partials::determinant`] is judged.
    pub fn determinant_scale(&self) -> f64 {
        1.0 + self.q_s.norm() * self.q_t.norm() * self.q_st.norm()
    }
}

fn envelope_from(family_symmetry: Symmetry, p: &Partials) -> f64 {
    match family_symmetry {
        Symmetry::General => p.cross().norm(),
        Symmetry::Axial => p.q.x.abs() * p.cross().norm(),
    }
}

/// `‖∂q/∂s × ∂q/∂t‖`, swept around the axis for axial families.
pub fn envelope_residual<F: RayFamily + ?Sized>(family: &F, s: f64, t: f64) -> Result<f64> {
    let p = partials(family, s, t)?;
    Ok(envelope_from(family.symmetry(), &p))
}

/// `det(∂q/∂s, ∂q/∂t, ∂²q/∂s∂t)`
pub fn determinant_residual<F: RayFamily + ?Sized>(family: &F, s: f64, t: f64) -> Result<f64> {
    Ok(partials(family, s, t)?.determinant())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// Zero of the envelope norm on a general family.
    Envelope,
    /// `R = 0` on an axial family.
    Sagittal,
    /// Meridional factor zero on an axial family.
    Meridional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectedPoint {
    pub s: f64,
    pub t: f64,
    pub q: [f64; 3],
    pub res_env: f64,
    pub res_det: f64,
    pub det_scale: f64,
    pub branch: Branch,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CausticPointSet {
    pub points: Vec<DetectedPoint>,
}

impl CausticPointSet {
    pub const CSV_HEADER: &'static str = "s,t,qx,qy,qz,res_env,res_det";

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }
}

/// Scan grid for [`detect_caustic`].
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionGrid {
    pub s_values: Vec<f64>,
    /// Number of scan nodes along `t`.
    pub t_samples: usize,
}

impl DetectionGrid {
    /// `n_s` rays and `n_t` nodes, inset from the domain edges by the stencil.
    pub fn covering<F: RayFamily + ?Sized>(family: &F, n_s: usize, n_t: usize) -> Self {
        let d = family.domain();
        let (hs, _) = family.steps();
        let lo = d.s.0 + 3.0 * hs;
        let hi = d.s.1 - 3.0 * hs;
        let s_values = if n_s <= 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..n_s).map(|i| lo + (hi - lo) * i as f64 / (n_s - 1) as f64).collect()
        };
        Self { s_values, t_samples: n_t.max(3) }
    }
}

fn bisect<G: Fn(f64) -> f64>(g: G, mut a: f64, mut b: f64, mut ga: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let gm = g(m);
        if gm == 0.0 {
            return m;
        }
        if (gm > 0.0) == (ga > 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn golden_min<G: Fn(f64) -> f64>(g: G, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if gc < gd {
            b = d;
            d = c;
            gd = gc;
            c = b - inv_phi * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + inv_phi * (b - a);
            gd = g(d);
        }
    }
    0.5 * (a + b)
}

/// Locates caustic points ray by ray: sign changes of the signed branch
/// factors are refined by bisection, local minima of the envelope norm by
/// golden-section search. Points whose envelope residual exceeds `tol` are
/// discarded. Output order follows `grid.s_values`, then `t`.
pub fn detect_caustic<F: RayFamily + ?Sized>(family: &F, grid: &DetectionGrid, tol: f64) -> CausticPointSet {
    let dom = family.domain();
    let (_, ht) = family.steps();
    let t_lo = dom.t.0 + 3.0 * ht;
    let t_hi = dom.t.1 - 3.0 * ht;
    let n = grid.t_samples.max(3);
    let ts: Vec<f64> = (0..n).map(|i| t_lo + (t_hi - t_lo) * i as f64 / (n - 1) as f64).collect();
    let symmetry = family.symmetry();

    let per_ray: Vec<Vec<DetectedPoint>> = grid
        .s_values
        .par_iter()
        .map(|&s| {
            let mut roots: Vec<(f64, Branch)> = Vec::new();
            let eval = |t: f64| partials(family, s, t).ok();
            match symmetry {
                Symmetry::Axial => {
                    let sag = |t: f64| family.position(s, t).x;
                    let mer = |t: f64| eval(t).map(|p| p.meridional()).unwrap_or(f64::NAN);
                    for (g, branch) in [
                        (&sag as &dyn Fn(f64) -> f64, Branch::Sagittal),
                        (&mer as &dyn Fn(f64) -> f64, Branch::Meridional),
                    ] {
                        let vals: Vec<f64> = ts.iter().map(|&t| g(t)).collect();
                        for i in 0..n {
                            if vals[i] == 0.0 {
                                roots.push((ts[i], branch));
                            } else if i + 1 < n
                                && vals[i + 1] != 0.0
                                && vals[i].is_finite()
                                && vals[i + 1].is_finite()
                                && (vals[i] > 0.0) != (vals[i + 1] > 0.0)
                            {
                                roots.push((bisect(g, ts[i], ts[i + 1], vals[i]), branch));
                            }
                        }
                    }
                }
                Symmetry::General => {
                    let norm = |t: f64| eval(t).map(|p| p.cross().norm()).unwrap_or(f64::INFINITY);
                    let vals: Vec<f64> = ts.iter().map(|&t| norm(t)).collect();
                    for i in 1..n - 1 {
                        if vals[i] <= vals[i - 1] && vals[i] < vals[i + 1] {
                            roots.push((golden_min(norm, ts[i - 1], ts[i + 1]), Branch::Envelope));
                        }
                    }
                }
            }
            roots
                .into_iter()
                .filter_map(|(t, branch)| {
                    let p = eval(t)?;
                    let res_env = envelope_from(symmetry, &p);
                    (res_env <= tol).then(|| DetectedPoint {
                        s,
                        t,
                        q: [p.q.x, p.q.y, p.q.z],
                        res_env,
                        res_det: p.determinant(),
                        det_scale: p.determinant_scale(),
                        branch,
                    })
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let mut points: Vec<DetectedPoint> = per_ray.into_iter().flatten().collect();
    points.sort_by(|a, b| a.s.total_cmp(&b.s).then(a.t.total_cmp(&b.t)));
    CausticPointSet { points }
}

/// Cross-check of the two caustic criteria on a sampled family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaComparison {
    /// Envelope zeros examined (detected points).
    pub envelope_zeros: usize,
    /// Envelope zeros whose determinant residual also vanishes.
    pub envelope_zeros_in_determinant_set: usize,
    /// Grid nodes whose determinant residual vanishes.
    pub determinant_zeros: usize,
    /// Determinant zeros whose envelope residual also vanishes.
    pub determinant_zeros_in_envelope_set: usize,
    /// A few `(s, t, res_env, res_det)` samples violating either inclusion.
    pub counterexamples: Vec<[f64; 4]>,
}

impl CriteriaComparison {
    pub fn envelope_subset_of_determinant(&self) -> bool {
        self.envelope_zeros_in_determinant_set == self.envelope_zeros
    }

    pub fn determinant_subset_of_envelope(&self) -> bool {
        self.determinant_zeros_in_envelope_set == self.determinant_zeros
    }

    pub fn zero_sets_coincide(&self) -> bool {
        self.envelope_subset_of_determinant() && self.determinant_subset_of_envelope()
    }
}

/// Tests both inclusions between the zero sets of the envelope and
/// determinant criteria: every detected envelope zero is checked against the
/// determinant criterion, and every grid node is checked the other way.
pub fn compare_criteria<F: RayFamily + ?Sized>(family: &F, grid: &DetectionGrid, tol: f64) -> CriteriaComparison {
    let detected = detect_caustic(family, grid, tol);
    let mut out = CriteriaComparison {
        envelope_zeros: detected.len(),
        envelope_zeros_in_determinant_set: 0,
        determinant_zeros: 0,
        determinant_zeros_in_envelope_set: 0,
        counterexamples: Vec::new(),
    };
    for p in &detected.points {
        if p.res_det.abs() <= tol * p.det_scale {
            out.envelope_zeros_in_determinant_set += 1;
        } else if out.counterexamples.len() < 8 {
            out.counterexamples.push([p.s, p.t, p.res_env, p.res_det]);
        }
    }

    let dom = family.domain();
    let (_, ht) = family.steps();
    let t_lo = dom.t.0 + 3.0 * ht;
    let t_hi = dom.t.1 - 3.0 * ht;
    let n = grid.t_samples.max(3);
    for &s in &grid.s_values {
        for i in 0..n {
            let t = t_lo + (t_hi - t_lo) * i as f64 / (n - 1) as f64;
            let Ok(p) = partials(family, s, t) else { continue };
            if p.determinant().abs() <= tol * p.determinant_scale() {
                out.determinant_zeros += 1;
                let env = envelope_from(family.symmetry(), &p);
                if env <= tol {
                    out.determinant_zeros_in_envelope_set += 1;
                } else if out.counterexamples.len() < 16 {
                    out.counterexamples.push([s, t, env, p.determinant()]);
                }
            }
        }
    }
    out
}

/// Threshold on `|kappa|` that ends curvature integration: `1/sqrt(ε)`.
pub fn blowup_threshold() -> f64 {
    1.0 / f64::EPSILON.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureEvolution {
    pub z: Vec<f64>,
    pub kappa: Vec<f64>,
    /// Estimated pole when integration stopped early.
    pub blowup_z: Option<f64>,
}

/// Classical RK4 on `dκ/dz = κ² + n''(z)` over `steps` equal steps.
///
/// Steps are subdivided so that `|κ|·dz ≤ 0.1`, which keeps the scheme on
/// the solution while approaching a focal pole. Sampled values are reported
/// at the `steps + 1` grid points up to the blow-up.
pub fn evolve_curvature_partial<N: Fn(f64) -> f64>(
    kappa0: f64,
    d2n: N,
    z_span: (f64, f64),
    steps: usize,
) -> Result<CurvatureEvolution> {
    if steps < 2 {
        return Err(Error::Domain("need at least two steps".into()));
    }
    if !(z_span.1 > z_span.0) || !kappa0.is_finite() {
        return Err(Error::Domain("z span must be increasing and kappa0 finite".into()));
    }
    let rhs = |z: f64, k: f64| k * k + d2n(z);
    let h = (z_span.1 - z_span.0) / steps as f64;
    let limit = blowup_threshold();
    let mut z_out = vec![z_span.0];
    let mut k_out = vec![kappa0];
    let mut k = kappa0;
    for i in 0..steps {
        let z_start = z_span.0 + i as f64 * h;
        let z_end = z_span.0 + (i + 1) as f64 * h;
        let mut z = z_start;
        while z < z_end {
            if k.abs() > limit {
                return Ok(CurvatureEvolution { z: z_out, kappa: k_out, blowup_z: Some(z + 1.0 / k) });
            }
            let dz = (z_end - z).min(0.1 / k.abs().max(1e-300));
            let k1 = rhs(z, k);
            let k2 = rhs(z + 0.5 * dz, k + 0.5 * dz * k1);
            let k3 = rhs(z + 0.5 * dz, k + 0.5 * dz * k2);
            let k4 = rhs(z + dz, k + dz * k3);
            k += dz / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            z = if z_end - z <= dz { z_end } else { z + dz };
            if !k.is_finite() {
                return Ok(CurvatureEvolution { z: z_out, kappa: k_out, blowup_z: Some(z) });
            }
        }
        z_out.push(z_end);
        k_out.push(k);
    }
    if k.abs() > limit {
        let z = *z_out.last().unwrap();
        return Ok(CurvatureEvolution { z: z_out, kappa: k_out, blowup_z: Some(z + 1.0 / k) });
    }
    Ok(CurvatureEvolution { z: z_out, kappa: k_out, blowup_z: None })
}

/// Like [`evolve_curvature_partial`] but a blow-up inside the span is an
/// [`Error::FocalCrossing`].
pub fn evolve_curvature<N: Fn(f64) -> f64>(
    kappa0: f64,
    d2n: N,
    z_span: (f64, f64),
    steps: usize,
) -> Result<CurvatureEvolution> {
    let ev = evolve_curvature_partial(kappa0, d2n, z_span, steps)?;
    match ev.blowup_z {
        Some(z_blowup) => Err(Error::FocalCrossing { z_blowup }),
        None => Ok(ev),
    }
}
