//! Pupil wavefronts `W(ρ, θ)`, their generating functions, Hessian caustic
//! criterion, spot statistics and Strehl ratio.
//!
//! Terms are `a · R(ρ) · Θ(mθ)` where `R` is `ρⁿ` in the monomial basis and
//! the Zernike radial polynomial `R_n^m` in the Zernike basis.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{pairwise_sum, DiskRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    #[default]
    Monomial,
    Zernike,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermKind {
    Cos,
    Sin,
    /// Rotationally symmetric; requires `m = 0`.
    Radial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub n: u32,
    pub m: u32,
    pub kind: TermKind,
    pub a: f64,
}

impl Term {
    pub fn new(n: u32, m: u32, kind: TermKind, a: f64) -> Self {
        Self { n, m, kind, a }
    }

    pub fn radial(n: u32, a: f64) -> Self {
        Self::new(n, 0, TermKind::Radial, a)
    }

    pub fn cos(n: u32, m: u32, a: f64) -> Self {
        Self::new(n, m, TermKind::Cos, a)
    }

    pub fn sin(n: u32, m: u32, a: f64) -> Self {
        Self::new(n, m, TermKind::Sin, a)
    }

    fn angular(&self, theta: f64) -> (f64, f64, f64) {
        let m = self.m as f64;
        match self.kind {
            TermKind::Radial => (1.0, 0.0, 0.0),
            TermKind::Cos => {
                let (s, c) = (m * theta).sin_cos();
                (c, -m * s, -m * m * c)
            }
            TermKind::Sin => {
                let (s, c) = (m * theta).sin_cos();
                (s, m * c, -m * m * s)
            }
        }
    }
}

/// `(power, coefficient)` pairs of the radial factor.
fn radial_polynomial(basis: Basis, n: u32, m: u32) -> Vec<(i32, f64)> {
    match basis {
        Basis::Monomial => vec![(n as i32, 1.0)],
        Basis::Zernike => zernike_radial(n, m),
    }
}

/// Coefficients of `R_n^m(ρ) = Σ_k (−1)^k (n−k)! / (k! ((n+m)/2−k)! ((n−m)/2−k)!) ρ^{n−2k}`.
pub fn zernike_radial(n: u32, m: u32) -> Vec<(i32, f64)> {
    assert!(n >= m && (n - m).is_multiple_of(2), "R_n^m needs n ≥ m and n − m even");
    let fact = |k: u32| (1..=k).map(f64::from).product::<f64>();
    (0..=(n - m) / 2)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let c = sign * fact(n - k) / (fact(k) * fact((n + m) / 2 - k) * fact((n - m) / 2 - k));
            ((n - 2 * k) as i32, c)
        })
        .collect()
}

fn eval_poly(p: &[(i32, f64)], rho: f64) -> (f64, f64, f64) {
    let mut v = (0.0, 0.0, 0.0);
    for &(k, c) in p {
        let kf = k as f64;
        v.0 += c * rho.powi(k);
        if k >= 1 {
            v.1 += c * kf * rho.powi(k - 1);
        }
        if k >= 2 {
            v.2 += c * kf * (kf - 1.0) * rho.powi(k - 2);
        }
    }
    v
}

/// Aberration coefficients over the unit pupil.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WavefrontSpec {
    #[serde(default)]
    pub basis: Basis,
    pub terms: Vec<Term>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SpecRepr {
    Full(WavefrontSpec),
    Bare(Vec<Term>),
}

/// `W` and its polar partial derivatives at one pupil point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PolarDerivatives {
    pub w: f64,
    pub w_r: f64,
    pub w_t: f64,
    pub w_rr: f64,
    pub w_rt: f64,
    pub w_tt: f64,
}

impl PolarDerivatives {
    /// Cartesian gradient `(W_ξ, W_η)`; `ρ` must be positive.
    pub fn cartesian_gradient(&self, rho: f64, theta: f64) -> [f64; 2] {
        let (s, c) = theta.sin_cos();
        [self.w_r * c - self.w_t * s / rho, self.w_r * s + self.w_t * c / rho]
    }

    /// Cartesian Hessian `[[W_ξξ, W_ξη], [W_ξη, W_ηη]]`; `ρ` must be positive.
    pub fn cartesian_hessian(&self, rho: f64, theta: f64) -> [[f64; 2]; 2] {
        let (s, c) = theta.sin_cos();
        let r2 = rho * rho;
        let xx = self.w_rr * c * c + self.w_r * s * s / rho + self.w_tt * s * s / r2
            - 2.0 * self.w_rt * s * c / rho
            + 2.0 * self.w_t * s * c / r2;
        let yy = self.w_rr * s * s + self.w_r * c * c / rho + self.w_tt * c * c / r2
            + 2.0 * self.w_rt * s * c / rho
            - 2.0 * self.w_t * s * c / r2;
        let xy = (self.w_rr - self.w_r / rho - self.w_tt / r2) * s * c
            + (self.w_rt / rho - self.w_t / r2) * (c * c - s * s);
        [[xx, xy], [xy, yy]]
    }
}

impl WavefrontSpec {
    pub fn new(basis: Basis, terms: Vec<Term>) -> Result<Self> {
        let spec = Self { basis, terms };
        spec.validate()?;
        Ok(spec)
    }

    pub fn monomial(terms: Vec<Term>) -> Result<Self> {
        Self::new(Basis::Monomial, terms)
    }

    pub fn zernike(terms: Vec<Term>) -> Result<Self> {
        Self::new(Basis::Zernike, terms)
    }

    /// Accepts `{"basis": ..., "terms": [...]}` or a bare term array
    /// (monomial basis).
    pub fn from_json(text: &str) -> Result<Self> {
        let spec = match serde_json::from_str::<SpecRepr>(text)
            .map_err(|e| Error::Config(format!("wavefront spec: {e}")))?
        {
            SpecRepr::Full(s) => s,
            SpecRepr::Bare(terms) => Self { basis: Basis::Monomial, terms },
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.terms {
            if t.m > t.n {
                return Err(Error::Domain(format!("term ({}, {}) has m > n", t.n, t.m)));
            }
            if self.basis == Basis::Zernike && (t.n - t.m) % 2 != 0 {
                return Err(Error::Domain(format!("Zernike term ({}, {}) needs n − m even", t.n, t.m)));
            }
            if t.kind == TermKind::Radial && t.m != 0 {
                return Err(Error::Domain(format!("radial term ({}, {}) needs m = 0", t.n, t.m)));
            }
            if !t.a.is_finite() {
                return Err(Error::Domain(format!("term ({}, {}) has a non-finite coefficient", t.n, t.m)));
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.a == 0.0)
    }

    /// Sum of squared coefficients.
    pub fn energy(&self) -> f64 {
        self.terms.iter().map(|t| t.a * t.a).sum()
    }

    pub fn max_order(&self) -> u32 {
        self.terms.iter().map(|t| t.n).max().unwrap_or(0)
    }

    pub fn max_azimuthal(&self) -> u32 {
        self.terms.iter().map(|t| t.m).max().unwrap_or(0)
    }

    /// Coefficient of `(n, m, kind)`, summing repeated entries. `Cos` with
    /// `m = 0` and `Radial` are the same mode.
    pub fn coefficient(&self, n: u32, m: u32, kind: TermKind) -> f64 {
        let canon = |k: TermKind, m: u32| if m == 0 && k == TermKind::Cos { TermKind::Radial } else { k };
        self.terms
            .iter()
            .filter(|t| t.n == n && t.m == m && canon(t.kind, t.m) == canon(kind, m))
            .map(|t| t.a)
            .sum()
    }

    /// Equivalent spec in the monomial basis.
    pub fn to_monomial(&self) -> Self {
        if self.basis == Basis::Monomial {
            return self.clone();
        }
        let mut terms: Vec<Term> = Vec::new();
        for t in &self.terms {
            for (k, c) in zernike_radial(t.n, t.m) {
                let n = k as u32;
                match terms.iter_mut().find(|u| u.n == n && u.m == t.m && u.kind == t.kind) {
                    Some(u) => u.a += c * t.a,
                    None => terms.push(Term::new(n, t.m, t.kind, c * t.a)),
                }
            }
        }
        Self { basis: Basis::Monomial, terms }
    }

    /// Value and polar partials; `ρ` is not range-checked.
    pub fn polar_derivatives(&self, rho: f64, theta: f64) -> PolarDerivatives {
        let mut d = PolarDerivatives::default();
        for t in &self.terms {
            let (r, r1, r2) = eval_poly(&radial_polynomial(self.basis, t.n, t.m), rho);
            let (g, g1, g2) = t.angular(theta);
            d.w += t.a * r * g;
            d.w_r += t.a * r1 * g;
            d.w_t += t.a * r * g1;
            d.w_rr += t.a * r2 * g;
            d.w_rt += t.a * r1 * g1;
            d.w_tt += t.a * r * g2;
        }
        d
    }

    /// `W(ρ, θ)` at a pupil point.
    pub fn eval(&self, rho: f64, theta: f64) -> Result<f64> {
        check_rho(rho)?;
        Ok(self.polar_derivatives(rho, theta).w)
    }

    /// `W` at Cartesian pupil coordinates, no range check.
    fn eval_cartesian(&self, xi: f64, eta: f64) -> f64 {
        self.polar_derivatives(xi.hypot(eta), eta.atan2(xi)).w
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::Domain(format!("pupil radius {rho} outside [0, 1]")))
    }
}

pub fn eval_wavefront(w: &WavefrontSpec, rho: f64, theta: f64) -> Result<f64> {
    w.eval(rho, theta)
}

/// Image point `(x, y)`, defocus `z`, and wavenumber where needed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GeneratingContext {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub k: Option<f64>,
}

impl GeneratingContext {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z, k: None }
    }
}

/// `F = xρcosθ + yρsinθ − (W(ρ, θ) + ½zρ²)`
pub fn generating_function(w: &WavefrontSpec, ctx: &GeneratingContext, rho: f64, theta: f64) -> Result<f64> {
    check_rho(rho)?;
    let (s, c) = theta.sin_cos();
    Ok(ctx.x * rho * c + ctx.y * rho * s - (w.polar_derivatives(rho, theta).w + 0.5 * ctx.z * rho * rho))
}

/// Step of the Cartesian Hessian stencil.
pub const HESSIAN_STEP: f64 = 1e-3;

fn cartesian_f(w: &WavefrontSpec, ctx: &GeneratingContext, xi: f64, eta: f64) -> f64 {
    ctx.x * xi + ctx.y * eta - (w.eval_cartesian(xi, eta) + 0.5 * ctx.z * (xi * xi + eta * eta))
}

fn second_difference<G: Fn(f64) -> f64>(g: G, h: f64) -> f64 {
    (-g(2.0 * h) + 16.0 * g(h) - 30.0 * g(0.0) + 16.0 * g(-h) - g(-2.0 * h)) / (12.0 * h * h)
}

/// `det ∂²F/∂ξ²` in Cartesian pupil coordinates by fourth-order central
/// differences. At `ρ = 0` the mixed term is dropped and the determinant is
/// the product of the second derivatives along the two axes.
pub fn hessian_det(w: &WavefrontSpec, ctx: &GeneratingContext, rho: f64, theta: f64) -> Result<f64> {
    check_rho(rho)?;
    let h = HESSIAN_STEP;
    if rho + 2.0 * h * std::f64::consts::SQRT_2 > 1.0 {
        return Err(Error::Domain(format!("Hessian stencil at rho = {rho} leaves the pupil")));
    }
    let (s, c) = theta.sin_cos();
    let (x0, y0) = (rho * c, rho * s);
    let f = |dx: f64, dy: f64| cartesian_f(w, ctx, x0 + dx, y0 + dy);
    let fxx = second_difference(|d| f(d, 0.0), h);
    let fyy = second_difference(|d| f(0.0, d), h);
    if rho == 0.0 {
        return Ok(fxx * fyy);
    }
    let d1 = [(-2.0, 1.0 / 12.0), (-1.0, -8.0 / 12.0), (1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0)];
    let mut fxy = 0.0;
    for &(i, wi) in &d1 {
        for &(j, wj) in &d1 {
            fxy += wi * wj * f(i * h, j * h);
        }
    }
    fxy /= h * h;
    Ok(fxx * fyy - fxy * fxy)
}

/// Second derivative of `F` along the meridian `θ` (analytic).
pub fn meridional_curvature(w: &WavefrontSpec, ctx: &GeneratingContext, rho: f64, theta: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok(-(w.polar_derivatives(rho, theta).w_rr + ctx.z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavefrontCausticPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub rho: f64,
    pub theta: f64,
    /// 0 for the larger Hessian eigenvalue of `W`, 1 for the smaller.
    pub sheet: u8,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WavefrontCaustic {
    pub points: Vec<WavefrontCausticPoint>,
}

impl WavefrontCaustic {
    pub const CSV_HEADER: &'static str = "x,y,z,rho,theta";

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for p in &self.points {
            let _ = writeln!(s, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", p.x, p.y, p.z, p.rho, p.theta);
        }
        s
    }
}

/// Pupil sampling for [`caustic_from_wavefront`]: radii `i/n_rho` for
/// `i = 1..=n_rho` and `n_theta` equally spaced azimuths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PupilGrid {
    pub n_rho: usize,
    pub n_theta: usize,
}

impl PupilGrid {
    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (1..=self.n_rho).flat_map(move |i| {
            let rho = i as f64 / self.n_rho as f64;
            (0..self.n_theta).map(move |j| (rho, 2.0 * PI * j as f64 / self.n_theta as f64))
        })
    }
}

/// Image-space caustic of the pupil-critical rays.
///
/// Stationarity `∇_ξ F = 0` gives the ray `(x, y) = ∇W + zξ`, and
/// `det ∂²F/∂ξ² = 0` holds exactly when `−z` is an eigenvalue of the Hessian
/// of `W`. Each pupil node therefore contributes one point per eigenvalue
/// whose `z` falls inside `z_range`. Output order follows the grid, sheet 0
/// before sheet 1.
pub fn caustic_from_wavefront(w: &WavefrontSpec, z_range: (f64, f64), grid: &PupilGrid) -> Result<WavefrontCaustic> {
    if !(z_range.0.is_finite() && z_range.1.is_finite() && z_range.0 <= z_range.1) {
        return Err(Error::Domain("z range must be finite and ordered".into()));
    }
    let mut points = Vec::new();
    for (rho, theta) in grid.nodes() {
        let d = w.polar_derivatives(rho, theta);
        let [gx, gy] = d.cartesian_gradient(rho, theta);
        let [[a, b], [_, c]] = d.cartesian_hessian(rho, theta);
        let mean = 0.5 * (a + c);
        let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        let (xi, eta) = (rho * theta.cos(), rho * theta.sin());
        for (sheet, lambda) in [(0u8, mean + rad), (1u8, mean - rad)] {
            let z = -lambda;
            if z < z_range.0 || z > z_range.1 {
                continue;
            }
            points.push(WavefrontCausticPoint { x: gx + z * xi, y: gy + z * eta, z, rho, theta, sheet });
        }
    }
    Ok(WavefrontCaustic { points })
}

/// Closed-form and quadrature values of the spot mean-square radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpotMoments {
    pub sigma2_closed: f64,
    pub sigma2_quadrature: f64,
}

/// `∫₀¹∫₀^{2π} (∂W/∂ρ)² ρ dρ dθ`, exact for polynomial wavefronts.
pub fn rms_spot_quadrature(w: &WavefrontSpec) -> f64 {
    let n = w.max_order() as usize;
    let m = w.max_azimuthal() as usize;
    let rule = DiskRule::new(n + 2, 4 * m + 8);
    rule.integrate(|r, t| w.polar_derivatives(r, t).w_r.powi(2))
}

/// `4a₄₀² + ½a₃₁² + 2a₂₂² + 4a₂₀² + 4a₄₀a₂₀` as printed, for monomial specs
/// holding only `(2,0)`, `(4,0)`, `(3,1,cos)`, `(2,2,cos)` terms.
pub fn rms_spot_closed(w: &WavefrontSpec) -> Result<f64> {
    if w.basis != Basis::Monomial {
        return Err(Error::Unsupported("closed-form spot size needs the monomial basis".into()));
    }
    let primary = |t: &Term| {
        matches!(
            (t.n, t.m, t.kind),
            (2, 0, TermKind::Radial | TermKind::Cos)
                | (4, 0, TermKind::Radial | TermKind::Cos)
                | (3, 1, TermKind::Cos)
                | (2, 2, TermKind::Cos)
        )
    };
    if let Some(t) = w.terms.iter().find(|t| t.a != 0.0 && !primary(t)) {
        return Err(Error::Unsupported(format!(
            "closed-form spot size covers primary terms only, got ({}, {}, {:?})",
            t.n, t.m, t.kind
        )));
    }
    let a40 = w.coefficient(4, 0, TermKind::Radial);
    let a31 = w.coefficient(3, 1, TermKind::Cos);
    let a22 = w.coefficient(2, 2, TermKind::Cos);
    let a20 = w.coefficient(2, 0, TermKind::Radial);
    Ok(4.0 * a40 * a40 + 0.5 * a31 * a31 + 2.0 * a22 * a22 + 4.0 * a20 * a20 + 4.0 * a40 * a20)
}

pub fn rms_spot(w: &WavefrontSpec) -> Result<SpotMoments> {
    Ok(SpotMoments { sigma2_closed: rms_spot_closed(w)?, sigma2_quadrature: rms_spot_quadrature(w) })
}

pub const MIN_STREHL_ORDER: usize = 16;

/// `S = |(1/π) ∫∫ e^{ikW} ρ dρ dθ|²` on a [`DiskRule::with_order`] rule,
/// clamped to at most 1.
pub fn strehl(w: &WavefrontSpec, k: f64, order: usize) -> Result<f64> {
    if order < MIN_STREHL_ORDER {
        return Err(Error::Domain(format!("quadrature order {order} below {MIN_STREHL_ORDER}")));
    }
    if !k.is_finite() {
        return Err(Error::Domain("wavenumber must be finite".into()));
    }
    let rule = DiskRule::with_order(order);
    let terms: Vec<Complex64> =
        rule.points().map(|(r, t, wt)| Complex64::from_polar(wt, k * w.polar_derivatives(r, t).w)).collect();
    let re = pairwise_sum(&terms.iter().map(|c| c.re).collect::<Vec<_>>());
    let im = pairwise_sum(&terms.iter().map(|c| c.im).collect::<Vec<_>>());
    Ok((Complex64::new(re, im) / PI).norm_sqr().min(1.0))
}

/// Pupil variance `⟨W²⟩ − ⟨W⟩²` under the normalized disk measure.
pub fn pupil_variance(w: &WavefrontSpec, order: usize) -> f64 {
    let rule = DiskRule::with_order(order);
    let mean = rule.integrate(|r, t| w.polar_derivatives(r, t).w) / PI;
    let mean_sq = rule.integrate(|r, t| w.polar_derivatives(r, t).w.powi(2)) / PI;
    mean_sq - mean * mean
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn primary(a40: f64, a20: f64) -> WavefrontSpec {
        WavefrontSpec::monomial(vec![Term::radial(4, a40), Term::radial(2, a20)]).unwrap()
    }

    #[test]
    fn trefoil_monomial_at_rim() {
        let w = WavefrontSpec::monomial(vec![Term::cos(3, 3, 1.0)]).unwrap();
        assert_abs_diff_eq!(w.eval(1.0, 0.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w.eval(0.5, PI / 3.0).unwrap(), -0.125, epsilon = 1e-15);
    }

    #[test]
    fn empty_spec_is_flat() {
        let w = WavefrontSpec::default();
        for (r, t) in [(0.0, 0.0), (0.3, 1.0), (1.0, 4.0)] {
            assert_eq!(w.eval(r, t).unwrap(), 0.0);
        }
    }

    #[test]
    fn rho_outside_pupil_is_rejected() {
        let w = WavefrontSpec::default();
        assert!(matches!(w.eval(1.1, 0.0), Err(Error::Domain(_))));
        assert!(matches!(w.eval(-0.1, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn zernike_radial_polynomials() {
        assert_eq!(zernike_radial(4, 0), vec![(4, 6.0), (2, -6.0), (0, 1.0)]);
        assert_eq!(zernike_radial(3, 1), vec![(3, 3.0), (1, -2.0)]);
        assert_eq!(zernike_radial(2, 2), vec![(2, 1.0)]);
        let w = WavefrontSpec::zernike(vec![Term::radial(4, 1.0)]).unwrap();
        assert_abs_diff_eq!(w.eval(1.0, 0.3).unwrap(), 1.0, epsilon = 1e-15);
        for rho in [0.0f64, 0.25, 0.7] {
            let direct = 6.0 * rho.powi(4) - 6.0 * rho * rho + 1.0;
            assert_abs_diff_eq!(w.eval(rho, 0.0).unwrap(), direct, epsilon = 1e-14);
        }
    }

    #[test]
    fn zernike_orthogonality_on_disk() {
        let rule = DiskRule::with_order(12);
        let z = |n, m| WavefrontSpec::zernike(vec![Term::cos(n, m, 1.0)]).unwrap();
        let ip = |a: &WavefrontSpec, b: &WavefrontSpec| {
            rule.integrate(|r, t| a.polar_derivatives(r, t).w * b.polar_derivatives(r, t).w)
        };
        assert!(ip(&z(4, 0), &z(2, 0)).abs() < 1e-13);
        assert!(ip(&z(3, 1), &z(5, 1)).abs() < 1e-13);
        assert_relative_eq!(ip(&z(4, 0), &z(4, 0)), PI / 5.0, epsilon = 1e-13);
    }

    #[test]
    fn zernike_converts_to_monomial() {
        let z = WavefrontSpec::zernike(vec![Term::radial(4, 0.3), Term::cos(3, 1, -0.2), Term::sin(2, 2, 0.5)]).unwrap();
        let m = z.to_monomial();
        assert_eq!(m.basis, Basis::Monomial);
        for (r, t) in [(0.2, 0.1), (0.9, 2.0), (0.55, -1.3)] {
            assert_abs_diff_eq!(z.eval(r, t).unwrap(), m.eval(r, t).unwrap(), epsilon = 1e-14);
        }
    }

    #[test]
    fn invalid_terms_are_rejected() {
        assert!(WavefrontSpec::monomial(vec![Term::cos(2, 3, 1.0)]).is_err());
        assert!(WavefrontSpec::zernike(vec![Term::cos(3, 2, 1.0)]).is_err());
        assert!(WavefrontSpec::monomial(vec![Term::new(2, 2, TermKind::Radial, 1.0)]).is_err());
        assert!(WavefrontSpec::monomial(vec![Term::radial(2, f64::NAN)]).is_err());
    }

    #[test]
    fn json_forms() {
        let full = WavefrontSpec::from_json(r#"{"basis":"zernike","terms":[{"n":4,"m":0,"kind":"radial","a":0.25}]}"#)
            .unwrap();
        assert_eq!(full.basis, Basis::Zernike);
        let bare = WavefrontSpec::from_json(r#"[{"n":3,"m":3,"kind":"cos","a":0.3}]"#).unwrap();
        assert_eq!(bare.basis, Basis::Monomial);
        assert_eq!(bare.terms[0], Term::cos(3, 3, 0.3));
        assert!(matches!(WavefrontSpec::from_json("{"), Err(Error::Config(_))));
    }

    #[test]
    fn polar_derivatives_match_finite_differences() {
        let w = WavefrontSpec::monomial(vec![Term::cos(3, 1, 0.4), Term::sin(4, 2, -0.3), Term::radial(4, 0.2)])
            .unwrap();
        let (r, t, h) = (0.6, 0.7, 1e-5);
        let d = w.polar_derivatives(r, t);
        let f = |r: f64, t: f64| w.polar_derivatives(r, t).w;
        assert_abs_diff_eq!(d.w_r, (f(r + h, t) - f(r - h, t)) / (2.0 * h), epsilon = 1e-9);
        assert_abs_diff_eq!(d.w_t, (f(r, t + h) - f(r, t - h)) / (2.0 * h), epsilon = 1e-9);
        let g = |r: f64, t: f64| w.polar_derivatives(r, t).w_r;
        assert_abs_diff_eq!(d.w_rt, (g(r, t + h) - g(r, t - h)) / (2.0 * h), epsilon = 1e-9);
    }

    #[test]
    fn cartesian_hessian_matches_stencil() {
        let w = WavefrontSpec::monomial(vec![Term::cos(3, 3, 0.5), Term::cos(2, 2, -0.2), Term::radial(4, 0.7)])
            .unwrap();
        let ctx = GeneratingContext::new(0.0, 0.0, 0.0);
        for (r, t) in [(0.3, 0.4), (0.7, 2.5)] {
            let [[a, b], [_, c]] = w.polar_derivatives(r, t).cartesian_hessian(r, t);
            let det = hessian_det(&w, &ctx, r, t).unwrap();
            assert_abs_diff_eq!(det, a * c - b * b, epsilon = 1e-8);
        }
    }

    #[test]
    fn generating_function_field_curvature_form() {
        let (a20, r, z) = (0.3, 0.2, -0.1);
        let w = WavefrontSpec::monomial(vec![Term::radial(2, a20)]).unwrap();
        let ctx = GeneratingContext::new(r, 0.0, z);
        for rho in [0.0, 0.4, 0.9] {
            let f = generating_function(&w, &ctx, rho, 0.0).unwrap();
            assert_abs_diff_eq!(f, r * rho - (a20 + 0.5 * z) * rho * rho, epsilon = 1e-15);
        }
        let crit = r / (2.0 * a20 + z);
        let h = 1e-6;
        let df = (generating_function(&w, &ctx, crit + h, 0.0).unwrap()
            - generating_function(&w, &ctx, crit - h, 0.0).unwrap())
            / (2.0 * h);
        assert_abs_diff_eq!(df, 0.0, epsilon = 1e-9);
        let zero = generating_function(&WavefrontSpec::default(), &GeneratingContext::default(), 0.7, 1.0).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn field_curvature_hessian_vanishes_on_plane() {
        let a20 = 0.35;
        let w = WavefrontSpec::monomial(vec![Term::radial(2, a20)]).unwrap();
        for (x, y) in [(0.0, 0.0), (0.4, -1.0)] {
            let on = GeneratingContext::new(x, y, -2.0 * a20);
            for (r, t) in [(0.0, 0.0), (0.5, 1.0), (0.9, 3.0)] {
                assert!(hessian_det(&w, &on, r, t).unwrap().abs() < 1e-8);
                assert_abs_diff_eq!(meridional_curvature(&w, &on, r, t).unwrap(), 0.0, epsilon = 1e-15);
            }
            let off = GeneratingContext::new(x, y, -2.0 * a20 + 0.1);
            assert_abs_diff_eq!(hessian_det(&w, &off, 0.5, 1.0).unwrap(), 0.01, epsilon = 1e-8);
        }
    }

    #[test]
    fn spherical_aberration_meridional_condition() {
        let (a40, a20) = (0.5, 0.1);
        let w = primary(a40, a20);
        for rho in [0.2, 0.6] {
            let z = -(12.0 * a40 * rho * rho + 2.0 * a20);
            let ctx = GeneratingContext::new(0.0, 0.0, z);
            assert_abs_diff_eq!(meridional_curvature(&w, &ctx, rho, 0.0).unwrap(), 0.0, epsilon = 1e-14);
            assert!(hessian_det(&w, &ctx, rho, 0.0).unwrap().abs() < 1e-8);
        }
    }

    #[test]
    fn flat_wavefront_hessian_vanishes_only_at_zero_defocus() {
        let w = WavefrontSpec::default();
        assert!(hessian_det(&w, &GeneratingContext::new(0.1, 0.0, 0.0), 0.3, 0.0).unwrap().abs() < 1e-10);
        assert!(hessian_det(&w, &GeneratingContext::new(0.1, 0.0, 0.2), 0.3, 0.0).unwrap().abs() > 1e-3);
    }

    #[test]
    fn hessian_stencil_must_fit() {
        let w = WavefrontSpec::default();
        assert!(matches!(hessian_det(&w, &GeneratingContext::default(), 0.999, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn field_curvature_caustic_is_on_plane() {
        let a20 = -0.4;
        let w = WavefrontSpec::monomial(vec![Term::radial(2, a20)]).unwrap();
        let c = caustic_from_wavefront(&w, (-5.0, 5.0), &PupilGrid { n_rho: 10, n_theta: 12 }).unwrap();
        assert!(!c.is_empty());
        for p in &c.points {
            assert_abs_diff_eq!(p.z, -2.0 * a20, epsilon = 1e-12);
        }
    }

    #[test]
    fn spherical_aberration_caustic_branches() {
        let (a40, a20) = (0.25, -0.1);
        let w = primary(a40, a20);
        let c = caustic_from_wavefront(&w, (-10.0, 10.0), &PupilGrid { n_rho: 20, n_theta: 8 }).unwrap();
        assert_eq!(c.len(), 2 * 20 * 8);
        for p in &c.points {
            let r = p.x.hypot(p.y);
            let radial_z = -2.0 * a20 - 12.0 * a40 * p.rho * p.rho;
            if p.sheet == 0 {
                assert_abs_diff_eq!(p.z, radial_z, epsilon = 1e-12);
                assert_abs_diff_eq!(r, 8.0 * a40 * p.rho.powi(3), epsilon = 1e-12);
            } else {
                assert_abs_diff_eq!(p.z, -2.0 * a20 - 4.0 * a40 * p.rho * p.rho, epsilon = 1e-12);
                assert!(r < 1e-12);
            }
        }
    }

    #[test]
    fn flat_wavefront_caustic_is_the_focus() {
        let c = caustic_from_wavefront(&WavefrontSpec::default(), (-1.0, 1.0), &PupilGrid { n_rho: 4, n_theta: 4 })
            .unwrap();
        assert!(c.points.iter().all(|p| p.x == 0.0 && p.y == 0.0 && p.z == 0.0));
        let none = caustic_from_wavefront(&WavefrontSpec::default(), (0.5, 1.0), &PupilGrid { n_rho: 4, n_theta: 4 })
            .unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn spot_size_closed_and_quadrature() {
        let zero = rms_spot(&WavefrontSpec::default()).unwrap();
        assert_eq!((zero.sigma2_closed, zero.sigma2_quadrature), (0.0, 0.0));
        let d = rms_spot(&WavefrontSpec::monomial(vec![Term::radial(2, 1.0)]).unwrap()).unwrap();
        assert_eq!(d.sigma2_closed, 4.0);
        assert_relative_eq!(d.sigma2_quadrature, 2.0 * PI, epsilon = 1e-13);
    }

    #[test]
    fn spot_quadrature_matches_monomial_integrals() {
        // ∫(∂W/∂ρ)²ρ for W = a ρ⁴ + b ρ² + c ρ³cosθ + e ρ²cos2θ
        let (a, b, c, e) = (0.7, -0.3, 0.4, 0.25);
        let w = WavefrontSpec::monomial(vec![
            Term::radial(4, a),
            Term::radial(2, b),
            Term::cos(3, 1, c),
            Term::cos(2, 2, e),
        ])
        .unwrap();
        let expect = 2.0 * PI * (16.0 * a * a / 8.0 + 16.0 * a * b / 6.0 + 4.0 * b * b / 4.0)
            + PI * 9.0 * c * c / 6.0
            + PI * 4.0 * e * e / 4.0;
        assert_relative_eq!(rms_spot_quadrature(&w), expect, epsilon = 1e-13);
    }

    #[test]
    fn closed_form_rejects_higher_order_terms() {
        let w = WavefrontSpec::monomial(vec![Term::radial(6, 1.0)]).unwrap();
        assert!(matches!(rms_spot(&w), Err(Error::Unsupported(_))));
        let z = WavefrontSpec::zernike(vec![Term::radial(2, 1.0)]).unwrap();
        assert!(matches!(rms_spot_closed(&z), Err(Error::Unsupported(_))));
    }

    #[test]
    fn strehl_of_flat_and_piston() {
        assert_abs_diff_eq!(strehl(&WavefrontSpec::default(), 2.0 * PI, 16).unwrap(), 1.0, epsilon = 1e-12);
        let piston = WavefrontSpec::monomial(vec![Term::radial(0, 0.37)]).unwrap();
        assert_abs_diff_eq!(strehl(&piston, 2.0 * PI, 16).unwrap(), 1.0, epsilon = 1e-12);
        assert!(matches!(strehl(&piston, 1.0, 8), Err(Error::Domain(_))));
    }

    #[test]
    fn strehl_small_aberration_follows_marechal() {
        let w = WavefrontSpec::monomial(vec![Term::radial(4, 0.01)]).unwrap();
        let k = 2.0 * PI;
        let s = strehl(&w, k, 32).unwrap();
        let approx = 1.0 - k * k * pupil_variance(&w, 32);
        assert!((s - approx).abs() < 5e-4, "{s} {approx}");
        assert!(s < 1.0);
    }
}
