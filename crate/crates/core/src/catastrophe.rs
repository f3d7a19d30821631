//! Thom's elementary catastrophes: normal forms, their caustic (bifurcation)
//! sets, classification of wavefronts by dominant mode, and the unfolding of
//! the elliptic umbilic.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wavefront::WavefrontSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CatastropheLabel {
    A2,
    A3,
    A4,
    A5,
    D4plus,
    D4minus,
    D5,
}

impl CatastropheLabel {
    pub const ALL: [Self; 7] = [Self::A2, Self::A3, Self::A4, Self::A5, Self::D4plus, Self::D4minus, Self::D5];

    pub fn name(self) -> &'static str {
        match self {
            Self::A2 => "fold",
            Self::A3 => "cusp",
            Self::A4 => "swallowtail",
            Self::A5 => "butterfly",
            Self::D4plus => "hyperbolic umbilic",
            Self::D4minus => "elliptic umbilic",
            Self::D5 => "parabolic umbilic",
        }
    }

    pub fn codimension(self) -> usize {
        self.control_arity()
    }

    /// Generic in three-dimensional control space.
    pub fn is_stable_in_3d(self) -> bool {
        self.codimension() <= 3
    }

    pub fn state_arity(self) -> usize {
        match self {
            Self::A2 | Self::A3 | Self::A4 | Self::A5 => 1,
            Self::D4plus | Self::D4minus | Self::D5 => 2,
        }
    }

    pub fn control_arity(self) -> usize {
        match self {
            Self::A2 => 1,
            Self::A3 => 2,
            Self::A4 | Self::D4plus | Self::D4minus => 3,
            Self::A5 | Self::D5 => 4,
        }
    }

    pub fn is_d_series(self) -> bool {
        self.state_arity() == 2
    }
}

impl fmt::Display for CatastropheLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::A2 => "A2",
            Self::A3 => "A3",
            Self::A4 => "A4",
            Self::A5 => "A5",
            Self::D4plus => "D4plus",
            Self::D4minus => "D4minus",
            Self::D5 => "D5",
        };
        f.write_str(s)
    }
}

fn check_arity(label: CatastropheLabel, state: &[f64], controls: &[f64]) -> Result<()> {
    if state.len() != label.state_arity() || controls.len() != label.control_arity() {
        return Err(Error::Usage(format!(
            "{label} takes {} state and {} control values, got {} and {}",
            label.state_arity(),
            label.control_arity(),
            state.len(),
            controls.len()
        )));
    }
    Ok(())
}

/// Potential `V(state; controls)`:
///
/// | label | `V` |
/// |---|---|
/// | A2 | `y³ + λ₁y` |
/// | A3 | `y⁴ + λ₁y² + λ₂y` |
/// | A4 | `y⁵ + λ₁y³ + λ₂y² + λ₃y` |
/// | A5 | `y⁶ + λ₁y⁴ + λ₂y³ + λ₃y² + λ₄y` |
/// | D4plus | `y₁³ + y₂³ + λ₁y₁y₂ − λ₂y₁ − λ₃y₂` |
/// | D4minus | `y₁³ − 3y₁y₂² + λ₁(y₁² + y₂²) − λ₂y₁ − λ₃y₂` |
/// | D5 | `y₁²y₂ + y₂⁴ + λ₁y₁² + λ₂y₂² + λ₃y₁ + λ₄y₂` |
pub fn normal_form_value(label: CatastropheLabel, state: &[f64], controls: &[f64]) -> Result<f64> {
    check_arity(label, state, controls)?;
    let l = controls;
    Ok(match label {
        CatastropheLabel::A2 => {
            let y = state[0];
            y.powi(3) + l[0] * y
        }
        CatastropheLabel::A3 => {
            let y = state[0];
            y.powi(4) + l[0] * y * y + l[1] * y
        }
        CatastropheLabel::A4 => {
            let y = state[0];
            y.powi(5) + l[0] * y.powi(3) + l[1] * y * y + l[2] * y
        }
        CatastropheLabel::A5 => {
            let y = state[0];
            y.powi(6) + l[0] * y.powi(4) + l[1] * y.powi(3) + l[2] * y * y + l[3] * y
        }
        CatastropheLabel::D4plus => {
            let (a, b) = (state[0], state[1]);
            a.powi(3) + b.powi(3) + l[0] * a * b - l[1] * a - l[2] * b
        }
        CatastropheLabel::D4minus => {
            let (a, b) = (state[0], state[1]);
            a.powi(3) - 3.0 * a * b * b + l[0] * (a * a + b * b) - l[1] * a - l[2] * b
        }
        CatastropheLabel::D5 => {
            let (a, b) = (state[0], state[1]);
            a * a * b + b.powi(4) + l[0] * a * a + l[1] * b * b + l[2] * a + l[3] * b
        }
    })
}

/// State gradient and Hessian of `V`.
pub fn state_derivatives(label: CatastropheLabel, state: &[f64], controls: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    check_arity(label, state, controls)?;
    let l = controls;
    Ok(match label {
        CatastropheLabel::A2 => {
            let y = state[0];
            (vec![3.0 * y * y + l[0]], DMatrix::from_element(1, 1, 6.0 * y))
        }
        CatastropheLabel::A3 => {
            let y = state[0];
            (vec![4.0 * y.powi(3) + 2.0 * l[0] * y + l[1]], DMatrix::from_element(1, 1, 12.0 * y * y + 2.0 * l[0]))
        }
        CatastropheLabel::A4 => {
            let y = state[0];
            (
                vec![5.0 * y.powi(4) + 3.0 * l[0] * y * y + 2.0 * l[1] * y + l[2]],
                DMatrix::from_element(1, 1, 20.0 * y.powi(3) + 6.0 * l[0] * y + 2.0 * l[1]),
            )
        }
        CatastropheLabel::A5 => {
            let y = state[0];
            (
                vec![6.0 * y.powi(5) + 4.0 * l[0] * y.powi(3) + 3.0 * l[1] * y * y + 2.0 * l[2] * y + l[3]],
                DMatrix::from_element(1, 1, 30.0 * y.powi(4) + 12.0 * l[0] * y * y + 6.0 * l[1] * y + 2.0 * l[2]),
            )
        }
        CatastropheLabel::D4plus => {
            let (a, b) = (state[0], state[1]);
            (
                vec![3.0 * a * a + l[0] * b - l[1], 3.0 * b * b + l[0] * a - l[2]],
                DMatrix::from_row_slice(2, 2, &[6.0 * a, l[0], l[0], 6.0 * b]),
            )
        }
        CatastropheLabel::D4minus => {
            let (a, b) = (state[0], state[1]);
            (
                vec![3.0 * a * a - 3.0 * b * b + 2.0 * l[0] * a - l[1], -6.0 * a * b + 2.0 * l[0] * b - l[2]],
                DMatrix::from_row_slice(2, 2, &[6.0 * a + 2.0 * l[0], -6.0 * b, -6.0 * b, -6.0 * a + 2.0 * l[0]]),
            )
        }
        CatastropheLabel::D5 => {
            let (a, b) = (state[0], state[1]);
            (
                vec![2.0 * a * b + 2.0 * l[0] * a + l[2], a * a + 4.0 * b.powi(3) + 2.0 * l[1] * b + l[3]],
                DMatrix::from_row_slice(2, 2, &[2.0 * b + 2.0 * l[0], 2.0 * a, 2.0 * a, 12.0 * b * b + 2.0 * l[1]]),
            )
        }
    })
}

/// Residuals of the caustic system at a state/control pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausticResidual {
    /// `∂V/∂state`
    pub gradient: Vec<f64>,
    /// `det ∂²V/∂state²`
    pub hessian_det: f64,
    /// `8λ₁³ + 27λ₂²` for A3.
    pub eliminant: Option<f64>,
}

impl CausticResidual {
    pub fn max_abs(&self) -> f64 {
        self.gradient
            .iter()
            .chain(std::iter::once(&self.hessian_det))
            .chain(self.eliminant.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

pub fn caustic_set_residual(label: CatastropheLabel, controls: &[f64], state: &[f64]) -> Result<CausticResidual> {
    if !label.is_stable_in_3d() {
        return Err(Error::Unsupported(format!("{label} is not generic in three dimensions")));
    }
    let (gradient, hess) = state_derivatives(label, state, controls)?;
    let eliminant = (label == CatastropheLabel::A3).then(|| cusp_eliminant(controls[0], controls[1]));
    Ok(CausticResidual { gradient, hessian_det: hess.determinant(), eliminant })
}

/// `8λ₁³ + 27λ₂²`, zero on the A3 cusp.
pub fn cusp_eliminant(lambda1: f64, lambda2: f64) -> f64 {
    8.0 * lambda1.powi(3) + 27.0 * lambda2 * lambda2
}

/// Control-space eliminant of the caustic set. Only A3 has one: the A2
/// caustic is the single plane `λ₁ = 0`.
pub fn eliminant(label: CatastropheLabel, controls: &[f64]) -> Result<f64> {
    match label {
        CatastropheLabel::A3 if controls.len() == 2 => Ok(cusp_eliminant(controls[0], controls[1])),
        CatastropheLabel::A3 => Err(Error::Usage("A3 takes two controls".into())),
        CatastropheLabel::A2 => Err(Error::NotApplicable("the A2 caustic is the plane λ₁ = 0".into())),
        other => Err(Error::NotApplicable(format!("no closed eliminant implemented for {other}"))),
    }
}

/// Corank of the state Hessian at tolerance `tol`.
pub fn corank(label: CatastropheLabel, state: &[f64], controls: &[f64], tol: f64) -> Result<usize> {
    let (_, h) = state_derivatives(label, state, controls)?;
    let sv = h.singular_values();
    Ok(sv.iter().filter(|s| **s <= tol).count())
}

/// Sweep window for [`trace_bifurcation_set`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BifurcationWindow {
    /// Range of the sweep parameter: the state `y` for A-series, the
    /// hyperbola parameter for D4plus, the polar angle for D4minus.
    pub sweep: (f64, f64),
    /// `λ₁` held fixed for A4 and the D-series sections.
    pub fixed_control: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationPoint {
    pub sweep: f64,
    pub state: Vec<f64>,
    pub controls: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationTrace {
    pub label: CatastropheLabel,
    pub points: Vec<BifurcationPoint>,
}

impl BifurcationTrace {
    pub const CSV_HEADER: &'static str = "state,ctrl1,ctrl2,ctrl3";

    /// Columns past the label's control arity are left empty.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for p in &self.points {
            let _ = write!(s, "{:.16e}", p.sweep);
            for i in 0..3 {
                match p.controls.get(i) {
                    Some(c) => {
                        let _ = write!(s, ",{c:.16e}");
                    }
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
        s
    }

    /// The last two controls as a planar section.
    pub fn section(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .map(|p| {
                let n = p.controls.len();
                if n >= 2 { (p.controls[n - 2], p.controls[n - 1]) } else { (p.controls[0], 0.0) }
            })
            .collect()
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Solves the degenerate-critical-point system parametrically in the sweep
/// variable and projects to controls. A2 yields the single point `y = 0`,
/// `λ₁ = 0`. D4plus with `λ₁ ≠ 0` traces both hyperbola branches
/// `y₁y₂ = λ₁²/36`, with sweep `t` giving `y₁ = |λ₁|t/6`.
pub fn trace_bifurcation_set(
    label: CatastropheLabel,
    window: &BifurcationWindow,
    resolution: usize,
) -> Result<BifurcationTrace> {
    if !label.is_stable_in_3d() {
        return Err(Error::Unsupported(format!("{label} bifurcation sets are not traced")));
    }
    if !(window.sweep.0.is_finite() && window.sweep.1.is_finite() && window.fixed_control.is_finite()) {
        return Err(Error::Domain("bifurcation window must be finite".into()));
    }
    let l1 = window.fixed_control;
    let sweep = linspace(window.sweep.0, window.sweep.1, resolution.max(1));
    let point = |s: f64| -> Vec<BifurcationPoint> {
        match label {
            CatastropheLabel::A2 => vec![],
            CatastropheLabel::A3 => {
                vec![BifurcationPoint { sweep: s, state: vec![s], controls: vec![-6.0 * s * s, 8.0 * s.powi(3)] }]
            }
            CatastropheLabel::A4 => vec![BifurcationPoint {
                sweep: s,
                state: vec![s],
                controls: vec![l1, -10.0 * s.powi(3) - 3.0 * l1 * s, 15.0 * s.powi(4) + 3.0 * l1 * s * s],
            }],
            CatastropheLabel::D4plus => {
                let (y1, y2) = if l1 == 0.0 {
                    (0.0, s)
                } else if s == 0.0 {
                    return vec![];
                } else {
                    let c = l1.abs() / 6.0;
                    (c * s, c / s)
                };
                vec![BifurcationPoint {
                    sweep: s,
                    state: vec![y1, y2],
                    controls: vec![l1, 3.0 * y1 * y1 + l1 * y2, 3.0 * y2 * y2 + l1 * y1],
                }]
            }
            CatastropheLabel::D4minus => {
                let r = l1.abs() / 3.0;
                let (y1, y2) = (r * s.cos(), r * s.sin());
                vec![BifurcationPoint {
                    sweep: s,
                    state: vec![y1, y2],
                    controls: vec![l1, 3.0 * y1 * y1 - 3.0 * y2 * y2 + 2.0 * l1 * y1, -6.0 * y1 * y2 + 2.0 * l1 * y2],
                }]
            }
            CatastropheLabel::A5 | CatastropheLabel::D5 => unreachable!(),
        }
    };
    let points = if label == CatastropheLabel::A2 {
        vec![BifurcationPoint { sweep: 0.0, state: vec![0.0], controls: vec![0.0] }]
    } else {
        sweep.par_iter().map(|&s| point(s)).collect::<Vec<_>>().into_iter().flatten().collect()
    };
    Ok(BifurcationTrace { label, points })
}

/// Indices of cusps on a sampled planar curve: vertices where the direction
/// turns by more than `min_turn` radians. Runs of consecutive candidates are
/// merged to their sharpest vertex.
pub fn find_cusps(curve: &[(f64, f64)], closed: bool, min_turn: f64) -> Vec<usize> {
    let n = curve.len();
    if n < 3 {
        return vec![];
    }
    let turn = |i: usize| -> Option<f64> {
        let prev = if i == 0 { if closed { n - 1 } else { return None } } else { i - 1 };
        let next = if i + 1 == n { if closed { 0 } else { return None } } else { i + 1 };
        let (ax, ay) = (curve[i].0 - curve[prev].0, curve[i].1 - curve[prev].1);
        let (bx, by) = (curve[next].0 - curve[i].0, curve[next].1 - curve[i].1);
        if ax.hypot(ay) == 0.0 || bx.hypot(by) == 0.0 {
            return Some(PI);
        }
        Some((ax * by - ay * bx).atan2(ax * bx + ay * by).abs())
    };
    let turns: Vec<Option<f64>> = (0..n).map(turn).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if turns[i].is_some_and(|t| t > min_turn) {
            let start = i;
            while i + 1 < n && turns[i + 1].is_some_and(|t| t > min_turn) {
                i += 1;
            }
            let best = (start..=i).max_by(|&a, &b| turns[a].unwrap().total_cmp(&turns[b].unwrap())).unwrap();
            out.push(best);
        }
        i += 1;
    }
    if closed && out.len() >= 2 {
        let (first, last) = (out[0], out[out.len() - 1]);
        if first == 0 && last == n - 1 {
            out.pop();
        }
    }
    out
}

/// Proper crossings between non-adjacent segments of a polyline.
pub fn self_intersections(curve: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let seg = |i: usize| (curve[i], curve[i + 1]);
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    for i in 0..curve.len().saturating_sub(1) {
        for j in i + 2..curve.len().saturating_sub(1) {
            let ((p1, p2), (q1, q2)) = (seg(i), seg(j));
            let d1 = cross(q1, q2, p1);
            let d2 = cross(q1, q2, p2);
            let d3 = cross(p1, p2, q1);
            let d4 = cross(p1, p2, q2);
            if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
                let t = d1 / (d1 - d2);
                out.push((p1.0 + t * (p2.0 - p1.0), p1.1 + t * (p2.1 - p1.1)));
            }
        }
    }
    out
}

/// Cusp points of the `(b, c)` caustic of
/// `V = s(y₁³ − 3y₁y₂²) + a(y₁² + y₂²) + b y₁ + c y₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnfoldedCusps {
    pub cusps: [(f64, f64); 3],
    /// Mean distance of the cusps from the origin.
    pub radius: f64,
}

pub const UNFOLD_SAMPLES: usize = 3600;

/// Traces the caustic of the unfolded elliptic umbilic: the Hessian
/// degenerates on the circle `|y| = |a| / (3|s|)`, which maps to a deltoid
/// in `(b, c)`. Cusps are located by turning angle on the sampled curve and
/// refined by minimizing the local speed. `rotation` turns the control
/// window by that angle.
pub fn unfold_elliptic_umbilic_rotated(s: f64, a: f64, rotation: f64) -> Result<UnfoldedCusps> {
    if s == 0.0 || !s.is_finite() || !a.is_finite() {
        return Err(Error::Domain("trefoil scale must be finite and non-zero".into()));
    }
    if a == 0.0 {
        return Ok(UnfoldedCusps { cusps: [(0.0, 0.0); 3], radius: 0.0 });
    }
    let r = a.abs() / (3.0 * s.abs());
    let (rs, rc) = rotation.sin_cos();
    let curve_at = |phi: f64| -> (f64, f64) {
        let (y1, y2) = (r * phi.cos(), r * phi.sin());
        let b = -(3.0 * s * (y1 * y1 - y2 * y2) + 2.0 * a * y1);
        let c = -(-6.0 * s * y1 * y2 + 2.0 * a * y2);
        (rc * b - rs * c, rs * b + rc * c)
    };
    let dphi = 2.0 * PI / UNFOLD_SAMPLES as f64;
    let curve: Vec<(f64, f64)> = (0..UNFOLD_SAMPLES).map(|i| curve_at(i as f64 * dphi)).collect();
    let idx = find_cusps(&curve, true, PI / 2.0);
    if idx.len() != 3 {
        return Err(Error::TopologyChange { expected: 3, found: idx.len() });
    }
    let speed = |phi: f64| {
        let (p, q) = (curve_at(phi + 1e-6), curve_at(phi - 1e-6));
        (p.0 - q.0).hypot(p.1 - q.1)
    };
    let mut cusps = [(0.0, 0.0); 3];
    for (k, &i) in idx.iter().enumerate() {
        let phi = golden_section(speed, (i as f64 - 1.5) * dphi, (i as f64 + 1.5) * dphi);
        cusps[k] = curve_at(phi);
    }
    let radius = cusps.iter().map(|c| c.0.hypot(c.1)).sum::<f64>() / 3.0;
    Ok(UnfoldedCusps { cusps, radius })
}

pub fn unfold_elliptic_umbilic(s: f64, a: f64) -> Result<UnfoldedCusps> {
    unfold_elliptic_umbilic_rotated(s, a, 0.0)
}

fn golden_section<G: Fn(f64) -> f64>(g: G, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut g1, mut g2) = (g(x1), g(x2));
    while hi - lo > 1e-13 * (1.0 + lo.abs()) {
        if g1 < g2 {
            hi = x2;
            x2 = x1;
            g2 = g1;
            x1 = hi - inv_phi * (hi - lo);
            g1 = g(x1);
        } else {
            lo = x1;
            x1 = x2;
            g1 = g2;
            x2 = lo + inv_phi * (hi - lo);
            g2 = g(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Energy fractions of defocus, astigmatism, coma and trefoil.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub m20: f64,
    pub m22: f64,
    pub m31: f64,
    pub m33: f64,
}

impl Fingerprint {
    pub fn as_array(&self) -> [f64; 4] {
        [self.m20, self.m22, self.m31, self.m33]
    }
}

/// Squared coefficients summed per `(n, m)` over cos/sin/radial kinds,
/// divided by the total.
pub fn mode_energies(w: &WavefrontSpec) -> Result<BTreeMap<(u32, u32), f64>> {
    let total = w.energy();
    if !(total > 0.0) {
        return Err(Error::NoAberration);
    }
    let mut out = BTreeMap::new();
    for t in &w.terms {
        *out.entry((t.n, t.m)).or_insert(0.0) += t.a * t.a / total;
    }
    Ok(out)
}

pub fn fingerprint(w: &WavefrontSpec) -> Result<Fingerprint> {
    let e = mode_energies(w)?;
    let get = |n, m| e.get(&(n, m)).copied().unwrap_or(0.0);
    Ok(Fingerprint { m20: get(2, 0), m22: get(2, 2), m31: get(3, 1), m33: get(3, 3) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub dominant: f64,
    pub significant: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { dominant: 0.5, significant: 0.15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: CatastropheLabel,
    pub confidence: f64,
    /// Energy fraction per mode, keyed `"n,m"`.
    pub energies: BTreeMap<String, f64>,
    pub conflicts: Vec<String>,
}

/// Looks up the caustic type from the dominant mode group:
///
/// | modes | label |
/// |---|---|
/// | `(6,0)` and `(4,0)` both significant | A4 |
/// | `(2,0)` | A2 |
/// | `(4,0)`, `(3,1)` | A3 |
/// | `(2,2)`, `(4,4)` | D4plus |
/// | `(3,3)` | D4minus |
///
/// The group with the largest energy wins; its energy is the confidence.
/// Without a dominant group the label follows the azimuthal order carrying
/// most energy. Assignments that the correspondence theorem would make
/// differently are listed in `conflicts`.
pub fn classify(w: &WavefrontSpec, thresholds: &Thresholds) -> Result<Classification> {
    let e = mode_energies(w)?;
    let get = |n, m| e.get(&(n, m)).copied().unwrap_or(0.0);
    let energies: BTreeMap<String, f64> = e.iter().map(|((n, m), v)| (format!("{n},{m}"), *v)).collect();
    let mut conflicts = Vec::new();

    let (e20, e40, e31, e60) = (get(2, 0), get(4, 0), get(3, 1), get(6, 0));
    let (e22, e44, e33) = (get(2, 2), get(4, 4), get(3, 3));
    let a4_coupled = e60 >= thresholds.significant && e40 >= thresholds.significant;
    let mut groups = vec![
        (CatastropheLabel::A2, e20),
        (CatastropheLabel::A3, e40 + e31),
        (CatastropheLabel::D4plus, e22 + e44),
        (CatastropheLabel::D4minus, e33),
    ];
    if a4_coupled {
        groups.retain(|g| g.0 != CatastropheLabel::A3);
        groups.insert(0, (CatastropheLabel::A4, e60 + e40 + e31));
    }
    let (mut label, mut confidence) =
        groups.iter().copied().fold((CatastropheLabel::A2, -1.0), |best, g| if g.1 > best.1 { g } else { best });

    if confidence < thresholds.dominant {
        let mut by_m: BTreeMap<u32, f64> = BTreeMap::new();
        for ((_, m), v) in &e {
            *by_m.entry(*m).or_insert(0.0) += v;
        }
        let (m, share) = by_m.iter().fold((0u32, -1.0), |best, (m, v)| if *v > best.1 { (*m, *v) } else { best });
        let fallback = match m {
            0 => {
                let (n, _) = e
                    .iter()
                    .filter(|((_, m), _)| *m == 0)
                    .fold((0u32, -1.0), |best, ((n, _), v)| if *v > best.1 { (*n, *v) } else { best });
                match n {
                    0..=2 => CatastropheLabel::A2,
                    3..=5 => CatastropheLabel::A3,
                    _ => CatastropheLabel::A4,
                }
            }
            1 => CatastropheLabel::A3,
            3 => CatastropheLabel::D4minus,
            _ => CatastropheLabel::D4plus,
        };
        conflicts.push(format!(
            "no mode group reaches the dominance threshold {}; label taken from azimuthal order {m} ({share:.3} of energy)",
            thresholds.dominant
        ));
        label = fallback;
        confidence = confidence.max(0.0);
    }

    if label == CatastropheLabel::A3 {
        if e40 >= thresholds.significant {
            conflicts.push("spherical aberration: table row A3, correspondence theorem gives A4".into());
        }
        if e31 >= thresholds.significant {
            conflicts.push("coma: table row A3, correspondence theorem gives D4plus".into());
        }
    }
    if label == CatastropheLabel::D4plus && e22 >= thresholds.significant {
        conflicts.push("astigmatism: table row D4plus, correspondence theorem gives A3".into());
    }
    Ok(Classification { label, confidence, energies, conflicts })
}
