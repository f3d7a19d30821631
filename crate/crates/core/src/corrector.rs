//! Aberration balancing, caustic-measure descent, the topological correction
//! (TOC) loop, deformable-mirror projection, DOE phase and tolerance bounds.

use std::f64::consts::PI;
use std::fmt;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catastrophe::{classify, CatastropheLabel, Thresholds};
use crate::error::{Error, Result};
use crate::mesh::{caustic_measure, CausticMesh};
use crate::quadrature::DiskRule;
use crate::wavefront::{caustic_from_wavefront, rms_spot_quadrature, strehl, PupilGrid, Term, TermKind, WavefrontSpec};

/// The primary-balance relations as printed (`a₂₀ = −2a₄₀`, `a₃₁ = a₂₂ = 0`)
/// next to the minimizer of the quadrature spot size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimaryBalance {
    pub a40: f64,
    /// `(a20, a31, a22)` from the printed relation.
    pub printed: [f64; 3],
    /// `(a20, a31, a22)` minimizing `∫(∂W/∂ρ)²ρ dρ dθ`.
    pub oracle: [f64; 3],
    /// Whether the two variants agree to `1e-9`.
    pub consistent: bool,
}

fn golden_section<G: Fn(f64) -> f64>(g: G, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut g1, mut g2) = (g(x1), g(x2));
    while hi - lo > tol {
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

/// Minimizes the quadrature spot size over `a20` with `a40` fixed: a coarse
/// scan brackets the minimum, golden-section search refines it.
pub fn spot_optimal_defocus(a40: f64) -> f64 {
    if a40 == 0.0 {
        return 0.0;
    }
    let sigma = |a20: f64| {
        rms_spot_quadrature(&WavefrontSpec::monomial(vec![Term::radial(4, a40), Term::radial(2, a20)]).unwrap())
    };
    let span = 4.0 * a40.abs();
    let n = 400;
    let xs: Vec<f64> = (0..=n).map(|i| -span + 2.0 * span * i as f64 / n as f64).collect();
    let best = (0..=n).min_by(|&i, &j| sigma(xs[i]).total_cmp(&sigma(xs[j]))).unwrap();
    let lo = xs[best.saturating_sub(1)];
    let hi = xs[(best + 1).min(n)];
    golden_section(sigma, lo, hi, 1e-12 * span)
}

pub fn balance_primary(a40: f64) -> PrimaryBalance {
    let printed_a20 = -2.0 * a40;
    let oracle_a20 = spot_optimal_defocus(a40);
    PrimaryBalance {
        a40,
        printed: [printed_a20, 0.0, 0.0],
        oracle: [oracle_a20, 0.0, 0.0],
        consistent: (printed_a20 - oracle_a20).abs() <= 1e-9,
    }
}

/// `a_{2n,0}` from `[a_0, a_2, …, a_{2n−2}]` by the printed recurrence
/// `a_{2n} = −(n+1)/(2n)·a_{2n−2} − 1/(4n)·Σ_{k=1}^{n−1} (2k)!(2n−2k)!/((k!)²((n−k)!)²)·a_{2k}a_{2n−2k}`.
pub fn balance_high_order(lower: &[f64]) -> Result<f64> {
    let n = lower.len();
    if n == 0 {
        return Err(Error::Usage("need at least a_0".into()));
    }
    if let Some(i) = lower.iter().position(|a| !a.is_finite()) {
        return Err(Error::Usage(format!("coefficient a_{} is missing", 2 * i)));
    }
    let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
    let nf = n as f64;
    let mut sum = 0.0;
    for k in 1..n {
        let c = fact(2 * k) * fact(2 * n - 2 * k) / (fact(k).powi(2) * fact(n - k).powi(2));
        sum += c * lower[k] * lower[n - k];
    }
    Ok(-(nf + 1.0) / (2.0 * nf) * lower[n - 1] - sum / (4.0 * nf))
}

/// Default pupil sampling for [`caustic_objective`].
pub const OBJECTIVE_GRID: PupilGrid = PupilGrid { n_rho: 24, n_theta: 48 };

/// Faces smaller than this, in pupil units, count as collapsed.
pub const COLLAPSED_FACE_AREA: f64 = 1e-20;

/// Caustic measure of the wavefront caustic inside `z_window`.
pub fn caustic_objective(w: &WavefrontSpec, z_window: (f64, f64)) -> Result<f64> {
    caustic_objective_with(w, z_window, &OBJECTIVE_GRID)
}

/// Each caustic sheet is meshed over the structured pupil grid (periodic in
/// `θ`); vertices outside `z_window` and collapsed faces are dropped. An
/// empty mesh has measure 0.
pub fn caustic_objective_with(w: &WavefrontSpec, z_window: (f64, f64), grid: &PupilGrid) -> Result<f64> {
    let caustic = caustic_from_wavefront(w, (-f64::MAX, f64::MAX), grid).map_err(|e| Error::Objective(e.to_string()))?;
    let (nr, nt) = (grid.n_rho, grid.n_theta);
    let mut total = 0.0;
    for sheet in [0u8, 1u8] {
        let slots: Vec<Option<Vector3<f64>>> = caustic
            .points
            .iter()
            .filter(|p| p.sheet == sheet)
            .map(|p| (p.z >= z_window.0 && p.z <= z_window.1).then(|| Vector3::new(p.x, p.y, p.z)))
            .collect();
        let mut vertices = Vec::new();
        let mut index = vec![usize::MAX; nr * nt];
        for (i, s) in slots.iter().enumerate() {
            if let Some(v) = s {
                index[i] = vertices.len();
                vertices.push(*v);
            }
        }
        let mut faces = Vec::new();
        for i in 0..nr.saturating_sub(1) {
            for j in 0..nt {
                let jn = (j + 1) % nt;
                let (a, b, c, d) = (i * nt + j, i * nt + jn, (i + 1) * nt + j, (i + 1) * nt + jn);
                for f in [[a, c, d], [a, d, b]] {
                    if f.iter().all(|&k| index[k] != usize::MAX) {
                        faces.push(f.map(|k| index[k]));
                    }
                }
            }
        }
        if faces.is_empty() {
            continue;
        }
        let mut mesh = CausticMesh::new(vertices, faces).map_err(|e| Error::Objective(e.to_string()))?;
        // A sheet collapsed to a point or curve has no area; the relative
        // test alone would keep its round-off triangles.
        let kept: Vec<[usize; 3]> = mesh.faces.iter().copied().filter(|&f| mesh.face_area(f) > COLLAPSED_FACE_AREA).collect();
        mesh.faces = kept;
        mesh.drop_degenerate_faces();
        if mesh.faces.is_empty() {
            continue;
        }
        total += caustic_measure(&mesh).map_err(|e| Error::Objective(format!("sheet {sheet}: {e}")))?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnfoldMode {
    #[default]
    Defocus,
    Astigmatism,
}

/// A surface in coefficient space the TOC descent must not cross.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Barrier {
    /// `normal · c = offset`
    Hyperplane { normal: Vec<f64>, offset: f64 },
    /// Sampled set, distance to the nearest sample.
    Points { points: Vec<Vec<f64>> },
}

impl Barrier {
    /// Hyperplane `c_index = value`.
    pub fn coordinate(dim: usize, index: usize, value: f64) -> Self {
        let mut normal = vec![0.0; dim];
        normal[index] = 1.0;
        Self::Hyperplane { normal, offset: value }
    }

    /// Signed distance for hyperplanes, plain distance for point sets.
    pub fn signed_distance(&self, c: &[f64]) -> f64 {
        match self {
            Self::Hyperplane { normal, offset } => {
                let dot: f64 = normal.iter().zip(c).map(|(n, x)| n * x).sum();
                let norm = normal.iter().map(|n| n * n).sum::<f64>().sqrt();
                (dot - offset) / norm
            }
            Self::Points { points } => points
                .iter()
                .map(|p| p.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn distance(&self, c: &[f64]) -> f64 {
        self.signed_distance(c).abs()
    }

    /// Whether the segment `a → b` passes through a hyperplane. Point sets
    /// count as crossed when a sample lies within `tol` of the segment.
    pub fn crosses(&self, a: &[f64], b: &[f64], tol: f64) -> bool {
        match self {
            Self::Hyperplane { .. } => {
                let (da, db) = (self.signed_distance(a), self.signed_distance(b));
                (da > 0.0 && db < 0.0) || (da < 0.0 && db > 0.0)
            }
            Self::Points { points } => points.iter().any(|p| segment_point_distance(a, b, p) <= tol),
        }
    }
}

fn segment_point_distance(a: &[f64], b: &[f64], p: &[f64]) -> f64 {
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    let t = if len2 == 0.0 {
        0.0
    } else {
        (p.iter().zip(a).zip(&ab).map(|((p, a), d)| (p - a) * d).sum::<f64>() / len2).clamp(0.0, 1.0)
    };
    a.iter().zip(&ab).zip(p).map(|((a, d), p)| (a + t * d - p).powi(2)).sum::<f64>().sqrt()
}

/// `J(c) = α‖c‖² + β Σ_k 1/dist(c, Σ_k)`
pub fn toc_cost(c: &[f64], barriers: &[Barrier], alpha: f64, beta: f64) -> Result<f64> {
    let mut j = alpha * c.iter().map(|x| x * x).sum::<f64>();
    if beta != 0.0 {
        for (index, b) in barriers.iter().enumerate() {
            let d = b.distance(c);
            if d == 0.0 {
                return Err(Error::OnBarrier { index });
            }
            j += beta / d;
        }
    }
    Ok(j)
}

/// `Σ_k 1/dist(c, Σ_k)`
fn barrier_potential(c: &[f64], barriers: &[Barrier]) -> Result<f64> {
    toc_cost(c, barriers, 0.0, 1.0)
}

/// Below this Strehl ratio the Lyapunov function saturates.
pub const STREHL_FLOOR: f64 = 1e-12;

/// `V = 1/S`
pub fn lyapunov(w: &WavefrontSpec, k: f64, order: usize) -> Result<f64> {
    let s = strehl(w, k, order)?;
    if s < STREHL_FLOOR {
        return Err(Error::Saturation { strehl: s });
    }
    Ok(1.0 / s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mode {
    pub n: u32,
    pub m: u32,
    pub kind: TermKind,
}

impl Mode {
    pub fn is_high_order(&self) -> bool {
        self.n >= 3
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            TermKind::Cos => "cos",
            TermKind::Sin => "sin",
            TermKind::Radial => "radial",
        };
        write!(f, "{}_{}_{kind}", self.n, self.m)
    }
}

fn modes_of(w: &WavefrontSpec) -> Vec<Mode> {
    w.terms.iter().map(|t| Mode { n: t.n, m: t.m, kind: t.kind }).collect()
}

fn spec_from(basis: crate::wavefront::Basis, modes: &[Mode], c: &[f64]) -> WavefrontSpec {
    WavefrontSpec {
        basis,
        terms: modes.iter().zip(c).map(|(m, a)| Term::new(m.n, m.m, m.kind, *a)).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Fingerprint,
    Unfold,
    Descend,
    Refold,
    Done,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Fingerprint => "fingerprint",
            Self::Unfold => "unfold",
            Self::Descend => "descend",
            Self::Refold => "refold",
            Self::Done => "done",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub stage: Stage,
    /// Coefficients including any injected unfolding term.
    pub c: Vec<f64>,
    pub objective: f64,
    pub strehl: f64,
    /// Amount currently injected into the unfolding mode.
    pub injected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionTrace {
    pub modes: Vec<Mode>,
    pub iterates: Vec<Iterate>,
    pub label: Option<CatastropheLabel>,
    /// Index into `modes` of the unfolding mode, when one was injected.
    pub unfold_mode: Option<usize>,
}

impl CorrectionTrace {
    pub fn last(&self) -> &Iterate {
        self.iterates.last().expect("trace has at least one iterate")
    }

    /// Distinct stages in order of appearance.
    pub fn stages(&self) -> Vec<Stage> {
        let mut out: Vec<Stage> = Vec::new();
        for it in &self.iterates {
            if out.last() != Some(&it.stage) {
                out.push(it.stage);
            }
        }
        out
    }

    pub fn count(&self, stage: Stage) -> usize {
        self.iterates.iter().filter(|i| i.stage == stage).count()
    }

    pub fn csv_header(&self) -> String {
        let mut s = String::from("iter,stage,J,S");
        for i in 1..=self.modes.len() {
            let _ = write!(s, ",c_{i}");
        }
        s
    }

    /// `iter,stage,J,S,c_1..c_N`
    pub fn to_csv(&self) -> String {
        let mut s = self.csv_header();
        s.push('\n');
        for (i, it) in self.iterates.iter().enumerate() {
            let _ = write!(s, "{i},{},{:.16e},{:.16e}", it.stage, it.objective, it.strehl);
            for c in &it.c {
                let _ = write!(s, ",{c:.16e}");
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrectionConfig {
    /// Step `α` of the plain descent `c ← c − α∇J`.
    pub learning_rate: f64,
    /// Finite-difference step relative to `max(1, |c_i|)`.
    pub gradient_step: f64,
    /// Stop once `‖∇J‖ ≤ tolerance`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Halve steps that fail to decrease the objective.
    pub backtracking: bool,
    /// Indices of terms held fixed by [`optimize_caustic`].
    pub frozen: Vec<usize>,
    pub alpha_cost: f64,
    pub beta_cost: f64,
    /// Weight of the barrier force in the refold stage.
    pub mu: f64,
    /// Scalar gain `K` of the control law.
    pub gain: f64,
    pub unfold_amplitude: f64,
    pub unfold_mode: UnfoldMode,
    /// High-order energy `Σ c_i²` (`n ≥ 3`) that ends the descend stage.
    pub refold_threshold: f64,
    /// Longest allowed step in coefficient space.
    pub max_step: f64,
    pub barriers: Vec<Barrier>,
    pub wavenumber: f64,
    pub strehl_order: usize,
    pub thresholds: Thresholds,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            gradient_step: 1e-6,
            tolerance: 1e-9,
            max_iterations: 2000,
            backtracking: false,
            frozen: Vec::new(),
            alpha_cost: 1.0,
            beta_cost: 1e-3,
            mu: 1e-12,
            gain: 0.05,
            unfold_amplitude: 0.2,
            unfold_mode: UnfoldMode::Defocus,
            refold_threshold: 1e-10,
            max_step: 0.05,
            barriers: Vec::new(),
            wavenumber: 2.0 * PI,
            strehl_order: 16,
            thresholds: Thresholds::default(),
        }
    }
}

impl CorrectionConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("correction config: {e}")))?;
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("gradient_step", self.gradient_step),
            ("tolerance", self.tolerance),
            ("gain", self.gain),
            ("max_step", self.max_step),
            ("wavenumber", self.wavenumber),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive")));
            }
        }
        for (name, v) in [("alpha_cost", self.alpha_cost), ("beta_cost", self.beta_cost), ("mu", self.mu)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be non-negative")));
            }
        }
        if self.max_iterations < 1 {
            return Err(Error::Domain("max_iterations must be at least 1".into()));
        }
        if self.strehl_order < crate::wavefront::MIN_STREHL_ORDER {
            return Err(Error::Domain("strehl_order below 16".into()));
        }
        Ok(())
    }
}

/// Central-difference gradient over the coordinates in `free`.
fn gradient<F: Fn(&[f64]) -> Result<f64> + Sync>(f: &F, c: &[f64], free: &[usize], rel_step: f64) -> Result<Vec<f64>> {
    let parts: Vec<Result<(usize, f64)>> = free
        .par_iter()
        .map(|&i| {
            let h = rel_step * c[i].abs().max(1.0);
            let mut p = c.to_vec();
            let mut m = c.to_vec();
            p[i] += h;
            m[i] -= h;
            Ok((i, (f(&p)? - f(&m)?) / (2.0 * h)))
        })
        .collect();
    let mut g = vec![0.0; c.len()];
    for r in parts {
        let (i, v) = r?;
        g[i] = v;
    }
    Ok(g)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Algorithm 1: `c ← c − α∇J` with central-difference gradients over the
/// non-frozen terms of `w0`, until `‖∇J‖ ≤ ε`. The trace holds the starting
/// point, every update, and a final `done` copy.
pub fn optimize_caustic<F>(w0: &WavefrontSpec, cfg: &CorrectionConfig, objective: F) -> Result<CorrectionTrace>
where
    F: Fn(&WavefrontSpec) -> Result<f64> + Sync,
{
    cfg.validate()?;
    let modes = modes_of(w0);
    let basis = w0.basis;
    let free: Vec<usize> = (0..modes.len()).filter(|i| !cfg.frozen.contains(i)).collect();
    let j_of = |c: &[f64]| objective(&spec_from(basis, &modes, c));
    let s_of = |c: &[f64]| strehl(&spec_from(basis, &modes, c), cfg.wavenumber, cfg.strehl_order);
    let mut c: Vec<f64> = w0.terms.iter().map(|t| t.a).collect();
    let mut trace = CorrectionTrace { modes: modes.clone(), iterates: Vec::new(), label: None, unfold_mode: None };
    let mut j = j_of(&c)?;
    if !j.is_finite() {
        return Err(Error::Divergence { iterations: 0, last_good: c });
    }
    trace.iterates.push(Iterate { stage: Stage::Descend, c: c.clone(), objective: j, strehl: s_of(&c)?, injected: 0.0 });
    for iter in 0..cfg.max_iterations {
        let g = gradient(&j_of, &c, &free, cfg.gradient_step)?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { iterations: iter, last_good: c });
        }
        if norm(&g) <= cfg.tolerance {
            trace.iterates.push(Iterate { stage: Stage::Done, ..trace.last().clone() });
            return Ok(trace);
        }
        let mut step = cfg.learning_rate;
        let (next, j_next) = loop {
            let cand: Vec<f64> = c.iter().zip(&g).map(|(x, d)| x - step * d).collect();
            let jc = j_of(&cand)?;
            if !jc.is_finite() {
                return Err(Error::Divergence { iterations: iter + 1, last_good: c });
            }
            if !cfg.backtracking || jc < j || step < 1e-12 * cfg.learning_rate {
                break (cand, jc);
            }
            step *= 0.5;
        };
        c = next;
        j = j_next;
        trace.iterates.push(Iterate { stage: Stage::Descend, c: c.clone(), objective: j, strehl: s_of(&c)?, injected: 0.0 });
    }
    Err(Error::Stalled { stage: Stage::Descend.to_string(), iterations: cfg.max_iterations, trace: Box::new(trace) })
}

/// Plain descent on a coefficient-vector objective; same contract as
/// [`optimize_caustic`] without a wavefront attached.
pub fn gradient_descent<F>(c0: &[f64], cfg: &CorrectionConfig, objective: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let free: Vec<usize> = (0..c0.len()).filter(|i| !cfg.frozen.contains(i)).collect();
    let mut c = c0.to_vec();
    let mut path = vec![c.clone()];
    for iter in 0..cfg.max_iterations {
        let g = gradient(&objective, &c, &free, cfg.gradient_step)?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { iterations: iter, last_good: c });
        }
        if norm(&g) <= cfg.tolerance {
            return Ok(path);
        }
        c = c.iter().zip(&g).map(|(x, d)| x - cfg.learning_rate * d).collect();
        if !objective(&c)?.is_finite() {
            return Err(Error::Divergence { iterations: iter + 1, last_good: path.pop().unwrap() });
        }
        path.push(c.clone());
    }
    Ok(path)
}

/// Shortens a proposed step until it is at most `max_step` long and crosses
/// no barrier.
fn guarded_step(c: &[f64], delta: &[f64], cfg: &CorrectionConfig) -> Vec<f64> {
    let len = norm(delta);
    let mut scale = if len > cfg.max_step { cfg.max_step / len } else { 1.0 };
    for _ in 0..60 {
        let next: Vec<f64> = c.iter().zip(delta).map(|(x, d)| x + scale * d).collect();
        if !cfg.barriers.iter().any(|b| b.crosses(c, &next, 0.0)) {
            return next;
        }
        scale *= 0.5;
    }
    c.to_vec()
}

/// The four-stage topological correction loop.
///
/// 1. `fingerprint`: classify the starting wavefront.
/// 2. `unfold`: for D-series labels, inject `unfold_amplitude` into the
///    defocus (or astigmatism) mode.
/// 3. `descend`: `c ← c − K∇J` on the high-order modes (`n ≥ 3`) with the
///    barrier cost `J`, until their energy drops below `refold_threshold`.
/// 4. `refold`: remove the injected term, then follow
///    `c ← c − K(∇V + μ∇B)` on the low-order modes, `V = 1/S` and `B` the
///    barrier potential, until the step gradient falls below `tolerance`.
///
/// The objective column holds `J` through stage 3 and `V` afterwards.
pub fn toc_run(w0: &WavefrontSpec, cfg: &CorrectionConfig) -> Result<CorrectionTrace> {
    cfg.validate()?;
    if w0.terms.iter().any(|t| !t.a.is_finite()) {
        return Err(Error::Domain("starting coefficients must be finite".into()));
    }
    let basis = w0.basis;
    let mut modes = modes_of(w0);
    let mut c: Vec<f64> = w0.terms.iter().map(|t| t.a).collect();
    let unfold_target = match cfg.unfold_mode {
        UnfoldMode::Defocus => Mode { n: 2, m: 0, kind: TermKind::Radial },
        UnfoldMode::Astigmatism => Mode { n: 2, m: 2, kind: TermKind::Cos },
    };

    let label = match classify(w0, &cfg.thresholds) {
        Ok(cl) => Some(cl.label),
        Err(Error::NoAberration) => None,
        Err(e) => return Err(e),
    };
    let needs_unfold = label.is_some_and(CatastropheLabel::is_d_series);
    let unfold_idx = if needs_unfold {
        Some(match modes.iter().position(|m| *m == unfold_target) {
            Some(i) => i,
            None => {
                modes.push(unfold_target);
                c.push(0.0);
                modes.len() - 1
            }
        })
    } else {
        None
    };
    let dim = modes.len();
    let mut trace = CorrectionTrace { modes: modes.clone(), iterates: Vec::new(), label, unfold_mode: unfold_idx };
    let spec_of = |c: &[f64]| spec_from(basis, &modes, c);
    let s_of = |c: &[f64]| strehl(&spec_of(c), cfg.wavenumber, cfg.strehl_order);
    let j_of = |c: &[f64]| toc_cost(c, &cfg.barriers, cfg.alpha_cost, cfg.beta_cost);
    let v_of = |c: &[f64]| lyapunov(&spec_of(c), cfg.wavenumber, cfg.strehl_order);

    let j0 = if label.is_some() { j_of(&c)? } else { 0.0 };
    trace.iterates.push(Iterate { stage: Stage::Fingerprint, c: c.clone(), objective: j0, strehl: s_of(&c)?, injected: 0.0 });
    if label.is_none() {
        trace.iterates.push(Iterate { stage: Stage::Done, ..trace.last().clone() });
        return Ok(trace);
    }

    let mut injected = 0.0;
    if let Some(i) = unfold_idx {
        injected = cfg.unfold_amplitude;
        let mut next = c.clone();
        next[i] += injected;
        if cfg.barriers.iter().any(|b| b.crosses(&c, &next, 0.0)) {
            return Err(Error::Domain("unfolding step would cross a barrier".into()));
        }
        c = next;
        trace.iterates.push(Iterate { stage: Stage::Unfold, c: c.clone(), objective: j_of(&c)?, strehl: s_of(&c)?, injected });
    }

    let high: Vec<usize> = (0..dim).filter(|&i| modes[i].is_high_order()).collect();
    let low: Vec<usize> = (0..dim).filter(|&i| !modes[i].is_high_order()).collect();
    let high_energy = |c: &[f64]| high.iter().map(|&i| c[i] * c[i]).sum::<f64>();

    let mut used = 0;
    while high_energy(&c) >= cfg.refold_threshold {
        if used == cfg.max_iterations {
            return Err(Error::Stalled { stage: Stage::Descend.to_string(), iterations: used, trace: Box::new(trace) });
        }
        let g = gradient(&j_of, &c, &high, cfg.gradient_step)?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { iterations: used, last_good: c });
        }
        let delta: Vec<f64> = g.iter().map(|d| -cfg.gain * d).collect();
        c = guarded_step(&c, &delta, cfg);
        used += 1;
        let j = j_of(&c)?;
        if !j.is_finite() {
            return Err(Error::Divergence { iterations: used, last_good: c });
        }
        trace.iterates.push(Iterate { stage: Stage::Descend, c: c.clone(), objective: j, strehl: s_of(&c)?, injected });
    }

    if let Some(i) = unfold_idx {
        let mut next = c.clone();
        next[i] -= injected;
        if cfg.barriers.iter().any(|b| b.crosses(&c, &next, 0.0)) {
            return Err(Error::Domain("refolding step would cross a barrier".into()));
        }
        c = next;
        injected = 0.0;
    }
    let total = |c: &[f64]| -> Result<f64> {
        let b = if cfg.mu > 0.0 && !cfg.barriers.is_empty() { cfg.mu * barrier_potential(c, &cfg.barriers)? } else { 0.0 };
        Ok(v_of(c)? + b)
    };
    trace.iterates.push(Iterate { stage: Stage::Refold, c: c.clone(), objective: v_of(&c)?, strehl: s_of(&c)?, injected });
    let mut used = 0;
    loop {
        let g = gradient(&total, &c, &low, cfg.gradient_step)?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { iterations: used, last_good: c });
        }
        if norm(&g) <= cfg.tolerance {
            break;
        }
        if used == cfg.max_iterations {
            return Err(Error::Stalled { stage: Stage::Refold.to_string(), iterations: used, trace: Box::new(trace) });
        }
        let delta: Vec<f64> = g.iter().map(|d| -cfg.gain * d).collect();
        c = guarded_step(&c, &delta, cfg);
        used += 1;
        let v = v_of(&c)?;
        trace.iterates.push(Iterate { stage: Stage::Refold, c: c.clone(), objective: v, strehl: s_of(&c)?, injected });
    }
    trace.iterates.push(Iterate { stage: Stage::Done, ..trace.last().clone() });
    Ok(trace)
}

type BasisFn = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Mirror influence functions with their pupil Gram matrix.
pub struct MirrorBasis {
    functions: Vec<BasisFn>,
    rule: DiskRule,
    pub gram: DMatrix<f64>,
    pub condition: f64,
}

impl fmt::Debug for MirrorBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MirrorBasis").field("len", &self.functions.len()).field("condition", &self.condition).finish()
    }
}

/// Largest Gram condition number accepted by [`dm_project`].
pub const MAX_CONDITION: f64 = 1e10;

impl MirrorBasis {
    /// Functions of `(ρ, θ)`; inner products use a disk rule of the given
    /// order.
    pub fn new(functions: Vec<BasisFn>, order: usize) -> Result<Self> {
        if functions.is_empty() {
            return Err(Error::Usage("mirror basis is empty".into()));
        }
        let rule = DiskRule::with_order(order);
        let samples: Vec<Vec<f64>> =
            functions.iter().map(|f| rule.points().map(|(r, t, _)| f(r, t)).collect()).collect();
        let weights: Vec<f64> = rule.points().map(|(_, _, w)| w).collect();
        let n = functions.len();
        let gram = DMatrix::from_fn(n, n, |i, j| {
            let terms: Vec<f64> = samples[i].iter().zip(&samples[j]).zip(&weights).map(|((a, b), w)| a * b * w).collect();
            crate::quadrature::pairwise_sum(&terms)
        });
        let sv = gram.singular_values();
        let condition = sv.max() / sv.min();
        Ok(Self { functions, rule, gram, condition })
    }

    /// Each spec becomes one influence function.
    pub fn from_specs(specs: Vec<WavefrontSpec>, order: usize) -> Result<Self> {
        let functions: Vec<BasisFn> = specs
            .into_iter()
            .map(|s| Box::new(move |r: f64, t: f64| s.polar_derivatives(r, t).w) as BasisFn)
            .collect();
        Self::new(functions, order)
    }

    /// Specs scaled to unit norm under `∫∫ ψ² ρ dρ dθ`.
    pub fn normalized_specs(specs: Vec<WavefrontSpec>, order: usize) -> Result<Self> {
        let rule = DiskRule::with_order(order);
        let scaled = specs
            .into_iter()
            .map(|mut s| {
                let n = rule.integrate(|r, t| s.polar_derivatives(r, t).w.powi(2)).sqrt();
                for t in &mut s.terms {
                    t.a /= n;
                }
                s
            })
            .collect();
        Self::from_specs(scaled, order)
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn eval(&self, i: usize, rho: f64, theta: f64) -> f64 {
        (self.functions[i])(rho, theta)
    }

    pub fn inner_with<F: Fn(f64, f64) -> f64>(&self, i: usize, f: F) -> f64 {
        self.rule.integrate(|r, t| self.eval(i, r, t) * f(r, t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmProjection {
    pub coefficients: Vec<f64>,
    pub condition: f64,
    /// `sqrt((1/π) ∫∫ (W + φ)² ρ dρ dθ)`
    pub residual_rms: f64,
}

/// Least-squares actuator coefficients: `G c = −b`, `b_i = ⟨W, ψ_i⟩`.
pub fn dm_project(w: &WavefrontSpec, basis: &MirrorBasis) -> Result<DmProjection> {
    if !(basis.condition <= MAX_CONDITION) {
        return Err(Error::Conditioning { condition: basis.condition });
    }
    let b = DVector::from_iterator(basis.len(), (0..basis.len()).map(|i| basis.inner_with(i, |r, t| w.polar_derivatives(r, t).w)));
    let chol = basis
        .gram
        .clone()
        .cholesky()
        .ok_or(Error::Conditioning { condition: basis.condition })?;
    let c = chol.solve(&(-b));
    let coefficients: Vec<f64> = c.iter().copied().collect();
    let residual = |r: f64, t: f64| {
        w.polar_derivatives(r, t).w + coefficients.iter().enumerate().map(|(i, ci)| ci * basis.eval(i, r, t)).sum::<f64>()
    };
    let residual_rms = (basis.rule.integrate(|r, t| residual(r, t).powi(2)) / PI).max(0.0).sqrt();
    Ok(DmProjection { coefficients, condition: basis.condition, residual_rms })
}

/// Residual `W + Σ c_i ψ_i` at a pupil point.
pub fn dm_residual(w: &WavefrontSpec, basis: &MirrorBasis, c: &[f64], rho: f64, theta: f64) -> f64 {
    w.polar_derivatives(rho, theta).w + c.iter().enumerate().map(|(i, ci)| ci * basis.eval(i, rho, theta)).sum::<f64>()
}

/// `φ = mod(−2πW/λ, 2π)` at each `(ρ, θ)`.
pub fn doe_phase(w: &WavefrontSpec, lambda: f64, grid: &[(f64, f64)]) -> Result<Vec<f64>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain("wavelength must be positive".into()));
    }
    grid.iter()
        .map(|&(r, t)| {
            let frac = (-w.eval(r, t)? / lambda).rem_euclid(1.0);
            let phi = 2.0 * PI * frac;
            Ok(if phi >= 2.0 * PI { 0.0 } else { phi })
        })
        .collect()
}

/// `δ·sqrt((n+1)/π)`
pub fn tolerance_bound(n: u32, delta: f64) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(Error::Domain("delta must be non-negative".into()));
    }
    Ok(delta * ((n as f64 + 1.0) / PI).sqrt())
}
