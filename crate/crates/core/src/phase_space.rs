//! Paraxial ray transport in the four-dimensional screen phase space.
//!
//! A ray crossing a transverse plane is a point `(x, y, p_x, p_y)`, where the
//! momenta are `n` times the direction cosines. Every lossless element acts on
//! these points by a 4x4 matrix `M` with `MᵀJM = J`, where
//!
//! ```text
//!     ⎡ 0  0  1  0 ⎤
//! J = ⎢ 0  0  0  1 ⎥
//!     ⎢-1  0  0  0 ⎥
//!     ⎣ 0 -1  0  0 ⎦
//! ```
//!
//! The component order `(x, y, p_x, p_y)` is also the wire order used for
//! every serialized [`RayState`] and [`TransferMap`].

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance for algebraic identities on transfer maps.
pub const SYMPLECTIC_TOL: f64 = 1e-10;

/// A ray at a transverse screen: position in mm, momentum as `n·cos(direction)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct RayState {
    pub x: f64,
    pub y: f64,
    pub p_x: f64,
    pub p_y: f64,
}

impl RayState {
    pub const fn new(x: f64, y: f64, p_x: f64, p_y: f64) -> Self {
        Self { x, y, p_x, p_y }
    }

    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.p_x, self.p_y)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.p_x.is_finite() && self.p_y.is_finite()
    }

    /// Advisory paraxial check: both momenta bounded by the ambient index.
    pub fn is_paraxial(&self, n_ambient: f64) -> bool {
        self.p_x.abs() <= n_ambient && self.p_y.abs() <= n_ambient
    }
}

impl From<[f64; 4]> for RayState {
    fn from(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

impl From<RayState> for [f64; 4] {
    fn from(r: RayState) -> Self {
        [r.x, r.y, r.p_x, r.p_y]
    }
}

/// A 4x4 linear map on [`RayState`]s.
///
/// Constructors in this module always produce symplectic matrices; arbitrary
/// matrices can be wrapped with [`TransferMap::from_matrix`] and checked with
/// [`check_symplectic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 16]", into = "[f64; 16]")]
pub struct TransferMap {
    m: Matrix4<f64>,
}

impl TransferMap {
    pub fn identity() -> Self {
        Self { m: Matrix4::identity() }
    }

    pub fn from_matrix(m: Matrix4<f64>) -> Self {
        Self { m }
    }

    /// Builds a map from 16 entries in row-major order.
    pub fn from_row_major(a: [f64; 16]) -> Self {
        Self { m: Matrix4::from_row_slice(&a) }
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[4 * r + c] = self.m[(r, c)];
            }
        }
        out
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.m
    }

    /// Entry at one-based `(row, col)`, matching the usual printed indexing.
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.m[(row - 1, col - 1)]
    }

    /// Symplectic inverse `J⁻¹ Mᵀ J`.
    pub fn symplectic_inverse(&self) -> Self {
        let j = standard_j();
        Self { m: -j * self.m.transpose() * j }
    }

    /// Map that applies `self` first and then `next`.
    pub fn then(&self, next: &TransferMap) -> Self {
        Self { m: next.m * self.m }
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &TransferMap) -> f64 {
        (self.m - other.m).amax()
    }
}

impl From<[f64; 16]> for TransferMap {
    fn from(a: [f64; 16]) -> Self {
        Self::from_row_major(a)
    }
}

impl From<TransferMap> for [f64; 16] {
    fn from(t: TransferMap) -> Self {
        t.to_row_major()
    }
}

/// The standard skew form `J` for the `(x, y, p_x, p_y)` ordering.
pub fn standard_j() -> Matrix4<f64> {
    #[rustfmt::skip]
    let j = Matrix4::new(
         0.0,  0.0, 1.0, 0.0,
         0.0,  0.0, 0.0, 1.0,
        -1.0,  0.0, 0.0, 0.0,
         0.0, -1.0, 0.0, 0.0,
    );
    j
}

/// Propagation over distance `d` (mm) in a homogeneous medium of index `n`.
pub fn free_propagation(d: f64, n: f64) -> Result<TransferMap> {
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Domain(format!("refractive index must be positive, got {n}")));
    }
    if !d.is_finite() {
        return Err(Error::Domain(format!("propagation distance must be finite, got {d}")));
    }
    let mut m = Matrix4::identity();
    m[(0, 2)] = d / n;
    m[(1, 3)] = d / n;
    Ok(TransferMap { m })
}

/// Thin lens of focal length `f` (mm).
pub fn thin_lens(f: f64) -> Result<TransferMap> {
    if f == 0.0 || !f.is_finite() {
        return Err(Error::Domain(format!("focal length must be finite and non-zero, got {f}")));
    }
    let mut m = Matrix4::identity();
    m[(2, 0)] = -1.0 / f;
    m[(3, 1)] = -1.0 / f;
    Ok(TransferMap { m })
}

/// Composes maps in optical order: `maps[0]` acts on the ray first.
pub fn compose(maps: &[TransferMap]) -> Result<TransferMap> {
    let (first, rest) = maps
        .split_first()
        .ok_or_else(|| Error::Usage("compose needs at least one map".into()))?;
    Ok(rest.iter().fold(*first, |acc, next| acc.then(next)))
}

/// Outcome of [`check_symplectic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymplecticReport {
    pub is_symplectic: bool,
    /// `max |MᵀJM − J|`
    pub residual: f64,
    /// `det(M) − 1`
    pub det_minus_one: f64,
}

pub fn check_symplectic(map: &TransferMap, tol: f64) -> SymplecticReport {
    let j = standard_j();
    let residual = (map.m.transpose() * j * map.m - j).amax();
    let det_minus_one = map.m.determinant() - 1.0;
    SymplecticReport {
        is_symplectic: residual <= tol,
        residual,
        det_minus_one,
    }
}

pub fn apply(map: &TransferMap, ray: &RayState) -> RayState {
    RayState::from_vector(&(map.m * ray.as_vector()))
}

/// Optical angular momentum `x p_y − y p_x`.
pub fn lagrange_invariant(ray: &RayState) -> f64 {
    ray.x * ray.p_y - ray.y * ray.p_x
}
