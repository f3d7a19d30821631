//! Exact meridional ray tracing through a thick spherical lens and extraction
//! of its caustic from the exit-ray family.
//!
//! Coordinates: optical axis along `z`, front vertex at `z = 0`, back vertex at
//! `z = d`. A ray entering parallel to the axis at height `h` leaves the back
//! surface at `(r_e(h), z_e(h))` with aperture angle `alpha(h)` (positive when
//! it bends toward the axis). Its exit ray is
//! `R(h,t) = r_e − t sin(alpha)`, `Z(h,t) = z_e + t cos(alpha)` and the
//! meridional caustic sits at
//!
//! ```text
//! t_c(h) = (r_e' cos(alpha) + z_e' sin(alpha)) / alpha'
//! ```
//!
//! with primes denoting derivatives in `h`.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Start plane for incident rays. Any plane ahead of the front vertex gives
/// the same exit family for collimated input.
pub const Z_START: f64 = -1.0;

/// Relative change under step halving above which derivatives are flagged.
pub const RICHARDSON_REL_TOL: f64 = 1e-6;

/// Thick lens in air with spherical surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LensPrescription {
    pub n: f64,
    pub d: f64,
    #[serde(rename = "R1")]
    pub r1: f64,
    #[serde(rename = "R2")]
    pub r2: f64,
    #[serde(rename = "D")]
    pub aperture: f64,
}

impl LensPrescription {
    pub fn new(n: f64, d: f64, r1: f64, r2: f64, aperture: f64) -> Result<Self> {
        let lens = Self { n, d, r1, r2, aperture };
        lens.validate()?;
        Ok(lens)
    }

    /// Symmetric biconvex lens used throughout the tests and examples.
    pub fn sample() -> Self {
        Self { n: 1.5, d: 5.0, r1: 50.0, r2: -50.0, aperture: 40.0 }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let lens: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        lens.validate()?;
        Ok(lens)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.n, self.d, self.r1, self.r2, self.aperture]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Domain("lens parameters must be finite".into()));
        }
        if !(self.n > 1.0) {
            return Err(Error::Domain(format!("index must exceed 1, got {}", self.n)));
        }
        if !(self.d > 0.0) {
            return Err(Error::Domain(format!("thickness must be positive, got {}", self.d)));
        }
        if !(self.r1 > 0.0) || !(self.r2 < 0.0) {
            return Err(Error::Domain(format!(
                "biconvex lens needs R1 > 0 and R2 < 0, got R1 = {}, R2 = {}",
                self.r1, self.r2
            )));
        }
        if !(self.aperture > 0.0) || self.semi_aperture() >= self.r1.min(-self.r2) {
            return Err(Error::Domain(format!(
                "aperture {} must be positive with D/2 below both radii",
                self.aperture
            )));
        }
        Ok(())
    }

    pub fn semi_aperture(&self) -> f64 {
        0.5 * self.aperture
    }

    /// Axial depth of a spherical cap of radius `radius` at height `r`.
    pub fn sag(radius: f64, r: f64) -> f64 {
        let rr = radius.abs();
        rr - (rr * rr - r * r).sqrt()
    }

    pub fn front_center(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.r1)
    }

    pub fn back_center(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.d + self.r2)
    }

    /// Height at which the two caps meet (edge thickness zero), or the
    /// semi-aperture if they do not meet inside it. Rays entering much above
    /// this height leave through the missing rim and cannot be traced.
    pub fn rim_height(&self) -> f64 {
        let edge = |r: f64| self.d - Self::sag(self.r1, r) - Self::sag(self.r2, r);
        let top = self.semi_aperture();
        if edge(top) >= 0.0 {
            return top;
        }
        let (mut lo, mut hi) = (0.0, top);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if edge(mid) >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// Refracts `dir` at a point of a sphere. The returned vector is unit-norm.
///
/// The surface normal is oriented against the incoming direction, so the
/// same call serves entry and exit surfaces.
pub fn refract_at_sphere(
    point: &Vector3<f64>,
    dir: &Vector3<f64>,
    center: &Vector3<f64>,
    radius: f64,
    n_in: f64,
    n_out: f64,
) -> Result<Vector3<f64>> {
    let to_point = point - center;
    if (to_point.norm() - radius.abs()).abs() > 1e-9 * radius.abs() {
        return Err(Error::Domain("point is not on the sphere".into()));
    }
    if (dir.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::Domain("direction is not unit-norm".into()));
    }
    if !(n_in > 0.0) || !(n_out > 0.0) {
        return Err(Error::Domain("indices must be positive".into()));
    }
    let mut normal = to_point / to_point.norm();
    let mut cos_i = -normal.dot(dir);
    if cos_i < 0.0 {
        normal = -normal;
        cos_i = -cos_i;
    }
    let eta = n_in / n_out;
    let sin2_t = eta * eta * (1.0 - cos_i * cos_i).max(0.0);
    if sin2_t > 1.0 {
        return Err(Error::TotalInternalReflection {
            critical_angle: (n_out / n_in).asin(),
        });
    }
    let cos_t = (1.0 - sin2_t).sqrt();
    let out = eta * dir + (eta * cos_i - cos_t) * normal;
    Ok(out / out.norm())
}

/// Forward intersection of a ray with a sphere, restricted to the cap
/// `z ∈ [z_lo, z_hi]`, `|r| ≤ r_max`.
fn intersect_cap(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    center: &Vector3<f64>,
    radius: f64,
    z_window: (f64, f64),
    r_max: f64,
) -> Option<Vector3<f64>> {
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let pad = 1e-9 * radius.abs();
    [-b - sq, -b + sq]
        .into_iter()
        .filter(|s| *s > 1e-12)
        .map(|s| origin + s * dir)
        .find(|p| {
            let r = (p.x * p.x + p.y * p.y).sqrt();
            p.z >= z_window.0 - pad && p.z <= z_window.1 + pad && r <= r_max + pad
        })
        .map(|p| {
            // snap back onto the sphere to remove cancellation in the root
            let v = p - center;
            center + v * (radius.abs() / v.norm())
        })
}

/// State of a ray leaving the back surface in the meridional (x, z) plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeridionalExit {
    pub x: f64,
    pub z: f64,
    /// Unit direction `(u_x, u_z)`.
    pub dir: (f64, f64),
}

/// Traces an arbitrary meridional ray starting at `(x0, z0)` with direction
/// sine `sin_in` relative to the axis.
pub fn trace_meridional(lens: &LensPrescription, x0: f64, z0: f64, sin_in: f64) -> Result<MeridionalExit> {
    if z0 > 0.0 {
        return Err(Error::Domain("start plane must lie ahead of the front vertex".into()));
    }
    if sin_in.abs() >= 1.0 {
        return Err(Error::Domain("incident direction must point forward".into()));
    }
    let a = lens.semi_aperture();
    let start = Vector3::new(x0, 0.0, z0);
    let dir0 = Vector3::new(sin_in, 0.0, (1.0 - sin_in * sin_in).sqrt());

    let c1 = lens.front_center();
    let p1 = intersect_cap(&start, &dir0, &c1, lens.r1, (0.0, LensPrescription::sag(lens.r1, a)), a)
        .ok_or_else(|| Error::Geometry("ray misses the front cap".into()))?;
    let dir1 = refract_at_sphere(&p1, &dir0, &c1, lens.r1, 1.0, lens.n)?;

    let c2 = lens.back_center();
    let z2 = (lens.d - LensPrescription::sag(lens.r2, a), lens.d);
    let p2 = intersect_cap(&p1, &dir1, &c2, lens.r2, z2, a)
        .ok_or_else(|| Error::Geometry("ray misses the back cap".into()))?;
    let dir2 = refract_at_sphere(&p2, &dir1, &c2, lens.r2, lens.n, 1.0)?;

    Ok(MeridionalExit { x: p2.x, z: p2.z, dir: (dir2.x, dir2.z) })
}

/// Exit data for a ray entering parallel to the axis at height `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitRay {
    pub h: f64,
    pub r_e: f64,
    pub z_e: f64,
    pub alpha: f64,
}

impl ExitRay {
    /// Point on the exit ray after distance `t`, as `(r, z)`.
    pub fn point_at(&self, t: f64) -> (f64, f64) {
        (self.r_e - t * self.alpha.sin(), self.z_e + t * self.alpha.cos())
    }
}

/// A rotationally symmetric exit-ray family parameterized by entry height.
///
/// Implementations must accept signed heights, with `r_e` and `alpha` odd and
/// `z_e` even in `h`, so derivative stencils may cross the axis.
pub trait ExitFamily: Sync {
    fn exit(&self, h: f64) -> Result<ExitRay>;

    /// Upper bound (exclusive) on `|h|`.
    fn max_height(&self) -> f64;
}

impl ExitFamily for LensPrescription {
    fn exit(&self, h: f64) -> Result<ExitRay> {
        if !(h.abs() < self.semi_aperture()) {
            return Err(Error::Domain(format!("height {h} outside aperture")));
        }
        let e = trace_meridional(self, h, Z_START, 0.0)?;
        Ok(ExitRay { h, r_e: e.x, z_e: e.z, alpha: (-e.dir.0).atan2(e.dir.1) })
    }

    fn max_height(&self) -> f64 {
        self.semi_aperture()
    }
}

/// Aberration-free focuser: every ray leaves the plane `z = 0` at its entry
/// height and passes through `(0, f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdealFocuser {
    pub focal_length: f64,
    pub semi_aperture: f64,
}

impl ExitFamily for IdealFocuser {
    fn exit(&self, h: f64) -> Result<ExitRay> {
        if !(h.abs() < self.semi_aperture) {
            return Err(Error::Domain(format!("height {h} outside aperture")));
        }
        Ok(ExitRay { h, r_e: h, z_e: 0.0, alpha: (h / self.focal_length).atan() })
    }

    fn max_height(&self) -> f64 {
        self.semi_aperture
    }
}

/// Exact trace of a collimated ray at height `h ≥ 0`.
pub fn trace_through_lens(h: f64, lens: &LensPrescription) -> Result<ExitRay> {
    if !(h >= 0.0) {
        return Err(Error::Domain(format!("height must be non-negative, got {h}")));
    }
    lens.exit(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitDerivatives {
    pub r_e: f64,
    pub z_e: f64,
    pub alpha: f64,
    /// Largest relative change of the three derivatives under step halving.
    pub halving_change: f64,
    /// Set when `halving_change` exceeds [`RICHARDSON_REL_TOL`].
    pub unstable: bool,
}

fn five_point(f: &[f64; 4], step: f64) -> f64 {
    (f[0] - 8.0 * f[1] + 8.0 * f[2] - f[3]) / (12.0 * step)
}

fn raw_derivatives<F: ExitFamily + ?Sized>(family: &F, h: f64, step: f64) -> Result<[f64; 3]> {
    let offsets = [-2.0, -1.0, 1.0, 2.0];
    let mut r = [0.0; 4];
    let mut z = [0.0; 4];
    let mut a = [0.0; 4];
    for (i, k) in offsets.iter().enumerate() {
        let e = family.exit(h + k * step)?;
        r[i] = e.r_e;
        z[i] = e.z_e;
        a[i] = e.alpha;
    }
    Ok([five_point(&r, step), five_point(&z, step), five_point(&a, step)])
}

/// Five-point central differences of `(r_e, z_e, alpha)` in `h`.
pub fn exit_derivatives<F: ExitFamily + ?Sized>(h: f64, family: &F, step: f64) -> Result<ExitDerivatives> {
    if !(step > 0.0) {
        return Err(Error::Domain("step must be positive".into()));
    }
    if h - 2.0 * step < 0.0 || h + 2.0 * step >= family.max_height() {
        return Err(Error::Domain(format!("stencil around h = {h} with step {step} leaves the aperture")));
    }
    let full = raw_derivatives(family, h, step)?;
    let half = raw_derivatives(family, h, 0.5 * step)?;
    let halving_change = full
        .iter()
        .zip(&half)
        .map(|(a, b)| {
            let scale = a.abs().max(b.abs());
            if scale == 0.0 {
                0.0
            } else {
                (a - b).abs() / scale
            }
        })
        .fold(0.0, f64::max);
    Ok(ExitDerivatives {
        r_e: half[0],
        z_e: half[1],
        alpha: half[2],
        halving_change,
        unstable: halving_change > RICHARDSON_REL_TOL,
    })
}

/// Finite-difference step used by [`caustic_point`] at height `h`.
pub fn default_step(h: f64, max_height: f64) -> f64 {
    (1e-3 * max_height).min(h / 2.0).min((max_height - h) / 2.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CausticPoint {
    pub h: f64,
    pub t_c: f64,
    pub r_caustic: f64,
    pub z_caustic: f64,
    /// `r_e' cos(alpha) + z_e' sin(alpha) − t_c alpha'`
    pub residual: f64,
}

/// Meridional caustic point of the exit family at height `h`.
pub fn caustic_point<F: ExitFamily + ?Sized>(h: f64, family: &F) -> Result<CausticPoint> {
    let step = default_step(h, family.max_height());
    if !(step > 0.0) {
        return Err(Error::Domain(format!("no derivative stencil fits at h = {h}")));
    }
    let ray = family.exit(h)?;
    let der = exit_derivatives(h, family, step)?;
    caustic_from_derivatives(&ray, &der)
}

pub fn caustic_from_derivatives(ray: &ExitRay, der: &ExitDerivatives) -> Result<CausticPoint> {
    if der.alpha.abs() <= 1e-12 {
        return Err(Error::DegenerateCaustic { h: ray.h, alpha_prime: der.alpha });
    }
    let (s, c) = ray.alpha.sin_cos();
    let numerator = der.r_e * c + der.z_e * s;
    let t_c = numerator / der.alpha;
    let (r_caustic, z_caustic) = ray.point_at(t_c);
    Ok(CausticPoint {
        h: ray.h,
        t_c,
        r_caustic,
        z_caustic,
        residual: numerator - t_c * der.alpha,
    })
}

/// Crossing of the exit rays at `h` and `h + dh`, as `(r, z)`.
///
/// The pair is ordered by height before solving, so swapping the arguments
/// returns the identical point.
pub fn brute_force_caustic<F: ExitFamily + ?Sized>(h: f64, dh: f64, family: &F) -> Result<(f64, f64)> {
    let (lo, hi) = if dh >= 0.0 { (h, h + dh) } else { (h + dh, h) };
    let a = family.exit(lo)?;
    let b = family.exit(hi)?;
    intersect_exit_rays(&a, &b)
}

/// Point where two meridional exit rays cross.
pub fn intersect_exit_rays(a: &ExitRay, b: &ExitRay) -> Result<(f64, f64)> {
    let (sb, cb) = b.alpha.sin_cos();
    // determinant of the 2x2 system, taken from the angle difference
    let sin_diff = (b.alpha - a.alpha).sin();
    if sin_diff == 0.0 || !sin_diff.is_finite() {
        return Err(Error::NoIntersection);
    }
    let dr = b.r_e - a.r_e;
    let dz = b.z_e - a.z_e;
    let ta = (dr * cb + sb * dz) / sin_diff;
    Ok(a.point_at(ta))
}

/// One entry of a sampled caustic profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CausticSample {
    pub h: f64,
    pub t_c: f64,
    pub r_caustic: f64,
    pub z_caustic: f64,
    pub residual: f64,
    pub valid: bool,
    /// Distance along the exit ray to its axis crossing (sagittal branch).
    pub t_sagittal: f64,
    /// Axial position of the sagittal caustic point.
    pub z_sagittal: f64,
}

impl CausticSample {
    fn invalid(h: f64) -> Self {
        Self {
            h,
            t_c: f64::NAN,
            r_caustic: f64::NAN,
            z_caustic: f64::NAN,
            residual: f64::NAN,
            valid: false,
            t_sagittal: f64::NAN,
            z_sagittal: f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausticCurve {
    pub samples: Vec<CausticSample>,
}

impl CausticCurve {
    pub const CSV_HEADER: &'static str = "h,t_c,r_caustic,z_caustic,valid";

    pub fn valid_samples(&self) -> impl Iterator<Item = &CausticSample> {
        self.samples.iter().filter(|s| s.valid)
    }
}

/// Meridional and sagittal caustic over a strictly increasing grid of heights.
/// Failures at individual heights mark the sample invalid.
pub fn caustic_profile<F: ExitFamily + ?Sized>(family: &F, h_grid: &[f64]) -> Result<CausticCurve> {
    if h_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Usage("height grid must be strictly increasing".into()));
    }
    let samples = h_grid
        .par_iter()
        .map(|&h| {
            let point = match caustic_point(h, family) {
                Ok(p) => p,
                Err(_) => return CausticSample::invalid(h),
            };
            let ray = match family.exit(h) {
                Ok(r) => r,
                Err(_) => return CausticSample::invalid(h),
            };
            let sa = ray.alpha.sin();
            let t_sagittal = if sa != 0.0 { ray.r_e / sa } else { f64::NAN };
            CausticSample {
                h,
                t_c: point.t_c,
                r_caustic: point.r_caustic,
                z_caustic: point.z_caustic,
                residual: point.residual,
                valid: point.t_c.is_finite() && point.residual.abs() <= 1e-8,
                t_sagittal,
                z_sagittal: ray.z_e + t_sagittal * ray.alpha.cos(),
            }
        })
        .collect();
    Ok(CausticCurve { samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn deg(x: f64) -> f64 {
        x.to_radians()
    }

    #[test]
    fn normal_incidence_passes_undeviated() {
        let c = Vector3::new(0.0, 0.0, 10.0);
        let p = Vector3::new(0.0, 0.0, 0.0);
        let d = Vector3::new(0.0, 0.0, 1.0);
        let out = refract_at_sphere(&p, &d, &c, 10.0, 1.0, 1.5).unwrap();
        assert_abs_diff_eq!((out - d).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn snell_thirty_degrees() {
        // sphere centered at origin, point on +z; incoming at 30 degrees to the normal
        let c = Vector3::zeros();
        let p = Vector3::new(0.0, 0.0, -5.0);
        let d = Vector3::new(deg(30.0).sin(), 0.0, deg(30.0).cos());
        let out = refract_at_sphere(&p, &d, &c, 5.0, 1.0, 1.5).unwrap();
        let normal = Vector3::new(0.0, 0.0, 1.0);
        let sin_out = out.cross(&normal).norm();
        assert_abs_diff_eq!(sin_out, 1.0 / 3.0, epsilon = 1e-12);
        // coplanar with the incidence plane
        assert_abs_diff_eq!(out.y, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn total_internal_reflection() {
        let c = Vector3::zeros();
        let p = Vector3::new(0.0, 0.0, -5.0);
        let d = Vector3::new(deg(60.0).sin(), 0.0, deg(60.0).cos());
        match refract_at_sphere(&p, &d, &c, 5.0, 1.5, 1.0) {
            Err(Error::TotalInternalReflection { critical_angle }) => {
                assert_abs_diff_eq!(critical_angle.to_degrees(), 41.810314895778596, epsilon = 1e-9);
            }
            other => panic!("expected TIR, got {other:?}"),
        }
    }

    #[test]
    fn refract_preconditions() {
        let c = Vector3::zeros();
        let off = Vector3::new(0.0, 0.0, -5.1);
        let d = Vector3::new(0.0, 0.0, 1.0);
        assert!(matches!(refract_at_sphere(&off, &d, &c, 5.0, 1.0, 1.5), Err(Error::Domain(_))));
        let p = Vector3::new(0.0, 0.0, -5.0);
        let long = Vector3::new(0.0, 0.0, 1.1);
        assert!(matches!(refract_at_sphere(&p, &long, &c, 5.0, 1.0, 1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn axial_ray() {
        let lens = LensPrescription::sample();
        let e = trace_through_lens(0.0, &lens).unwrap();
        assert_eq!(e.r_e, 0.0);
        assert_abs_diff_eq!(e.z_e, 5.0, epsilon = 1e-12);
        assert_eq!(e.alpha, 0.0);
    }

    #[test]
    fn trace_rejects_outside_aperture() {
        let lens = LensPrescription::sample();
        assert!(matches!(trace_through_lens(20.0, &lens), Err(Error::Domain(_))));
        assert!(matches!(trace_through_lens(-1.0, &lens), Err(Error::Domain(_))));
        // beyond the rim the caps have crossed and the ray cannot reach S2
        assert!(matches!(trace_through_lens(18.0, &lens), Err(Error::Geometry(_))));
    }

    #[test]
    fn rim_height_of_sample_lens() {
        let lens = LensPrescription::sample();
        // caps meet where 50 - s = -45 + s, s = sqrt(2500 - r^2) = 47.5
        assert_abs_diff_eq!(lens.rim_height(), (2500.0f64 - 47.5 * 47.5).sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn exit_ray_invariants() {
        let lens = LensPrescription::sample();
        let a = lens.semi_aperture();
        let z_lo = lens.d - LensPrescription::sag(lens.r2, a);
        let mut h = 0.5;
        while h < 15.0 {
            let e = trace_through_lens(h, &lens).unwrap();
            assert!(e.z_e >= z_lo && e.z_e <= lens.d);
            assert!(e.r_e >= 0.0 && e.r_e <= a);
            assert!(e.alpha > 0.0, "converging ray bends toward the axis");
            h += 0.5;
        }
    }

    #[test]
    fn alpha_increases_with_height() {
        let lens = LensPrescription::sample();
        let mut prev = -1.0;
        for i in 0..=300 {
            let h = 15.0 * i as f64 / 300.0;
            let a = trace_through_lens(h, &lens).unwrap().alpha;
            assert!(a > prev);
            prev = a;
        }
    }

    #[test]
    fn exit_functions_have_parity() {
        let lens = LensPrescription::sample();
        for h in [0.7, 3.1, 9.4] {
            let p = lens.exit(h).unwrap();
            let m = lens.exit(-h).unwrap();
            assert_abs_diff_eq!(m.r_e, -p.r_e, epsilon = 1e-12);
            assert_abs_diff_eq!(m.z_e, p.z_e, epsilon = 1e-12);
            assert_abs_diff_eq!(m.alpha, -p.alpha, epsilon = 1e-14);
        }
    }

    #[test]
    fn ideal_focuser_alpha_derivative() {
        let f = 60.0;
        let fam = IdealFocuser { focal_length: f, semi_aperture: 20.0 };
        for h in [1.0, 5.0, 12.0] {
            let der = exit_derivatives(h, &fam, 1e-2).unwrap();
            let alpha = (h / f).atan();
            assert_abs_diff_eq!(der.alpha, alpha.cos().powi(2) / f, epsilon = 1e-8);
            assert_abs_diff_eq!(der.r_e, 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(der.z_e, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_step_halving_is_stable_on_sample_lens() {
        let lens = LensPrescription::sample();
        for h in [1.0, 6.0, 12.0] {
            let der = exit_derivatives(h, &lens, 1e-2).unwrap();
            assert!(!der.unstable, "h = {h}: change {}", der.halving_change);
        }
    }

    #[test]
    fn derivative_stencil_must_fit() {
        let lens = LensPrescription::sample();
        assert!(matches!(exit_derivatives(0.01, &lens, 0.01), Err(Error::Domain(_))));
        assert!(matches!(exit_derivatives(19.99, &lens, 0.01), Err(Error::Domain(_))));
    }

    #[test]
    fn ideal_focuser_caustic_collapses_to_focus() {
        let f = 60.0;
        let fam = IdealFocuser { focal_length: f, semi_aperture: 20.0 };
        for h in [0.5, 4.0, 11.0, 17.0] {
            let p = caustic_point(h, &fam).unwrap();
            let alpha = (h / f).atan();
            assert_abs_diff_eq!(p.t_c, f / alpha.cos(), epsilon = 1e-7);
            assert_abs_diff_eq!(p.r_caustic, 0.0, epsilon = 1e-7);
            assert_abs_diff_eq!(p.z_caustic, f, epsilon = 1e-7);

            let (r, z) = brute_force_caustic(h, 0.3, &fam).unwrap();
            assert_abs_diff_eq!(r, 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(z, f, epsilon = 1e-10);
        }
    }

    #[test]
    fn degenerate_caustic_is_an_error() {
        struct Collimated;
        impl ExitFamily for Collimated {
            fn exit(&self, h: f64) -> Result<ExitRay> {
                Ok(ExitRay { h, r_e: h, z_e: 0.0, alpha: 0.0 })
            }
            fn max_height(&self) -> f64 {
                10.0
            }
        }
        assert!(matches!(caustic_point(2.0, &Collimated), Err(Error::DegenerateCaustic { .. })));
        assert!(matches!(brute_force_caustic(2.0, 0.1, &Collimated), Err(Error::NoIntersection)));
    }

    #[test]
    fn brute_force_is_symmetric_in_the_pair() {
        let lens = LensPrescription::sample();
        let a = brute_force_caustic(7.0, 1e-3, &lens).unwrap();
        let b = brute_force_caustic(7.0 + 1e-3, -1e-3, &lens).unwrap();
        assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);
    }

    #[test]
    fn caustic_profile_of_sample_lens() {
        let lens = LensPrescription::sample();
        let grid: Vec<f64> = (1..=60).map(|i| 0.25 * i as f64).collect();
        let curve = caustic_profile(&lens, &grid).unwrap();
        assert_eq!(curve.samples.len(), grid.len());
        assert!(curve.samples.iter().all(|s| s.valid));
        for w in curve.samples.windows(2) {
            assert!(w[1].z_caustic < w[0].z_caustic, "marginal focus falls short of paraxial");
        }
        for s in &curve.samples {
            assert!(s.residual.abs() <= 1e-8);
            // sagittal focus lies on the axis past the meridional focus
            assert!(s.z_sagittal > s.z_caustic);
        }
    }

    #[test]
    fn caustic_profile_edge_cases() {
        let lens = LensPrescription::sample();
        let one = caustic_profile(&lens, &[4.0]).unwrap();
        assert_eq!(one.samples.len(), 1);
        assert!(caustic_profile(&lens, &[2.0, 2.0]).is_err());
        let beyond = caustic_profile(&lens, &[4.0, 18.0]).unwrap();
        assert!(beyond.samples[0].valid && !beyond.samples[1].valid);
    }

    #[test]
    fn lens_json_uses_optical_names() {
        let lens = LensPrescription::from_json(r#"{"n":1.5,"d":5,"R1":50,"R2":-50,"D":40}"#).unwrap();
        assert_eq!(lens, LensPrescription::sample());
        assert!(LensPrescription::from_json(r#"{"n":1.5,"d":5,"R1":50,"R2":50,"D":40}"#).is_err());
        assert!(LensPrescription::from_json(r#"{"n":1.5,"d":5,"R1":50,"R2":-50,"D":120}"#).is_err());
    }
}
