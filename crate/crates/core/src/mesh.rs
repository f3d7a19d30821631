//! Triangle meshes with per-vertex principal curvatures and the caustic
//! surface measure `∫ (κ₁² + κ₂²) dA`.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Error, Result};

/// Faces with area below this fraction of the squared bounding-box diagonal
/// are degenerate.
pub const DEGENERATE_AREA_FRACTION: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct CausticMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalCurvatures {
    pub k1: f64,
    pub k2: f64,
}

impl PrincipalCurvatures {
    pub fn sum_of_squares(&self) -> f64 {
        self.k1 * self.k1 + self.k2 * self.k2
    }
}

impl CausticMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(f) = faces.iter().find(|f| f.iter().any(|&i| i >= vertices.len())) {
            return Err(Error::Mesh(format!("face {f:?} references a missing vertex")));
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::Mesh("non-finite vertex".into()));
        }
        Ok(Self { vertices, faces })
    }

    /// Icosahedron subdivided `level` times and projected onto a sphere.
    pub fn icosphere(radius: f64, level: usize) -> Self {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut vertices: Vec<Vector3<f64>> = [
            (-1.0, t, 0.0),
            (1.0, t, 0.0),
            (-1.0, -t, 0.0),
            (1.0, -t, 0.0),
            (0.0, -1.0, t),
            (0.0, 1.0, t),
            (0.0, -1.0, -t),
            (0.0, 1.0, -t),
            (t, 0.0, -1.0),
            (t, 0.0, 1.0),
            (-t, 0.0, -1.0),
            (-t, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
        .collect();
        let mut faces: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..level {
            let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
            let mut mid = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| {
                let key = (a.min(b), a.max(b));
                *midpoint.entry(key).or_insert_with(|| {
                    verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                    verts.len() - 1
                })
            };
            let mut next = Vec::with_capacity(faces.len() * 4);
            for [a, b, c] in faces {
                let ab = mid(a, b, &mut vertices);
                let bc = mid(b, c, &mut vertices);
                let ca = mid(c, a, &mut vertices);
                next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        for v in &mut vertices {
            *v *= radius;
        }
        Self { vertices, faces }
    }

    /// Flat disk in the `z = 0` plane with `rings` concentric rings.
    pub fn disk(radius: f64, rings: usize, sectors: usize) -> Self {
        let mut vertices = vec![Vector3::zeros()];
        for i in 1..=rings {
            let r = radius * i as f64 / rings as f64;
            for j in 0..sectors {
                let phi = 2.0 * PI * j as f64 / sectors as f64;
                vertices.push(Vector3::new(r * phi.cos(), r * phi.sin(), 0.0));
            }
        }
        let idx = |ring: usize, j: usize| 1 + (ring - 1) * sectors + j % sectors;
        let mut faces = Vec::new();
        for j in 0..sectors {
            faces.push([0, idx(1, j), idx(1, j + 1)]);
        }
        for ring in 1..rings {
            for j in 0..sectors {
                let (a, b) = (idx(ring, j), idx(ring, j + 1));
                let (c, d) = (idx(ring + 1, j), idx(ring + 1, j + 1));
                faces.push([a, c, d]);
                faces.push([a, d, b]);
            }
        }
        Self { vertices, faces }
    }

    /// Triangulates a structured grid `rows × cols`; with `wrap` the last
    /// column connects to the first. Faces below the degeneracy threshold are
    /// dropped along with vertices no face uses.
    pub fn from_grid(grid: &[Vec<Vector3<f64>>], wrap: bool) -> Result<Self> {
        let rows = grid.len();
        let cols = grid.first().map_or(0, Vec::len);
        if grid.iter().any(|r| r.len() != cols) {
            return Err(Error::Mesh("ragged grid".into()));
        }
        let vertices: Vec<Vector3<f64>> = grid.iter().flatten().copied().collect();
        let mut faces = Vec::new();
        let col_pairs = if wrap { cols } else { cols.saturating_sub(1) };
        for i in 0..rows.saturating_sub(1) {
            for j in 0..col_pairs {
                let jn = (j + 1) % cols;
                let (a, b) = (i * cols + j, i * cols + jn);
                let (c, d) = ((i + 1) * cols + j, (i + 1) * cols + jn);
                faces.push([a, c, d]);
                faces.push([a, d, b]);
            }
        }
        let mut mesh = Self::new(vertices, faces)?;
        mesh.drop_degenerate_faces();
        Ok(mesh)
    }

    pub fn drop_degenerate_faces(&mut self) {
        let min_area = self.degenerate_area();
        let kept: Vec<[usize; 3]> =
            self.faces.iter().copied().filter(|&f| self.face_area(f) > min_area).collect();
        let used: BTreeSet<usize> = kept.iter().flatten().copied().collect();
        let remap: HashMap<usize, usize> = used.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        self.vertices = used.iter().map(|&i| self.vertices[i]).collect();
        self.faces = kept.iter().map(|f| f.map(|i| remap[&i])).collect();
    }

    fn degenerate_area(&self) -> f64 {
        let Some(first) = self.vertices.first() else { return 0.0 };
        let (lo, hi) = self.vertices.iter().fold((*first, *first), |(lo, hi), v| (lo.inf(v), hi.sup(v)));
        DEGENERATE_AREA_FRACTION * (hi - lo).norm_squared()
    }

    fn face_normal(&self, [a, b, c]: [usize; 3]) -> Vector3<f64> {
        (self.vertices[b] - self.vertices[a]).cross(&(self.vertices[c] - self.vertices[a]))
    }

    pub fn face_area(&self, f: [usize; 3]) -> f64 {
        0.5 * self.face_normal(f).norm()
    }

    pub fn face_areas(&self) -> Vec<f64> {
        self.faces.iter().map(|&f| self.face_area(f)).collect()
    }

    pub fn total_area(&self) -> f64 {
        self.face_areas().iter().sum()
    }

    /// Errors if any face is degenerate.
    pub fn validate(&self) -> Result<()> {
        if self.faces.is_empty() {
            return Err(Error::Mesh("mesh has no faces".into()));
        }
        let min_area = self.degenerate_area();
        for (i, &f) in self.faces.iter().enumerate() {
            if !(self.face_area(f) > min_area) {
                return Err(Error::Mesh(format!("face {i} {f:?} has zero area")));
            }
        }
        Ok(())
    }

    /// One third of the area of every incident face.
    pub fn vertex_areas(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.vertices.len()];
        for &f in &self.faces {
            let a = self.face_area(f) / 3.0;
            for i in f {
                out[i] += a;
            }
        }
        out
    }

    fn adjacency(&self) -> Vec<BTreeSet<usize>> {
        let mut adj = vec![BTreeSet::new(); self.vertices.len()];
        for &[a, b, c] in &self.faces {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                adj[u].insert(v);
                adj[v].insert(u);
            }
        }
        adj
    }

    /// Area-weighted vertex normals; incident face normals are sign-aligned
    /// with the first one so inconsistent winding does not cancel them.
    pub fn vertex_normals(&self) -> Vec<Vector3<f64>> {
        let mut incident: Vec<Vec<Vector3<f64>>> = vec![Vec::new(); self.vertices.len()];
        for &f in &self.faces {
            let n = self.face_normal(f);
            for i in f {
                incident[i].push(n);
            }
        }
        incident
            .into_iter()
            .map(|ns| {
                let Some(&first) = ns.first() else { return Vector3::z() };
                let sum: Vector3<f64> =
                    ns.iter().map(|n| if n.dot(&first) < 0.0 { -n } else { *n }).sum();
                let norm = sum.norm();
                if norm > 0.0 { sum / norm } else { Vector3::z() }
            })
            .collect()
    }

    /// Principal curvatures from a least-squares quadric
    /// `w = a u² + b uv + c v² + d u + e v + f` over the 1-ring, widened to the
    /// 2-ring when the 1-ring has fewer than six vertices.
    pub fn principal_curvatures(&self) -> Result<Vec<PrincipalCurvatures>> {
        self.validate()?;
        let adj = self.adjacency();
        let normals = self.vertex_normals();
        (0..self.vertices.len())
            .map(|i| {
                let mut ring: BTreeSet<usize> = adj[i].clone();
                if ring.len() < 6 {
                    let second: Vec<usize> = ring.iter().flat_map(|&j| adj[j].iter().copied()).collect();
                    ring.extend(second);
                    ring.remove(&i);
                }
                if ring.is_empty() {
                    return Ok(PrincipalCurvatures { k1: 0.0, k2: 0.0 });
                }
                quadric_curvatures(self.vertices[i], normals[i], ring.iter().map(|&j| self.vertices[j]))
            })
            .collect()
    }

    /// OFF text with full-precision coordinates.
    pub fn to_off(&self) -> String {
        let mut s = format!("OFF\n{} {} 0\n", self.vertices.len(), self.faces.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{:.16e} {:.16e} {:.16e}", v.x, v.y, v.z);
        }
        for [a, b, c] in &self.faces {
            let _ = writeln!(s, "3 {a} {b} {c}");
        }
        s
    }

    pub fn from_off(text: &str) -> Result<Self> {
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace);
        if tokens.next() != Some("OFF") {
            return Err(Error::Mesh("missing OFF header".into()));
        }
        let mut next_num = |what: &str| -> Result<f64> {
            tokens
                .next()
                .and_then(|t| t.parse::<f64>().ok())
                .ok_or_else(|| Error::Mesh(format!("expected {what}")))
        };
        let nv = next_num("vertex count")? as usize;
        let nf = next_num("face count")? as usize;
        next_num("edge count")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            vertices.push(Vector3::new(next_num("x")?, next_num("y")?, next_num("z")?));
        }
        let mut faces = Vec::with_capacity(nf);
        for _ in 0..nf {
            if next_num("face arity")? as usize != 3 {
                return Err(Error::Mesh("only triangles are supported".into()));
            }
            faces.push([next_num("index")? as usize, next_num("index")? as usize, next_num("index")? as usize]);
        }
        Self::new(vertices, faces)
    }
}

fn quadric_curvatures(
    p: Vector3<f64>,
    n: Vector3<f64>,
    neighbours: impl Iterator<Item = Vector3<f64>>,
) -> Result<PrincipalCurvatures> {
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = helper.cross(&n).normalize();
    let e2 = n.cross(&e1);
    let pts: Vec<(f64, f64, f64)> = std::iter::once(p)
        .chain(neighbours)
        .map(|q| {
            let d = q - p;
            (d.dot(&e1), d.dot(&e2), d.dot(&n))
        })
        .collect();
    let scale = pts.iter().map(|(u, v, _)| u.hypot(*v)).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::Mesh("vertex neighbourhood collapsed to a point".into()));
    }
    // Unknowns are fitted in scaled coordinates for conditioning.
    let a = DMatrix::from_fn(pts.len(), 6, |r, c| {
        let (u, v, _) = pts[r];
        let (u, v) = (u / scale, v / scale);
        [u * u, u * v, v * v, u, v, 1.0][c]
    });
    let rhs = DVector::from_iterator(pts.len(), pts.iter().map(|&(_, _, w)| w / scale));
    let coef = a
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::Mesh(format!("quadric fit failed: {e}")))?;
    let (qa, qb, qc) = (coef[0] / scale, coef[1] / scale, coef[2] / scale);
    let (qd, qe) = (coef[3], coef[4]);
    let e = 1.0 + qd * qd;
    let f = qd * qe;
    let g = 1.0 + qe * qe;
    let w = (1.0 + qd * qd + qe * qe).sqrt();
    let (l, m, nn) = (2.0 * qa / w, qb / w, 2.0 * qc / w);
    let det_i = e * g - f * f;
    let mean2 = (e * nn - 2.0 * f * m + g * l) / det_i;
    let gauss = (l * nn - m * m) / det_i;
    let disc = (0.25 * mean2 * mean2 - gauss).max(0.0).sqrt();
    Ok(PrincipalCurvatures { k1: 0.5 * mean2 + disc, k2: 0.5 * mean2 - disc })
}

/// `Σ_v (κ₁² + κ₂²) A_v` with barycentric vertex areas `A_v`.
pub fn caustic_measure(mesh: &CausticMesh) -> Result<f64> {
    let curv = mesh.principal_curvatures()?;
    let areas = mesh.vertex_areas();
    let terms: Vec<f64> = curv.iter().zip(&areas).map(|(k, a)| k.sum_of_squares() * a).collect();
    Ok(crate::quadrature::pairwise_sum(&terms))
}

/// Per-vertex curvatures as CSV `k1,k2`.
pub fn curvature_csv(curvatures: &[PrincipalCurvatures]) -> String {
    let mut s = String::from("k1,k2\n");
    for k in curvatures {
        let _ = writeln!(s, "{:.16e},{:.16e}", k.k1, k.k2);
    }
    s
}
