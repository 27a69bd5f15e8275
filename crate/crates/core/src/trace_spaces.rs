//! RWG (div-conforming) and rotated RWG (curl-conforming) spaces on a triangulated surface.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{Point, SurfaceMesh};
use crate::quadrature::TriangleRule;
use crate::C64;

pub type CVec3 = Vector3<C64>;

pub fn to_complex(v: &Point) -> CVec3 {
    v.map(|x| C64::new(x, 0.0))
}

/// One RWG half-basis living on a triangle: `f(x) = coef * (x - apex)`.
#[derive(Debug, Clone, Copy)]
pub struct LocalRwg {
    pub edge: usize,
    pub coef: f64,
    pub apex: Point,
}

impl LocalRwg {
    pub fn eval(&self, x: &Point) -> Point {
        (x - self.apex) * self.coef
    }

    pub fn div(&self) -> f64 {
        2.0 * self.coef
    }
}

fn build_local(mesh: &SurfaceMesh) -> Vec<[LocalRwg; 3]> {
    (0..mesh.num_triangles())
        .map(|t| {
            let tri = mesh.triangles[t];
            std::array::from_fn(|k| {
                let e = mesh.tri_edges[t][k];
                let sign = if mesh.edges[e].tris[0] == t { 1.0 } else { -1.0 };
                LocalRwg { edge: e, coef: sign * mesh.edge_length(e) / (2.0 * mesh.areas[t]), apex: mesh.vertices[tri[k]] }
            })
        })
        .collect()
}

/// Which of the two trace spaces a coefficient vector lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceRole {
    Div,
    Curl,
}

/// The pair of discrete trace spaces on one mesh. Both share the RWG local data; the curl
/// space basis is `g_e = n x f_e` panelwise.
#[derive(Debug, Clone)]
pub struct TraceSpaces {
    pub mesh: Arc<SurfaceMesh>,
    local: Vec<[LocalRwg; 3]>,
}

/// Div-conforming view.
#[derive(Debug, Clone, Copy)]
pub struct DivSpace<'a>(pub &'a TraceSpaces);
/// Curl-conforming view.
#[derive(Debug, Clone, Copy)]
pub struct CurlSpace<'a>(pub &'a TraceSpaces);

pub fn build_spaces(mesh: Arc<SurfaceMesh>) -> TraceSpaces {
    let local = build_local(&mesh);
    TraceSpaces { mesh, local }
}

impl TraceSpaces {
    pub fn dim(&self) -> usize {
        self.mesh.num_edges()
    }

    pub fn div_space(&self) -> DivSpace<'_> {
        DivSpace(self)
    }

    pub fn curl_space(&self) -> CurlSpace<'_> {
        CurlSpace(self)
    }

    pub fn local(&self, t: usize) -> &[LocalRwg; 3] {
        &self.local[t]
    }

    /// Value of basis function `e` of the given role at a point `x` of triangle `t`.
    pub fn basis(&self, role: SpaceRole, e: usize, t: usize, x: &Point) -> Point {
        match self.local[t].iter().find(|l| l.edge == e) {
            None => Point::zeros(),
            Some(l) => match role {
                SpaceRole::Div => l.eval(x),
                SpaceRole::Curl => self.mesh.normals[t].cross(&l.eval(x)),
            },
        }
    }

    /// Surface divergence of the div basis `e` on triangle `t` (0 off support).
    pub fn div(&self, e: usize, t: usize) -> f64 {
        self.local[t].iter().find(|l| l.edge == e).map_or(0.0, |l| l.div())
    }

    /// Evaluate a discrete field `sum_e c_e b_e` at `x` on triangle `t`.
    pub fn field(&self, role: SpaceRole, coeffs: &[C64], t: usize, x: &Point) -> CVec3 {
        let mut v = CVec3::zeros();
        for l in &self.local[t] {
            v += to_complex(&l.eval(x)) * coeffs[l.edge];
        }
        match role {
            SpaceRole::Div => v,
            SpaceRole::Curl => to_complex(&self.mesh.normals[t]).cross(&v),
        }
    }

    /// `P[i][j] = ∫ f_i · g_j`, skew-symmetric.
    pub fn duality_gram(&self) -> DMatrix<f64> {
        self.gram(|n, a, b| a.dot(&n.cross(b)))
    }

    /// `M[i][j] = ∫ f_i · f_j` (equal to `∫ g_i · g_j`), symmetric positive definite.
    pub fn mass_matrix(&self) -> DMatrix<f64> {
        self.gram(|_, a, b| a.dot(b))
    }

    fn gram(&self, form: impl Fn(&Point, &Point, &Point) -> f64) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        let rule = TriangleRule::of_degree(2);
        for t in 0..self.mesh.num_triangles() {
            let c = self.mesh.corners(t);
            let nrm = self.mesh.normals[t];
            let jac = 2.0 * self.mesh.areas[t];
            for (u, w) in rule.points.iter().zip(&rule.weights) {
                let x = c[0] + (c[1] - c[0]) * u[0] + (c[2] - c[0]) * u[1];
                for a in &self.local[t] {
                    for b in &self.local[t] {
                        m[(a.edge, b.edge)] += w * jac * form(&nrm, &a.eval(&x), &b.eval(&x));
                    }
                }
            }
        }
        m
    }

    /// `b[i] = ∫ field · basis_i` with a triangle rule of the given polynomial degree.
    /// The field closure receives the point and the panel normal.
    pub fn project_onto_dual<F>(&self, role: SpaceRole, degree: usize, field: F) -> Vec<C64>
    where
        F: Fn(&Point, &Point) -> CVec3,
    {
        let rule = TriangleRule::of_degree(degree);
        let mut b = vec![C64::new(0.0, 0.0); self.dim()];
        for t in 0..self.mesh.num_triangles() {
            let c = self.mesh.corners(t);
            let nrm = self.mesh.normals[t];
            let jac = 2.0 * self.mesh.areas[t];
            for (u, w) in rule.points.iter().zip(&rule.weights) {
                let x = c[0] + (c[1] - c[0]) * u[0] + (c[2] - c[0]) * u[1];
                let v = field(&x, &nrm);
                for l in &self.local[t] {
                    let f = l.eval(&x);
                    let basis = match role {
                        SpaceRole::Div => f,
                        SpaceRole::Curl => nrm.cross(&f),
                    };
                    b[l.edge] += v.dot(&to_complex(&basis)) * (w * jac);
                }
            }
        }
        b
    }
}

impl DivSpace<'_> {
    pub fn dim(&self) -> usize {
        self.0.dim()
    }
    pub fn eval(&self, e: usize, t: usize, x: &Point) -> Point {
        self.0.basis(SpaceRole::Div, e, t, x)
    }
    pub fn div(&self, e: usize, t: usize) -> f64 {
        self.0.div(e, t)
    }
}

impl CurlSpace<'_> {
    pub fn dim(&self) -> usize {
        self.0.dim()
    }
    pub fn eval(&self, e: usize, t: usize, x: &Point) -> Point {
        self.0.basis(SpaceRole::Curl, e, t, x)
    }
}

/// `duality_gram` between two views, checking they share the mesh.
pub fn duality_gram(x: DivSpace<'_>, y: CurlSpace<'_>) -> Result<DMatrix<f64>> {
    if !Arc::ptr_eq(&x.0.mesh, &y.0.mesh) && x.0.mesh.fingerprint() != y.0.mesh.fingerprint() {
        return Err(Error::InvalidInput("duality_gram: spaces live on different meshes".into()));
    }
    Ok(x.0.duality_gram())
}

/// Coefficient vectors as CSV: `edge_index, re, im`.
pub fn write_coefficients_csv(path: impl AsRef<Path>, coeffs: &[C64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path.as_ref()).map_err(|e| Error::Io(e.to_string()))?);
    writeln!(f, "edge_index,re,im").map_err(|e| Error::Io(e.to_string()))?;
    for (i, c) in coeffs.iter().enumerate() {
        writeln!(f, "{i},{:.17e},{:.17e}", c.re, c.im).map_err(|e| Error::Io(e.to_string()))?;
    }
    Ok(())
}

pub fn read_coefficients_csv(path: impl AsRef<Path>) -> Result<Vec<C64>> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::Io(e.to_string()))?;
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Error::Parse(format!("line {}: expected 'edge_index,re,im'", ln + 1));
        if parts.len() != 3 {
            return Err(bad());
        }
        let i: usize = parts[0].parse().map_err(|_| bad())?;
        if i != out.len() {
            return Err(Error::Parse(format!("line {}: edge index {i} out of order", ln + 1)));
        }
        out.push(C64::new(parts[1].parse().map_err(|_| bad())?, parts[2].parse().map_err(|_| bad())?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_icosphere;
    use crate::quadrature::adaptive::adaptive_triangle;
    use rand::{Rng, SeedableRng};

    fn sphere(level: u32) -> TraceSpaces {
        build_spaces(Arc::new(make_icosphere(level, 1.0, Point::zeros()).unwrap()))
    }

    #[test]
    fn dimensions_and_divergence() {
        let s = sphere(0);
        assert_eq!(s.div_space().dim(), 30);
        assert_eq!(s.curl_space().dim(), 30);
        let m = &s.mesh;
        for (e, edge) in m.edges.iter().enumerate() {
            let l = m.edge_length(e);
            assert!((s.div(e, edge.tris[0]) - l / m.areas[edge.tris[0]]).abs() < 1e-13);
            assert!((s.div(e, edge.tris[1]) + l / m.areas[edge.tris[1]]).abs() < 1e-13);
        }
    }

    #[test]
    fn normal_continuity_and_flux() {
        let s = sphere(1);
        let m = &s.mesh;
        for (e, edge) in m.edges.iter().enumerate() {
            let (a, b) = (m.vertices[edge.verts[0]], m.vertices[edge.verts[1]]);
            let t0 = edge.tris[0];
            // in-plane edge normal pointing out of the plus triangle
            let tang = (b - a).normalize();
            let mut nu = tang.cross(&m.normals[t0]);
            if nu.dot(&(m.centroid(t0) - a)) > 0.0 {
                nu = -nu;
            }
            let t1 = edge.tris[1];
            let mut nu1 = tang.cross(&m.normals[t1]);
            if nu1.dot(&(m.centroid(t1) - a)) < 0.0 {
                nu1 = -nu1;
            }
            for s01 in [0.1, 0.5, 0.9] {
                let x = a + (b - a) * s01;
                assert!((s.basis(SpaceRole::Div, e, t0, &x).dot(&nu) - 1.0).abs() < 1e-12);
                assert!((s.basis(SpaceRole::Div, e, t1, &x).dot(&nu1) - 1.0).abs() < 1e-12);
                // tangential component of g continuous
                let g0 = s.basis(SpaceRole::Curl, e, t0, &x).dot(&tang);
                let g1 = s.basis(SpaceRole::Curl, e, t1, &x).dot(&tang);
                assert!((g0 - g1).abs() < 1e-12);
            }
            // flux through the edge equals its length (constant normal component)
            assert!((s.basis(SpaceRole::Div, e, t0, &((a + b) * 0.5)).dot(&nu) * m.edge_length(e) - m.edge_length(e)).abs() < 1e-12);
            // no normal flux through the other edges of the plus triangle
            let tri = m.triangles[t0];
            for k in 0..3 {
                let (p, q) = (m.vertices[tri[k]], m.vertices[tri[(k + 1) % 3]]);
                let other = m.tri_edges[t0][(k + 2) % 3];
                if other == e {
                    continue;
                }
                let nk = (q - p).cross(&m.normals[t0]);
                let x = (p + q) * 0.5;
                assert!(s.basis(SpaceRole::Div, e, t0, &x).dot(&nk).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pointwise_rotation_properties() {
        let s = sphere(1);
        let m = &s.mesh;
        for t in 0..m.num_triangles() {
            let x = m.centroid(t) * 0.7 + m.vertices[m.triangles[t][0]] * 0.3;
            let n = m.normals[t];
            for l in s.local(t) {
                let f = s.basis(SpaceRole::Div, l.edge, t, &x);
                let g = s.basis(SpaceRole::Curl, l.edge, t, &x);
                assert!(f.dot(&g).abs() < 1e-14);
                assert!((f.norm() - g.norm()).abs() < 1e-14);
                assert!(g.dot(&n).abs() < 1e-14);
                assert!((n.cross(&g) + f).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn gram_is_skew_and_mass_is_spd() {
        for level in 0..3 {
            let s = sphere(level);
            let p = s.duality_gram();
            let scale = p.amax();
            for i in 0..p.nrows() {
                assert!(p[(i, i)].abs() < 1e-15 * scale);
                for j in 0..p.ncols() {
                    assert!((p[(i, j)] + p[(j, i)]).abs() <= 1e-13 * scale);
                    let ti = s.mesh.edges[i].tris;
                    let tj = s.mesh.edges[j].tris;
                    if !ti.iter().any(|t| tj.contains(t)) {
                        assert_eq!(p[(i, j)], 0.0);
                    }
                }
            }
            // The pairing matrix loses one rank per even-valence vertex (alternating
            // sums of the RWGs around such a vertex pair to zero with every g_j).
            let mut valence = vec![0usize; s.mesh.num_vertices()];
            for e in &s.mesh.edges {
                valence[e.verts[0]] += 1;
                valence[e.verts[1]] += 1;
            }
            let even = valence.iter().filter(|v| *v % 2 == 0).count();
            let sv = p.clone().singular_values();
            let null = sv.iter().filter(|&&x| x < 1e-10 * sv.max()).count();
            assert_eq!(null, even, "level {level}");
            let ev = s.mass_matrix().symmetric_eigenvalues();
            assert!(ev.min() > 0.0 && ev.max() / ev.min() < 10.0);
        }
    }

    #[test]
    fn divergence_integrates_to_zero() {
        let s = sphere(2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let c: Vec<f64> = (0..s.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut total = 0.0;
        for t in 0..s.mesh.num_triangles() {
            for l in s.local(t) {
                total += c[l.edge] * l.div() * s.mesh.areas[t];
            }
        }
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(total.abs() < 1e-12 * norm);
    }

    #[test]
    fn projection_matches_gram_and_oracle() {
        let s = sphere(1);
        let zero = s.project_onto_dual(SpaceRole::Div, 6, |_, _| CVec3::zeros());
        assert!(zero.iter().all(|z| z.norm() == 0.0));

        let p = s.duality_gram();
        let k = 17;
        let col = s.project_onto_dual(SpaceRole::Div, 6, |x, n| {
            // locate the triangle by its normal to evaluate g_k there
            let t = (0..s.mesh.num_triangles()).find(|&t| (s.mesh.normals[t] - n).norm() < 1e-14).unwrap();
            to_complex(&s.basis(SpaceRole::Curl, k, t, x))
        });
        for i in 0..s.dim() {
            assert!((col[i].re - p[(i, k)]).abs() < 1e-14);
        }

        // tangential trace of the constant field (1,0,0)
        let e = Point::new(1.0, 0.0, 0.0);
        let tang = |n: &Point| e - n * n.dot(&e);
        let b = s.project_onto_dual(SpaceRole::Curl, 6, |_, n| to_complex(&tang(n)));
        for i in [0, 5, 33, 100] {
            let mut oracle = 0.0;
            for &t in &s.mesh.edges[i].tris {
                let n = s.mesh.normals[t];
                let v = adaptive_triangle(&s.mesh.corners(t), 1, 1e-12, |x, o| {
                    o[0] = C64::new(tang(&n).dot(&s.basis(SpaceRole::Curl, i, t, x)), 0.0)
                });
                oracle += v[0].re;
            }
            assert!((b[i].re - oracle).abs() <= 1e-8 * oracle.abs().max(1e-300), "{} vs {}", b[i].re, oracle);
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let c = vec![C64::new(1.0, -2.5), C64::new(1.0 / 3.0, 1e-300)];
        write_coefficients_csv(&path, &c).unwrap();
        assert_eq!(read_coefficients_csv(&path).unwrap(), c);
    }
}
