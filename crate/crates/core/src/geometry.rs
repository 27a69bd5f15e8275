//! Closed triangulated surfaces: construction, OFF input/output and validation.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Point = Vector3<f64>;

/// One mesh edge, keyed by its sorted endpoint indices.
///
/// `tris[0]` is the "plus" triangle (lower triangle index), `tris[1]` the "minus" one.
/// `local[k]` is the local index (0..3) of the vertex opposite to this edge in `tris[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub verts: [usize; 2],
    pub tris: [usize; 2],
    pub local: [usize; 2],
}

/// Watertight, consistently oriented triangulation with outward normals.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<Edge>,
    /// `tri_edges[t][k]` is the edge opposite to local vertex `k` of triangle `t`.
    pub tri_edges: Vec<[usize; 3]>,
    pub normals: Vec<Point>,
    pub areas: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MeshStats {
    pub h_max: f64,
    pub h_min: f64,
    pub total_area: f64,
    pub shape_regularity: f64,
}

impl SurfaceMesh {
    /// Builds the derived data and checks every invariant.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Self::build(vertices, triangles, true)?;
        Ok(mesh)
    }

    fn build(vertices: Vec<Point>, triangles: Vec<[usize; 3]>, check: bool) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::Mesh("mesh has no triangles".into()));
        }
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= vertices.len() {
                    return Err(Error::Mesh(format!("triangle {t} references missing vertex {v}")));
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Mesh(format!("triangle {t} has repeated vertices")));
            }
        }

        let mut normals = Vec::with_capacity(triangles.len());
        let mut areas = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let [a, b, c] = tri.map(|i| vertices[i]);
            let cr = (b - a).cross(&(c - a));
            let norm = cr.norm();
            if !(norm > 0.0) {
                return Err(Error::Mesh(format!("triangle {t} has zero area")));
            }
            normals.push(cr / norm);
            areas.push(0.5 * norm);
        }

        // (sorted endpoints) -> list of (triangle, local opposite vertex, traversed forward)
        let mut map: HashMap<(usize, usize), Vec<(usize, usize, bool)>> = HashMap::new();
        let mut order: Vec<(usize, usize)> = Vec::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                let key = (a.min(b), a.max(b));
                let entry = map.entry(key).or_insert_with(|| {
                    order.push(key);
                    Vec::new()
                });
                entry.push((t, k, a < b));
            }
        }
        order.sort_unstable();

        let mut edges = Vec::with_capacity(order.len());
        let mut tri_edges = vec![[usize::MAX; 3]; triangles.len()];
        for key in order {
            let uses = &map[&key];
            let e = edges.len();
            if uses.len() != 2 {
                return Err(Error::Mesh(format!(
                    "edge {e} ({}, {}) shared by {} triangle{}",
                    key.0,
                    key.1,
                    uses.len(),
                    if uses.len() == 1 { "" } else { "s" }
                )));
            }
            if check && uses[0].2 == uses[1].2 {
                return Err(Error::Mesh(format!("inconsistent orientation at edge {e}")));
            }
            let (p, m) = if uses[0].0 < uses[1].0 { (uses[0], uses[1]) } else { (uses[1], uses[0]) };
            tri_edges[p.0][p.1] = e;
            tri_edges[m.0][m.1] = e;
            edges.push(Edge { verts: [key.0, key.1], tris: [p.0, m.0], local: [p.1, m.1] });
        }

        Ok(SurfaceMesh { vertices, triangles, edges, tri_edges, normals, areas })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_edges() as i64 + self.num_triangles() as i64
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|i| self.vertices[i])
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.corners(t);
        (a + b + c) / 3.0
    }

    /// Longest edge of triangle `t`.
    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        (b - a).norm().max((c - b).norm()).max((a - c).norm())
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e].verts;
        (self.vertices[a] - self.vertices[b]).norm()
    }

    pub fn stats(&self) -> MeshStats {
        mesh_stats(self)
    }

    /// Deterministic fingerprint of the geometry, used to key caches.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over the raw coordinate bits and connectivity
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |x: u64| {
            for byte in x.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for v in &self.vertices {
            for c in v.iter() {
                eat(c.to_bits());
            }
        }
        for t in &self.triangles {
            for &i in t {
                eat(i as u64);
            }
        }
        h
    }

    /// Generalized winding number of the closed surface around `x`
    /// (1 inside, 0 outside, fractional on the surface).
    pub fn winding_number(&self, x: &Point) -> f64 {
        let mut omega = 0.0;
        for tri in &self.triangles {
            let a = self.vertices[tri[0]] - x;
            let b = self.vertices[tri[1]] - x;
            let c = self.vertices[tri[2]] - x;
            let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
            let num = a.dot(&b.cross(&c));
            let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
            omega += 2.0 * num.atan2(den);
        }
        omega / (4.0 * std::f64::consts::PI)
    }

    /// Distance from `x` to the closest point of the surface.
    pub fn distance_to(&self, x: &Point) -> f64 {
        (0..self.num_triangles())
            .map(|t| {
                let [a, b, c] = self.corners(t);
                (closest_point_on_triangle(x, &a, &b, &c) - x).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Closest point to `p` on triangle (a, b, c).
pub fn closest_point_on_triangle(p: &Point, a: &Point, b: &Point, c: &Point) -> Point {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Subdivided icosahedron projected onto a sphere.
pub fn make_icosphere(level: u32, radius: f64, center: Point) -> Result<SurfaceMesh> {
    if level > 6 {
        return Err(Error::InvalidInput(format!("icosphere level {level} exceeds 6")));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
    }
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let mut verts: Vec<Point> = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .iter()
    .map(|v| Point::from(*v).normalize())
    .collect();
    let mut tris: Vec<[usize; 3]> = vec![
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
        let mut mids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(tris.len() * 4);
        let mut mid = |i: usize, j: usize, verts: &mut Vec<Point>| -> usize {
            *mids.entry((i.min(j), i.max(j))).or_insert_with(|| {
                verts.push(((verts[i] + verts[j]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        for &[a, b, c] in &tris {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.push([a, ab, ca]);
            next.push([ab, b, bc]);
            next.push([ca, bc, c]);
            next.push([ab, bc, ca]);
        }
        tris = next;
    }

    let verts = verts.into_iter().map(|v| center + v * radius).collect();
    SurfaceMesh::new(verts, tris)
}

pub fn mesh_stats(mesh: &SurfaceMesh) -> MeshStats {
    let mut h_max: f64 = 0.0;
    let mut h_min = f64::INFINITY;
    let mut total_area = 0.0;
    let mut shape: f64 = 0.0;
    for t in 0..mesh.num_triangles() {
        let [a, b, c] = mesh.corners(t);
        let (la, lb, lc) = ((b - c).norm(), (c - a).norm(), (a - b).norm());
        let h = la.max(lb).max(lc);
        let inradius = 2.0 * mesh.areas[t] / (la + lb + lc);
        h_max = h_max.max(h);
        h_min = h_min.min(h);
        total_area += mesh.areas[t];
        shape = shape.max(h / inradius);
    }
    MeshStats { h_max, h_min, total_area, shape_regularity: shape }
}

/// Single-triangle statistics helper for open patches (no watertightness requirement).
pub fn triangle_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

pub fn parse_off(text: &str) -> Result<SurfaceMesh> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split_whitespace())
        .peekable();
    let header = tokens.next().ok_or_else(|| Error::Parse("empty OFF file".into()))?;
    if header != "OFF" {
        return Err(Error::Parse(format!("expected OFF header, found {header:?}")));
    }
    let mut next_num = |what: &str| -> Result<String> {
        tokens.next().map(str::to_owned).ok_or_else(|| Error::Parse(format!("unexpected end of file reading {what}")))
    };
    let parse_usize = |s: String, what: &str| -> Result<usize> {
        s.parse::<usize>().map_err(|_| Error::Parse(format!("invalid integer {s:?} for {what}")))
    };
    let nv = parse_usize(next_num("vertex count")?, "vertex count")?;
    let nf = parse_usize(next_num("face count")?, "face count")?;
    let _ne = parse_usize(next_num("edge count")?, "edge count")?;
    let mut vertices = Vec::with_capacity(nv);
    for i in 0..nv {
        let mut p = [0.0; 3];
        for c in p.iter_mut() {
            let s = next_num(&format!("vertex {i}"))?;
            *c = s.parse::<f64>().map_err(|_| Error::Parse(format!("invalid coordinate {s:?} in vertex {i}")))?;
        }
        vertices.push(Point::from(p));
    }
    let mut triangles = Vec::with_capacity(nf);
    for f in 0..nf {
        let n = parse_usize(next_num(&format!("face {f}"))?, &format!("face {f}"))?;
        if n != 3 {
            return Err(Error::Parse(format!("face {f} has {n} vertices; only triangles are supported")));
        }
        let mut tri = [0usize; 3];
        for v in tri.iter_mut() {
            *v = parse_usize(next_num(&format!("face {f}"))?, &format!("face {f}"))?;
        }
        triangles.push(tri);
    }
    SurfaceMesh::new(vertices, triangles)
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<SurfaceMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_off(&text)
}

pub fn format_off(mesh: &SurfaceMesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "OFF");
    let _ = writeln!(out, "{} {} {}", mesh.num_vertices(), mesh.num_triangles(), mesh.num_edges());
    for v in &mesh.vertices {
        let _ = writeln!(out, "{:.16e} {:.16e} {:.16e}", v.x, v.y, v.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    out
}

pub fn save_mesh(mesh: &SurfaceMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_off(mesh)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TET: &str = "OFF\n4 4 6\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 1 2 3\n3 0 3 2\n";

    #[test]
    fn icosphere_counts() {
        for (level, v, e, f) in [(0, 12, 30, 20), (1, 42, 120, 80), (2, 162, 480, 320)] {
            let m = make_icosphere(level, 1.0, Point::zeros()).unwrap();
            assert_eq!((m.num_vertices(), m.num_edges(), m.num_triangles()), (v, e, f));
            assert_eq!(m.euler_characteristic(), 2);
        }
    }

    #[test]
    fn icosphere_on_sphere_and_outward() {
        let c = Point::new(0.5, -1.0, 2.0);
        let m = make_icosphere(3, 2.5, c).unwrap();
        for v in &m.vertices {
            assert!(((v - c).norm() - 2.5).abs() < 1e-12 * 2.5);
        }
        for t in 0..m.num_triangles() {
            assert!((m.centroid(t) - c).dot(&m.normals[t]) > 0.0);
            assert!(m.areas[t] > 0.0);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(make_icosphere(7, 1.0, Point::zeros()).is_err());
        assert!(make_icosphere(1, 0.0, Point::zeros()).is_err());
    }

    #[test]
    fn tetrahedron_off() {
        let m = parse_off(TET).unwrap();
        assert_eq!(m.num_edges(), 6);
        assert_eq!(m.euler_characteristic(), 2);
        let inside = Point::new(0.1, 0.1, 0.1);
        for t in 0..4 {
            assert!((m.centroid(t) - inside).dot(&m.normals[t]) > 0.0);
        }
    }

    #[test]
    fn open_surface_reported() {
        let open = "OFF\n4 3 6\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 1 2 3\n";
        let err = parse_off(open).unwrap_err().to_string();
        assert!(err.contains("shared by 1 triangle"), "{err}");
    }

    #[test]
    fn flipped_face_reported() {
        let flipped = "OFF\n4 4 6\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 1 2\n3 0 1 3\n3 1 2 3\n3 0 3 2\n";
        let err = parse_off(flipped).unwrap_err().to_string();
        assert!(err.contains("inconsistent orientation at edge"), "{err}");
    }

    #[test]
    fn malformed_off() {
        assert!(parse_off("PLY\n").is_err());
        assert!(parse_off("OFF\n3 1 0\n0 0 0\n1 0\n").is_err());
        assert!(parse_off("OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n4 0 1 2 3\n").is_err());
    }

    #[test]
    fn off_round_trip_bit_exact() {
        let m = make_icosphere(2, 1.3, Point::new(0.1, 0.2, 0.3)).unwrap();
        let back = parse_off(&format_off(&m)).unwrap();
        assert_eq!(m.triangles, back.triangles);
        for (a, b) in m.vertices.iter().zip(&back.vertices) {
            for k in 0..3 {
                assert_eq!(a[k].to_bits(), b[k].to_bits());
            }
        }
    }

    #[test]
    fn stats_right_triangle() {
        let a = Point::new(0.0, 0.0, 0.0);
        let b = Point::new(1.0, 0.0, 0.0);
        let c = Point::new(0.0, 1.0, 0.0);
        assert_eq!(triangle_area(&a, &b, &c), 0.5);
    }

    #[test]
    fn stats_refinement() {
        let stats: Vec<MeshStats> =
            (1..6).map(|l| make_icosphere(l, 1.0, Point::zeros()).unwrap().stats()).collect();
        for w in stats.windows(2) {
            assert!(w[1].total_area > w[0].total_area);
            assert!(w[1].total_area < 4.0 * std::f64::consts::PI);
            let ratio = w[1].h_max / w[0].h_max;
            assert!((ratio - 0.5).abs() < 0.05, "h ratio {ratio}");
        }
    }

    #[test]
    fn plus_triangle_is_lower_index() {
        let m = make_icosphere(1, 1.0, Point::zeros()).unwrap();
        for (e, edge) in m.edges.iter().enumerate() {
            assert!(edge.tris[0] < edge.tris[1]);
            assert!(edge.verts[0] < edge.verts[1]);
            for k in 0..2 {
                assert_eq!(m.tri_edges[edge.tris[k]][edge.local[k]], e);
            }
        }
    }

    #[test]
    fn winding_number_inside_outside() {
        let m = make_icosphere(2, 1.0, Point::zeros()).unwrap();
        assert!((m.winding_number(&Point::new(0.0, 0.0, 0.3)) - 1.0).abs() < 1e-10);
        assert!(m.winding_number(&Point::new(0.0, 0.0, 2.0)).abs() < 1e-10);
        let far = m.vertices[0] * 2.0;
        assert!((m.distance_to(&far) - 1.0).abs() < 1e-12);
    }
}
