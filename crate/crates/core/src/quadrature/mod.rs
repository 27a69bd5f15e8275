//! Quadrature for regular and weakly singular double surface integrals over panel pairs.
//!
//! Singular pair rules split the product of two reference triangles into six 4-simplices
//! (one per admissible ordering of the four reference coordinates). In each simplex the set
//! where the panels coincide is a face F; points are written as `(1-t) q + t r` with `q` in F
//! and `r` in the opposite face, which produces a Jacobian factor `t^(3 - dim F)` that cancels
//! the kernel singularity.

pub mod adaptive;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, SurfaceMesh};

pub use crate::C64;

/// Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 0.5 * wi;
        w[n - 1 - i] = 0.5 * wi;
    }
    (x, w)
}

/// Quadrature on the reference simplex of dimension `dim` (standard coordinates,
/// total weight 1/dim!), built from collapsed Gauss products with `q` points per direction.
pub fn simplex_rule(dim: usize, q: usize) -> Vec<(Vec<f64>, f64)> {
    let (x, w) = gauss_legendre(q);
    match dim {
        0 => vec![(vec![], 1.0)],
        1 => x.iter().zip(&w).map(|(&a, &wa)| (vec![a], wa)).collect(),
        2 => {
            let mut out = Vec::with_capacity(q * q);
            for (&a, &wa) in x.iter().zip(&w) {
                for (&b, &wb) in x.iter().zip(&w) {
                    out.push((vec![a, b * (1.0 - a)], wa * wb * (1.0 - a)));
                }
            }
            out
        }
        3 => {
            let mut out = Vec::with_capacity(q * q * q);
            for (&a, &wa) in x.iter().zip(&w) {
                for (&b, &wb) in x.iter().zip(&w) {
                    for (&c, &wc) in x.iter().zip(&w) {
                        let u2 = b * (1.0 - a);
                        let u3 = c * (1.0 - a) * (1.0 - b);
                        out.push((vec![a, u2, u3], wa * wb * wc * (1.0 - a) * (1.0 - a) * (1.0 - b)));
                    }
                }
            }
            out
        }
        _ => panic!("simplex rules only up to dimension 3"),
    }
}

/// Points `(u1, u2)` and weights on the reference triangle {u1, u2 >= 0, u1 + u2 <= 1}.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Collapsed Gauss rule exact for polynomials of total degree `2q - 1`.
    pub fn collapsed(q: usize) -> Self {
        let raw = simplex_rule(2, q);
        TriangleRule { points: raw.iter().map(|(p, _)| [p[0], p[1]]).collect(), weights: raw.iter().map(|r| r.1).collect() }
    }

    /// Smallest collapsed rule exact for the given polynomial degree.
    pub fn of_degree(degree: usize) -> Self {
        Self::collapsed(degree / 2 + 1)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PanelPairClass {
    Disjoint,
    CommonVertex,
    CommonEdge,
    Identical,
}

/// A triangle with its global vertex labels, as seen by the pair quadrature.
#[derive(Debug, Clone, Copy)]
pub struct Panel {
    pub index: usize,
    pub verts: [usize; 3],
    pub pts: [Point; 3],
}

impl Panel {
    pub fn of_mesh(mesh: &SurfaceMesh, t: usize) -> Self {
        Panel { index: t, verts: mesh.triangles[t], pts: mesh.corners(t) }
    }

    pub fn area(&self) -> f64 {
        0.5 * (self.pts[1] - self.pts[0]).cross(&(self.pts[2] - self.pts[0])).norm()
    }

    pub fn diameter(&self) -> f64 {
        let [a, b, c] = self.pts;
        (b - a).norm().max((c - b).norm()).max((a - c).norm())
    }

    #[inline]
    pub fn map(&self, u: &[f64; 2]) -> Point {
        self.pts[0] + (self.pts[1] - self.pts[0]) * u[0] + (self.pts[2] - self.pts[0]) * u[1]
    }

    fn permuted(&self, order: [usize; 3]) -> Panel {
        Panel { index: self.index, verts: order.map(|k| self.verts[k]), pts: order.map(|k| self.pts[k]) }
    }
}

fn shared_count(a: &Panel, b: &Panel) -> usize {
    a.verts.iter().filter(|v| b.verts.contains(v)).count()
}

pub fn classify_pair(a: &Panel, b: &Panel) -> PanelPairClass {
    match shared_count(a, b) {
        0 => PanelPairClass::Disjoint,
        1 => PanelPairClass::CommonVertex,
        2 => PanelPairClass::CommonEdge,
        _ => PanelPairClass::Identical,
    }
}

fn lex_less(p: &Point, q: &Point) -> std::cmp::Ordering {
    p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y)).then(p.z.total_cmp(&q.z))
}

/// Reorders the vertices of both panels into the canonical layout expected by the rule of
/// their class: shared vertices first (sorted by coordinates), the remaining ones after.
/// Sorting by coordinates rather than labels makes results independent of vertex numbering.
pub fn canonicalize(a: &Panel, b: &Panel) -> (Panel, Panel, PanelPairClass) {
    let class = classify_pair(a, b);
    let sort_local = |p: &Panel, mut idx: Vec<usize>| -> Vec<usize> {
        idx.sort_by(|&i, &j| lex_less(&p.pts[i], &p.pts[j]));
        idx
    };
    let shared_a: Vec<usize> = (0..3).filter(|&k| b.verts.contains(&a.verts[k])).collect();
    let shared_a = sort_local(a, shared_a);
    let rest_a = sort_local(a, (0..3).filter(|k| !shared_a.contains(k)).collect());
    let mut oa: Vec<usize> = shared_a.clone();
    oa.extend(&rest_a);
    // B takes the same order on the shared vertices
    let mut ob: Vec<usize> = shared_a
        .iter()
        .map(|&k| (0..3).find(|&m| b.verts[m] == a.verts[k]).unwrap())
        .collect();
    let rest_b = sort_local(b, (0..3).filter(|k| !ob.contains(k)).collect());
    ob.extend(&rest_b);
    (a.permuted([oa[0], oa[1], oa[2]]), b.permuted([ob[0], ob[1], ob[2]]), class)
}

/// Points `(u, v)` on the product of reference triangles with weights summing to 1/4.
#[derive(Debug, Clone)]
pub struct PairRule {
    pub class: PanelPairClass,
    pub order: usize,
    pub u: Vec<[f64; 2]>,
    pub v: Vec<[f64; 2]>,
    pub w: Vec<f64>,
}

impl PairRule {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

pub const MAX_ORDER: usize = 12;

pub fn pair_rule(class: PanelPairClass, q: usize) -> Result<PairRule> {
    if q < 2 || q > MAX_ORDER {
        return Err(Error::InvalidInput(format!("unsupported quadrature order {q}")));
    }
    let mut rule = PairRule { class, order: q, u: Vec::new(), v: Vec::new(), w: Vec::new() };
    if class == PanelPairClass::Disjoint {
        let t = TriangleRule::collapsed(q);
        for (pa, wa) in t.points.iter().zip(&t.weights) {
            for (pb, wb) in t.points.iter().zip(&t.weights) {
                rule.u.push(*pa);
                rule.v.push(*pb);
                rule.w.push(wa * wb);
            }
        }
        return Ok(rule);
    }

    // Coordinates w = (a1, b1, a2, b2) with 0 <= b <= a <= 1 parametrize each reference
    // triangle as u = (a - b, b); vertex 0 sits at the origin and edge (0, 1) at b = 0.
    let singular = |w: &[f64; 4]| -> bool {
        match class {
            PanelPairClass::Identical => w[0] == w[2] && w[1] == w[3],
            PanelPairClass::CommonEdge => w[1] == 0.0 && w[3] == 0.0 && w[0] == w[2],
            PanelPairClass::CommonVertex => w[0] == 0.0 && w[2] == 0.0,
            PanelPairClass::Disjoint => unreachable!(),
        }
    };
    let (tx, tw) = gauss_legendre(q);
    for order in admissible_orderings() {
        let vertex = |k: usize| -> [f64; 4] {
            let mut w = [0.0; 4];
            for (j, &var) in order.iter().enumerate() {
                if j >= 4 - k {
                    w[var] = 1.0;
                }
            }
            w
        };
        let verts: Vec<[f64; 4]> = (0..5).map(vertex).collect();
        let face: Vec<[f64; 4]> = verts.iter().copied().filter(|w| singular(w)).collect();
        let opposite: Vec<[f64; 4]> = verts.iter().copied().filter(|w| !singular(w)).collect();
        let k = face.len() - 1;
        let m = opposite.len() - 1;
        let ra = simplex_rule(k, q);
        let rb = simplex_rule(m, q);
        let combine = |base: &[[f64; 4]], bary: &[f64]| -> [f64; 4] {
            let mut p = base[0];
            for (i, &c) in bary.iter().enumerate() {
                for d in 0..4 {
                    p[d] += c * (base[i + 1][d] - base[0][d]);
                }
            }
            p
        };
        for (piece, vol) in split_opposite(class, &opposite) {
            for (alpha, wa) in &ra {
                let qp = combine(&face, alpha);
                for (beta, wb) in &rb {
                    let rp = combine(&piece, beta);
                    for (&t, &wt) in tx.iter().zip(&tw) {
                        let mut p = [0.0; 4];
                        for d in 0..4 {
                            p[d] = (1.0 - t) * qp[d] + t * rp[d];
                        }
                        let weight = vol * wa * wb * wt * (1.0 - t).powi(k as i32) * t.powi(m as i32);
                        rule.u.push([p[0] - p[1], p[1]]);
                        rule.v.push([p[2] - p[3], p[3]]);
                        rule.w.push(weight);
                    }
                }
            }
        }
    }
    Ok(rule)
}

/// `x - y` as a linear function of w in a model geometry with orthonormal panel edges.
fn difference_image(class: PanelPairClass, w: &[f64; 4]) -> Point {
    let lead = w[0] - w[1] - w[2] + w[3];
    match class {
        PanelPairClass::Identical => Point::new(lead, w[1] - w[3], 0.0),
        _ => Point::new(lead, w[1], w[3]),
    }
}

/// Splits the face opposite the singular face until its image under `x - y` stays at least
/// half a diameter away from the origin. Along the join direction `|x - y| = t |L(r)|`, and a
/// nearly vanishing `L` on the opposite face leaves the transformed integrand analytic but
/// with a nearby complex singularity, which ruins Gauss convergence. Returns pieces with
/// their volume fraction.
fn split_opposite(class: PanelPairClass, g: &[[f64; 4]]) -> Vec<(Vec<[f64; 4]>, f64)> {
    if class == PanelPairClass::CommonVertex {
        // The image of x - y depends on the panel angles here, so a fixed two-level
        // bisection is used instead of the geometric test.
        let mut pieces = vec![(g.to_vec(), 1.0)];
        for _ in 0..2 {
            pieces = pieces.into_iter().flat_map(|(p, vol)| bisect_longest(p, vol)).collect();
        }
        return pieces;
    }
    let mut out = Vec::new();
    let mut stack = vec![(g.to_vec(), 1.0, 0usize)];
    while let Some((piece, vol, depth)) = stack.pop() {
        let img: Vec<Point> = piece.iter().map(|w| difference_image(class, w)).collect();
        let origin = Point::zeros();
        let dist = if img.len() == 2 {
            let d = img[1] - img[0];
            let t = (-img[0].dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
            (img[0] + d * t).norm()
        } else {
            let mut best = f64::INFINITY;
            for f in 0..img.len() {
                // faces of a triangle (itself) or of a tetrahedron (drop one vertex)
                let tri: Vec<&Point> = if img.len() == 3 { img.iter().collect() } else { img.iter().enumerate().filter(|(i, _)| *i != f).map(|(_, p)| p).collect() };
                best = best.min(crate::geometry::closest_point_on_triangle(&origin, tri[0], tri[1], tri[2]).norm());
                if img.len() == 3 {
                    break;
                }
            }
            if img.len() == 4 && contains_origin(&img) {
                best = 0.0;
            }
            best
        };
        let mut longest = (0, 1, 0.0);
        for i in 0..img.len() {
            for j in i + 1..img.len() {
                let l = (img[i] - img[j]).norm();
                if l > longest.2 {
                    longest = (i, j, l);
                }
            }
        }
        if longest.2 <= 2.0 * dist || depth >= 12 {
            out.push((piece, vol));
            continue;
        }
        let (i, j, _) = longest;
        let mid: [f64; 4] = std::array::from_fn(|d| 0.5 * (piece[i][d] + piece[j][d]));
        let mut a = piece.clone();
        a[j] = mid;
        let mut b = piece;
        b[i] = mid;
        stack.push((b, 0.5 * vol, depth + 1));
        stack.push((a, 0.5 * vol, depth + 1));
    }
    out
}

fn bisect_longest(piece: Vec<[f64; 4]>, vol: f64) -> [(Vec<[f64; 4]>, f64); 2] {
    let mut longest = (0, 1, 0.0);
    for i in 0..piece.len() {
        for j in i + 1..piece.len() {
            let l: f64 = (0..4).map(|d| (piece[i][d] - piece[j][d]).powi(2)).sum();
            if l > longest.2 {
                longest = (i, j, l);
            }
        }
    }
    let (i, j, _) = longest;
    let mid: [f64; 4] = std::array::from_fn(|d| 0.5 * (piece[i][d] + piece[j][d]));
    let mut a = piece.clone();
    a[j] = mid;
    let mut b = piece;
    b[i] = mid;
    [(a, 0.5 * vol), (b, 0.5 * vol)]
}

fn contains_origin(t: &[Point]) -> bool {
    let m = nalgebra::Matrix3::from_columns(&[t[1] - t[0], t[2] - t[0], t[3] - t[0]]);
    match m.try_inverse() {
        None => false,
        Some(inv) => {
            let l = inv * (-t[0]);
            l.iter().all(|&c| c >= 0.0) && l.sum() <= 1.0
        }
    }
}

/// Orderings of (a1, b1, a2, b2) from smallest to largest with b1 <= a1 and b2 <= a2.
fn admissible_orderings() -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for p in permutations4() {
        let pos = |v: usize| p.iter().position(|&x| x == v).unwrap();
        if pos(1) < pos(0) && pos(3) < pos(2) {
            out.push(p);
        }
    }
    out
}

fn permutations4() -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let mut seen = [false; 4];
                    p.iter().for_each(|&i| seen[i] = true);
                    if seen.iter().all(|&s| s) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadConfig {
    pub disjoint_order: usize,
    /// Order for vertex- and edge-adjacent pairs.
    pub singular_order: usize,
    pub identical_order: usize,
    /// Disjoint pairs closer than `near_threshold * max(h_A, h_B)` use `disjoint_order + near_boost`.
    pub near_threshold: f64,
    pub near_boost: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig { disjoint_order: 6, singular_order: 6, identical_order: 8, near_threshold: 1.0, near_boost: 4 }
    }
}

impl QuadConfig {
    pub fn validate(&self) -> Result<()> {
        for q in [self.disjoint_order, self.singular_order, self.identical_order, self.disjoint_order + self.near_boost] {
            if q < 2 || q > MAX_ORDER {
                return Err(Error::InvalidInput(format!("unsupported quadrature order {q}")));
            }
        }
        if !(self.near_threshold >= 0.0) {
            return Err(Error::InvalidInput("near_threshold must be non-negative".into()));
        }
        Ok(())
    }
}

/// All pair rules needed for one quadrature configuration.
#[derive(Debug, Clone)]
pub struct RuleSet {
    pub config: QuadConfig,
    pub far: PairRule,
    pub near: PairRule,
    pub vertex: PairRule,
    pub edge: PairRule,
    pub identical: PairRule,
}

impl RuleSet {
    pub fn new(config: QuadConfig) -> Result<Self> {
        config.validate()?;
        Ok(RuleSet {
            config,
            far: pair_rule(PanelPairClass::Disjoint, config.disjoint_order)?,
            near: pair_rule(PanelPairClass::Disjoint, config.disjoint_order + config.near_boost)?,
            vertex: pair_rule(PanelPairClass::CommonVertex, config.singular_order)?,
            edge: pair_rule(PanelPairClass::CommonEdge, config.singular_order)?,
            identical: pair_rule(PanelPairClass::Identical, config.identical_order)?,
        })
    }

    /// Canonicalized panels and the rule to use for them.
    pub fn select(&self, a: &Panel, b: &Panel) -> (Panel, Panel, &PairRule) {
        let (ca, cb, class) = canonicalize(a, b);
        let rule = match class {
            PanelPairClass::Identical => &self.identical,
            PanelPairClass::CommonEdge => &self.edge,
            PanelPairClass::CommonVertex => &self.vertex,
            PanelPairClass::Disjoint => {
                if is_near(a, b, self.config.near_threshold) {
                    &self.near
                } else {
                    &self.far
                }
            }
        };
        (ca, cb, rule)
    }
}

/// Lower-bound-free proximity test: the smallest vertex-to-panel distance in either direction
/// compared with the larger panel diameter.
pub fn is_near(a: &Panel, b: &Panel, threshold: f64) -> bool {
    panel_distance(a, b) < threshold * a.diameter().max(b.diameter())
}

pub fn panel_distance(a: &Panel, b: &Panel) -> f64 {
    use crate::geometry::closest_point_on_triangle as cp;
    let mut d = f64::INFINITY;
    for p in &a.pts {
        d = d.min((cp(p, &b.pts[0], &b.pts[1], &b.pts[2]) - p).norm());
    }
    for p in &b.pts {
        d = d.min((cp(p, &a.pts[0], &a.pts[1], &a.pts[2]) - p).norm());
    }
    d
}

/// Integrates a vector-valued kernel `k(x, y, out)` (with `dim` components) over a panel pair.
/// The rule must match the canonical layout of the panels (see [`canonicalize`]).
pub fn integrate_pair<F>(a: &Panel, b: &Panel, rule: &PairRule, dim: usize, mut kernel: F) -> Result<Vec<C64>>
where
    F: FnMut(&Point, &Point, &mut [C64]),
{
    let (ca, cb, class) = canonicalize(a, b);
    if class != rule.class {
        return Err(Error::InvalidInput(format!("rule for {:?} applied to {:?} pair", rule.class, class)));
    }
    let scale = 4.0 * ca.area() * cb.area();
    let mut acc = vec![C64::new(0.0, 0.0); dim];
    let mut buf = vec![C64::new(0.0, 0.0); dim];
    for i in 0..rule.len() {
        let x = ca.map(&rule.u[i]);
        let y = cb.map(&rule.v[i]);
        buf.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        kernel(&x, &y, &mut buf);
        let w = rule.w[i];
        for (s, z) in acc.iter_mut().zip(&buf) {
            *s += z * w;
        }
    }
    // non-finite values propagate through the sums
    if acc.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite(a.index, b.index));
    }
    acc.iter_mut().for_each(|z| *z *= scale);
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(idx: usize, verts: [usize; 3], pts: [[f64; 3]; 3]) -> Panel {
        Panel { index: idx, verts, pts: pts.map(Point::from) }
    }

    fn unit_pairs() -> Vec<(Panel, Panel)> {
        let o = [0.0, 0.0, 0.0];
        let ex = [1.0, 0.0, 0.0];
        let ey = [0.0, 1.0, 0.0];
        let t = panel(0, [0, 1, 2], [o, ex, ey]);
        vec![
            (t, t),
            (t, panel(1, [1, 3, 2], [ex, [1.0, 1.0, 0.3], ey])),
            (t, panel(2, [0, 4, 5], [o, [-1.0, 0.2, 0.4], [-0.3, -1.0, 0.1]])),
            (t, panel(3, [6, 7, 8], [[3.0, 0.0, 0.0], [4.0, 0.0, 0.0], [3.0, 1.0, 0.5]])),
        ]
    }

    #[test]
    fn gauss_legendre_exactness() {
        for n in 1..=20 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert!((s - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn simplex_rule_volumes() {
        for q in 2..6 {
            for (dim, vol) in [(0, 1.0), (1, 1.0), (2, 0.5), (3, 1.0 / 6.0)] {
                let s: f64 = simplex_rule(dim, q).iter().map(|r| r.1).sum();
                assert!((s - vol).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn triangle_rule_degree() {
        let r = TriangleRule::of_degree(6);
        // integral of u^a v^b over the reference triangle = a! b! / (a + b + 2)!
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        for a in 0..=6u32 {
            for b in 0..=(6 - a) {
                let s: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32)).sum();
                assert!((s - fact(a) * fact(b) / fact(a + b + 2)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn classify_examples() {
        let pairs = unit_pairs();
        let classes: Vec<_> = pairs.iter().map(|(a, b)| classify_pair(a, b)).collect();
        assert_eq!(
            classes,
            vec![
                PanelPairClass::Identical,
                PanelPairClass::CommonEdge,
                PanelPairClass::CommonVertex,
                PanelPairClass::Disjoint
            ]
        );
    }

    #[test]
    fn weights_positive_and_sum_quarter() {
        for class in [PanelPairClass::Disjoint, PanelPairClass::CommonVertex, PanelPairClass::CommonEdge, PanelPairClass::Identical] {
            for q in 2..=8 {
                let r = pair_rule(class, q).unwrap();
                assert!(r.w.iter().all(|&w| w > 0.0));
                let s: f64 = r.w.iter().sum();
                assert!((s - 0.25).abs() < 1e-12, "{class:?} q={q} sum={s}");
                match class {
                    PanelPairClass::Disjoint => assert_eq!(r.len(), q.pow(4)),
                    PanelPairClass::CommonVertex => assert!(r.len() % q.pow(4) == 0),
                    // split opposite faces add whole q^4 blocks
                    _ => assert!(r.len() % q.pow(4) == 0 && r.len() >= 6 * q.pow(4)),
                }
            }
        }
        assert!(pair_rule(PanelPairClass::Identical, 13).is_err());
        assert!(pair_rule(PanelPairClass::Identical, 0).is_err());
    }

    #[test]
    fn rule_points_inside_reference_triangles() {
        for class in [PanelPairClass::CommonVertex, PanelPairClass::CommonEdge, PanelPairClass::Identical] {
            let r = pair_rule(class, 5).unwrap();
            for (u, v) in r.u.iter().zip(&r.v) {
                for p in [u, v] {
                    assert!(p[0] >= -1e-15 && p[1] >= -1e-15 && p[0] + p[1] <= 1.0 + 1e-15);
                }
            }
        }
    }

    #[test]
    fn constant_kernel_gives_area_product() {
        for (a, b) in unit_pairs() {
            let (_, _, class) = canonicalize(&a, &b);
            for q in [2, 3, 6] {
                let rule = pair_rule(class, q).unwrap();
                let v = integrate_pair(&a, &b, &rule, 1, |_, _, out| out[0] = C64::new(1.0, 0.0)).unwrap();
                let exact = a.area() * b.area();
                assert!((v[0].re - exact).abs() < 1e-13 * exact);
            }
        }
    }

    #[test]
    fn polynomial_kernel_exact() {
        // x-moments times y-moments are integrated exactly by every class
        let (a, b) = unit_pairs()[1];
        let reference = {
            let rule = pair_rule(PanelPairClass::Disjoint, 6).unwrap();
            let mut s = 0.0;
            for i in 0..rule.len() {
                let x = a.map(&rule.u[i]);
                let y = b.map(&rule.v[i]);
                s += rule.w[i] * x.x * x.x * y.y * (1.0 + y.z);
            }
            s * 4.0 * a.area() * b.area()
        };
        let rule = pair_rule(PanelPairClass::CommonEdge, 4).unwrap();
        let v = integrate_pair(&a, &b, &rule, 1, |x, y, out| out[0] = C64::new(x.x * x.x * y.y * (1.0 + y.z), 0.0)).unwrap();
        assert!((v[0].re - reference).abs() < 1e-13);
    }

    #[test]
    fn antisymmetric_kernel_vanishes_on_identical() {
        let (a, _) = unit_pairs()[0];
        let t = Point::new(0.3, -0.7, 0.2);
        let rule = pair_rule(PanelPairClass::Identical, 6).unwrap();
        let v = integrate_pair(&a, &a, &rule, 1, |x, y, out| out[0] = C64::new((x - y).dot(&t), 0.0)).unwrap();
        assert!(v[0].norm() < 1e-15);
    }

    #[test]
    fn wrong_rule_rejected_and_nan_reported() {
        let (a, b) = unit_pairs()[3];
        let rule = pair_rule(PanelPairClass::Identical, 2).unwrap();
        assert!(integrate_pair(&a, &b, &rule, 1, |_, _, _| {}).is_err());
        let rule = pair_rule(PanelPairClass::Disjoint, 2).unwrap();
        let err = integrate_pair(&a, &b, &rule, 1, |_, _, o| o[0] = C64::new(f64::NAN, 0.0)).unwrap_err();
        assert!(matches!(err, Error::NonFinite(0, 3)));
    }

    #[test]
    fn canonical_layout_shares_leading_vertices() {
        for (a, b) in unit_pairs() {
            let (ca, cb, class) = canonicalize(&a, &b);
            let n = match class {
                PanelPairClass::Identical => 3,
                PanelPairClass::CommonEdge => 2,
                PanelPairClass::CommonVertex => 1,
                PanelPairClass::Disjoint => 0,
            };
            for k in 0..n {
                assert_eq!(ca.verts[k], cb.verts[k]);
            }
        }
    }

    #[test]
    fn rule_sizes() {
        for (class, q) in [(PanelPairClass::Identical, 8), (PanelPairClass::CommonEdge, 6), (PanelPairClass::CommonVertex, 6)] {
            eprintln!("{class:?} q={q}: {} points", pair_rule(class, q).unwrap().len());
        }
    }

    fn inv_r(x: &Point, y: &Point, out: &mut [C64]) {
        out[0] = C64::new(1.0 / (4.0 * std::f64::consts::PI * (x - y).norm()), 0.0);
    }

    #[test]
    fn identical_one_over_r_matches_oracle() {
        let (t, _) = unit_pairs()[0];
        let oracle = adaptive::adaptive_pair(&t, &t, 1, 1e-12, inv_r)[0].re;
        let v = integrate_pair(&t, &t, &pair_rule(PanelPairClass::Identical, 8).unwrap(), 1, inv_r).unwrap()[0].re;
        assert!((v - oracle).abs() < 1e-7 * oracle.abs());
    }

    #[test]
    fn singular_errors_decrease_with_order() {
        for (a, b) in unit_pairs().into_iter().take(3) {
            let (_, _, class) = canonicalize(&a, &b);
            let oracle = adaptive::adaptive_pair(&a, &b, 1, 1e-12, inv_r)[0].re;
            let errs: Vec<f64> = [2, 4, 6, 8]
                .iter()
                .map(|&q| (integrate_pair(&a, &b, &pair_rule(class, q).unwrap(), 1, inv_r).unwrap()[0].re - oracle).abs())
                .collect();
            assert!(errs.windows(2).all(|w| w[1] < w[0]), "{class:?}: {errs:?}");
        }
    }

    #[test]
    fn singular_results_invariant_under_relabeling() {
        for (a, b) in unit_pairs().into_iter().take(3) {
            let (_, _, class) = canonicalize(&a, &b);
            let rule = pair_rule(class, 6).unwrap();
            let k = |x: &Point, y: &Point, o: &mut [C64]| o[0] = C64::new((x.x + 2.0 * y.y).exp() / (x - y).norm(), 0.0);
            let base = integrate_pair(&a, &b, &rule, 1, k).unwrap()[0].re;
            for perm in [[1, 2, 0], [2, 0, 1], [0, 2, 1]] {
                let (pa, pb) = (a.permuted(perm), b.permuted([perm[2], perm[0], perm[1]]));
                let v = integrate_pair(&pa, &pb, &rule, 1, k).unwrap()[0].re;
                assert!((v - base).abs() < 1e-12 * base.abs(), "{class:?}");
            }
        }
    }

    #[test]
    fn disjoint_yukawa_matches_tensor_reference() {
        let (a, b) = unit_pairs()[3];
        let k = |x: &Point, y: &Point, o: &mut [C64]| {
            let r = (x - y).norm();
            o[0] = C64::new((-r).exp() / (4.0 * std::f64::consts::PI * r), 0.0);
        };
        let v = integrate_pair(&a, &b, &pair_rule(PanelPairClass::Disjoint, 6).unwrap(), 1, k).unwrap()[0].re;
        let reference = integrate_pair(&a, &b, &pair_rule(PanelPairClass::Disjoint, 12).unwrap(), 1, k).unwrap()[0].re;
        assert!((v - reference).abs() < 1e-10 * reference.abs());
    }
}
