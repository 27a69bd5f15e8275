//! Brute-force adaptive reference integration for panel pairs and single panels.
//!
//! This is deliberately independent of the regularizing pair rules:
//! - disjoint pairs: recursive 4x4 subdivision driven by the difference of two tensor rules;
//! - identical pairs: relative coordinates `y = x + z`, polar integration over `z` with the
//!   inner `x` integral taken over the exact overlap polygon `T ∩ (T - z)`;
//! - edge-adjacent pairs: spherical coordinates in (distance to the edge on each panel,
//!   offset along the edge), inner Gauss integration along the edge;
//! - vertex-adjacent pairs: Duffy coordinates centered at the shared vertex on both panels,
//!   split along the diagonal of the radial square, with growing tensor Gauss orders.
//!
//! Every stage is driven by 15-point Gauss-Kronrod or nested rule differences.

use super::{canonicalize, gauss_legendre, Panel, PanelPairClass, TriangleRule, C64};
use crate::geometry::Point;
use nalgebra::Vector2;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn max_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn gk15<F: FnMut(f64, &mut [C64])>(f: &mut F, a: f64, b: f64, dim: usize) -> (Vec<C64>, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = vec![C64::new(0.0, 0.0); dim];
    let mut g = vec![C64::new(0.0, 0.0); dim];
    let mut buf = vec![C64::new(0.0, 0.0); dim];
    let mut eval = |x: f64, buf: &mut Vec<C64>| {
        buf.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        f(x, buf);
    };
    eval(c, &mut buf);
    for d in 0..dim {
        k[d] += buf[d] * WGK[7];
        g[d] += buf[d] * WG[3];
    }
    for j in 0..7 {
        for s in [-1.0, 1.0] {
            eval(c + s * h * XGK[j], &mut buf);
            for d in 0..dim {
                k[d] += buf[d] * WGK[j];
                if j % 2 == 1 {
                    g[d] += buf[d] * WG[j / 2];
                }
            }
        }
    }
    let mut err: f64 = 0.0;
    for d in 0..dim {
        k[d] *= h;
        g[d] *= h;
        err = err.max((k[d] - g[d]).norm());
    }
    (k, err)
}

/// Adaptive Gauss-Kronrod integration of a vector-valued function to an absolute tolerance.
pub fn integrate_1d<F: FnMut(f64, &mut [C64])>(f: &mut F, a: f64, b: f64, dim: usize, abs_tol: f64) -> Vec<C64> {
    let (v, e) = gk15(f, a, b, dim);
    refine_1d(f, a, b, dim, abs_tol, v, e, 40)
}

#[allow(clippy::too_many_arguments)]
fn refine_1d<F: FnMut(f64, &mut [C64])>(
    f: &mut F,
    a: f64,
    b: f64,
    dim: usize,
    tol: f64,
    value: Vec<C64>,
    err: f64,
    depth: usize,
) -> Vec<C64> {
    if err <= tol || depth == 0 || b - a < 1e-14 * (a.abs() + b.abs() + 1.0) {
        return value;
    }
    let m = 0.5 * (a + b);
    let (lv, le) = gk15(f, a, m, dim);
    let (rv, re) = gk15(f, m, b, dim);
    let mut l = refine_1d(f, a, m, dim, 0.5 * tol, lv, le, depth - 1);
    let r = refine_1d(f, m, b, dim, 0.5 * tol, rv, re, depth - 1);
    for (x, y) in l.iter_mut().zip(&r) {
        *x += y;
    }
    l
}

/// Integration over a sorted list of breakpoints.
fn integrate_pieces<F: FnMut(f64, &mut [C64])>(f: &mut F, breaks: &[f64], dim: usize, abs_tol: f64) -> Vec<C64> {
    let total = breaks[breaks.len() - 1] - breaks[0];
    let mut acc = vec![C64::new(0.0, 0.0); dim];
    for w in breaks.windows(2) {
        if w[1] - w[0] <= 0.0 {
            continue;
        }
        let part = integrate_1d(f, w[0], w[1], dim, abs_tol * (w[1] - w[0]) / total);
        for (s, p) in acc.iter_mut().zip(&part) {
            *s += p;
        }
    }
    acc
}

type Tri = [Point; 3];

fn area(t: &Tri) -> f64 {
    0.5 * (t[1] - t[0]).cross(&(t[2] - t[0])).norm()
}

/// Children of a triangle; child 0 keeps vertex 0, child 3 is the middle one.
fn subdivide(t: &Tri) -> [Tri; 4] {
    let m01 = (t[0] + t[1]) * 0.5;
    let m12 = (t[1] + t[2]) * 0.5;
    let m20 = (t[2] + t[0]) * 0.5;
    [[t[0], m01, m20], [m01, t[1], m12], [m20, m12, t[2]], [m01, m12, m20]]
}

fn tensor<K: FnMut(&Point, &Point, &mut [C64])>(a: &Tri, b: &Tri, rule: &TriangleRule, dim: usize, kernel: &mut K) -> Vec<C64> {
    let mut acc = vec![C64::new(0.0, 0.0); dim];
    let mut buf = vec![C64::new(0.0, 0.0); dim];
    let scale = 4.0 * area(a) * area(b);
    let map = |t: &Tri, u: &[f64; 2]| t[0] + (t[1] - t[0]) * u[0] + (t[2] - t[0]) * u[1];
    for (pu, wu) in rule.points.iter().zip(&rule.weights) {
        let x = map(a, pu);
        for (pv, wv) in rule.points.iter().zip(&rule.weights) {
            let y = map(b, pv);
            buf.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            kernel(&x, &y, &mut buf);
            let w = wu * wv * scale;
            for (s, z) in acc.iter_mut().zip(&buf) {
                *s += z * w;
            }
        }
    }
    acc
}

struct Rules {
    lo: TriangleRule,
    hi: TriangleRule,
}

impl Rules {
    fn new() -> Self {
        Rules { lo: TriangleRule::collapsed(6), hi: TriangleRule::collapsed(8) }
    }
}

fn regular<K: FnMut(&Point, &Point, &mut [C64])>(a: &Tri, b: &Tri, dim: usize, tol: f64, depth: usize, rules: &Rules, kernel: &mut K) -> Vec<C64> {
    let lo = tensor(a, b, &rules.lo, dim, kernel);
    let hi = tensor(a, b, &rules.hi, dim, kernel);
    let err = lo.iter().zip(&hi).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    if err <= tol || depth == 0 {
        return hi;
    }
    let mut acc = vec![C64::new(0.0, 0.0); dim];
    for ca in subdivide(a).iter() {
        for cb in subdivide(b).iter() {
            let part = regular(ca, cb, dim, tol / 16.0, depth - 1, rules, kernel);
            for (s, p) in acc.iter_mut().zip(&part) {
                *s += p;
            }
        }
    }
    acc
}

/// Reference value of a double integral over two panels. `rel_tol` is relative to the
/// largest component of the result.
pub fn adaptive_pair<K: FnMut(&Point, &Point, &mut [C64])>(a: &Panel, b: &Panel, dim: usize, rel_tol: f64, mut kernel: K) -> Vec<C64> {
    let (ca, cb, class) = canonicalize(a, b);
    let rules = Rules::new();
    let rough = match class {
        PanelPairClass::Disjoint => tensor(&ca.pts, &cb.pts, &rules.lo, dim, &mut kernel),
        _ => singular(&ca.pts, &cb.pts, class, dim, f64::INFINITY, &mut kernel),
    };
    let tol = rel_tol * max_norm(&rough).max(1e-300);
    match class {
        PanelPairClass::Disjoint => regular(&ca.pts, &cb.pts, dim, tol, 8, &rules, &mut kernel),
        _ => singular(&ca.pts, &cb.pts, class, dim, tol, &mut kernel),
    }
}

fn singular<K: FnMut(&Point, &Point, &mut [C64])>(a: &Tri, b: &Tri, class: PanelPairClass, dim: usize, tol: f64, kernel: &mut K) -> Vec<C64> {
    match class {
        PanelPairClass::Identical => identical(a, dim, tol, kernel),
        PanelPairClass::CommonEdge => common_edge(a, b, dim, tol, kernel),
        PanelPairClass::CommonVertex => common_vertex(a, b, dim, tol, kernel),
        PanelPairClass::Disjoint => unreachable!(),
    }
}

type V2 = Vector2<f64>;

fn cross2(a: &V2, b: &V2) -> f64 {
    a.x * b.y - a.y * b.x
}

fn convex_hull(mut pts: Vec<V2>) -> Vec<V2> {
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    let mut lower: Vec<V2> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross2(&(lower[lower.len() - 1] - lower[lower.len() - 2]), &(p - lower[lower.len() - 2])) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<V2> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross2(&(upper[upper.len() - 1] - upper[upper.len() - 2]), &(p - upper[upper.len() - 2])) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Distance from the origin to the boundary of a convex polygon containing it, along `dir`.
fn ray_exit(hull: &[V2], dir: &V2) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..hull.len() {
        let u = hull[i];
        let v = hull[(i + 1) % hull.len()];
        let e = v - u;
        let den = cross2(dir, &e);
        if den.abs() < 1e-300 {
            continue;
        }
        // rho * dir = u + s e
        let rho = cross2(&u, &e) / den;
        let s = cross2(&u, dir) / den;
        if rho > 0.0 && (-1e-12..=1.0 + 1e-12).contains(&s) {
            best = best.max(rho);
        }
    }
    best
}

/// Sutherland-Hodgman clipping of a polygon against the half-plane left of (p, p + e).
fn clip(poly: &[V2], p: &V2, e: &V2) -> Vec<V2> {
    let side = |x: &V2| cross2(e, &(x - p));
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let cur = poly[i];
        let nxt = poly[(i + 1) % poly.len()];
        let (sc, sn) = (side(&cur), side(&nxt));
        if sc >= 0.0 {
            out.push(cur);
        }
        if (sc >= 0.0) != (sn >= 0.0) {
            let t = sc / (sc - sn);
            out.push(cur + (nxt - cur) * t);
        }
    }
    out
}

fn identical<K: FnMut(&Point, &Point, &mut [C64])>(t: &Tri, dim: usize, tol: f64, kernel: &mut K) -> Vec<C64> {
    let e1 = (t[1] - t[0]).normalize();
    let n = (t[1] - t[0]).cross(&(t[2] - t[0])).normalize();
    let e2 = n.cross(&e1);
    let to2 = |p: &Point| V2::new((p - t[0]).dot(&e1), (p - t[0]).dot(&e2));
    let p2: Vec<V2> = t.iter().map(to2).collect();
    let mut diffs = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            diffs.push(p2[i] - p2[j]);
        }
    }
    let hull = convex_hull(diffs.clone());
    let tri_rule = TriangleRule::collapsed(5);

    let mut breaks: Vec<f64> = vec![0.0, 2.0 * std::f64::consts::PI];
    for d in diffs.iter().filter(|d| d.norm() > 0.0) {
        let mut ang = d.y.atan2(d.x);
        if ang < 0.0 {
            ang += 2.0 * std::f64::consts::PI;
        }
        breaks.push(ang);
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-13);

    let inner_tol = 0.1 * tol / (2.0 * std::f64::consts::PI);
    let mut buf = vec![C64::new(0.0, 0.0); dim];
    let mut f_theta = |theta: f64, out: &mut [C64]| {
        let dir = V2::new(theta.cos(), theta.sin());
        let rmax = ray_exit(&hull, &dir);
        if rmax <= 0.0 {
            return;
        }
        let z3 = e1 * dir.x + e2 * dir.y;
        let mut f_rho = |rho: f64, o: &mut [C64]| {
            let z = dir * rho;
            let mut poly = p2.clone();
            for i in 0..3 {
                let a = p2[i] - z;
                let e = p2[(i + 1) % 3] - p2[i];
                poly = clip(&poly, &a, &e);
                if poly.len() < 3 {
                    return;
                }
            }
            for k in 1..poly.len() - 1 {
                let (v0, v1, v2) = (poly[0], poly[k], poly[k + 1]);
                let jac = cross2(&(v1 - v0), &(v2 - v0)).abs();
                if jac == 0.0 {
                    continue;
                }
                for (u, w) in tri_rule.points.iter().zip(&tri_rule.weights) {
                    let x2 = v0 + (v1 - v0) * u[0] + (v2 - v0) * u[1];
                    let x = t[0] + e1 * x2.x + e2 * x2.y;
                    let y = x + z3 * rho;
                    buf.iter_mut().for_each(|c| *c = C64::new(0.0, 0.0));
                    kernel(&x, &y, &mut buf);
                    let wt = w * jac * rho;
                    for (s, c) in o.iter_mut().zip(&buf) {
                        *s += c * wt;
                    }
                }
            }
        };
        let v = integrate_1d(&mut f_rho, 0.0, rmax, dim, inner_tol);
        out.copy_from_slice(&v);
    };
    integrate_pieces(&mut f_theta, &breaks, dim, tol)
}

fn common_edge<K: FnMut(&Point, &Point, &mut [C64])>(a: &Tri, b: &Tri, dim: usize, tol: f64, kernel: &mut K) -> Vec<C64> {
    use std::f64::consts::{FRAC_PI_2, PI};
    let (e0, e) = (a[0], a[1] - a[0]);
    let pa = a[2] - a[0];
    let pb = b[2] - b[0];
    let scale = 4.0 * area(a) * area(b);
    let (ax, aw) = gauss_legendre(8);
    let tol = tol / scale;
    let theta_tol = 0.1 * tol / FRAC_PI_2;
    let rho_tol = 0.1 * theta_tol / PI;
    let mut buf = vec![C64::new(0.0, 0.0); dim];
    let mut f_phi = |phi: f64, out: &mut [C64]| {
        let mut f_theta = |theta: f64, out: &mut [C64]| {
            let (st, ct) = theta.sin_cos();
            let (sp, cp) = phi.sin_cos();
            let (wb, wd, wdel) = (st * cp, st * sp, ct);
            let coefs = [wb, wd, wd + wdel, wb - wdel];
            let cmax = coefs.iter().cloned().fold(0.0, f64::max);
            if cmax <= 0.0 {
                return;
            }
            let rmax = 1.0 / cmax;
            let mut f_rho = |rho: f64, o: &mut [C64]| {
                let (bb, dd, del) = (rho * wb, rho * wd, rho * wdel);
                let lo = 0.0f64.max(-del);
                let hi = (1.0 - bb).min(1.0 - dd - del);
                if hi <= lo {
                    return;
                }
                for (s, w) in ax.iter().zip(&aw) {
                    let av = lo + (hi - lo) * s;
                    let x = e0 + e * av + pa * bb;
                    let y = e0 + e * (av + del) + pb * dd;
                    buf.iter_mut().for_each(|c| *c = C64::new(0.0, 0.0));
                    kernel(&x, &y, &mut buf);
                    let wt = w * (hi - lo) * rho * rho * st;
                    for (acc, c) in o.iter_mut().zip(&buf) {
                        *acc += c * wt;
                    }
                }
            };
            let v = integrate_1d(&mut f_rho, 0.0, rmax, dim, rho_tol);
            out.copy_from_slice(&v);
        };
        // kinks where the active constraint on rho switches
        let (sp, cp) = phi.sin_cos();
        let mut breaks = vec![0.0, FRAC_PI_2, PI, 1f64.atan2(cp - sp), 2f64.atan2(cp - sp)];
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let v = integrate_pieces(&mut f_theta, &breaks, dim, theta_tol);
        out.copy_from_slice(&v);
    };
    let mut v = integrate_pieces(&mut f_phi, &[0.0, FRAC_PI_2 / 2.0, FRAC_PI_2], dim, tol);
    v.iter_mut().for_each(|z| *z *= scale);
    v
}

/// Shared vertex at `a[0] = b[0]`. Duffy coordinates centered at the vertex on both panels,
/// `x = v + ξ(a₁ - v + η(a₂ - a₁))`, `y = v + ζ(b₁ - v + τ(b₂ - b₁))`, and the split
/// `ζ = ξw` / `ξ = ζw` leave a smooth integrand on `[0,1]⁴`; tensor Gauss orders grow
/// until two successive results agree.
fn common_vertex<K: FnMut(&Point, &Point, &mut [C64])>(a: &Tri, b: &Tri, dim: usize, tol: f64, kernel: &mut K) -> Vec<C64> {
    let v = a[0];
    let (a1, da) = (a[1] - v, a[2] - a[1]);
    let (b1, db) = (b[1] - v, b[2] - b[1]);
    let scale = 4.0 * area(a) * area(b);
    let mut buf = vec![C64::new(0.0, 0.0); dim];
    let mut eval = |q: usize| {
        let (gx, gw) = gauss_legendre(q);
        let mut acc = vec![C64::new(0.0, 0.0); dim];
        for (&t, &wt) in gx.iter().zip(&gw) {
            for (&w, &ww) in gx.iter().zip(&gw) {
                for (&eta, &we) in gx.iter().zip(&gw) {
                    for (&tau, &wtau) in gx.iter().zip(&gw) {
                        let (pa, pb) = (a1 + da * eta, b1 + db * tau);
                        // (ξ, ζ) = (t, t w) and (t w, t); Jacobian t³ w in both halves
                        for (xi, zeta) in [(t, t * w), (t * w, t)] {
                            buf.iter_mut().for_each(|c| *c = C64::new(0.0, 0.0));
                            kernel(&(v + pa * xi), &(v + pb * zeta), &mut buf);
                            let weight = wt * ww * we * wtau * t * t * t * w * scale;
                            for (s, c) in acc.iter_mut().zip(&buf) {
                                *s += c * weight;
                            }
                        }
                    }
                }
            }
        }
        acc
    };
    let mut prev = eval(6);
    for q in (10..=40).step_by(4) {
        let next = eval(q);
        let change = prev.iter().zip(&next).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        prev = next;
        if change <= tol {
            break;
        }
    }
    prev
}

/// Adaptive reference integral of `f(x)` over a single triangle.
pub fn adaptive_triangle<F: FnMut(&Point, &mut [C64])>(t: &[Point; 3], dim: usize, rel_tol: f64, mut f: F) -> Vec<C64> {
    let lo = TriangleRule::collapsed(6);
    let hi = TriangleRule::collapsed(8);
    let rough = tri_rule_eval(t, &lo, dim, &mut f);
    let tol = rel_tol * max_norm(&rough).max(1e-300);
    tri_refine(t, dim, tol, 20, &lo, &hi, &mut f)
}

fn tri_rule_eval<F: FnMut(&Point, &mut [C64])>(t: &[Point; 3], rule: &TriangleRule, dim: usize, f: &mut F) -> Vec<C64> {
    let mut acc = vec![C64::new(0.0, 0.0); dim];
    let mut buf = vec![C64::new(0.0, 0.0); dim];
    let jac = 2.0 * area(t);
    for (u, w) in rule.points.iter().zip(&rule.weights) {
        let x = t[0] + (t[1] - t[0]) * u[0] + (t[2] - t[0]) * u[1];
        buf.iter_mut().for_each(|c| *c = C64::new(0.0, 0.0));
        f(&x, &mut buf);
        for (s, c) in acc.iter_mut().zip(&buf) {
            *s += c * (w * jac);
        }
    }
    acc
}

fn tri_refine<F: FnMut(&Point, &mut [C64])>(t: &[Point; 3], dim: usize, tol: f64, depth: usize, lo: &TriangleRule, hi: &TriangleRule, f: &mut F) -> Vec<C64> {
    let a = tri_rule_eval(t, lo, dim, f);
    let b = tri_rule_eval(t, hi, dim, f);
    let err = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    if err <= tol || depth == 0 {
        return b;
    }
    let mut acc = vec![C64::new(0.0, 0.0); dim];
    for c in subdivide(t).iter() {
        let part = tri_refine(c, dim, tol / 4.0, depth - 1, lo, hi, f);
        for (s, p) in acc.iter_mut().zip(&part) {
            *s += p;
        }
    }
    acc
}
