//! Yukawa kernel, Galerkin matrices of the boundary operators and off-surface layer potentials.
//!
//! Conventions (all pairings are the bilinear `∫ a·b`, test functions `f_i` of the RWG space):
//! - `V[i][j] = -∫∫ G [ŝ² f_i(x)·f_j(y) + div f_i(x) div f_j(y)]`
//! - `K[i][j] = ∫∫ f_i(x)·(∇_x G × f_j(y))`, symmetric in (i, j).
//! - Tilde operators act on rotated-RWG coefficients; since `n × g_j = -f_j` they are `-V`, `-K`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::quadrature::{integrate_pair, Panel, PanelPairClass, QuadConfig, RuleSet, TriangleRule};
use crate::trace_spaces::{to_complex, CVec3, LocalRwg, SpaceRole, TraceSpaces};
use crate::C64;

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// Laplace parameter with strictly positive real part.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LaplaceParam {
    pub s: C64,
}

impl LaplaceParam {
    pub fn new(s: C64) -> Result<Self> {
        if !(s.re > 0.0) || !s.im.is_finite() {
            return Err(Error::InvalidInput(format!("Laplace parameter must have Re s > 0, got {s}")));
        }
        Ok(LaplaceParam { s })
    }

    pub fn sigma(&self) -> f64 {
        self.s.re
    }

    /// min(1, Re s)
    pub fn sigma_low(&self) -> f64 {
        self.s.re.min(1.0)
    }
}

/// `G(x, y; s) = exp(-s|x-y|) / (4π|x-y|)`
pub fn yukawa_kernel(x: &Point, y: &Point, s: C64) -> Result<C64> {
    let r = (x - y).norm();
    if r == 0.0 {
        return Err(Error::InvalidInput("yukawa_kernel: coincident points".into()));
    }
    Ok((-s * r).exp() / (FOUR_PI * r))
}

#[inline]
fn green(r: f64, shat: C64) -> C64 {
    (-shat * r).exp() / (FOUR_PI * r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum OpTag {
    V,
    K,
    VTilde,
    KTilde,
}

impl OpTag {
    fn code(self) -> u8 {
        self as u8
    }
    fn from_code(c: u8) -> Option<Self> {
        [OpTag::V, OpTag::K, OpTag::VTilde, OpTag::KTilde].get(c as usize).copied()
    }
}

/// Dense Galerkin matrix with its tag and the wavenumber `ŝ = s/c` used at assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub tag: OpTag,
    pub shat: C64,
    pub data: DMatrix<C64>,
}

impl OperatorMatrix {
    /// Tilde counterpart (basis substitution `n × g_j = -f_j`).
    pub fn tilde(&self) -> OperatorMatrix {
        let tag = match self.tag {
            OpTag::V => OpTag::VTilde,
            OpTag::K => OpTag::KTilde,
            t => t,
        };
        OperatorMatrix { tag, shat: self.shat, data: -&self.data }
    }
}

/// Maps coefficients of one trace space to the other space's coefficients of `n × field`.
pub fn rotate_coefficients(from: SpaceRole, coeffs: &[C64]) -> Vec<C64> {
    match from {
        // n × Σ m_j g_j = -Σ m_j f_j
        SpaceRole::Curl => coeffs.iter().map(|c| -c).collect(),
        SpaceRole::Div => coeffs.to_vec(),
    }
}

/// Local 3x3 V and K blocks (row: local basis on A, column: local basis on B).
#[derive(Debug, Clone, Copy)]
pub struct LocalBlocks {
    pub v: [[C64; 3]; 3],
    pub k: [[C64; 3]; 3],
}

/// Pointwise kernel producing the 18 entries of [`LocalBlocks`] (V row-major, then K);
/// used by the brute-force oracle.
pub fn direct_kernel<'a>(la: &'a [LocalRwg; 3], lb: &'a [LocalRwg; 3], shat: C64) -> impl Fn(&Point, &Point, &mut [C64]) + 'a {
    move |x, y, out| {
        let d = x - y;
        let r = d.norm();
        let g = green(r, shat);
        let gp = -g * (shat + 1.0 / r) / r; // G'(r)/r
        for (i, a) in la.iter().enumerate() {
            let fi = a.eval(x);
            for (j, b) in lb.iter().enumerate() {
                let fj = b.eval(y);
                out[3 * i + j] = -g * (shat * shat * fi.dot(&fj) + a.div() * b.div());
                out[9 + 3 * i + j] = gp * fi.dot(&d.cross(&fj));
            }
        }
    }
}

/// Local blocks from G-weighted moments of the pair rule. With local coordinates
/// `x' = x - c_A`, `y' = y - c_B`, `Δ = c_A - c_B` and `f = c (x - p)`, the K integrand
/// reduces to `g w·((y'-p_j')×(x'-p_i'))` with the constant `w = Δ + p_i' - p_j'`.
pub fn local_blocks(a: &Panel, b: &Panel, la: &[LocalRwg; 3], lb: &[LocalRwg; 3], shat: C64, rules: &RuleSet) -> Result<LocalBlocks> {
    let (ca, cb) = (centroid(a), centroid(b));
    let (_, _, rule) = rules.select(a, b);
    let identical = rule.class == PanelPairClass::Identical;
    let s2 = shat * shat;
    // T0, Tx(3), Ty(3), Txy | S0, Sx(3), Sy(3), Sxy(3)
    let m = integrate_pair(a, b, rule, 18, |x, y, out| {
        let xp = x - ca;
        let yp = y - cb;
        let r = (x - y).norm();
        let g = green(r, shat);
        out[0] = g;
        for k in 0..3 {
            out[1 + k] = g * xp[k];
            out[4 + k] = g * yp[k];
        }
        out[7] = g * xp.dot(&yp);
        if !identical {
            let gp = -g * (shat + 1.0 / r) / r;
            let c = xp.cross(&yp);
            out[8] = gp;
            for k in 0..3 {
                out[9 + k] = gp * xp[k];
                out[12 + k] = gp * yp[k];
                out[15 + k] = gp * c[k];
            }
        }
    })?;
    let cv = |o: usize| CVec3::new(m[o], m[o + 1], m[o + 2]);
    let (t0, tx, ty, txy) = (m[0], cv(1), cv(4), m[7]);
    let (s0, sx, sy, sxy) = (m[8], cv(9), cv(12), cv(15));
    let delta = ca - cb;
    let mut out = LocalBlocks { v: [[C64::new(0.0, 0.0); 3]; 3], k: [[C64::new(0.0, 0.0); 3]; 3] };
    for (i, li) in la.iter().enumerate() {
        let pi = li.apex - ca;
        let pic = to_complex(&pi);
        for (j, lj) in lb.iter().enumerate() {
            let pj = lj.apex - cb;
            let pjc = to_complex(&pj);
            let cc = li.coef * lj.coef;
            let dot = txy - pjc.dot(&tx) - pic.dot(&ty) + t0 * pi.dot(&pj);
            out.v[i][j] = -(s2 * dot + t0 * 4.0) * cc;
            if !identical {
                let w = to_complex(&(delta + pi - pj));
                let kv = -sxy - sy.cross(&pic) - pjc.cross(&sx) + to_complex(&pj.cross(&pi)) * s0;
                out.k[i][j] = w.dot(&kv) * cc;
            }
        }
    }
    Ok(out)
}

fn centroid(p: &Panel) -> Point {
    (p.pts[0] + p.pts[1] + p.pts[2]) / 3.0
}

/// Assembles V(ŝ) and K(ŝ) in one sweep over unordered panel pairs (both matrices are
/// symmetric, the mirrored half is copied).
pub fn assemble_vk(spaces: &TraceSpaces, shat: C64, rules: &RuleSet) -> Result<(OperatorMatrix, OperatorMatrix)> {
    if !(shat.re > 0.0) {
        return Err(Error::InvalidInput(format!("wavenumber must have Re > 0, got {shat}")));
    }
    let mesh = &spaces.mesh;
    let nt = mesh.num_triangles();
    let n = spaces.dim();
    let panels: Vec<Panel> = (0..nt).map(|t| Panel::of_mesh(mesh, t)).collect();
    let mut v = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    let mut k = v.clone();
    const BATCH: usize = 32;
    for start in (0..nt).step_by(BATCH) {
        let rows: Vec<Result<Vec<LocalBlocks>>> = (start..(start + BATCH).min(nt))
            .into_par_iter()
            .map(|ta| (ta..nt).map(|tb| local_blocks(&panels[ta], &panels[tb], spaces.local(ta), spaces.local(tb), shat, rules)).collect())
            .collect();
        for (ta, row) in (start..).zip(rows) {
            let row = row?;
            for (tb, blk) in (ta..).zip(row) {
                let (la, lb) = (spaces.local(ta), spaces.local(tb));
                for i in 0..3 {
                    for j in 0..3 {
                        let (ei, ej) = (la[i].edge, lb[j].edge);
                        v[(ei, ej)] += blk.v[i][j];
                        k[(ei, ej)] += blk.k[i][j];
                        if ta != tb {
                            v[(ej, ei)] += blk.v[i][j];
                            k[(ej, ei)] += blk.k[i][j];
                        }
                    }
                }
            }
        }
    }
    Ok((OperatorMatrix { tag: OpTag::V, shat, data: v }, OperatorMatrix { tag: OpTag::K, shat, data: k }))
}

pub fn assemble_v(spaces: &TraceSpaces, shat: C64, rules: &RuleSet) -> Result<OperatorMatrix> {
    Ok(assemble_vk(spaces, shat, rules)?.0)
}

pub fn assemble_k(spaces: &TraceSpaces, shat: C64, rules: &RuleSet) -> Result<OperatorMatrix> {
    Ok(assemble_vk(spaces, shat, rules)?.1)
}

/// V and K at one wavenumber.
#[derive(Debug, Clone)]
pub struct OperatorPair {
    pub v: OperatorMatrix,
    pub k: OperatorMatrix,
}

/// Sub-assembly cache keyed by mesh fingerprint, wavenumber (15 digits) and quadrature config.
#[derive(Debug, Default)]
pub struct OperatorCache {
    map: Mutex<HashMap<(u64, String, String), Arc<OperatorPair>>>,
}

impl OperatorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_assemble(&self, spaces: &TraceSpaces, shat: C64, rules: &RuleSet) -> Result<Arc<OperatorPair>> {
        let key = (spaces.mesh.fingerprint(), format!("{:.15e},{:.15e}", shat.re, shat.im), quad_key(&rules.config));
        if let Some(p) = self.map.lock().unwrap().get(&key) {
            return Ok(p.clone());
        }
        let (v, k) = assemble_vk(spaces, shat, rules)?;
        let pair = Arc::new(OperatorPair { v, k });
        Ok(self.map.lock().unwrap().entry(key).or_insert(pair).clone())
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.map.lock().unwrap().clear();
    }
}

fn quad_key(c: &QuadConfig) -> String {
    format!("{}/{}/{}/{}/{}", c.disjoint_order, c.singular_order, c.identical_order, c.near_threshold, c.near_boost)
}

/// Which layer potential to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PotentialKind {
    /// curl ∫ G j, density in the div space
    D,
    /// curl curl ∫ G j, density in the div space
    S,
    /// D applied to n × m, density in the curl space
    DTilde,
    /// S applied to n × m, density in the curl space
    STilde,
}

/// Potential value and its curl.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldValue {
    pub value: CVec3,
    pub curl_value: CVec3,
}

/// `curl ∫G j` and `curl curl ∫G j` of a div-space density at an off-surface point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Potentials {
    pub d: CVec3,
    pub s: CVec3,
}

// Per-panel moments: ∫∇G, ∫∇G×y', ∫G, ∫G y' with y' = y - centroid.
#[derive(Clone, Copy)]
struct PanelMoments {
    m0: CVec3,
    m1: CVec3,
    n0: C64,
    n1: CVec3,
}

const FAR_RATIO: f64 = 4.0;
const MAX_DEPTH: usize = 16;

fn panel_moments(x: &Point, tri: &[Point; 3], center: &Point, shat: C64, rule: &TriangleRule, depth: usize, acc: &mut PanelMoments) {
    let cen = (tri[0] + tri[1] + tri[2]) / 3.0;
    let diam = (tri[1] - tri[0]).norm().max((tri[2] - tri[1]).norm()).max((tri[0] - tri[2]).norm());
    let dist = crate::geometry::closest_point_on_triangle(x, &tri[0], &tri[1], &tri[2]);
    let dist = (dist - x).norm();
    if dist < FAR_RATIO * diam && depth < MAX_DEPTH && (x - cen).norm() > 0.0 {
        let m01 = (tri[0] + tri[1]) * 0.5;
        let m12 = (tri[1] + tri[2]) * 0.5;
        let m20 = (tri[2] + tri[0]) * 0.5;
        for child in [[tri[0], m01, m20], [m01, tri[1], m12], [m20, m12, tri[2]], [m01, m12, m20]] {
            panel_moments(x, &child, center, shat, rule, depth + 1, acc);
        }
        return;
    }
    let jac = (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).norm();
    for (u, w) in rule.points.iter().zip(&rule.weights) {
        let y = tri[0] + (tri[1] - tri[0]) * u[0] + (tri[2] - tri[0]) * u[1];
        let d = x - y;
        let r = d.norm();
        let g = green(r, shat) * (w * jac);
        let gp = -g * (shat + 1.0 / r) / r;
        let grad = to_complex(&d) * gp;
        let yp = to_complex(&(y - center));
        acc.m0 += grad;
        acc.m1 += grad.cross(&yp);
        acc.n0 += g;
        acc.n1 += yp * g;
    }
}

/// `D j(x)` and `S j(x)` (div form `S j = ∫∇G div j - ŝ²∫G j`) for a div-space density.
pub fn layer_potentials(spaces: &TraceSpaces, coeffs: &[C64], shat: C64, x: &Point) -> Result<Potentials> {
    let mesh = &spaces.mesh;
    let h = mesh.stats().h_min;
    if mesh.distance_to(x) < 1e-10 * h {
        return Err(Error::OnSurface(format!("evaluation point {x:?} lies on the surface")));
    }
    let rule = TriangleRule::of_degree(10);
    let mut d = CVec3::zeros();
    let mut s = CVec3::zeros();
    for t in 0..mesh.num_triangles() {
        let loc = spaces.local(t);
        if loc.iter().all(|l| coeffs[l.edge] == C64::new(0.0, 0.0)) {
            continue;
        }
        let tri = mesh.corners(t);
        let cen = mesh.centroid(t);
        let mut m = PanelMoments { m0: CVec3::zeros(), m1: CVec3::zeros(), n0: C64::new(0.0, 0.0), n1: CVec3::zeros() };
        panel_moments(x, &tri, &cen, shat, &rule, 0, &mut m);
        for l in loc {
            let a = coeffs[l.edge] * l.coef;
            let p = to_complex(&(l.apex - cen));
            // ∫∇G × (y - p) = ∫∇G × y' - (∫∇G) × p'
            d += (m.m1 - m.m0.cross(&p)) * a;
            s += (m.m0 * C64::from(2.0) - (m.n1 - p * m.n0) * (shat * shat)) * a;
        }
    }
    Ok(Potentials { d, s })
}

/// Layer potential of the given kind with its curl, at wavenumber `s/c`.
pub fn eval_potentials(spaces: &TraceSpaces, kind: PotentialKind, coeffs: &[C64], s: LaplaceParam, c: f64, x: &Point) -> Result<FieldValue> {
    let shat = s.s / c;
    let div_coeffs = match kind {
        PotentialKind::D | PotentialKind::S => coeffs.to_vec(),
        PotentialKind::DTilde | PotentialKind::STilde => rotate_coefficients(SpaceRole::Curl, coeffs),
    };
    let p = layer_potentials(spaces, &div_coeffs, shat, x)?;
    Ok(match kind {
        PotentialKind::D | PotentialKind::DTilde => FieldValue { value: p.d, curl_value: p.s },
        PotentialKind::S | PotentialKind::STilde => FieldValue { value: p.s, curl_value: -p.d * (shat * shat) },
    })
}

/// `S j` through the closed-form Hessian, `∫[∇∇G - ŝ²G I] j`; a cross-check of the div form
/// at points well away from the surface (no near-field refinement).
pub fn single_layer_hessian(spaces: &TraceSpaces, coeffs: &[C64], shat: C64, x: &Point, degree: usize) -> CVec3 {
    let mesh = &spaces.mesh;
    let rule = TriangleRule::of_degree(degree);
    let mut out = CVec3::zeros();
    for t in 0..mesh.num_triangles() {
        let tri = mesh.corners(t);
        let jac = 2.0 * mesh.areas[t];
        for (u, w) in rule.points.iter().zip(&rule.weights) {
            let y = tri[0] + (tri[1] - tri[0]) * u[0] + (tri[2] - tri[0]) * u[1];
            let j = spaces.field(SpaceRole::Div, coeffs, t, &y);
            let d = x - y;
            let r = d.norm();
            let rh = to_complex(&(d / r));
            let g = green(r, shat);
            let g1 = -g * (shat + 1.0 / r);
            let g2 = g * (shat * shat + shat * 2.0 / r + 2.0 / (r * r));
            let rj = rh.dot(&j);
            // [G'' r̂r̂ᵀ + G'/r (I - r̂r̂ᵀ) - ŝ² G I] j
            let v = rh * (rj * g2) + (j - rh * rj) * (g1 / r) - j * (g * shat * shat);
            out += v * C64::from(w * jac);
        }
    }
    out
}

const MAGIC: &[u8; 4] = b"TDBM";

/// Binary container: magic, rows, cols (u64 LE), tag (u8), ŝ (2×f64 LE), row-major (re, im).
pub fn write_matrix_bin(path: impl AsRef<Path>, m: &OperatorMatrix) -> Result<()> {
    let io = |e: std::io::Error| Error::Io(e.to_string());
    let mut f = std::io::BufWriter::new(std::fs::File::create(path.as_ref()).map_err(io)?);
    f.write_all(MAGIC).map_err(io)?;
    f.write_all(&(m.data.nrows() as u64).to_le_bytes()).map_err(io)?;
    f.write_all(&(m.data.ncols() as u64).to_le_bytes()).map_err(io)?;
    f.write_all(&[m.tag.code()]).map_err(io)?;
    f.write_all(&m.shat.re.to_le_bytes()).map_err(io)?;
    f.write_all(&m.shat.im.to_le_bytes()).map_err(io)?;
    for i in 0..m.data.nrows() {
        for j in 0..m.data.ncols() {
            f.write_all(&m.data[(i, j)].re.to_le_bytes()).map_err(io)?;
            f.write_all(&m.data[(i, j)].im.to_le_bytes()).map_err(io)?;
        }
    }
    f.flush().map_err(io)
}

pub fn read_matrix_bin(path: impl AsRef<Path>) -> Result<OperatorMatrix> {
    let mut bytes = Vec::new();
    std::fs::File::open(path.as_ref()).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| Error::Io(e.to_string()))?;
    let bad = |what: &str| Error::Parse(format!("matrix file: {what}"));
    if bytes.len() < 37 || &bytes[..4] != MAGIC {
        return Err(bad("missing header"));
    }
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let (rows, cols) = (u64_at(4), u64_at(12));
    let tag = OpTag::from_code(bytes[20]).ok_or_else(|| bad("unknown tag"))?;
    let shat = C64::new(f64_at(21), f64_at(29));
    if bytes.len() != 37 + rows * cols * 16 {
        return Err(bad("size does not match header"));
    }
    let data = DMatrix::from_fn(rows, cols, |i, j| {
        let o = 37 + (i * cols + j) * 16;
        C64::new(f64_at(o), f64_at(o + 8))
    });
    Ok(OperatorMatrix { tag, shat, data })
}

pub fn write_matrix_csv(path: impl AsRef<Path>, m: &OperatorMatrix) -> Result<()> {
    let io = |e: std::io::Error| Error::Io(e.to_string());
    let mut f = std::io::BufWriter::new(std::fs::File::create(path.as_ref()).map_err(io)?);
    writeln!(f, "row,col,re,im").map_err(io)?;
    for i in 0..m.data.nrows() {
        for j in 0..m.data.ncols() {
            let z = m.data[(i, j)];
            writeln!(f, "{i},{j},{:.17e},{:.17e}", z.re, z.im).map_err(io)?;
        }
    }
    Ok(())
}
