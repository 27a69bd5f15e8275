//! Two-sided near-surface checks of the layer-potential jump and trace identities.
//!
//! Densities are L² projections of smooth random fields `a + B x`. Potentials are evaluated
//! at `x ± δ n` with `δ = DELTA_RATIO · h` on a seeded sample of panels, and jumps are
//! taken as interior minus exterior.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::geometry::{make_icosphere, Point};
use crate::operators::{eval_potentials, local_blocks, LaplaceParam, PotentialKind};
use crate::quadrature::{Panel, QuadConfig, TriangleRule};
use crate::trace_spaces::{to_complex, CVec3, SpaceRole};
use crate::transmission::Discretization;
use crate::C64;

pub const DELTA_RATIO: f64 = 0.05;
const SAMPLE_PANELS: usize = 24;
const SAMPLE_EDGES: usize = 6;

#[derive(Debug, Clone, Serialize)]
pub struct JumpLevel {
    pub level: u32,
    pub h: f64,
    /// `‖[πₜ D̃ m] + m‖ / ‖m‖`
    pub dtilde_jump: f64,
    /// `‖[γₜ S̃ m]‖ / ‖{γₜ S̃ m}‖`
    pub stilde_jump_ratio: f64,
    /// Tested exterior/interior traces of `D̃ m` against `(K̃ ∓ ½P) m`.
    pub trace_identity_ext: f64,
    pub trace_identity_int: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct JumpReport {
    pub s: C64,
    pub trials: usize,
    pub levels: Vec<JumpLevel>,
    /// Convergence rates in `h` between the first and last level, same order as the fields above.
    pub rates: [f64; 4],
    pub strictly_decreasing: [bool; 4],
}

impl JumpLevel {
    fn values(&self) -> [f64; 4] {
        [self.dtilde_jump, self.stilde_jump_ratio, self.trace_identity_ext, self.trace_identity_int]
    }
}

fn random_field(rng: &mut ChaCha8Rng) -> (CVec3, [[C64; 3]; 3]) {
    let mut c = || C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let a = CVec3::new(c(), c(), c());
    let b = [[c(), c(), c()], [c(), c(), c()], [c(), c(), c()]];
    (a, b)
}

fn apply(a: &CVec3, b: &[[C64; 3]; 3], x: &Point) -> CVec3 {
    let xc = to_complex(x);
    CVec3::new(
        a[0] + b[0][0] * xc[0] + b[0][1] * xc[1] + b[0][2] * xc[2],
        a[1] + b[1][0] * xc[0] + b[1][1] * xc[1] + b[1][2] * xc[2],
        a[2] + b[2][0] * xc[0] + b[2][1] * xc[1] + b[2][2] * xc[2],
    )
}

fn sample_without_replacement(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, n, k.min(n)).into_vec()
}

/// One mesh level of the jump study.
pub fn jump_level(level: u32, s: C64, trials: usize, seed: u64, quad: QuadConfig) -> Result<JumpLevel> {
    let param = LaplaceParam::new(s)?;
    let mesh = Arc::new(make_icosphere(level, 1.0, Point::zeros())?);
    let disc = Discretization::new(mesh.clone(), quad)?;
    let sp = &disc.spaces;
    let h = mesh.stats().h_max;
    let delta = DELTA_RATIO * h;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ u64::from(level));
    let rule = TriangleRule::of_degree(4);
    let panels: Vec<Panel> = (0..mesh.num_triangles()).map(|t| Panel::of_mesh(&mesh, t)).collect();

    let (mut jd_err, mut jd_ref, mut js_num, mut js_den) = (0.0, 0.0, 0.0, 0.0);
    let (mut ext_err, mut int_err, mut id_ref) = (0.0, 0.0, 0.0);
    for _ in 0..trials {
        let (a, b) = random_field(&mut rng);
        let m = disc.to_primal(&sp.project_onto_dual(SpaceRole::Curl, 6, |x, _| apply(&a, &b, x)));
        let eval = |kind, x: &Point| eval_potentials(sp, kind, &m, param, 1.0, x).map(|f| f.value);

        for t in sample_without_replacement(&mut rng, mesh.num_triangles(), SAMPLE_PANELS) {
            let c = mesh.corners(t);
            let n = mesh.normals[t];
            let nc = to_complex(&n);
            let jac = 2.0 * mesh.areas[t];
            for (u, w) in rule.points.iter().zip(&rule.weights) {
                let x = c[0] + (c[1] - c[0]) * u[0] + (c[2] - c[0]) * u[1];
                let (xi, xo) = (x - n * delta, x + n * delta);
                let w = w * jac;
                let mf = sp.field(SpaceRole::Curl, &m, t, &x);
                let jd = eval(PotentialKind::DTilde, &xi)? - eval(PotentialKind::DTilde, &xo)?;
                let pit = jd - nc * nc.dot(&jd);
                jd_err += w * (pit + mf).norm_squared();
                jd_ref += w * mf.norm_squared();
                let (si, so) = (eval(PotentialKind::STilde, &xi)?, eval(PotentialKind::STilde, &xo)?);
                js_num += w * nc.cross(&(si - so)).norm_squared();
                js_den += w * nc.cross(&((si + so) * C64::from(0.5))).norm_squared();
            }
        }

        // tested traces on a few basis functions
        let mq = nalgebra::DVector::from_column_slice(&m);
        let pm = disc.gram.map(C64::from) * &mq;
        for e in sample_without_replacement(&mut rng, sp.dim(), SAMPLE_EDGES) {
            let tris = mesh.edges[e].tris;
            let (mut t_ext, mut t_int, mut km) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
            for &ta in &tris {
                let la = sp.local(ta);
                let li = la.iter().position(|l| l.edge == e).expect("edge belongs to its triangles");
                for (tb, pb) in panels.iter().enumerate() {
                    let blk = local_blocks(&panels[ta], pb, la, sp.local(tb), s, &disc.rules)?;
                    for (j, lb) in sp.local(tb).iter().enumerate() {
                        km += blk.k[li][j] * m[lb.edge];
                    }
                }
                let c = mesh.corners(ta);
                let n = mesh.normals[ta];
                let jac = 2.0 * mesh.areas[ta];
                for (u, w) in rule.points.iter().zip(&rule.weights) {
                    let x = c[0] + (c[1] - c[0]) * u[0] + (c[2] - c[0]) * u[1];
                    let f = to_complex(&(la[li].eval(&x) * (w * jac)));
                    t_ext += f.dot(&eval(PotentialKind::DTilde, &(x + n * delta))?);
                    t_int += f.dot(&eval(PotentialKind::DTilde, &(x - n * delta))?);
                }
            }
            // K̃ = -K
            let (pred_ext, pred_int) = (-km + pm[e] * 0.5, -km - pm[e] * 0.5);
            ext_err += (t_ext - pred_ext).norm_sqr();
            int_err += (t_int - pred_int).norm_sqr();
            id_ref += 0.5 * (pred_ext.norm_sqr() + pred_int.norm_sqr());
        }
    }
    Ok(JumpLevel {
        level,
        h,
        dtilde_jump: (jd_err / jd_ref).sqrt(),
        stilde_jump_ratio: (js_num / js_den).sqrt(),
        trace_identity_ext: (ext_err / id_ref).sqrt(),
        trace_identity_int: (int_err / id_ref).sqrt(),
    })
}

/// Jump study over several icosphere levels.
pub fn verify_jump_relations(levels: &[u32], s: C64, trials: usize, seed: u64, quad: QuadConfig) -> Result<JumpReport> {
    let results = levels.iter().map(|&l| jump_level(l, s, trials, seed, quad)).collect::<Result<Vec<_>>>()?;
    let mut rates = [f64::NAN; 4];
    let mut strictly_decreasing = [false; 4];
    if let (Some(first), Some(last)) = (results.first(), results.last()) {
        for k in 0..4 {
            if results.len() > 1 {
                rates[k] = (first.values()[k] / last.values()[k]).ln() / (first.h / last.h).ln();
            }
            strictly_decreasing[k] = results.windows(2).all(|w| w[1].values()[k] < w[0].values()[k]);
        }
    }
    Ok(JumpReport { s, trials, levels: results, rates, strictly_decreasing })
}
