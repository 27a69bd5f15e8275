//! Brute-force comparison of the assembled V and K against adaptive panel-pair integration.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::operators::{direct_kernel, local_blocks};
use crate::quadrature::adaptive::adaptive_pair;
use crate::quadrature::{classify_pair, Panel, PanelPairClass, RuleSet};
use crate::trace_spaces::TraceSpaces;
use crate::C64;

/// Oracle blocks below this fraction of the pair's largest entry count as zero.
const ZERO_BLOCK: f64 = 1e-10;

/// Worst local-block errors, relative to the largest oracle entry of the same block.
#[derive(Debug, Clone, Serialize)]
pub struct AssemblyComparison {
    pub shat: C64,
    pub pairs: usize,
    pub max_rel_disjoint: f64,
    pub max_rel_edge: f64,
    pub max_rel_vertex: f64,
    pub max_rel_identical: f64,
    /// `max |A - O| / max |O|` over the assembled matrices (V and K separately, worst of both).
    pub max_rel_global: f64,
    pub seconds: f64,
}

impl AssemblyComparison {
    pub fn max_rel_singular(&self) -> f64 {
        self.max_rel_edge.max(self.max_rel_vertex).max(self.max_rel_identical)
    }
}

/// Compares every unordered panel pair of the mesh at wavenumber `shat`.
pub fn compare_with_oracle(spaces: &TraceSpaces, shat: C64, rules: &RuleSet, rel_tol: f64) -> Result<AssemblyComparison> {
    let start = std::time::Instant::now();
    let mesh = &spaces.mesh;
    let nt = mesh.num_triangles();
    let panels: Vec<Panel> = (0..nt).map(|t| Panel::of_mesh(mesh, t)).collect();
    let pairs: Vec<(usize, usize)> = (0..nt).flat_map(|a| (a..nt).map(move |b| (a, b))).collect();
    let results: Vec<Result<(PanelPairClass, f64, f64, [[C64; 18]; 2])>> = pairs
        .par_iter()
        .map(|&(ta, tb)| {
            let (pa, pb) = (&panels[ta], &panels[tb]);
            let (la, lb) = (spaces.local(ta), spaces.local(tb));
            let fast = local_blocks(pa, pb, la, lb, shat, rules)?;
            let oracle = adaptive_pair(pa, pb, 18, rel_tol, direct_kernel(la, lb, shat));
            let mut f = [C64::new(0.0, 0.0); 18];
            let mut o = [C64::new(0.0, 0.0); 18];
            for i in 0..3 {
                for j in 0..3 {
                    f[3 * i + j] = fast.v[i][j];
                    f[9 + 3 * i + j] = fast.k[i][j];
                }
            }
            o.copy_from_slice(&oracle);
            // Blocks that vanish identically (K on a flat identical pair) are measured against
            // the largest entry of the pair instead of their own roundoff.
            let pair_scale = o.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let rel = |r: std::ops::Range<usize>| {
                let block = o[r.clone()].iter().map(|z| z.norm()).fold(0.0, f64::max);
                let scale = if block > ZERO_BLOCK * pair_scale { block } else { pair_scale };
                let err = r.map(|k| (f[k] - o[k]).norm()).fold(0.0, f64::max);
                if scale > 0.0 { err / scale } else { err }
            };
            Ok((classify_pair(pa, pb), rel(0..9), rel(9..18), [f, o]))
        })
        .collect();
    let n = spaces.dim();
    let zero = nalgebra::DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    let (mut fv, mut fk, mut ov, mut ok) = (zero.clone(), zero.clone(), zero.clone(), zero);
    let mut cmp = AssemblyComparison { shat, pairs: pairs.len(), max_rel_disjoint: 0.0, max_rel_edge: 0.0, max_rel_vertex: 0.0, max_rel_identical: 0.0, max_rel_global: 0.0, seconds: 0.0 };
    for (&(ta, tb), r) in pairs.iter().zip(results) {
        let (class, ev, ek, [f, o]) = r?;
        let e = ev.max(ek);
        let slot = match class {
            PanelPairClass::Disjoint => &mut cmp.max_rel_disjoint,
            PanelPairClass::CommonEdge => &mut cmp.max_rel_edge,
            PanelPairClass::CommonVertex => &mut cmp.max_rel_vertex,
            PanelPairClass::Identical => &mut cmp.max_rel_identical,
        };
        *slot = slot.max(e);
        let (la, lb) = (spaces.local(ta), spaces.local(tb));
        for i in 0..3 {
            for j in 0..3 {
                let (ei, ej) = (la[i].edge, lb[j].edge);
                let k = 3 * i + j;
                fv[(ei, ej)] += f[k];
                fk[(ei, ej)] += f[9 + k];
                ov[(ei, ej)] += o[k];
                ok[(ei, ej)] += o[9 + k];
                if ta != tb {
                    fv[(ej, ei)] += f[k];
                    fk[(ej, ei)] += f[9 + k];
                    ov[(ej, ei)] += o[k];
                    ok[(ej, ei)] += o[9 + k];
                }
            }
        }
    }
    let global = |a: &nalgebra::DMatrix<C64>, b: &nalgebra::DMatrix<C64>| {
        let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max);
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
    };
    cmp.max_rel_global = global(&fv, &ov).max(global(&fk, &ok));
    cmp.seconds = start.elapsed().as_secs_f64();
    Ok(cmp)
}
