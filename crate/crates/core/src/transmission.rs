//! Laplace-domain transmission system: block assembly, solve, density recovery and field
//! representation.
//!
//! Row 1 is tested with the div basis `f_i`, row 2 with the curl basis `g_i = n × f_i`.
//! With `P = ∫ f_i·g_j` and the matrices of [`crate::operators`] the blocks are
//!
//! ```text
//! L = [ -(sε₊)⁻¹V₊ - (sε₋)⁻¹V₋      -(K₊ + K₋)          ]
//!     [  s(K₊ + K₋)                 -(μ₊⁻¹V₊ + μ₋⁻¹V₋)   ]
//! R = [ -(c₊/s)² V₊                 -½P - K₊             ]
//!     [  μ₊⁻¹(½P + K₊)              -μ₊⁻¹V₊              ]
//! ```
//!
//! acting on `(j, m)` and on the primal data coefficients `(a, b)` of `(λ, φ)`.
//! [`Row1Variant::Differenced`] flips the sign of the `V₊` terms of row 1.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, SurfaceMesh};
use crate::operators::{layer_potentials, OperatorPair};
use crate::quadrature::{QuadConfig, RuleSet};
use crate::trace_spaces::{build_spaces, CVec3, TraceSpaces};
use crate::C64;

/// Permittivities and permeabilities of the exterior (+) and interior (-) media.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Materials {
    pub eps_plus: f64,
    pub mu_plus: f64,
    pub eps_minus: f64,
    pub mu_minus: f64,
}

impl Materials {
    pub fn new(eps_plus: f64, mu_plus: f64, eps_minus: f64, mu_minus: f64) -> Result<Self> {
        let m = Materials { eps_plus, mu_plus, eps_minus, mu_minus };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eps_plus", self.eps_plus), ("mu_plus", self.mu_plus), ("eps_minus", self.eps_minus), ("mu_minus", self.mu_minus)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("material constant {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn c_plus(&self) -> f64 {
        1.0 / (self.eps_plus * self.mu_plus).sqrt()
    }

    pub fn c_minus(&self) -> f64 {
        1.0 / (self.eps_minus * self.mu_minus).sqrt()
    }
}

/// Incident data as dual coefficients: `lambda[i] = ∫ λ·f_i`, `phi[i] = ∫ φ·g_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceData {
    pub lambda: Vec<C64>,
    pub phi: Vec<C64>,
    pub s: C64,
}

impl TraceData {
    pub fn zeros(n: usize, s: C64) -> Self {
        TraceData { lambda: vec![C64::new(0.0, 0.0); n], phi: vec![C64::new(0.0, 0.0); n], s }
    }
}

/// Density coefficients: `j` in the div space, `m` in the curl space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityPair {
    pub j: Vec<C64>,
    pub m: Vec<C64>,
}

impl DensityPair {
    pub fn zeros(n: usize) -> Self {
        DensityPair { j: vec![C64::new(0.0, 0.0); n], m: vec![C64::new(0.0, 0.0); n] }
    }
}

/// Sign convention of the first block row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Row1Variant {
    /// `V₊` and `V₋` enter with the same sign; consistent with the field representations.
    #[default]
    Summed,
    /// `V₊` enters with the opposite sign in `L` and `R`.
    Differenced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SystemTag {
    L,
    R,
}

/// 2×2 block matrix over `(div, curl)` coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSystem {
    pub tag: SystemTag,
    pub s: C64,
    pub materials: Materials,
    pub n: usize,
    pub matrix: DMatrix<C64>,
}

impl BlockSystem {
    pub fn block(&self, row: usize, col: usize) -> DMatrix<C64> {
        self.matrix.view((row * self.n, col * self.n), (self.n, self.n)).into_owned()
    }
}

/// Mesh, trace spaces, Gram matrices, quadrature rules and the operator cache.
pub struct Discretization {
    pub spaces: TraceSpaces,
    pub mass: DMatrix<f64>,
    mass_chol: nalgebra::Cholesky<f64, Dyn>,
    pub gram: DMatrix<f64>,
    pub rules: RuleSet,
    pub cache: crate::operators::OperatorCache,
    pub row1: Row1Variant,
}

impl Discretization {
    pub fn new(mesh: Arc<SurfaceMesh>, quad: QuadConfig) -> Result<Self> {
        let spaces = build_spaces(mesh);
        let mass = spaces.mass_matrix();
        let mass_chol = mass.clone().cholesky().ok_or_else(|| Error::InvalidInput("mass matrix not positive definite".into()))?;
        let gram = spaces.duality_gram();
        Ok(Discretization { spaces, mass, mass_chol, gram, rules: RuleSet::new(quad)?, cache: Default::default(), row1: Row1Variant::default() })
    }

    pub fn dim(&self) -> usize {
        self.spaces.dim()
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        &self.spaces.mesh
    }

    /// Primal coefficients `M⁻¹ dual` (the L² projection onto the space).
    pub fn to_primal(&self, dual: &[C64]) -> Vec<C64> {
        let re = self.mass_chol.solve(&DVector::from_iterator(dual.len(), dual.iter().map(|z| z.re)));
        let im = self.mass_chol.solve(&DVector::from_iterator(dual.len(), dual.iter().map(|z| z.im)));
        re.iter().zip(im.iter()).map(|(&a, &b)| C64::new(a, b)).collect()
    }

    /// `sqrt(cᴴ M c)`, the L² norm of a discrete field.
    pub fn mass_norm(&self, c: &[C64]) -> f64 {
        let v = DVector::from_column_slice(c);
        let mv = self.mass.map(C64::from) * &v;
        v.dotc(&mv).re.max(0.0).sqrt()
    }

    /// V and K at `ŝ = s/c`, through the cache unless `cached` is false.
    pub fn operators(&self, shat: C64, cached: bool) -> Result<Arc<OperatorPair>> {
        if cached {
            self.cache.get_or_assemble(&self.spaces, shat, &self.rules)
        } else {
            let (v, k) = crate::operators::assemble_vk(&self.spaces, shat, &self.rules)?;
            Ok(Arc::new(OperatorPair { v, k }))
        }
    }

    fn operator_pairs(&self, s: C64, materials: &Materials, cached: bool) -> Result<(Arc<OperatorPair>, Arc<OperatorPair>)> {
        crate::operators::LaplaceParam::new(s)?;
        materials.validate()?;
        let plus = self.operators(s / materials.c_plus(), cached)?;
        let minus = if materials.c_minus() == materials.c_plus() { plus.clone() } else { self.operators(s / materials.c_minus(), cached)? };
        Ok((plus, minus))
    }
}

fn set_block(m: &mut DMatrix<C64>, n: usize, row: usize, col: usize, b: &DMatrix<C64>) {
    m.view_mut((row * n, col * n), (n, n)).copy_from(b);
}

fn build_l(s: C64, mat: &Materials, plus: &OperatorPair, minus: &OperatorPair, variant: Row1Variant) -> BlockSystem {
    let n = plus.v.data.nrows();
    let c = |x: f64| C64::new(x, 0.0);
    let (vp, vm, kp, km) = (&plus.v.data, &minus.v.data, &plus.k.data, &minus.k.data);
    let sign_p = match variant {
        Row1Variant::Summed => c(-1.0),
        Row1Variant::Differenced => c(1.0),
    };
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    set_block(&mut m, n, 0, 0, &(vp * (sign_p / (s * mat.eps_plus)) - vm * (c(1.0) / (s * mat.eps_minus))));
    set_block(&mut m, n, 0, 1, &(-(kp + km)));
    set_block(&mut m, n, 1, 0, &((kp + km) * s));
    set_block(&mut m, n, 1, 1, &(-(vp * c(1.0 / mat.mu_plus) + vm * c(1.0 / mat.mu_minus))));
    BlockSystem { tag: SystemTag::L, s, materials: *mat, n, matrix: m }
}

fn build_r(s: C64, mat: &Materials, plus: &OperatorPair, gram: &DMatrix<f64>, variant: Row1Variant) -> BlockSystem {
    let n = plus.v.data.nrows();
    let c = |x: f64| C64::new(x, 0.0);
    let half_p = gram.map(|x| c(0.5 * x));
    let (vp, kp) = (&plus.v.data, &plus.k.data);
    let cs = C64::new(mat.c_plus(), 0.0) / s;
    let r11 = match variant {
        Row1Variant::Summed => -(vp * (cs * cs)),
        Row1Variant::Differenced => vp * (cs * cs),
    };
    let mu = c(1.0 / mat.mu_plus);
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    set_block(&mut m, n, 0, 0, &r11);
    set_block(&mut m, n, 0, 1, &(-&half_p - kp));
    set_block(&mut m, n, 1, 0, &((&half_p + kp) * mu));
    set_block(&mut m, n, 1, 1, &(-(vp * mu)));
    BlockSystem { tag: SystemTag::R, s, materials: *mat, n, matrix: m }
}

pub fn assemble_l(s: C64, materials: &Materials, disc: &Discretization) -> Result<BlockSystem> {
    let (plus, minus) = disc.operator_pairs(s, materials, true)?;
    Ok(build_l(s, materials, &plus, &minus, disc.row1))
}

pub fn assemble_r(s: C64, materials: &Materials, disc: &Discretization) -> Result<BlockSystem> {
    let (plus, _) = disc.operator_pairs(s, materials, true)?;
    Ok(build_r(s, materials, &plus, &disc.gram, disc.row1))
}

/// Both systems from one pair of assemblies, bypassing the cache when `cached` is false.
pub fn assemble_lr(s: C64, materials: &Materials, disc: &Discretization, cached: bool) -> Result<(BlockSystem, BlockSystem)> {
    let (plus, minus) = disc.operator_pairs(s, materials, cached)?;
    Ok((build_l(s, materials, &plus, &minus, disc.row1), build_r(s, materials, &plus, &disc.gram, disc.row1)))
}

/// Solution of one Laplace-domain system with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceSolution {
    pub s: C64,
    pub pair: DensityPair,
    /// `‖L x - R b‖ / ‖R b‖`
    pub residual: f64,
    /// 1-norm condition estimate of `L`.
    pub cond_estimate: f64,
}

/// Dense LU solve of `L (j, m) = R (a, b)` where `(a, b)` are the primal data coefficients.
pub fn solve_laplace(l: &BlockSystem, r: &BlockSystem, data: &TraceData, disc: &Discretization) -> Result<LaplaceSolution> {
    let n = l.n;
    if r.n != n || data.lambda.len() != n || data.phi.len() != n || l.tag != SystemTag::L || r.tag != SystemTag::R {
        return Err(Error::InvalidInput("inconsistent system or data dimensions".into()));
    }
    let mut b = disc.to_primal(&data.lambda);
    b.extend(disc.to_primal(&data.phi));
    let rhs = &r.matrix * DVector::from_vec(b);
    let lu = l.matrix.clone().lu();
    let cond = condition_estimate(&l.matrix, &lu);
    log::info!("solve at s = {}: condition estimate {:.3e}", l.s, cond);
    if !cond.is_finite() {
        return Err(Error::Singular { s: l.s.to_string(), detail: format!("condition estimate {cond:e}") });
    }
    if rhs.iter().all(|z| *z == C64::new(0.0, 0.0)) {
        return Ok(LaplaceSolution { s: l.s, pair: DensityPair::zeros(n), residual: 0.0, cond_estimate: cond });
    }
    let x = lu.solve(&rhs).ok_or_else(|| Error::Singular { s: l.s.to_string(), detail: format!("LU solve failed, condition estimate {cond:e}") })?;
    let residual = (&l.matrix * &x - &rhs).norm() / rhs.norm();
    if !residual.is_finite() || x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Singular { s: l.s.to_string(), detail: format!("non-finite solution, condition estimate {cond:e}") });
    }
    let pair = DensityPair { j: x.rows(0, n).iter().copied().collect(), m: x.rows(n, n).iter().copied().collect() };
    Ok(LaplaceSolution { s: l.s, pair, residual, cond_estimate: cond })
}

/// Assemble and solve at one `s`.
pub fn solve_at(s: C64, materials: &Materials, disc: &Discretization, data: &TraceData, cached: bool) -> Result<LaplaceSolution> {
    let (l, r) = assemble_lr(s, materials, disc, cached)?;
    solve_laplace(&l, &r, data, disc)
}

/// Hager's 1-norm estimate of `‖A‖₁ ‖A⁻¹‖₁`, using solves with `A` and `Aᴴ` from the LU factors.
pub fn condition_estimate(a: &DMatrix<C64>, lu: &nalgebra::LU<C64, Dyn, Dyn>) -> f64 {
    let n = a.nrows();
    let norm1 = (0..n).map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
    if !lu.is_invertible() {
        return f64::INFINITY;
    }
    let (l, u) = (lu.l(), lu.u());
    let adjoint_solve = |b: &DVector<C64>| -> Option<DVector<C64>> {
        // Aᴴ x = b with P A = L U: Uᴴ y = b, Lᴴ w = y, x = Pᵀ w
        let y = u.adjoint().solve_lower_triangular(b)?;
        let mut w = l.adjoint().solve_upper_triangular(&y)?;
        lu.p().inv_permute_rows(&mut w);
        Some(w)
    };
    let mut x = DVector::from_element(n, C64::new(1.0 / n as f64, 0.0));
    let mut est = 0.0;
    for _ in 0..5 {
        let Some(y) = lu.solve(&x) else { return f64::INFINITY };
        est = y.iter().map(|z| z.norm()).sum::<f64>();
        let xi = y.map(|z| if z.norm() > 0.0 { z / z.norm() } else { C64::new(1.0, 0.0) });
        let Some(z) = adjoint_solve(&xi) else { return f64::INFINITY };
        let (jmax, zmax) = z.iter().enumerate().map(|(i, v)| (i, v.norm())).fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        if zmax <= z.dotc(&x).re {
            break;
        }
        x = DVector::zeros(n);
        x[jmax] = C64::new(1.0, 0.0);
    }
    norm1 * est
}

/// `(m_scat, j_scat) = (m - φ, j - (sμ₊)⁻¹ λ)` with the data converted to primal coefficients.
pub fn reconstruct_scat_densities(pair: &DensityPair, data: &TraceData, materials: &Materials, disc: &Discretization) -> (Vec<C64>, Vec<C64>) {
    let a = disc.to_primal(&data.lambda);
    let b = disc.to_primal(&data.phi);
    let scale = C64::new(1.0, 0.0) / (data.s * materials.mu_plus);
    let m_scat = pair.m.iter().zip(&b).map(|(m, p)| m - p).collect();
    let j_scat = pair.j.iter().zip(&a).map(|(j, l)| j - l * scale).collect();
    (m_scat, j_scat)
}

/// Which side of the surface a probe lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// Ω₊, where the scattered field is represented.
    Exterior,
    /// Ω₋, where the total field is represented.
    Interior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub x: Point,
    pub side: Side,
}

/// Represented field at a probe: scattered field outside, total field inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub side: Side,
    pub e: CVec3,
    pub curl_e: CVec3,
}

/// Checks a declared probe side against the winding number of the mesh.
pub fn check_side(mesh: &SurfaceMesh, probe: &Probe) -> Result<()> {
    let inside = mesh.winding_number(&probe.x) > 0.5;
    if inside != (probe.side == Side::Interior) {
        return Err(Error::InvalidInput(format!("probe {:?} declared {:?} but lies on the other side", probe.x, probe.side)));
    }
    Ok(())
}

/// Fields from the density representations at wavenumbers `s/c±`.
///
/// Outside: `E^scat = D̃₊ m_s - (sε₊)⁻¹ S₊ j_s`, `curl E^scat = S̃₊ m_s + sμ₊ D₊ j_s`.
/// Inside: `E = (sε₋)⁻¹ S₋ j - D̃₋ m`, `curl E = -S̃₋ m - sμ₋ D₋ j`.
pub fn represent_fields(pair: &DensityPair, data: &TraceData, materials: &Materials, disc: &Discretization, probes: &[Probe]) -> Result<Vec<FieldSample>> {
    let s = data.s;
    crate::operators::LaplaceParam::new(s)?;
    let (m_scat, j_scat) = reconstruct_scat_densities(pair, data, materials, disc);
    let neg = |v: &[C64]| v.iter().map(|z| -z).collect::<Vec<_>>();
    let mut out = Vec::with_capacity(probes.len());
    for p in probes {
        check_side(disc.mesh(), p)?;
        let sample = match p.side {
            Side::Exterior => {
                let shat = s / materials.c_plus();
                // D̃ m = D(-m) in div coefficients
                let pm = layer_potentials(&disc.spaces, &neg(&m_scat), shat, &p.x)?;
                let pj = layer_potentials(&disc.spaces, &j_scat, shat, &p.x)?;
                FieldSample { side: p.side, e: pm.d - pj.s / (s * materials.eps_plus), curl_e: pm.s + pj.d * (s * materials.mu_plus) }
            }
            Side::Interior => {
                let shat = s / materials.c_minus();
                let pm = layer_potentials(&disc.spaces, &neg(&pair.m), shat, &p.x)?;
                let pj = layer_potentials(&disc.spaces, &pair.j, shat, &p.x)?;
                FieldSample { side: p.side, e: pj.s / (s * materials.eps_minus) - pm.d, curl_e: -pm.s - pj.d * (s * materials.mu_minus) }
            }
        };
        out.push(sample);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_icosphere;
    use crate::incident::{incident_traces_ld, LaplaceWave};

    fn disc(level: u32) -> Discretization {
        Discretization::new(Arc::new(make_icosphere(level, 1.0, Point::zeros()).unwrap()), QuadConfig::default()).unwrap()
    }

    fn wave() -> LaplaceWave {
        LaplaceWave::new(Point::new(0.0, 0.0, 1.0), Point::new(1.0, 0.0, 0.0), C64::new(1.0, 0.0)).unwrap()
    }

    #[test]
    fn dimensions_and_equal_material_cancellation() {
        let mut d = disc(0);
        let mat = Materials::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let s = C64::new(1.0, 2.0);
        let l = assemble_l(s, &mat, &d).unwrap();
        assert_eq!(l.matrix.shape(), (60, 60));
        // bit-identical re-assembly
        assert_eq!(assemble_l(s, &mat, &d).unwrap().matrix, l.matrix);
        d.row1 = Row1Variant::Differenced;
        let l = assemble_l(s, &mat, &d).unwrap();
        assert!(l.block(0, 0).iter().all(|z| *z == C64::new(0.0, 0.0)));
    }

    #[test]
    fn gram_blocks_of_r() {
        let d = disc(0);
        let mat = Materials::new(1.0, 2.0, 4.0, 1.0).unwrap();
        let n = d.dim();
        let zero = OperatorPair {
            v: crate::operators::OperatorMatrix { tag: crate::operators::OpTag::V, shat: C64::new(1.0, 0.0), data: DMatrix::zeros(n, n) },
            k: crate::operators::OperatorMatrix { tag: crate::operators::OpTag::K, shat: C64::new(1.0, 0.0), data: DMatrix::zeros(n, n) },
        };
        let r = build_r(C64::new(1.0, 1.0), &mat, &zero, &d.gram, Row1Variant::Summed);
        let a: Vec<C64> = (0..n).map(|i| C64::new(i as f64, 1.0)).collect();
        let b: Vec<C64> = (0..n).map(|i| C64::new(1.0, -(i as f64))).collect();
        let mut x = a.clone();
        x.extend(&b);
        let y = &r.matrix * DVector::from_vec(x);
        let p = d.gram.map(C64::from);
        // -½ ∫ f_i·φ and -½ μ₊⁻¹ ∫ g_i·λ
        let want1 = &p * DVector::from_vec(b) * C64::new(-0.5, 0.0);
        let want2 = p.transpose() * DVector::from_vec(a) * C64::new(-0.5 / mat.mu_plus, 0.0);
        assert!((y.rows(0, n) - want1).norm() < 1e-14 * y.norm());
        assert!((y.rows(n, n) - want2).norm() < 1e-14 * y.norm());
    }

    #[test]
    fn zero_data_gives_exact_zero() {
        let d = disc(0);
        let mat = Materials::new(1.0, 1.0, 4.0, 1.0).unwrap();
        let s = C64::new(1.0, 2.0);
        let sol = solve_at(s, &mat, &d, &TraceData::zeros(d.dim(), s), true).unwrap();
        assert!(sol.pair.j.iter().chain(&sol.pair.m).all(|z| *z == C64::new(0.0, 0.0)));
        let probes = [Probe { x: Point::new(0.0, 0.0, 2.0), side: Side::Exterior }, Probe { x: Point::new(0.1, 0.0, 0.0), side: Side::Interior }];
        let f = represent_fields(&sol.pair, &TraceData::zeros(d.dim(), s), &mat, &d, &probes).unwrap();
        assert!(f.iter().all(|v| v.e.norm() == 0.0 && v.curl_e.norm() == 0.0));
    }

    #[test]
    fn reconstruct_trivial_cases() {
        let d = disc(0);
        let mat = Materials::new(1.0, 2.0, 1.0, 1.0).unwrap();
        let n = d.dim();
        let s = C64::new(1.0, 1.0);
        let pair = DensityPair { j: (0..n).map(|i| C64::new(i as f64, 0.0)).collect(), m: (0..n).map(|i| C64::new(0.0, i as f64)).collect() };
        let (ms, js) = reconstruct_scat_densities(&pair, &TraceData::zeros(n, s), &mat, &d);
        assert_eq!((ms, js), (pair.m.clone(), pair.j.clone()));
        let data = incident_traces_ld(&wave(), s, mat.c_plus(), &d.spaces);
        let (ms, js) = reconstruct_scat_densities(&DensityPair::zeros(n), &data, &mat, &d);
        let b = d.to_primal(&data.phi);
        let a = d.to_primal(&data.lambda);
        for i in 0..n {
            assert!((ms[i] + b[i]).norm() < 1e-15 * b[i].norm().max(1.0));
            assert!((js[i] + a[i] / (s * 2.0)).norm() < 1e-14 * a[i].norm().max(1.0));
        }
    }

    #[test]
    fn solve_is_linear_with_small_residual() {
        let d = disc(0);
        let mat = Materials::new(1.0, 1.0, 4.0, 1.0).unwrap();
        let s = C64::new(1.0, 2.0);
        let d1 = incident_traces_ld(&wave(), s, 1.0, &d.spaces);
        let w2 = LaplaceWave::new(Point::new(1.0, 0.0, 0.0), Point::new(0.0, 0.6, 0.8), C64::new(0.3, -1.0)).unwrap();
        let d2 = incident_traces_ld(&w2, s, 1.0, &d.spaces);
        let (alpha, beta) = (C64::new(2.0, -1.0), C64::new(-0.5, 3.0));
        let comb = TraceData {
            lambda: d1.lambda.iter().zip(&d2.lambda).map(|(x, y)| alpha * x + beta * y).collect(),
            phi: d1.phi.iter().zip(&d2.phi).map(|(x, y)| alpha * x + beta * y).collect(),
            s,
        };
        let x1 = solve_at(s, &mat, &d, &d1, true).unwrap();
        let x2 = solve_at(s, &mat, &d, &d2, true).unwrap();
        let x = solve_at(s, &mat, &d, &comb, true).unwrap();
        assert!(x1.residual < 1e-10 && x.residual < 1e-10);
        let lin: Vec<C64> = x1.pair.j.iter().zip(&x2.pair.j).map(|(a, b)| alpha * a + beta * b).collect();
        let diff: f64 = lin.iter().zip(&x.pair.j).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let norm: f64 = x.pair.j.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(diff < 1e-10 * norm);
    }

    #[test]
    fn condition_estimate_close_to_exact() {
        let n = 12;
        let a = DMatrix::from_fn(n, n, |i, j| C64::new(((i * 7 + j * 3) % 5) as f64 + if i == j { 3.0 } else { 0.0 }, (i as f64 - j as f64) * 0.1));
        let lu = a.clone().lu();
        let inv = a.clone().try_inverse().unwrap();
        let n1 = |m: &DMatrix<C64>| (0..m.ncols()).map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
        let exact = n1(&a) * n1(&inv);
        let est = condition_estimate(&a, &lu);
        assert!(est <= exact * (1.0 + 1e-12) && est > 0.3 * exact, "{est} vs {exact}");
    }

    #[test]
    fn side_check_uses_winding_number() {
        let d = disc(1);
        assert!(check_side(d.mesh(), &Probe { x: Point::new(0.0, 0.0, 0.3), side: Side::Interior }).is_ok());
        assert!(check_side(d.mesh(), &Probe { x: Point::new(0.0, 0.0, 0.3), side: Side::Exterior }).is_err());
        assert!(check_side(d.mesh(), &Probe { x: Point::new(0.0, 2.0, 0.0), side: Side::Exterior }).is_ok());
    }
}
