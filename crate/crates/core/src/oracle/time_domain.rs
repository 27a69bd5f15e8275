//! Time-domain diagnostics on CQ runs: self-convergence order, causality and the growth envelope.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cq::{cq_convolution_solve, cq_field_eval, norm3, TimeGrid};
use crate::error::{Error, Result};
use crate::geometry::{make_icosphere, Point, SurfaceMesh};
use crate::incident::{incident_traces_td, PlaneWave, Signal, TraceSample, Window};
use crate::quadrature::QuadConfig;
use crate::transmission::{Discretization, Materials, Probe, Side};
use crate::C64;

/// `t² max(1, t³) / (1 + t)`
pub fn growth_envelope(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    t * t * t.powi(3).max(1.0) / (1.0 + t)
}

/// Scattering setup shared by the order, causality and envelope checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TdSetup {
    pub level: u32,
    pub materials: Materials,
    pub omega: f64,
    pub ramp: f64,
    pub window: Window,
    pub direction: Point,
    pub polarization: Point,
    pub t_end: f64,
    /// Exterior probes.
    pub probes: Vec<Point>,
    pub quad: QuadConfig,
}

impl Default for TdSetup {
    fn default() -> Self {
        TdSetup {
            level: 1,
            materials: Materials { eps_plus: 1.0, mu_plus: 1.0, eps_minus: 4.0, mu_minus: 1.0 },
            omega: 1.0,
            ramp: 2.0,
            window: Window::C5,
            direction: Point::new(0.0, 0.0, 1.0),
            polarization: Point::new(1.0, 0.0, 0.0),
            t_end: 3.0,
            probes: vec![Point::new(0.0, 0.0, -1.5), Point::new(1.5, 1.0, 0.5)],
            quad: QuadConfig { disjoint_order: 3, singular_order: 4, identical_order: 5, near_threshold: 1.0, near_boost: 2 },
        }
    }
}

/// Mesh, discretization and incident wave of a setup.
pub struct TdContext {
    pub mesh: Arc<SurfaceMesh>,
    pub disc: Discretization,
    pub wave: PlaneWave,
}

impl TdSetup {
    pub fn context(&self) -> Result<TdContext> {
        self.materials.validate()?;
        let mesh = Arc::new(make_icosphere(self.level, 1.0, Point::zeros())?);
        let disc = Discretization::new(mesh.clone(), self.quad)?;
        let signal = Signal::new(self.omega, self.ramp, self.window)?;
        let wave = PlaneWave::new(self.direction, self.polarization, signal, &mesh, self.materials.c_plus())?;
        Ok(TdContext { mesh, disc, wave })
    }
}

/// One CQ run: probe traces and density norms per step.
#[derive(Debug, Clone, Serialize)]
pub struct TdRun {
    pub grid: TimeGrid,
    pub times: Vec<f64>,
    /// `traces[probe][n]`
    pub traces: Vec<Vec<[f64; 3]>>,
    pub density_norms: Vec<f64>,
    /// `∫₀ᵗ ‖P₂ g''(τ)‖ dτ` for the data `g = (λ, φ)`, see [`data_functional`].
    pub data_functional: Vec<f64>,
    pub max_condition: f64,
    pub imag_ratio: f64,
    pub seconds: f64,
}

pub fn run_td(setup: &TdSetup, ctx: &TdContext, n: usize, p: u8) -> Result<TdRun> {
    let start = std::time::Instant::now();
    let grid = TimeGrid::new(setup.t_end / n as f64, n, p)?;
    let c = setup.materials.c_plus();
    let samples: Vec<_> = grid.times().iter().map(|&t| incident_traces_td(&ctx.wave, t, c, &ctx.disc.spaces)).collect();
    let history = cq_convolution_solve(&grid, &setup.materials, &ctx.disc, &samples)?;
    let probes: Vec<Probe> = setup.probes.iter().map(|x| Probe { x: *x, side: Side::Exterior }).collect();
    let fields = cq_field_eval(&history, &setup.materials, &ctx.disc, &probes)?;
    let traces = (0..probes.len()).map(|k| fields.iter().map(|f| f[k].e).collect()).collect();
    let density_norms = history.steps.iter().map(|d| ctx.disc.mass_norm(&d.j).hypot(ctx.disc.mass_norm(&d.m))).collect();
    let data_functional = data_functional(setup, ctx, &grid.times());
    Ok(TdRun {
        grid,
        times: grid.times(),
        traces,
        density_norms,
        data_functional,
        max_condition: history.max_condition,
        imag_ratio: history.imag_ratio,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Step of the central differences in [`data_functional`].
const FD_STEP: f64 = 0.02;

/// Running integral `∫₀ᵗ ‖g'' + 2g''' + g''''‖ dτ` of the incident data `g = (λ, φ)` in the
/// mass norm, with derivatives from central differences and the integral by the trapezoid rule.
pub fn data_functional(setup: &TdSetup, ctx: &TdContext, times: &[f64]) -> Vec<f64> {
    let c = setup.materials.c_plus();
    let h = FD_STEP;
    let norms: Vec<f64> = times
        .iter()
        .map(|&t| {
            let f: Vec<_> = (-2..=2).map(|k| incident_traces_td(&ctx.wave, t + k as f64 * h, c, &ctx.disc.spaces)).collect();
            let comb = |part: fn(&TraceSample) -> &Vec<f64>| {
                let f: Vec<&Vec<f64>> = f.iter().map(part).collect();
                let w: Vec<C64> = (0..f[0].len())
                    .map(|i| {
                        let d2 = (f[3][i] - 2.0 * f[2][i] + f[1][i]) / (h * h);
                        let d3 = (f[4][i] - 2.0 * f[3][i] + 2.0 * f[1][i] - f[0][i]) / (2.0 * h * h * h);
                        let d4 = (f[4][i] - 4.0 * f[3][i] + 6.0 * f[2][i] - 4.0 * f[1][i] + f[0][i]) / (h * h * h * h);
                        C64::from(d2 + 2.0 * d3 + d4)
                    })
                    .collect();
                ctx.disc.mass_norm(&ctx.disc.to_primal(&w))
            };
            comb(|s| &s.lambda).hypot(comb(|s| &s.phi))
        })
        .collect();
    let mut acc = 0.0;
    let mut out = vec![0.0; times.len()];
    for i in 1..times.len() {
        acc += 0.5 * (times[i] - times[i - 1]) * (norms[i] + norms[i - 1]);
        out[i] = acc;
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderStudy {
    pub p: u8,
    pub steps: Vec<usize>,
    /// Max over probes and coarse times of `|u_N - u_{2N}|`.
    pub differences: Vec<f64>,
    pub orders: Vec<f64>,
}

/// Self-convergence of probe traces over runs with `N, 2N, 4N, ...` steps.
pub fn order_study(runs: &[TdRun]) -> Result<OrderStudy> {
    if runs.len() < 3 {
        return Err(Error::InvalidInput("order study needs at least three runs".into()));
    }
    let p = runs[0].grid.p;
    let mut differences = Vec::new();
    for w in runs.windows(2) {
        let (c, f) = (&w[0], &w[1]);
        if f.grid.n != 2 * c.grid.n || f.grid.p != p || (f.grid.t_end() - c.grid.t_end()).abs() > 1e-12 {
            return Err(Error::InvalidInput("runs must double the step count on the same interval".into()));
        }
        let mut d = 0.0f64;
        for (tc, tf) in c.traces.iter().zip(&f.traces) {
            for (i, e) in tc.iter().enumerate() {
                let o = &tf[2 * i];
                d = d.max(norm3(&[e[0] - o[0], e[1] - o[1], e[2] - o[2]]));
            }
        }
        differences.push(d);
    }
    let orders = differences.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Ok(OrderStudy { p, steps: runs.iter().map(|r| r.grid.n).collect(), differences, orders })
}

#[derive(Debug, Clone, Serialize)]
pub struct CausalityCheck {
    pub probe: usize,
    pub arrival: f64,
    pub peak: f64,
    pub pre_arrival_max: f64,
    pub ratio: f64,
}

/// Earliest time the scattered field can reach an exterior probe: the wave touches the surface
/// at `ramp/10`, then travels at least the probe's distance to the surface.
pub fn scattered_arrival(setup: &TdSetup, mesh: &SurfaceMesh, x: &Point) -> f64 {
    setup.ramp / 10.0 + mesh.distance_to(x) / setup.materials.c_plus()
}

pub fn causality_check(setup: &TdSetup, mesh: &SurfaceMesh, run: &TdRun) -> Vec<CausalityCheck> {
    setup
        .probes
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let arrival = scattered_arrival(setup, mesh, x);
            let peak = run.traces[k].iter().map(norm3).fold(0.0, f64::max);
            let pre = run.times.iter().zip(&run.traces[k]).filter(|(t, _)| **t < arrival).map(|(_, e)| norm3(e)).fold(0.0, f64::max);
            CausalityCheck { probe: k, arrival, peak, pre_arrival_max: pre, ratio: if peak > 0.0 { pre / peak } else { 0.0 } }
        })
        .collect()
}

/// Densities below this fraction of their peak count as zero: before the data arrives the
/// CQ densities are aliasing noise, not growth.
pub const ENVELOPE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeCheck {
    /// Constant fitted on the first quarter of the run.
    pub c_fit: f64,
    /// `max ‖(j, m)(t)‖ / (C env(t) data(t))` over the remaining steps.
    pub worst_ratio: f64,
    pub passed: bool,
}

pub fn envelope_check(run: &TdRun) -> EnvelopeCheck {
    let quarter = run.times.len() / 4;
    let floor = ENVELOPE_FLOOR * run.density_norms.iter().copied().fold(0.0, f64::max);
    let bound = |i: usize| growth_envelope(run.times[i]) * run.data_functional[i];
    let ratio = |i: usize, c: f64| {
        let (d, b) = (run.density_norms[i], c * bound(i));
        if d <= floor {
            0.0
        } else if b > 0.0 {
            d / b
        } else {
            f64::INFINITY
        }
    };
    let c_fit = (0..=quarter).map(|i| ratio(i, 1.0)).fold(0.0, f64::max);
    let worst = (quarter + 1..run.times.len()).map(|i| ratio(i, c_fit)).fold(0.0, f64::max);
    EnvelopeCheck { c_fit, worst_ratio: worst, passed: c_fit.is_finite() && c_fit > 0.0 && worst <= 1.0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_values() {
        assert_eq!(growth_envelope(0.0), 0.0);
        assert!((growth_envelope(1.0) - 0.5).abs() < 1e-15);
        assert!((growth_envelope(2.0) - 32.0 / 3.0).abs() < 1e-12);
        assert!((growth_envelope(0.5) - 0.25 / 1.5).abs() < 1e-15);
    }
}
