//! Convolution quadrature with BDF1/BDF2 generating functions.
//!
//! All steps are computed at once: data samples are scaled by `λ_r^n`, transformed with an FFT,
//! each frequency `s_l = δ(λ_r ζ^{-l})/κ` gets one Laplace-domain solve, and the result is
//! transformed back and unscaled. Real inputs only need `l = 0..=(N+1)/2`.

use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::incident::TraceSample;
use crate::trace_spaces::CVec3;
use crate::transmission::{represent_fields, solve_at, DensityPair, Discretization, Materials, Probe, Side, TraceData};
use crate::C64;

/// Uniform grid `t_n = n κ`, `n = 0..=N`, for a CQ method of order `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub kappa: f64,
    pub n: usize,
    pub p: u8,
    pub lambda_radius: f64,
}

impl TimeGrid {
    /// Grid with the default radius `λ_r = ε^{1/(2(N+1))}`.
    pub fn new(kappa: f64, n: usize, p: u8) -> Result<Self> {
        Self::with_radius(kappa, n, p, f64::EPSILON.powf(0.5 / (n + 1) as f64))
    }

    pub fn with_radius(kappa: f64, n: usize, p: u8, lambda_radius: f64) -> Result<Self> {
        let g = TimeGrid { kappa, n, p, lambda_radius };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidInput(format!("time step must be positive, got {}", self.kappa)));
        }
        if self.n < 1 {
            return Err(Error::InvalidInput("need at least one time step".into()));
        }
        if !(self.lambda_radius > 0.0 && self.lambda_radius < 1.0) {
            return Err(Error::InvalidInput(format!("lambda_radius must lie in (0, 1), got {}", self.lambda_radius)));
        }
        bdf_symbol(self.p, C64::new(0.0, 0.0))?;
        Ok(())
    }

    pub fn t_end(&self) -> f64 {
        self.kappa * self.n as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n).map(|i| i as f64 * self.kappa).collect()
    }

    /// Number of samples `N + 1`.
    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Frequencies that are actually solved for real signals.
    pub fn half_len(&self) -> usize {
        self.len() / 2 + 1
    }
}

/// BDF generating function `δ(ζ)`.
pub fn bdf_symbol(p: u8, zeta: C64) -> Result<C64> {
    let d = C64::new(1.0, 0.0) - zeta;
    match p {
        1 => Ok(d),
        2 => Ok(d + d * d * 0.5),
        _ => Err(Error::InvalidInput(format!("unsupported CQ order {p}, expected 1 or 2"))),
    }
}

/// All `N + 1` frequencies `s_l = δ(λ_r e^{-2πi l/(N+1)})/κ`.
pub fn cq_frequencies(grid: &TimeGrid) -> Result<Vec<C64>> {
    grid.validate()?;
    let m = grid.len();
    let mut out = Vec::with_capacity(m);
    for l in 0..m {
        let zeta = C64::from_polar(grid.lambda_radius, -2.0 * std::f64::consts::PI * l as f64 / m as f64);
        let s = bdf_symbol(grid.p, zeta)? / grid.kappa;
        if !(s.re > 0.0) {
            return Err(Error::InvalidInput(format!("frequency {l} has Re s = {} <= 0; use a smaller lambda_radius", s.re)));
        }
        out.push(s);
    }
    Ok(out)
}

/// Scaled DFT of real sample vectors (`samples[n][i]`), returning the half spectrum
/// `hat[l][i]` for `l < half_len`.
pub fn to_frequency(grid: &TimeGrid, samples: &[Vec<f64>]) -> Result<Vec<Vec<C64>>> {
    let m = grid.len();
    if samples.len() != m {
        return Err(Error::InvalidInput(format!("expected {m} samples, got {}", samples.len())));
    }
    let dim = samples.first().map_or(0, |v| v.len());
    if samples.iter().any(|v| v.len() != dim) {
        return Err(Error::InvalidInput("samples have inconsistent lengths".into()));
    }
    let fft = FftPlanner::new().plan_fft_forward(m);
    let mut hat = vec![vec![C64::new(0.0, 0.0); dim]; grid.half_len()];
    let mut buf = vec![C64::new(0.0, 0.0); m];
    for i in 0..dim {
        let mut scale = 1.0;
        for (n, b) in buf.iter_mut().enumerate() {
            *b = C64::new(samples[n][i] * scale, 0.0);
            scale *= grid.lambda_radius;
        }
        fft.process(&mut buf);
        for (l, h) in hat.iter_mut().enumerate() {
            h[i] = buf[l];
        }
    }
    Ok(hat)
}

/// Inverse of [`to_frequency`] for a half spectrum of a real signal. Returns real samples and
/// the largest discarded imaginary part relative to the largest real part.
pub fn to_time(grid: &TimeGrid, hat: &[Vec<C64>]) -> Result<(Vec<Vec<f64>>, f64)> {
    let m = grid.len();
    if hat.len() != grid.half_len() {
        return Err(Error::InvalidInput(format!("expected {} frequencies, got {}", grid.half_len(), hat.len())));
    }
    let dim = hat.first().map_or(0, |v| v.len());
    let ifft = FftPlanner::new().plan_fft_inverse(m);
    let mut out = vec![vec![0.0; dim]; m];
    let mut buf = vec![C64::new(0.0, 0.0); m];
    let (mut max_re, mut max_im) = (0.0f64, 0.0f64);
    for i in 0..dim {
        for (l, b) in buf.iter_mut().enumerate() {
            *b = if l < hat.len() { hat[l][i] } else { hat[m - l][i].conj() };
        }
        ifft.process(&mut buf);
        let mut scale = 1.0 / m as f64;
        for (n, b) in buf.iter().enumerate() {
            let v = b * scale;
            out[n][i] = v.re;
            max_re = max_re.max(v.re.abs());
            max_im = max_im.max(v.im.abs());
            scale /= grid.lambda_radius;
        }
    }
    let ratio = if max_re > 0.0 { max_im / max_re } else { max_im };
    Ok((out, ratio))
}

/// CQ convolution of a scalar symbol `a(s)` with real samples `g_n`.
pub fn cq_apply_scalar<F: Fn(C64) -> C64>(grid: &TimeGrid, symbol: F, g: &[f64]) -> Result<Vec<f64>> {
    let samples: Vec<Vec<f64>> = g.iter().map(|&x| vec![x]).collect();
    let freqs = cq_frequencies(grid)?;
    let mut hat = to_frequency(grid, &samples)?;
    for (l, h) in hat.iter_mut().enumerate() {
        h[0] *= symbol(freqs[l]);
    }
    Ok(to_time(grid, &hat)?.0.into_iter().map(|v| v[0]).collect())
}

/// Time-domain densities plus the half spectrum they came from.
#[derive(Debug, Clone)]
pub struct DensityHistory {
    pub grid: TimeGrid,
    pub steps: Vec<DensityPair>,
    /// `(s_l, data, densities)` for `l < half_len`, reused by [`cq_field_eval`].
    pub spectrum: Vec<(TraceData, DensityPair)>,
    pub max_residual: f64,
    pub max_condition: f64,
    pub imag_ratio: f64,
}

fn split(v: &[f64], n: usize) -> (Vec<C64>, Vec<C64>) {
    (v[..n].iter().map(|&x| C64::from(x)).collect(), v[n..].iter().map(|&x| C64::from(x)).collect())
}

/// Solves the transmission system for all steps of `grid` given data samples at `t_n`.
pub fn cq_convolution_solve(grid: &TimeGrid, materials: &Materials, disc: &Discretization, samples: &[TraceSample]) -> Result<DensityHistory> {
    let n = disc.dim();
    if samples.iter().any(|s| s.lambda.len() != n || s.phi.len() != n) {
        return Err(Error::InvalidInput("trace samples do not match the discretization".into()));
    }
    let stacked: Vec<Vec<f64>> = samples.iter().map(|s| s.lambda.iter().chain(&s.phi).copied().collect()).collect();
    let freqs = cq_frequencies(grid)?;
    let hat = to_frequency(grid, &stacked)?;
    let solved: Vec<Result<(TraceData, DensityPair, f64, f64)>> = hat
        .par_iter()
        .enumerate()
        .map(|(l, h)| {
            let s = freqs[l];
            let (lambda, phi) = (h[..n].to_vec(), h[n..].to_vec());
            let data = TraceData { lambda, phi, s };
            let sol = solve_at(s, materials, disc, &data, false).map_err(|e| match e {
                Error::Singular { s, detail } => Error::Singular { s, detail: format!("frequency {l}: {detail}") },
                e => e,
            })?;
            Ok((data, sol.pair, sol.residual, sol.cond_estimate))
        })
        .collect();
    let mut spectrum = Vec::with_capacity(solved.len());
    let (mut max_residual, mut max_condition) = (0.0f64, 0.0f64);
    for r in solved {
        let (data, pair, res, cond) = r?;
        max_residual = max_residual.max(res);
        max_condition = max_condition.max(cond);
        spectrum.push((data, pair));
    }
    let dens_hat: Vec<Vec<C64>> = spectrum.iter().map(|(_, p)| p.j.iter().chain(&p.m).copied().collect()).collect();
    let (time, imag_ratio) = to_time(grid, &dens_hat)?;
    let steps = time.iter().map(|v| {
        let (j, m) = split(v, n);
        DensityPair { j, m }
    }).collect();
    log::info!("cq: {} frequencies, max residual {max_residual:.2e}, max condition {max_condition:.2e}", spectrum.len());
    Ok(DensityHistory { grid: *grid, steps, spectrum, max_residual, max_condition, imag_ratio })
}

/// Real field samples at one time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldTrace {
    pub side: Side,
    pub e: [f64; 3],
    pub curl_e: [f64; 3],
}

/// Probe field histories `out[n][probe]` (scattered outside, total inside).
pub fn cq_field_eval(history: &DensityHistory, materials: &Materials, disc: &Discretization, probes: &[Probe]) -> Result<Vec<Vec<FieldTrace>>> {
    let grid = &history.grid;
    let per_freq: Vec<Result<Vec<C64>>> = history
        .spectrum
        .par_iter()
        .map(|(data, pair)| {
            if pair.j.iter().chain(&pair.m).chain(&data.lambda).chain(&data.phi).all(|z| *z == C64::new(0.0, 0.0)) {
                return Ok(vec![C64::new(0.0, 0.0); 6 * probes.len()]);
            }
            let f = represent_fields(pair, data, materials, disc, probes)?;
            Ok(f.iter().flat_map(|s| s.e.iter().chain(s.curl_e.iter()).copied().collect::<Vec<_>>()).collect())
        })
        .collect();
    let hat = per_freq.into_iter().collect::<Result<Vec<_>>>()?;
    let (time, _) = to_time(grid, &hat)?;
    Ok(time
        .iter()
        .map(|v| {
            probes
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let c = &v[6 * k..6 * k + 6];
                    FieldTrace { side: p.side, e: [c[0], c[1], c[2]], curl_e: [c[3], c[4], c[5]] }
                })
                .collect()
        })
        .collect())
}

/// Euclidean norm of a real field triple.
pub fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Converts a complex field sample to the real triple of its real parts.
pub fn real_part(v: &CVec3) -> [f64; 3] {
    [v[0].re, v[1].re, v[2].re]
}
