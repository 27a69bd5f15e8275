//! Growth of the Laplace-domain solution operator along a vertical line `s = σ₀ + iω`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::incident::{incident_traces_ld, LaplaceWave};
use crate::transmission::{solve_at, Discretization, Materials};
use crate::C64;

#[derive(Debug, Clone, Serialize)]
pub struct StabilityPoint {
    pub s: C64,
    pub density_norm: f64,
    pub data_norm: f64,
    pub ratio: f64,
    pub cond_estimate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub sigma0: f64,
    pub points: Vec<StabilityPoint>,
    /// Least-squares slope of `log ratio` against `log |s|`.
    pub alpha: f64,
    pub intercept: f64,
}

/// Least-squares line `y = a x + b`, returns `(a, b)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let a = sxy / sxx;
    (a, my - a * mx)
}

/// Solves with unit-amplitude plane-wave data at each `s = σ₀ + iω` and fits the exponent of
/// `‖(j, m)‖ / ‖(a, b)‖` (discrete L² norms of primal coefficients).
pub fn verify_stability_growth(sigma0: f64, omegas: &[f64], disc: &Discretization, materials: &Materials, direction: Point, polarization: Point) -> Result<StabilityReport> {
    if omegas.len() < 2 {
        return Err(Error::InvalidInput("need at least two frequencies for a fit".into()));
    }
    let wave = LaplaceWave::new(direction, polarization, C64::new(1.0, 0.0))?;
    let mut points = Vec::with_capacity(omegas.len());
    for &w in omegas {
        let s = C64::new(sigma0, w);
        let data = incident_traces_ld(&wave, s, materials.c_plus(), &disc.spaces);
        let sol = solve_at(s, materials, disc, &data, false)?;
        let (a, b) = (disc.to_primal(&data.lambda), disc.to_primal(&data.phi));
        let data_norm = disc.mass_norm(&a).hypot(disc.mass_norm(&b));
        let density_norm = disc.mass_norm(&sol.pair.j).hypot(disc.mass_norm(&sol.pair.m));
        log::info!("stability: s = {s}, ratio {:.3e}", density_norm / data_norm);
        points.push(StabilityPoint { s, density_norm, data_norm, ratio: density_norm / data_norm, cond_estimate: sol.cond_estimate });
    }
    let x: Vec<f64> = points.iter().map(|p| p.s.norm().ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.ratio.ln()).collect();
    let (alpha, intercept) = fit_line(&x, &y);
    Ok(StabilityReport { sigma0, points, alpha, intercept })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_is_exact_on_lines() {
        let x = [0.0, 1.0, 2.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let (a, b) = fit_line(&x, &y);
        assert!((a - 2.5).abs() < 1e-14 && (b + 1.0).abs() < 1e-14);
    }
}
