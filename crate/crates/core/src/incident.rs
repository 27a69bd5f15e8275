//! Plane waves with smooth causal signals and their traces on the surface.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, SurfaceMesh};
use crate::quadrature::gauss_legendre;
use crate::trace_spaces::{to_complex, CVec3, SpaceRole, TraceSpaces};
use crate::transmission::TraceData;
use crate::C64;

/// Degree used when projecting incident traces onto the discrete spaces.
pub const TRACE_DEGREE: usize = 10;

/// Smoothstep window `w` on [0, 1]: `w(0) = 0`, `w(1) = 1`, with `k` vanishing derivatives
/// at both ends (C⁴ is degree 9, C⁵ degree 11).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    C4,
    C5,
}

impl Window {
    fn order(self) -> usize {
        match self {
            Window::C4 => 4,
            Window::C5 => 5,
        }
    }

    /// Monomial coefficients of the window polynomial, lowest degree first.
    pub fn coefficients(self) -> Vec<f64> {
        // S_k(x) = x^{k+1} Σ_j C(k+j, j) C(2k+1, k-j) (-x)^j
        let k = self.order();
        let mut c = vec![0.0; 2 * k + 2];
        for j in 0..=k {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            c[k + 1 + j] = sign * binomial(k + j, j) * binomial(2 * k + 1, k - j);
        }
        c
    }

    pub fn eval(self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            horner(&self.coefficients(), x)
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        if x <= 0.0 || x >= 1.0 {
            0.0
        } else {
            let c = self.coefficients();
            let d: Vec<f64> = (1..c.len()).map(|i| i as f64 * c[i]).collect();
            horner(&d, x)
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

/// `ψ(t) = w(t/ramp) sin(ωt)` for `t > 0`, zero otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub omega: f64,
    pub ramp: f64,
    pub window: Window,
}

impl Signal {
    pub fn new(omega: f64, ramp: f64, window: Window) -> Result<Self> {
        if !(omega > 0.0 && ramp > 0.0) {
            return Err(Error::InvalidInput(format!("signal needs omega > 0 and ramp > 0, got {omega}, {ramp}")));
        }
        Ok(Signal { omega, ramp, window })
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.window.eval(t / self.ramp) * (self.omega * t).sin()
    }

    pub fn derivative(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let x = t / self.ramp;
        self.window.derivative(x) / self.ramp * (self.omega * t).sin() + self.window.eval(x) * self.omega * (self.omega * t).cos()
    }

    /// Laplace transform `Ψ(s) = ∫_0^∞ e^{-st} ψ(t) dt`, Re s > 0. The ramp part uses
    /// composite Gauss with panels fine enough for |s|·ramp, the sinusoid tail is closed form.
    pub fn laplace(&self, s: C64) -> C64 {
        let (r, w) = (self.ramp, self.omega);
        let i = C64::i();
        let tail = |z: C64| (-z * r).exp() / z;
        let tail_part = (tail(s - i * w) - tail(s + i * w)) / (2.0 * i);
        let panels = ((s.norm() + w) * r / 2.0).ceil() as usize + 8;
        let (x, wt) = gauss_legendre(16);
        let h = r / panels as f64;
        let mut head = C64::new(0.0, 0.0);
        for p in 0..panels {
            let a = p as f64 * h;
            for (xi, wi) in x.iter().zip(&wt) {
                let t = a + h * xi;
                head += (-s * t).exp() * (self.eval(t) * wi * h);
            }
        }
        head + tail_part
    }
}

/// Plane wave `E(x, t) = pol ψ(t - x·d/c₊ - t₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneWave {
    pub direction: Point,
    pub polarization: Point,
    pub signal: Signal,
    pub t0: f64,
}

fn check_directions(d: &Point, pol: &Point) -> Result<()> {
    if (d.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("propagation direction must be a unit vector, |d| = {}", d.norm())));
    }
    if d.dot(pol).abs() > 1e-12 * pol.norm().max(1.0) || pol.norm() == 0.0 {
        return Err(Error::InvalidInput("polarization must be nonzero and orthogonal to the direction".into()));
    }
    Ok(())
}

impl PlaneWave {
    /// Plane wave whose front first touches the mesh at `t = ramp/10`.
    pub fn new(direction: Point, polarization: Point, signal: Signal, mesh: &SurfaceMesh, c_plus: f64) -> Result<Self> {
        check_directions(&direction, &polarization)?;
        let min_proj = mesh.vertices.iter().map(|v| v.dot(&direction)).fold(f64::INFINITY, f64::min);
        let t0 = -min_proj / c_plus + signal.ramp / 10.0;
        Ok(PlaneWave { direction, polarization, signal, t0 })
    }

    /// Earliest time at which the wave reaches the surface.
    pub fn arrival(&self, mesh: &SurfaceMesh, c_plus: f64) -> f64 {
        let min_proj = mesh.vertices.iter().map(|v| v.dot(&self.direction)).fold(f64::INFINITY, f64::min);
        self.t0 + min_proj / c_plus
    }

    pub fn d_cross_pol(&self) -> Point {
        self.direction.cross(&self.polarization)
    }

    /// `(E, curl E)` at `(x, t)`.
    pub fn field(&self, x: &Point, t: f64, c_plus: f64) -> (Point, Point) {
        let tau = t - x.dot(&self.direction) / c_plus - self.t0;
        (self.polarization * self.signal.eval(tau), self.d_cross_pol() * (-self.signal.derivative(tau) / c_plus))
    }

    /// The Laplace-domain counterpart with amplitude `Ψ(s) e^{-s t₀}`.
    pub fn laplace(&self, s: C64) -> LaplaceWave {
        LaplaceWave { direction: self.direction, polarization: self.polarization, amplitude: self.signal.laplace(s) * (-s * self.t0).exp() }
    }
}

/// Laplace-domain plane wave `E(x, s) = pol A e^{-(s/c₊) x·d}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceWave {
    pub direction: Point,
    pub polarization: Point,
    pub amplitude: C64,
}

impl LaplaceWave {
    pub fn new(direction: Point, polarization: Point, amplitude: C64) -> Result<Self> {
        check_directions(&direction, &polarization)?;
        Ok(LaplaceWave { direction, polarization, amplitude })
    }

    /// `(E, curl E)` at `x` for wavenumber `ŝ = s/c₊`.
    pub fn field(&self, x: &Point, shat: C64) -> (CVec3, CVec3) {
        let e = (-shat * x.dot(&self.direction)).exp() * self.amplitude;
        (to_complex(&self.polarization) * e, to_complex(&self.direction.cross(&self.polarization)) * (-shat * e))
    }
}

/// Dual-coefficient traces `λ_i = ∫ (n × curl E)·f_i` and `φ_i = ∫ E·g_i` at Laplace parameter `s`.
pub fn incident_traces_ld(wave: &LaplaceWave, s: C64, c_plus: f64, spaces: &TraceSpaces) -> TraceData {
    let shat = s / c_plus;
    // (n × c)·f = -c·(n × f)
    let lambda = spaces.project_onto_dual(SpaceRole::Curl, TRACE_DEGREE, |x, _| -wave.field(x, shat).1);
    let phi = spaces.project_onto_dual(SpaceRole::Curl, TRACE_DEGREE, |x, _| wave.field(x, shat).0);
    TraceData { lambda, phi, s }
}

/// Real trace samples at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub lambda: Vec<f64>,
    pub phi: Vec<f64>,
}

pub fn incident_traces_td(wave: &PlaneWave, t: f64, c_plus: f64, spaces: &TraceSpaces) -> TraceSample {
    let lambda = spaces.project_onto_dual(SpaceRole::Curl, TRACE_DEGREE, |x, _| -to_complex(&wave.field(x, t, c_plus).1));
    let phi = spaces.project_onto_dual(SpaceRole::Curl, TRACE_DEGREE, |x, _| to_complex(&wave.field(x, t, c_plus).0));
    TraceSample { t, lambda: lambda.iter().map(|z| z.re).collect(), phi: phi.iter().map(|z| z.re).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_icosphere;
    use crate::quadrature::adaptive::adaptive_triangle;
    use std::sync::Arc;

    fn signal() -> Signal {
        Signal::new(2.0, 1.5, Window::C4).unwrap()
    }

    #[test]
    fn window_endpoints_and_smoothness() {
        for w in [Window::C4, Window::C5] {
            let c = w.coefficients();
            assert_eq!(c.len(), 2 * w.order() + 2);
            assert!((horner(&c, 1.0) - 1.0).abs() < 1e-12);
            // derivatives 1..=k vanish at 1
            let mut d = c.clone();
            for _ in 0..w.order() {
                d = (1..d.len()).map(|i| i as f64 * d[i]).collect();
                assert!(horner(&d, 1.0).abs() < 1e-9, "{w:?}");
            }
        }
    }

    #[test]
    fn signal_causal_and_saturates() {
        let s = signal();
        assert_eq!(s.eval(-1.0), 0.0);
        assert_eq!(s.eval(0.0), 0.0);
        for t in [1.5, 2.0, 3.7] {
            assert_eq!(s.eval(t), (2.0 * t).sin());
        }
    }

    #[test]
    fn first_four_derivatives_vanish_at_onset() {
        // forward differences of order k at t = 0 with step 1e-3, compared with their size
        // in the middle of the ramp
        let s = signal();
        let h = 1e-3;
        let fd = |k: usize, t0: f64| (0..=k).map(|j| binomial(k, j) * if (k - j) % 2 == 0 { 1.0 } else { -1.0 } * s.eval(t0 + j as f64 * h)).sum::<f64>() / h.powi(k as i32);
        for k in 1..=4usize {
            let onset = fd(k, 0.0);
            let interior = fd(k, 0.5 * s.ramp).abs().max(1.0);
            assert!(onset.abs() < 1e-2 * interior, "k={k}: {onset} vs {interior}");
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let s = signal();
        for t in [0.3, 0.9, 1.49, 2.2] {
            let fd = (s.eval(t + 1e-6) - s.eval(t - 1e-6)) / 2e-6;
            assert!((fd - s.derivative(t)).abs() < 1e-7);
        }
    }

    #[test]
    fn laplace_transform_matches_direct_quadrature() {
        let sig = signal();
        for s in [C64::new(1.0, 2.0), C64::new(0.3, -5.0), C64::new(20.0, 40.0)] {
            // truncate where e^{-Re s t} is negligible
            let t_end = 40.0 / s.re;
            let (x, w) = gauss_legendre(20);
            let panels = 4000;
            let h = t_end / panels as f64;
            let mut direct = C64::new(0.0, 0.0);
            for p in 0..panels {
                for (xi, wi) in x.iter().zip(&w) {
                    let t = (p as f64 + xi) * h;
                    direct += (-s * t).exp() * (sig.eval(t) * wi * h);
                }
            }
            let v = sig.laplace(s);
            assert!((v - direct).norm() < 1e-10 * direct.norm().max(1e-3), "s={s}: {v} vs {direct}");
        }
    }

    #[test]
    fn direction_checks() {
        let d = Point::new(0.0, 0.0, 1.0);
        assert!(LaplaceWave::new(d, Point::new(1.0, 0.0, 0.0), C64::new(1.0, 0.0)).is_ok());
        assert!(LaplaceWave::new(d, Point::new(0.0, 0.0, 1.0), C64::new(1.0, 0.0)).is_err());
        let w = LaplaceWave::new(d, Point::new(1.0, 0.0, 0.0), C64::new(1.0, 0.0)).unwrap();
        assert_eq!(w.direction.cross(&w.polarization), Point::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn onset_gives_initial_rest() {
        let mesh = make_icosphere(1, 1.0, Point::zeros()).unwrap();
        let d = Point::new(1.0, 2.0, 2.0) / 3.0;
        let pol = d.cross(&Point::new(0.0, 0.0, 1.0)).normalize();
        let pw = PlaneWave::new(d, pol, signal(), &mesh, 1.0).unwrap();
        assert!((pw.arrival(&mesh, 1.0) - 0.15).abs() < 1e-12);
        let spaces = build(&mesh);
        let sample = incident_traces_td(&pw, 0.149, 1.0, &spaces);
        assert!(sample.lambda.iter().chain(&sample.phi).all(|&v| v == 0.0));
        let later = incident_traces_td(&pw, 1.0, 1.0, &spaces);
        assert!(later.phi.iter().any(|&v| v != 0.0));
    }

    fn build(mesh: &SurfaceMesh) -> TraceSpaces {
        crate::trace_spaces::build_spaces(Arc::new(mesh.clone()))
    }

    #[test]
    fn zero_signal_gives_zero_traces() {
        let mesh = make_icosphere(0, 1.0, Point::zeros()).unwrap();
        let mut pw = PlaneWave::new(Point::new(0.0, 0.0, 1.0), Point::new(1.0, 0.0, 0.0), signal(), &mesh, 1.0).unwrap();
        pw.t0 = 1e6;
        let spaces = build(&mesh);
        for t in [0.0, 1.0, 10.0] {
            let s = incident_traces_td(&pw, t, 1.0, &spaces);
            assert!(s.lambda.iter().chain(&s.phi).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn projected_phi_matches_adaptive_oracle() {
        let mesh = make_icosphere(1, 1.0, Point::zeros()).unwrap();
        let spaces = build(&mesh);
        let w = LaplaceWave::new(Point::new(0.0, 0.0, 1.0), Point::new(1.0, 0.0, 0.0), C64::new(1.0, 0.5)).unwrap();
        let s = C64::new(1.0, 2.0);
        let data = incident_traces_ld(&w, s, 1.0, &spaces);
        for e in [0, 17, 55, 119] {
            let mut oracle = [C64::new(0.0, 0.0); 2];
            for &t in &mesh.edges[e].tris {
                let tri = mesh.corners(t);
                let v = adaptive_triangle(&tri, 2, 1e-12, |x, out| {
                    let (ev, cv) = w.field(x, s);
                    let g = to_complex(&spaces.basis(SpaceRole::Curl, e, t, x));
                    out[0] = ev.dot(&g);
                    out[1] = -cv.dot(&g);
                });
                oracle[0] += v[0];
                oracle[1] += v[1];
            }
            assert!((data.phi[e] - oracle[0]).norm() < 1e-8 * oracle[0].norm(), "phi {e}");
            assert!((data.lambda[e] - oracle[1]).norm() < 1e-8 * oracle[1].norm(), "lambda {e}");
        }
    }

    #[test]
    fn plane_wave_solves_wave_equation() {
        let mesh = make_icosphere(0, 1.0, Point::zeros()).unwrap();
        let c = 0.8;
        let pw = PlaneWave::new(Point::new(0.0, 0.6, 0.8), Point::new(1.0, 0.0, 0.0), signal(), &mesh, c).unwrap();
        let h = 1e-3;
        for (x, t) in [(Point::new(0.1, 0.2, -0.3), 2.0), (Point::new(-0.5, 0.4, 0.2), 2.7)] {
            let e = |y: &Point| to_complex(&pw.field(y, t, c).0);
            let cc = crate::oracle::fd_curl_curl(&e, &x, h);
            let ett = (pw.field(&x, t + h, c).0 - pw.field(&x, t, c).0 * 2.0 + pw.field(&x, t - h, c).0) / (h * h);
            let res = cc + to_complex(&(ett / (c * c)));
            assert!(res.norm() < 1e-3 * (to_complex(&ett).norm() / (c * c)), "{res}");
        }
    }
}
