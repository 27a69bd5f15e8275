//! Series solution for a homogeneous sphere at complex Laplace parameter.
//!
//! Fields are expanded in `M = z_n(kr) X_nm` and `N = k⁻¹ curl M` with `k = i s/c`, so
//! that `e^{ikr}` decays for Re s > 0. `X_nm = ∇_Ω Y_nm × r̂` and `G_nm = ∇_Ω Y_nm` with
//! orthonormal complex harmonics. The incident expansion is obtained by projecting the
//! tangential trace of the plane wave on the sphere, then each degree `n` decouples into two
//! 2×2 interface systems (continuity of `πₜE` and of `μ⁻¹ γₜ curl E`).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::incident::{LaplaceWave, TRACE_DEGREE};
use crate::quadrature::gauss_legendre;
use crate::trace_spaces::{to_complex, CVec3, SpaceRole};
use crate::transmission::{DensityPair, Discretization, Materials};
use crate::C64;

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// Spherical Bessel `j_0..=j_n` by normalized downward recurrence.
pub fn spherical_j(n: usize, z: C64) -> Vec<C64> {
    if z.norm() < 1e-300 {
        let mut out = vec![C64::new(0.0, 0.0); n + 1];
        out[0] = C64::new(1.0, 0.0);
        return out;
    }
    let start = n + 20 + (z.norm() as usize) * 2;
    let mut vals = vec![C64::new(0.0, 0.0); start + 2];
    vals[start] = C64::new(1.0, 0.0);
    for k in (1..=start).rev() {
        vals[k - 1] = vals[k] * ((2 * k + 1) as f64) / z - vals[k + 1];
        // keep the recurrence in range
        if vals[k - 1].norm() > 1e100 {
            let scale = 1.0 / vals[k - 1].norm();
            for v in vals.iter_mut().skip(k - 1) {
                *v *= scale;
            }
        }
    }
    let j0 = z.sin() / z;
    let j1 = z.sin() / (z * z) - z.cos() / z;
    let scale = if j0.norm() >= j1.norm() { j0 / vals[0] } else { j1 / vals[1] };
    vals.truncate(n + 1);
    vals.iter().map(|v| v * scale).collect()
}

/// Spherical Hankel `h_0^(1)..=h_n^(1)` by upward recurrence.
pub fn spherical_h(n: usize, z: C64) -> Vec<C64> {
    let i = C64::i();
    let e = (i * z).exp();
    let mut out = vec![-i * e / z];
    if n >= 1 {
        out.push(-e * (z + i) / (z * z));
    }
    for k in 1..n {
        let next = out[k] * ((2 * k + 1) as f64) / z - out[k - 1];
        out.push(next);
    }
    out
}

/// `(ρ z_n(ρ))' = ρ z_{n-1} - n z_n` for `n >= 1`.
fn riccati_derivative(z: &[C64], rho: C64, n: usize) -> C64 {
    rho * z[n - 1] - z[n] * n as f64
}

/// Normalized associated Legendre values at one angle: `p[m][n]`, `q[m][n] = p/sinθ`
/// (m >= 1) and `dp[m][n] = dP/dθ`, Condon–Shortley phase included.
struct Legendre {
    p: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    dp: Vec<Vec<f64>>,
}

fn legendre(l: usize, theta: f64) -> Legendre {
    let (x, st) = (theta.cos(), theta.sin());
    let mut p = vec![vec![0.0; l + 1]; l + 1];
    let mut q = vec![vec![0.0; l + 1]; l + 1];
    let mut dp = vec![vec![0.0; l + 1]; l + 1];
    let mut pmm = 1.0 / FOUR_PI.sqrt();
    for m in 0..=l {
        let mut qmm = 0.0;
        if m > 0 {
            qmm = -((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * pmm;
            pmm = qmm * st;
        }
        p[m][m] = pmm;
        q[m][m] = qmm;
        for n in m + 1..=l {
            let nf = n as f64;
            let mf = m as f64;
            let a = ((4.0 * nf * nf - 1.0) / (nf * nf - mf * mf)).sqrt();
            let b = if n >= m + 2 { (((nf - 1.0).powi(2) - mf * mf) / (4.0 * (nf - 1.0).powi(2) - 1.0)).sqrt() } else { 0.0 };
            let (p2, q2) = if n >= m + 2 { (p[m][n - 2], q[m][n - 2]) } else { (0.0, 0.0) };
            p[m][n] = a * (x * p[m][n - 1] - b * p2);
            q[m][n] = a * (x * q[m][n - 1] - b * q2);
        }
    }
    for n in 1..=l {
        dp[0][n] = ((n * (n + 1)) as f64).sqrt() * p[1][n];
        for m in 1..=n {
            let (nf, mf) = (n as f64, m as f64);
            let c = ((2.0 * nf + 1.0) * (nf * nf - mf * mf) / (2.0 * nf - 1.0)).sqrt();
            let prev = if n > m { q[m][n - 1] } else { 0.0 };
            dp[m][n] = nf * x * q[m][n] - c * prev;
        }
    }
    Legendre { p, q, dp }
}

fn idx(n: usize, m: i64) -> usize {
    (n * n - 1) + (m + n as i64) as usize
}

/// Spherical frame at a direction: `(r̂, θ̂, φ̂, θ, φ)`.
fn frame(x: &Point) -> (Point, Point, Point, f64, f64) {
    let r = x.norm();
    let theta = (x.z / r).clamp(-1.0, 1.0).acos();
    let phi = x.y.atan2(x.x);
    let (st, ct, sp, cp) = (theta.sin(), theta.cos(), phi.sin(), phi.cos());
    (Point::new(st * cp, st * sp, ct), Point::new(ct * cp, ct * sp, -st), Point::new(-sp, cp, 0.0), theta, phi)
}

/// `Y_nm`, `G_nm = ∇_Ω Y_nm` and `X_nm = G_nm × r̂` for all `1 <= n <= l`.
fn harmonics(l: usize, x: &Point) -> (Point, Vec<C64>, Vec<CVec3>, Vec<CVec3>) {
    let (rh, th, ph, theta, phi) = frame(x);
    let leg = legendre(l, theta);
    let size = (l + 1) * (l + 1) - 1;
    let mut y = vec![C64::new(0.0, 0.0); size];
    let mut g = vec![CVec3::zeros(); size];
    let mut xv = vec![CVec3::zeros(); size];
    let (thc, phc, rhc) = (to_complex(&th), to_complex(&ph), to_complex(&rh));
    for n in 1..=l {
        for m in -(n as i64)..=(n as i64) {
            let am = m.unsigned_abs() as usize;
            let sign = if m < 0 && am % 2 == 1 { -1.0 } else { 1.0 };
            let e = C64::from_polar(sign, m as f64 * phi);
            let k = idx(n, m);
            y[k] = e * leg.p[am][n];
            let gv = thc * (e * leg.dp[am][n]) + phc * (e * C64::new(0.0, m as f64) * if am > 0 { leg.q[am][n] } else { 0.0 });
            g[k] = gv;
            xv[k] = gv.cross(&rhc);
        }
    }
    (rh, y, g, xv)
}

/// Per-degree coefficients of the sphere solution.
#[derive(Debug, Clone, Serialize)]
pub struct MieSolution {
    pub radius: f64,
    pub materials: Materials,
    pub s: C64,
    pub l_max: usize,
    pub k_plus: C64,
    pub k_minus: C64,
    /// incident, scattered and interior coefficients of the M and N families
    pub inc_m: Vec<C64>,
    pub inc_n: Vec<C64>,
    pub scat_m: Vec<C64>,
    pub scat_n: Vec<C64>,
    pub int_m: Vec<C64>,
    pub int_n: Vec<C64>,
}

fn solve2(a: [[C64; 2]; 2], b: [C64; 2]) -> Result<[C64; 2]> {
    // columns differ by many orders of magnitude at high degree
    let c0 = a[0][0].norm().max(a[1][0].norm());
    let c1 = a[0][1].norm().max(a[1][1].norm());
    if !(c0 > 0.0 && c1 > 0.0 && c0.is_finite() && c1.is_finite()) {
        return Err(Error::Singular { s: String::new(), detail: "sphere mode system".into() });
    }
    let m = [[a[0][0] / c0, a[0][1] / c1], [a[1][0] / c0, a[1][1] / c1]];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(det.norm() > 1e-14) {
        return Err(Error::Singular { s: String::new(), detail: "sphere mode system".into() });
    }
    Ok([(b[0] * m[1][1] - m[0][1] * b[1]) / det / c0, (m[0][0] * b[1] - m[1][0] * b[0]) / det / c1])
}

/// Default truncation `|s a / c| + 20` over both media.
pub fn default_order(radius: f64, materials: &Materials, s: C64) -> usize {
    let k = (s.norm() * radius / materials.c_plus()).max(s.norm() * radius / materials.c_minus());
    k.ceil() as usize + 20
}

/// Sphere of the given radius centered at the origin, illuminated by `wave` (evaluated with `s/c₊`).
pub fn mie_sphere_ld(radius: f64, materials: &Materials, s: C64, wave: &LaplaceWave, l_max: Option<usize>) -> Result<MieSolution> {
    crate::operators::LaplaceParam::new(s)?;
    materials.validate()?;
    if !(radius > 0.0) {
        return Err(Error::InvalidInput("sphere radius must be positive".into()));
    }
    let l = l_max.unwrap_or_else(|| default_order(radius, materials, s));
    let (kp, km) = (C64::i() * s / materials.c_plus(), C64::i() * s / materials.c_minus());
    let (mu_p, mu_m) = (materials.mu_plus, materials.mu_minus);
    let size = (l + 1) * (l + 1) - 1;

    // tangential projection of the incident trace at r = a
    let nt = l + 24;
    let nphi = 2 * l + 24;
    let (gx, gw) = gauss_legendre(nt);
    let mut a_tan = vec![C64::new(0.0, 0.0); size];
    let mut b_tan = vec![C64::new(0.0, 0.0); size];
    let shat = s / materials.c_plus();
    for (u, w) in gx.iter().zip(&gw) {
        let ct = 2.0 * u - 1.0;
        let st = (1.0 - ct * ct).sqrt();
        for k in 0..nphi {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / nphi as f64;
            let dir = Point::new(st * phi.cos(), st * phi.sin(), ct);
            let weight = 2.0 * w * 2.0 * std::f64::consts::PI / nphi as f64;
            let e = wave.field(&(dir * radius), shat).0;
            let (_, _, g, xv) = harmonics(l, &dir);
            for i in 0..size {
                a_tan[i] += e.dot(&xv[i].map(|z| z.conj())) * weight;
                b_tan[i] += e.dot(&g[i].map(|z| z.conj())) * weight;
            }
        }
    }

    let (jp, hp, jm) = (spherical_j(l, kp * radius), spherical_h(l, kp * radius), spherical_j(l, km * radius));
    let (rp, rm) = (kp * radius, km * radius);
    let mut sol = MieSolution {
        radius,
        materials: *materials,
        s,
        l_max: l,
        k_plus: kp,
        k_minus: km,
        inc_m: vec![C64::new(0.0, 0.0); size],
        inc_n: vec![C64::new(0.0, 0.0); size],
        scat_m: vec![C64::new(0.0, 0.0); size],
        scat_n: vec![C64::new(0.0, 0.0); size],
        int_m: vec![C64::new(0.0, 0.0); size],
        int_n: vec![C64::new(0.0, 0.0); size],
    };
    for n in 1..=l {
        let nn = (n * (n + 1)) as f64;
        let (psi_p, xi_p, psi_m) = (riccati_derivative(&jp, rp, n), riccati_derivative(&hp, rp, n), riccati_derivative(&jm, rm, n));
        let te = [[hp[n], -jm[n]], [xi_p / mu_p, -psi_m / mu_m]];
        let tm = [[xi_p / rp, -psi_m / rm], [kp * hp[n] / mu_p, -km * jm[n] / mu_m]];
        for m in -(n as i64)..=(n as i64) {
            let i = idx(n, m);
            let alpha_m = a_tan[i] / nn / jp[n];
            let alpha_n = b_tan[i] / nn * rp / psi_p;
            let [bm, gm] = solve2(te, [-alpha_m * jp[n], -alpha_m * psi_p / mu_p]).map_err(|e| with_s(e, s))?;
            let [bn, gn] = solve2(tm, [-alpha_n * psi_p / rp, -alpha_n * kp * jp[n] / mu_p]).map_err(|e| with_s(e, s))?;
            sol.inc_m[i] = alpha_m;
            sol.inc_n[i] = alpha_n;
            sol.scat_m[i] = bm;
            sol.scat_n[i] = bn;
            sol.int_m[i] = gm;
            sol.int_n[i] = gn;
        }
    }
    Ok(sol)
}

fn with_s(e: Error, s: C64) -> Error {
    match e {
        Error::Singular { detail, .. } => Error::Singular { s: s.to_string(), detail },
        e => e,
    }
}

/// Which expansion to sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MieField {
    Incident,
    Scattered,
    Interior,
}

impl MieSolution {
    /// `(E, curl E)` of one expansion at `x`, truncated at degree `l`.
    pub fn expansion(&self, which: MieField, x: &Point, l: usize) -> (CVec3, CVec3) {
        let l = l.min(self.l_max);
        let r = x.norm();
        let (k, cm, cn) = match which {
            MieField::Incident => (self.k_plus, &self.inc_m, &self.inc_n),
            MieField::Scattered => (self.k_plus, &self.scat_m, &self.scat_n),
            MieField::Interior => (self.k_minus, &self.int_m, &self.int_n),
        };
        let rho = k * r;
        let z = match which {
            MieField::Scattered => spherical_h(l, rho),
            _ => spherical_j(l, rho),
        };
        let (rh, y, g, xv) = harmonics(l, x);
        let rhc = to_complex(&rh);
        let mut e = CVec3::zeros();
        let mut curl = CVec3::zeros();
        for n in 1..=l {
            let nn = (n * (n + 1)) as f64;
            let zr = z[n] / rho;
            let dz = riccati_derivative(&z, rho, n) / rho;
            for m in -(n as i64)..=(n as i64) {
                let i = idx(n, m);
                let mv = xv[i] * z[n];
                let nv = rhc * (y[i] * zr * nn) + g[i] * dz;
                e += mv * cm[i] + nv * cn[i];
                curl += (nv * cm[i] + mv * cn[i]) * k;
            }
        }
        (e, curl)
    }

    /// Scattered field outside, total field inside.
    pub fn eval(&self, x: &Point) -> Result<(CVec3, CVec3)> {
        let r = x.norm();
        if (r - self.radius).abs() <= 1e-12 * self.radius {
            return Err(Error::OnSurface(format!("{x:?} lies on the sphere")));
        }
        Ok(self.expansion(if r > self.radius { MieField::Scattered } else { MieField::Interior }, x, self.l_max))
    }
}

/// Interior traces `(πₜE, γₜ curl E / (sμ₋))` of the sphere solution projected onto the
/// discrete spaces, in the same coefficient layout as the solver densities `(m, j)`.
pub fn mie_densities(sol: &MieSolution, disc: &Discretization) -> DensityPair {
    let l = sol.l_max;
    let scale = C64::from(1.0) / (sol.s * sol.materials.mu_minus);
    let m = disc.spaces.project_onto_dual(SpaceRole::Curl, TRACE_DEGREE, |x, _| sol.expansion(MieField::Interior, x, l).0);
    let j = disc.spaces.project_onto_dual(SpaceRole::Curl, TRACE_DEGREE, |x, _| -sol.expansion(MieField::Interior, x, l).1 * scale);
    DensityPair { j: disc.to_primal(&j), m: disc.to_primal(&m) }
}

/// Electric field only, see [`MieSolution::eval`].
pub fn eval_mie(sol: &MieSolution, x: &Point) -> Result<CVec3> {
    Ok(sol.eval(x)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{fd_curl, fd_curl_curl};

    fn wave() -> LaplaceWave {
        LaplaceWave::new(Point::new(0.0, 0.6, 0.8), Point::new(1.0, 0.0, 0.0), C64::new(1.0, 0.0)).unwrap()
    }

    fn dielectric() -> Materials {
        Materials::new(1.0, 1.0, 4.0, 1.0).unwrap()
    }

    #[test]
    fn bessel_functions_match_closed_forms() {
        for z in [C64::new(0.7, 0.0), C64::new(-2.0, 1.0), C64::new(3.0, -4.0)] {
            let j = spherical_j(3, z);
            let h = spherical_h(3, z);
            let j2 = (C64::from(3.0) / (z * z) - 1.0) * z.sin() / z - C64::from(3.0) * z.cos() / (z * z);
            assert!((j[2] - j2).norm() < 1e-12 * j2.norm().max(1e-3), "{z} {} {j2}", j[2]);
            // h = j + i y with y_0 = -cos z / z
            let y0 = -z.cos() / z;
            assert!((h[0] - (j[0] + C64::i() * y0)).norm() < 1e-12 * h[0].norm());
            // Wronskian j_n y_{n+1} - j_{n+1} y_n = -1/z², y = (h - j)/i
            let y: Vec<C64> = h.iter().zip(&j).map(|(a, b)| (a - b) / C64::i()).collect();
            for n in 0..3 {
                let w = j[n] * y[n + 1] - j[n + 1] * y[n];
                assert!((w + C64::from(1.0) / (z * z)).norm() < 1e-9 * (1.0 / (z * z)).norm(), "{z} n={n}");
            }
        }
    }

    #[test]
    fn small_argument_bessel_matches_series() {
        let z = C64::new(0.01, 0.02);
        let j = spherical_j(2, z);
        let series = z * z / 15.0 * (C64::from(1.0) - z * z / 14.0 + z * z * z * z / 504.0);
        assert!((j[2] - series).norm() < 1e-12 * series.norm(), "{}", (j[2] - series).norm() / series.norm());
    }

    #[test]
    fn legendre_derivative_and_quotient() {
        let l = 8;
        for theta in [0.3, 1.2, 2.9] {
            let a = legendre(l, theta);
            let h = 1e-6;
            let (ap, am) = (legendre(l, theta + h), legendre(l, theta - h));
            for m in 0..=l {
                for n in m.max(1)..=l {
                    let fd = (ap.p[m][n] - am.p[m][n]) / (2.0 * h);
                    assert!((fd - a.dp[m][n]).abs() < 1e-7, "m={m} n={n}");
                    if m > 0 {
                        assert!((a.q[m][n] * theta.sin() - a.p[m][n]).abs() < 1e-13);
                    }
                }
            }
        }
        // orthonormality of Y_n^0 over the sphere: ∫ P̄_n² 2π dx = 1
        let (x, w) = gauss_legendre(20);
        let norm: f64 = x.iter().zip(&w).map(|(u, wi)| {
            let th = (2.0 * u - 1.0).acos();
            2.0 * wi * 2.0 * std::f64::consts::PI * legendre(4, th).p[0][4].powi(2)
        }).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pole_is_regular() {
        let (_, _, g, _) = harmonics(5, &Point::new(0.0, 0.0, 0.3));
        assert!(g.iter().all(|v| v.iter().all(|z| z.re.is_finite() && z.im.is_finite())));
        // continuity approaching the pole
        let (_, _, g2, _) = harmonics(5, &Point::new(1e-7, 0.0, 0.3));
        for (a, b) in g.iter().zip(&g2) {
            assert!((a - b).norm() < 1e-5);
        }
    }

    #[test]
    fn equal_materials_reproduce_incident() {
        let mat = Materials::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let s = C64::new(1.0, 2.0);
        let sol = mie_sphere_ld(1.0, &mat, s, &wave(), None).unwrap();
        let maxc = sol.inc_m.iter().chain(&sol.inc_n).map(|z| z.norm()).fold(0.0, f64::max);
        assert!(sol.scat_m.iter().chain(&sol.scat_n).all(|z| z.norm() < 1e-14 * maxc));
        for x in [Point::new(0.0, 0.0, 0.3), Point::new(0.2, -0.5, 0.4)] {
            let e = eval_mie(&sol, &x).unwrap();
            let inc = wave().field(&x, s).0;
            assert!((e - inc).norm() < 1e-10 * inc.norm(), "{}", (e - inc).norm() / inc.norm());
        }
    }

    #[test]
    fn interface_conditions_hold() {
        let mat = Materials::new(1.0, 1.0, 4.0, 2.0).unwrap();
        let s = C64::new(1.0, 2.0);
        let sol = mie_sphere_ld(1.0, &mat, s, &wave(), None).unwrap();
        let l = sol.l_max;
        for k in 0..12 {
            let t = k as f64 * 0.5 + 0.1;
            let dir = Point::new(t.cos() * (0.3 * t).sin(), t.sin() * (0.3 * t).sin(), (0.3 * t).cos()).normalize();
            let n = to_complex(&dir);
            let (ei, ci) = sol.expansion(MieField::Interior, &dir, l);
            let (es, cs) = sol.expansion(MieField::Scattered, &dir, l);
            let (e0, c0) = wave().field(&dir, s);
            let jump_e = n.cross(&(ei - es - e0));
            let jump_c = n.cross(&(ci * C64::from(1.0 / mat.mu_minus) - (cs + c0) * C64::from(1.0 / mat.mu_plus)));
            assert!(jump_e.norm() < 1e-10 * e0.norm(), "{}", jump_e.norm());
            assert!(jump_c.norm() < 1e-10 * c0.norm(), "{}", jump_c.norm());
        }
    }

    #[test]
    fn truncation_invariance() {
        let s = C64::new(1.0, 2.0);
        let sol = mie_sphere_ld(1.0, &dielectric(), s, &wave(), None).unwrap();
        let more = mie_sphere_ld(1.0, &dielectric(), s, &wave(), Some(sol.l_max + 5)).unwrap();
        for x in [Point::new(0.0, 0.0, 0.3), Point::new(0.0, 0.0, 2.0), Point::new(1.5, -1.0, 0.5)] {
            let (a, b) = (eval_mie(&sol, &x).unwrap(), eval_mie(&more, &x).unwrap());
            assert!((a - b).norm() < 1e-10 * a.norm());
        }
    }

    #[test]
    fn fields_solve_maxwell() {
        let mat = dielectric();
        let s = C64::new(1.0, 2.0);
        let sol = mie_sphere_ld(1.0, &mat, s, &wave(), None).unwrap();
        for (x, c) in [(Point::new(0.2, 0.1, 0.3), mat.c_minus()), (Point::new(0.5, 1.2, -1.3), mat.c_plus())] {
            let f = |y: &Point| sol.eval(y).unwrap().0;
            let e = f(&x);
            let shat = s / c;
            let res = fd_curl_curl(&f, &x, 1e-3) + e * (shat * shat);
            assert!(res.norm() < 1e-3 * (e * (shat * shat)).norm(), "{}", res.norm() / (e * shat * shat).norm());
            let curl = sol.eval(&x).unwrap().1;
            assert!((fd_curl(&f, &x, 1e-4) - curl).norm() < 1e-6 * curl.norm());
        }
    }

    #[test]
    fn exterior_field_decays() {
        let s = C64::new(1.0, 2.0);
        let sol = mie_sphere_ld(1.0, &dielectric(), s, &wave(), None).unwrap();
        let dir = Point::new(0.3, 0.4, 0.5).normalize();
        let (r1, r2) = (6.0, 12.0);
        let (e1, e2) = (eval_mie(&sol, &(dir * r1)).unwrap().norm(), eval_mie(&sol, &(dir * r2)).unwrap().norm());
        // |E| r e^{σ r / c} tends to a constant
        let (a1, a2) = (e1 * r1 * (s.re * r1).exp(), e2 * r2 * (s.re * r2).exp());
        assert!((a1 / a2 - 1.0).abs() < 0.2, "{a1} {a2}");
    }
}
