//! Independent reference solutions and verification diagnostics.

pub mod assembly;
pub mod jump;
pub mod mie;
pub mod stability;
pub mod time_domain;

use crate::geometry::Point;
use crate::trace_spaces::CVec3;
use crate::C64;

/// Central-difference curl of a complex vector field.
pub fn fd_curl<F: Fn(&Point) -> CVec3>(u: &F, x: &Point, h: f64) -> CVec3 {
    let mut jac = [[C64::new(0.0, 0.0); 3]; 3]; // jac[i][k] = ∂u_i/∂x_k
    for k in 0..3 {
        let mut e = Point::zeros();
        e[k] = h;
        let d = (u(&(x + e)) - u(&(x - e))) / C64::new(2.0 * h, 0.0);
        for i in 0..3 {
            jac[i][k] = d[i];
        }
    }
    CVec3::new(jac[2][1] - jac[1][2], jac[0][2] - jac[2][0], jac[1][0] - jac[0][1])
}

/// `curl curl u` by nested central differences.
pub fn fd_curl_curl<F: Fn(&Point) -> CVec3>(u: &F, x: &Point, h: f64) -> CVec3 {
    fd_curl(&|p: &Point| fd_curl(u, p, h), x, h)
}
