//! Closed-form retarded vacuum dyadic Green tensor.
//!
//! `G(x, x') = (I + grad grad / k^2) e^{ikr} / (4 pi r)` solves
//! `curl curl G - k^2 G = I delta(x - x')` with the outgoing-wave condition.
//! The field radiated by a dipole `p` is `k^2 G p`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{CVec3, Dyad, Vec3, C64, I};

/// Vacuum Green tensor at wavenumber `k = omega / c`.
pub fn vacuum_green(k: f64, x: &Vec3, xp: &Vec3) -> Result<Dyad> {
    let d = x - xp;
    let r = d.norm();
    if r == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    Ok(vacuum_green_unchecked(k, &d, r))
}

#[inline]
pub(crate) fn vacuum_green_unchecked(k: f64, d: &Vec3, r: f64) -> Dyad {
    let kr = k * r;
    let g = (I * kr).exp() / (4.0 * PI * r);
    let inv = 1.0 / kr;
    let inv2 = inv * inv;
    // (1 + i/kr - 1/(kr)^2) I + (-1 - 3i/kr + 3/(kr)^2) rhat rhat
    let a = g * C64::new(1.0 - inv2, inv);
    let b = g * C64::new(-1.0 + 3.0 * inv2, -3.0 * inv);
    let u = d / r;
    let mut out = Dyad::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let mut v = b * (u[i] * u[j]);
            if i == j {
                v += a;
            }
            out[(i, j)] = v;
        }
    }
    out
}

/// Curl with respect to the first argument: `(curl G) e_j = grad g x e_j`.
pub fn vacuum_green_curl(k: f64, x: &Vec3, xp: &Vec3) -> Result<Dyad> {
    let d = x - xp;
    let r = d.norm();
    if r == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    let g = (I * k * r).exp() / (4.0 * PI * r);
    let gp = g * C64::new(-1.0 / r, k);
    let grad = CVec3::new(gp * (d[0] / r), gp * (d[1] / r), gp * (d[2] / r));
    // (grad g x e_j)_i = eps_{i l j} grad_l
    let mut out = Dyad::zeros();
    out[(0, 1)] = -grad[2];
    out[(0, 2)] = grad[1];
    out[(1, 0)] = grad[2];
    out[(1, 2)] = -grad[0];
    out[(2, 0)] = -grad[1];
    out[(2, 1)] = grad[0];
    Ok(out)
}

/// Imaginary part of the vacuum Green tensor at coincidence: `k / (6 pi) I`.
pub fn vacuum_imag_coincident(k: f64) -> f64 {
    k / (6.0 * PI)
}
