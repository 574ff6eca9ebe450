//! Special functions for spherical-wave expansions and quadrature.
//!
//! Spherical Bessel functions accept complex arguments (fields inside a lossy
//! shell propagate with a complex wavenumber). `j_l` uses Miller's downward
//! recurrence, `h_l^(1)` the upward recurrence, which is stable for the
//! outgoing solution at every argument.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{CVec3, C64, I};

/// `j_0 .. j_lmax` at complex `z`.
pub fn spherical_jn(lmax: usize, z: C64) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); lmax + 1];
    if z.norm() == 0.0 {
        out[0] = C64::new(1.0, 0.0);
        return out;
    }
    let j0 = z.sin() / z;
    let j1 = z.sin() / (z * z) - z.cos() / z;
    if lmax == 0 {
        out[0] = j0;
        return out;
    }
    // Start well above both lmax and |z| so the minimal solution dominates.
    let start = lmax + z.norm().ceil() as usize + 40;
    let mut raw = vec![C64::new(0.0, 0.0); start + 2];
    raw[start] = C64::new(1.0, 0.0);
    for l in (1..=start).rev() {
        raw[l - 1] = C64::new((2 * l + 1) as f64, 0.0) / z * raw[l] - raw[l + 1];
        if raw[l - 1].norm() > 1e100 {
            let s = 1.0 / raw[l - 1].norm();
            for r in raw[l - 1..].iter_mut() {
                *r *= s;
            }
        }
    }
    let scale = if j0.norm() >= j1.norm() { j0 / raw[0] } else { j1 / raw[1] };
    for (o, r) in out.iter_mut().zip(raw.iter()) {
        *o = r * scale;
    }
    out
}

/// Outgoing spherical Hankel functions `h_0^(1) .. h_lmax^(1)`.
pub fn spherical_h1n(lmax: usize, z: C64) -> Vec<C64> {
    let e = (I * z).exp();
    let h0 = -I * e / z;
    let h1 = -e * (z + I) / (z * z);
    let mut out = Vec::with_capacity(lmax + 1);
    out.push(h0);
    if lmax >= 1 {
        out.push(h1);
    }
    for l in 1..lmax {
        let next = C64::new((2 * l + 1) as f64, 0.0) / z * out[l] - out[l - 1];
        out.push(next);
    }
    out
}

/// Riccati derivative `d/dr [r z_l(k r)]` expressed through `x = k r`:
/// `x z_{l-1}(x) - l z_l(x)`. Index 0 is unused (set to zero).
pub fn riccati_derivative(z: C64, values: &[C64]) -> Vec<C64> {
    let mut d = vec![C64::new(0.0, 0.0); values.len()];
    for l in 1..values.len() {
        d[l] = z * values[l - 1] - (l as f64) * values[l];
    }
    d
}

/// Index of `(l, m)` in a flat table holding `l = 0..=lmax`, `m = -l..=l`.
#[inline]
pub fn lm_index(l: usize, m: i64) -> usize {
    l * l + (m + l as i64) as usize
}

/// Orthonormal spherical harmonics `Y_lm(theta, phi)` with the Condon-Shortley
/// phase, for `l <= lmax`, evaluated at the unit direction `dir`.
pub fn spherical_harmonics(lmax: usize, dir: [f64; 3]) -> Vec<C64> {
    let (x, y, z) = (dir[0], dir[1], dir[2]);
    let ct = z.clamp(-1.0, 1.0);
    let st = (x * x + y * y).sqrt();
    let phi = if st > 0.0 { y.atan2(x) } else { 0.0 };

    // Normalized associated Legendre functions \bar P_l^m(cos theta) (CS phase),
    // such that Y_lm = \bar P_l^m e^{i m phi}.
    let n = (lmax + 1) * (lmax + 1);
    let mut p = vec![0.0f64; (lmax + 1) * (lmax + 1)];
    let pidx = |l: usize, m: usize| l * (lmax + 1) + m;
    p[pidx(0, 0)] = (1.0 / (4.0 * PI)).sqrt();
    for m in 1..=lmax {
        let prev = p[pidx(m - 1, m - 1)];
        p[pidx(m, m)] = -((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * st * prev;
    }
    for m in 0..lmax {
        p[pidx(m + 1, m)] = ((2 * m + 3) as f64).sqrt() * ct * p[pidx(m, m)];
    }
    for m in 0..=lmax {
        for l in (m + 2)..=lmax {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            p[pidx(l, m)] = a * (ct * p[pidx(l - 1, m)] - b * p[pidx(l - 2, m)]);
        }
    }

    let mut ylm = vec![C64::new(0.0, 0.0); n];
    for l in 0..=lmax {
        for m in 0..=l {
            let e = C64::from_polar(1.0, m as f64 * phi);
            let v = e * p[pidx(l, m)];
            ylm[lm_index(l, m as i64)] = v;
            if m > 0 {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                ylm[lm_index(l, -(m as i64))] = v.conj() * sign;
            }
        }
    }
    ylm
}

/// Vector spherical harmonics `X_lm = L Y_lm / sqrt(l(l+1))` in Cartesian
/// components, built from the ladder action of `L` on `Y_lm`. Entry `l = 0`
/// is zero.
pub fn vector_harmonics(lmax: usize, ylm: &[C64]) -> Vec<CVec3> {
    let zero = C64::new(0.0, 0.0);
    let mut out = vec![CVec3::new(zero, zero, zero); (lmax + 1) * (lmax + 1)];
    for l in 1..=lmax {
        let li = l as i64;
        let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
        for m in -li..=li {
            let y = ylm[lm_index(l, m)];
            let lp = if m < li {
                ylm[lm_index(l, m + 1)] * (((li - m) * (li + m + 1)) as f64).sqrt()
            } else {
                zero
            };
            let lm = if m > -li {
                ylm[lm_index(l, m - 1)] * (((li + m) * (li - m + 1)) as f64).sqrt()
            } else {
                zero
            };
            let lx = (lp + lm) * 0.5;
            let ly = (lp - lm) / (2.0 * I);
            let lz = y * m as f64;
            out[lm_index(l, m)] = CVec3::new(lx, ly, lz) * C64::new(norm, 0.0);
        }
    }
    out
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let mut p0 = 1.0;
        let mut p1 = 0.0;
        for j in 0..n {
            let p2 = p1;
            p1 = p0;
            p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
        }
        dp = if dp == 0.0 { 1.0 } else { n as f64 * (z * p0 - p1) / (z * z - 1.0) };
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

#[allow(clippy::excessive_precision)]
const KRONROD_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
#[allow(clippy::excessive_precision)]
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
/// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
#[allow(clippy::excessive_precision)]
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn kronrod15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = KRONROD_WEIGHTS[7] * fc;
    let mut g = GAUSS_WEIGHTS[3] * fc;
    for i in 0..7 {
        let x = h * KRONROD_NODES[i];
        let s = f(c - x) + f(c + x);
        k += KRONROD_WEIGHTS[i] * s;
        if i % 2 == 1 {
            g += GAUSS_WEIGHTS[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) quadrature. Bisects the interval with the
/// largest error estimate until the total estimate meets
/// `max(abs_tol, rel_tol |I|)`; returns `(integral, error estimate)`.
pub fn adaptive_quad(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<(f64, f64)> {
    let (v, e) = kronrod15(&mut f, a, b);
    let mut parts = vec![(a, b, v, e)];
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integrand on [{a}, {b}]")));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok((total, err));
        }
        if parts.len() >= max_intervals {
            return Err(Error::Quadrature(format!("{max_intervals} subintervals reached with error {err:e} on integral {total:e}")));
        }
        let worst = parts
            .iter()
            .enumerate()
            .fold(0, |w, (i, p)| if p.3 > parts[w].3 { i } else { w });
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = kronrod15(&mut f, lo, mid);
        let (v2, e2) = kronrod15(&mut f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
        // Keep summation order independent of the refinement history.
        parts.sort_by(|x, y| x.0.total_cmp(&y.0));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + b.norm())
    }

    #[test]
    fn bessel_closed_forms_real_argument() {
        for &x in &[0.3, 1.0, 7.5, 40.0] {
            let z = C64::new(x, 0.0);
            let j = spherical_jn(3, z);
            let j2 = (3.0 / (x * x) - 1.0) * x.sin() / x - 3.0 * x.cos() / (x * x);
            assert!(close(j[2], C64::new(j2, 0.0), 1e-12), "x={x} {} vs {j2}", j[2]);
            let h = spherical_h1n(3, z);
            let y0 = -x.cos() / x;
            assert!(close(h[0], C64::new(x.sin() / x, y0), 1e-13));
            let y2 = (-3.0 / (x * x) + 1.0) * x.cos() / x - 3.0 * x.sin() / (x * x);
            assert!(close(h[2], C64::new(j2, y2), 1e-11));
        }
    }

    #[test]
    fn bessel_small_argument_series() {
        let z = C64::new(1e-3, 0.0);
        let j = spherical_jn(10, z);
        // j_l(z) ~ z^l / (2l+1)!!
        let mut dfact = 1.0;
        for l in 1..=10 {
            dfact *= (2 * l + 1) as f64;
            let approx = 1e-3f64.powi(l as i32) / dfact;
            assert!((j[l].re - approx).abs() <= 1e-5 * approx, "l={l}");
        }
    }

    #[test]
    fn wronskian_complex_argument() {
        // j_l y_{l-1} - j_{l-1} y_l = 1/z^2, so with h = j + i y:
        // j_l h_{l-1} - j_{l-1} h_l = i / z^2.
        for &z in &[C64::new(3.0, 0.4), C64::new(25.0, 2.0), C64::new(0.7, 0.1)] {
            let j = spherical_jn(12, z);
            let h = spherical_h1n(12, z);
            for l in 1..=12 {
                let w = j[l] * h[l - 1] - j[l - 1] * h[l];
                let expected = I / (z * z);
                assert!((w - expected).norm() < 1e-9 * expected.norm(), "z={z} l={l} w={w}");
            }
        }
    }

    #[test]
    fn harmonics_orthonormal_on_gauss_grid() {
        let lmax = 4;
        let (ct, wt) = gauss_legendre(10);
        let nphi = 20;
        let n = (lmax + 1) * (lmax + 1);
        let mut gram = vec![C64::new(0.0, 0.0); n * n];
        for (c, w) in ct.iter().zip(&wt) {
            for ip in 0..nphi {
                let phi = 2.0 * PI * ip as f64 / nphi as f64;
                let s = (1.0 - c * c).sqrt();
                let y = spherical_harmonics(lmax, [s * phi.cos(), s * phi.sin(), *c]);
                let dw = w * 2.0 * PI / nphi as f64;
                for a in 0..n {
                    for b in 0..n {
                        gram[a * n + b] += y[a] * y[b].conj() * dw;
                    }
                }
            }
        }
        for a in 0..n {
            for b in 0..n {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((gram[a * n + b] - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn vector_harmonics_are_tangential_and_unit() {
        let dir = [0.3f64, -0.5, 0.812];
        let nrm = (dir.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let d = [dir[0] / nrm, dir[1] / nrm, dir[2] / nrm];
        let y = spherical_harmonics(5, d);
        let x = vector_harmonics(5, &y);
        for l in 1..=5usize {
            for m in -(l as i64)..=(l as i64) {
                let v = x[lm_index(l, m)];
                let radial = v[0] * d[0] + v[1] * d[1] + v[2] * d[2];
                assert!(radial.norm() < 1e-13);
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let i14: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((i14 - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_quad_resolves_a_narrow_peak() {
        let g = 1e-4;
        let (v, e) = adaptive_quad(|x| g / (x * x + g * g), -1.0, 1.0, 0.0, 1e-12, 2000).unwrap();
        let exact = 2.0 * (1.0 / g).atan();
        assert!((v - exact).abs() < 1e-10 * exact, "{v} {exact} {e}");
        assert!(adaptive_quad(|x| 1.0 / x.abs().sqrt(), -1.0, 1.0, 0.0, 1e-14, 10).is_err());
    }
}
