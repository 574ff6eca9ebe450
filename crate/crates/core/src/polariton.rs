//! Bulk Drude-Lorentz polaritons: transverse branches `w_a^2 = W^2 eps(W)`,
//! the dispersionless longitudinal root `eps(W) = 0`, and the spectral weight
//! that defines effective photon operators in a frequency window.

use std::f64::consts::PI;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::material::DrudeLorentzModel;
use crate::special::adaptive_quad;
use crate::units::Units;

pub const NEWTON_MAX_STEPS: usize = 100;
/// Transverse roots must satisfy `|w_a^2 - W^2 eps(W)| <= ROOT_TOLERANCE w_L^2`.
pub const ROOT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_WINDOW: f64 = 10.0;
/// Relative finite-difference step for `dW^2/dw_a^2`.
pub const DERIVATIVE_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Upper,
    Lower,
    Longitudinal,
}

impl Branch {
    pub fn tag(self) -> &'static str {
        match self {
            Branch::Upper => "upper",
            Branch::Lower => "lower",
            Branch::Longitudinal => "longitudinal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchPoint {
    pub omega_alpha: f64,
    pub branch: Branch,
    pub omega: C64,
    /// Transverse: `|w_a^2 - W^2 eps(W)|`, multiplied by the pole factor
    /// near the pole of `eps` (see `transverse_residual`). Longitudinal: `|eps(W)|`.
    pub residual: f64,
}

/// Lossless transverse roots `(W+, W-)`.
pub fn lossless_transverse(omega_p: f64, omega_0: f64, omega_alpha: f64) -> (f64, f64) {
    let wl2 = omega_p * omega_p + omega_0 * omega_0;
    let a2 = omega_alpha * omega_alpha;
    let s = a2 + wl2;
    let disc = (s * s - 4.0 * a2 * omega_0 * omega_0).max(0.0).sqrt();
    let plus2 = 0.5 * (s + disc);
    // Product form avoids cancellation in the lower root.
    let minus2 = if plus2 > 0.0 { a2 * omega_0 * omega_0 / plus2 } else { 0.0 };
    (plus2.sqrt(), minus2.sqrt())
}

/// `|w_a^2 - W^2 eps(W)|`, or the same equation multiplied through by the
/// pole factor `(w0^2 - (W + i g)^2) / w_L^2` when that factor is below one.
/// Next to the pole of `eps` the plain form loses all digits: even the
/// correctly rounded root leaves a residual of order `f'(W) ulp(W)`.
fn transverse_residual(m: &DrudeLorentzModel, omega_alpha: f64, w: C64) -> f64 {
    let wl2 = m.omega_l().powi(2);
    let z = w + C64::new(0.0, m.gamma);
    let pole = (m.omega_0 * m.omega_0 - z * z).norm();
    if pole < wl2 {
        transverse_polynomial(m, omega_alpha, w).0.norm() / wl2
    } else {
        (omega_alpha * omega_alpha - w * w * m.eval_complex(w)).norm()
    }
}

/// Pole-free form `(w_a^2 - W^2)(w0^2 - (W + i g)^2) - wp^2 W^2` and its
/// derivative.
fn transverse_polynomial(m: &DrudeLorentzModel, omega_alpha: f64, w: C64) -> (C64, C64) {
    let (a, b, p) = (omega_alpha * omega_alpha, m.omega_0 * m.omega_0, m.omega_p * m.omega_p);
    let z = w + C64::new(0.0, m.gamma);
    let (u, v) = (a - w * w, b - z * z);
    (u * v - p * w * w, -2.0 * w * v - 2.0 * z * u - 2.0 * p * w)
}

/// Damped Newton on the polynomial form from `seed`; convergence is judged
/// by [`transverse_residual`].
fn newton_transverse(m: &DrudeLorentzModel, omega_alpha: f64, seed: C64) -> Result<C64> {
    let tol = ROOT_TOLERANCE * m.omega_l().powi(2);
    let mut w = seed;
    let (mut f, mut df) = transverse_polynomial(m, omega_alpha, w);
    let mut trace = Vec::new();
    for _ in 0..NEWTON_MAX_STEPS {
        if df.norm() == 0.0 {
            break;
        }
        let step = f / df;
        let mut t = 1.0;
        loop {
            let cand = w - step * t;
            let (fc, dfc) = transverse_polynomial(m, omega_alpha, cand);
            if fc.norm() < f.norm() || t < 1e-6 {
                w = cand;
                f = fc;
                df = dfc;
                break;
            }
            t *= 0.5;
        }
        trace.push(format!("{:.6e}", f.norm()));
        if (step * t).norm() <= 4.0 * f64::EPSILON * w.norm().max(1e-300) || f.norm() == 0.0 {
            break;
        }
    }
    if transverse_residual(m, omega_alpha, w) <= tol {
        return Ok(w);
    }
    Err(Error::NoConvergence { iterations: NEWTON_MAX_STEPS, trace: trace.join(", ") })
}

fn transverse_from(m: &DrudeLorentzModel, omega_alpha: f64, seeds: (C64, C64)) -> Result<(BranchPoint, BranchPoint)> {
    m.validate()?;
    if !(omega_alpha >= 0.0) {
        return Err(Error::param(format!("omega_alpha must be nonnegative, got {omega_alpha}")));
    }
    let mk = |branch, seed: C64| -> Result<BranchPoint> {
        let w = if omega_alpha == 0.0 && branch == Branch::Lower { C64::new(0.0, 0.0) } else { newton_transverse(m, omega_alpha, seed)? };
        Ok(BranchPoint { omega_alpha, branch, omega: w, residual: transverse_residual(m, omega_alpha, w) })
    };
    Ok((mk(Branch::Upper, seeds.0)?, mk(Branch::Lower, seeds.1)?))
}

/// Lossy transverse roots seeded from the lossless closed form.
pub fn transverse_branches(m: &DrudeLorentzModel, omega_alpha: f64) -> Result<(BranchPoint, BranchPoint)> {
    let (p, q) = lossless_transverse(m.omega_p, m.omega_0, omega_alpha);
    transverse_from(m, omega_alpha, (C64::new(p, -0.5 * m.gamma), C64::new(q, -0.5 * m.gamma)))
}

/// `W = w_L - i gamma`.
pub fn longitudinal_branch(m: &DrudeLorentzModel) -> BranchPoint {
    let omega = C64::new(m.omega_l(), -m.gamma);
    BranchPoint { omega_alpha: f64::NAN, branch: Branch::Longitudinal, omega, residual: m.eval_complex(omega).norm() }
}

/// Warning when the damping is too large for the weak-loss reading of the
/// longitudinal root.
pub fn longitudinal_warning(m: &DrudeLorentzModel) -> Option<String> {
    (m.gamma > 0.1 * m.omega_l()).then(|| {
        format!("gamma = {} exceeds 0.1 w_L = {}; the weak-loss reading of the longitudinal root degrades", m.gamma, 0.1 * m.omega_l())
    })
}

/// Sweep that seeds every root from the previous one, so branches never
/// swap.
pub fn dispersion_sweep(m: &DrudeLorentzModel, omegas: &[f64]) -> Result<Vec<BranchPoint>> {
    let mut out = Vec::with_capacity(3 * omegas.len());
    let mut prev: Option<(f64, C64, C64)> = None;
    for &wa in omegas {
        let (p, q) = lossless_transverse(m.omega_p, m.omega_0, wa);
        let seeds = match prev {
            None => (C64::new(p, -0.5 * m.gamma), C64::new(q, -0.5 * m.gamma)),
            Some((w0, up, lo)) => {
                let (p0, q0) = lossless_transverse(m.omega_p, m.omega_0, w0);
                (up + (p - p0), lo + (q - q0))
            }
        };
        let (u, l) = transverse_from(m, wa, seeds)?;
        prev = Some((wa, u.omega, l.omega));
        let mut lg = longitudinal_branch(m);
        lg.omega_alpha = wa;
        out.extend([u, l, lg]);
    }
    Ok(out)
}

/// `w^2 / (w_a^2 - w^2 eps(w)) * sqrt(hbar eps''(w) / pi)`.
pub fn effective_photon_weight(m: &DrudeLorentzModel, omega: f64, omega_alpha: f64, units: &Units) -> Result<C64> {
    if !(omega > 0.0) {
        return Err(Error::param(format!("omega must be positive, got {omega}")));
    }
    let eps = m.eval(omega);
    let amp = (units.hbar * eps.im.max(0.0) / PI).sqrt();
    Ok(omega * omega / (omega_alpha * omega_alpha - omega * omega * eps) * amp)
}

fn branch_root(m: &DrudeLorentzModel, omega_alpha: f64, branch: Branch) -> Result<C64> {
    Ok(match branch {
        Branch::Upper => transverse_branches(m, omega_alpha)?.0.omega,
        Branch::Lower => transverse_branches(m, omega_alpha)?.1.omega,
        Branch::Longitudinal => longitudinal_branch(m).omega,
    })
}

/// `dW^2/dw_a^2` by central differences in `w_a` at steps `h` and `h/2`
/// with Richardson extrapolation; returns `(value, error bar)`.
pub fn branch_slope(m: &DrudeLorentzModel, omega_alpha: f64, branch: Branch) -> Result<(C64, f64)> {
    if branch == Branch::Longitudinal {
        return Ok((C64::new(0.0, 0.0), 0.0));
    }
    if !(omega_alpha > 0.0) {
        return Err(Error::param("the branch slope needs omega_alpha > 0"));
    }
    let diff = |h: f64| -> Result<C64> {
        let hi = branch_root(m, omega_alpha + h, branch)?;
        let lo = branch_root(m, omega_alpha - h, branch)?;
        // dW^2/dw_a^2 = (dW^2/dw_a) / (2 w_a)
        Ok((hi * hi - lo * lo) / (2.0 * h) / (2.0 * omega_alpha))
    };
    let h = DERIVATIVE_STEP * omega_alpha;
    let d1 = diff(h)?;
    let d2 = diff(0.5 * h)?;
    Ok(((4.0 * d2 - d1) / 3.0, (d2 - d1).norm() / 3.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowNorm {
    pub branch: Branch,
    pub omega_alpha: f64,
    pub halfwidths: f64,
    pub center: f64,
    pub halfwidth: f64,
    /// `sqrt(int_window |weight|^2 dw)`.
    pub raw: f64,
    /// `|sqrt(hbar W / 2 * dW^2/dw_a^2)|`.
    pub n_pred: f64,
    /// `raw / n_pred`, absent when `n_pred` vanishes.
    pub ratio: Option<f64>,
    pub quadrature_error: f64,
    pub slope_error: f64,
}

/// Window integral of the squared spectral weight around `Re W` with half
/// width `w |Im W|`, compared with the closed-form normalization.
pub fn window_integral_norm(m: &DrudeLorentzModel, omega_alpha: f64, branch: Branch, w: f64, units: &Units) -> Result<WindowNorm> {
    if !(w >= 3.0) {
        return Err(Error::param(format!("window half-width must be at least 3 attenuation widths, got {w}")));
    }
    let root = branch_root(m, omega_alpha, branch)?;
    let center = root.re;
    let halfwidth = w * root.im.abs();
    if !(halfwidth > 0.0) || center - halfwidth <= 0.0 {
        return Err(Error::Quadrature(format!("window [{}, {}] is empty or reaches w <= 0", center - halfwidth, center + halfwidth)));
    }
    let f = |x: f64| effective_photon_weight(m, x, omega_alpha, units).map(|z| z.norm_sqr()).unwrap_or(f64::NAN);
    let peak = f(center).max(f64::MIN_POSITIVE);
    let tol = 1e-12 * peak * halfwidth;
    let (left, e1) = adaptive_quad(f, center - halfwidth, center, tol, 1e-10, 4000)?;
    let (right, e2) = adaptive_quad(f, center, center + halfwidth, tol, 1e-10, 4000)?;
    let integral = left + right;
    let qerr = e1 + e2;
    let (slope, slope_error) = branch_slope(m, omega_alpha, branch)?;
    let n_pred = (units.hbar * root / 2.0 * slope).sqrt().norm();
    let raw = integral.sqrt();
    Ok(WindowNorm {
        branch,
        omega_alpha,
        halfwidths: w,
        center,
        halfwidth,
        raw,
        n_pred,
        ratio: (n_pred > 0.0).then(|| raw / n_pred),
        quadrature_error: qerr,
        slope_error,
    })
}

/// Columns: `omega_alpha, branch, re_Omega, im_Omega, residual`.
pub fn write_dispersion_csv(points: &[BranchPoint], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["omega_alpha", "branch", "re_Omega", "im_Omega", "residual"])?;
    for p in points {
        w.write_record(&[
            format!("{:e}", p.omega_alpha),
            p.branch.tag().to_string(),
            format!("{:e}", p.omega.re),
            format!("{:e}", p.omega.im),
            format!("{:e}", p.residual),
        ])?;
    }
    w.flush()?;
    Ok(())
}
