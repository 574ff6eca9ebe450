//! Causal permittivity models.
//!
//! Only `eps - 1` ever enters the field equations; no `2*pi` susceptibility
//! convention is used anywhere in the crate.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{C64, I};
use crate::scene::Scene;
use crate::Vec3;

/// Single-oscillator permittivity `1 + wp^2 / (w0^2 - (w + i gamma)^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrudeLorentzModel {
    pub omega_p: f64,
    pub omega_0: f64,
    pub gamma: f64,
}

impl DrudeLorentzModel {
    pub fn new(omega_p: f64, omega_0: f64, gamma: f64) -> Result<Self> {
        let m = DrudeLorentzModel { omega_p, omega_0, gamma };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_p >= 0.0 && self.omega_0 >= 0.0 && self.gamma > 0.0) {
            return Err(Error::param(format!(
                "Drude-Lorentz needs omega_p >= 0, omega_0 >= 0, gamma > 0 (got {}, {}, {})",
                self.omega_p, self.omega_0, self.gamma
            )));
        }
        if !(self.omega_p.is_finite() && self.omega_0.is_finite() && self.gamma.is_finite()) {
            return Err(Error::param("Drude-Lorentz parameters must be finite"));
        }
        Ok(())
    }

    /// Model with plasma frequency `omega_p` that takes the value `eps` at
    /// `omega`. Needs `Im eps > 0`.
    pub fn matching(omega: f64, eps: C64, omega_p: f64) -> Result<Self> {
        if omega <= 0.0 || eps.im <= 0.0 || omega_p <= 0.0 {
            return Err(Error::param("matching needs omega > 0, Im eps > 0, omega_p > 0"));
        }
        // 1/(eps-1) = (w0^2 - w^2 + g^2 - 2 i w g) / wp^2
        let s = 1.0 / (eps - 1.0);
        let wp2 = omega_p * omega_p;
        let gamma = -wp2 * s.im / (2.0 * omega);
        let w02 = omega * omega - gamma * gamma + wp2 * s.re;
        if w02 < 0.0 {
            return Err(Error::param(format!(
                "no Drude-Lorentz model with omega_p = {omega_p} reaches eps = {eps} at omega = {omega}; raise omega_p"
            )));
        }
        DrudeLorentzModel::new(omega_p, w02.sqrt(), gamma)
    }

    /// Model taking the value `eps` at `omega`, with the damping set to a
    /// fraction of `omega` (the first feasible of 0.2, 0.05, 0.01).
    pub fn through(omega: f64, eps: C64) -> Result<Self> {
        if omega <= 0.0 || eps.im <= 0.0 {
            return Err(Error::param("fitting needs omega > 0 and Im eps > 0"));
        }
        let s = 1.0 / (eps - 1.0);
        for frac in [0.2, 0.05, 0.01] {
            let gamma = frac * omega;
            let wp2 = -2.0 * omega * gamma / s.im;
            if let Ok(m) = Self::matching(omega, eps, wp2.sqrt()) {
                return Ok(m);
            }
        }
        Err(Error::param(format!("no single-oscillator model reaches eps = {eps} at omega = {omega}")))
    }

    /// Permittivity at a complex frequency (used for polariton roots).
    pub fn eval_complex(&self, omega: C64) -> C64 {
        let w = omega + I * self.gamma;
        1.0 + self.omega_p * self.omega_p / (self.omega_0 * self.omega_0 - w * w)
    }

    pub fn eval(&self, omega: f64) -> C64 {
        self.eval_complex(C64::new(omega, 0.0))
    }

    pub fn omega_l(&self) -> f64 {
        (self.omega_p * self.omega_p + self.omega_0 * self.omega_0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InterpolationRule {
    /// Natural cubic spline of `eps'` in `ln omega`, linear `eps''` in `omega`.
    #[default]
    CubicLogLinear,
    /// Linear in `omega` for both parts.
    Linear,
}

/// Sampled permittivity spectrum. No extrapolation outside the table.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedPermittivity {
    omegas: Vec<f64>,
    values: Vec<C64>,
    rule: InterpolationRule,
    /// Second derivatives of `eps'` with respect to `ln omega` at the knots.
    spline_m: Vec<f64>,
}

impl TabulatedPermittivity {
    pub fn new(samples: Vec<(f64, C64)>, rule: InterpolationRule) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::param("permittivity table needs at least two samples"));
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::param(format!("table frequencies not strictly increasing at {}", w[1].0)));
            }
        }
        for &(omega, eps) in &samples {
            if omega <= 0.0 || !omega.is_finite() || !eps.re.is_finite() || !eps.im.is_finite() {
                return Err(Error::param(format!("bad table sample at omega = {omega}")));
            }
            if eps.im < 0.0 {
                return Err(Error::param(format!("gain sample (Im eps < 0) at omega = {omega}")));
            }
        }
        Ok(Self::build(samples, rule))
    }

    /// Builds a table without the passivity check, for causality diagnostics
    /// on deliberately broken data.
    pub fn new_unchecked(samples: Vec<(f64, C64)>, rule: InterpolationRule) -> Self {
        Self::build(samples, rule)
    }

    fn build(samples: Vec<(f64, C64)>, rule: InterpolationRule) -> Self {
        let omegas: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let values: Vec<C64> = samples.iter().map(|s| s.1).collect();
        let xs: Vec<f64> = omegas.iter().map(|w| w.ln()).collect();
        let ys: Vec<f64> = values.iter().map(|v| v.re).collect();
        let spline_m = natural_spline_moments(&xs, &ys);
        TabulatedPermittivity { omegas, values, rule, spline_m }
    }

    /// Reads `omega, eps_real, eps_imag` rows; a header line is allowed.
    pub fn from_csv(path: &Path, rule: InterpolationRule) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).comment(Some(b'#')).from_path(path)?;
        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(Error::Config(format!("{}: row {} needs 3 columns", path.display(), i + 1)));
            }
            let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(v) => samples.push((v[0], C64::new(v[1], v[2]))),
                Err(_) if i == 0 => continue,
                Err(e) => return Err(Error::Config(format!("{}: row {}: {e}", path.display(), i + 1))),
            }
        }
        Self::new(samples, rule)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.omegas[0], *self.omegas.last().unwrap())
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, C64)> + '_ {
        self.omegas.iter().copied().zip(self.values.iter().copied())
    }

    pub fn rule(&self) -> InterpolationRule {
        self.rule
    }

    pub fn eval(&self, omega: f64) -> Result<C64> {
        let (min, max) = self.range();
        if !(omega >= min && omega <= max) {
            return Err(Error::OutOfRange { omega, min, max });
        }
        let i = match self.omegas.binary_search_by(|w| w.partial_cmp(&omega).unwrap()) {
            Ok(i) => return Ok(self.values[i]),
            Err(i) => i - 1,
        };
        let (w0, w1) = (self.omegas[i], self.omegas[i + 1]);
        let t = (omega - w0) / (w1 - w0);
        let im = self.values[i].im * (1.0 - t) + self.values[i + 1].im * t;
        let re = match self.rule {
            InterpolationRule::Linear => self.values[i].re * (1.0 - t) + self.values[i + 1].re * t,
            InterpolationRule::CubicLogLinear => {
                let (x0, x1) = (w0.ln(), w1.ln());
                let x = omega.ln();
                let h = x1 - x0;
                let a = (x1 - x) / h;
                let b = (x - x0) / h;
                let (m0, m1) = (self.spline_m[i], self.spline_m[i + 1]);
                a * self.values[i].re
                    + b * self.values[i + 1].re
                    + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0
            }
        };
        Ok(C64::new(re, im))
    }
}

fn natural_spline_moments(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Tridiagonal system for interior second derivatives (Thomas algorithm).
    let mut diag = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        diag[i] = 2.0 * (h0 + h1);
        upper[i] = h1;
        rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
        if i > 1 {
            let w = h0 / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
    }
    for i in (1..n - 1).rev() {
        m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];
    }
    m
}

/// Material assigned to a voxel or shell.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum MaterialRef {
    #[default]
    Vacuum,
    DrudeLorentz(DrudeLorentzModel),
    Tabulated(Arc<TabulatedPermittivity>),
}

impl MaterialRef {
    pub fn is_vacuum(&self) -> bool {
        matches!(self, MaterialRef::Vacuum)
    }

    pub fn label(&self) -> String {
        match self {
            MaterialRef::Vacuum => "vacuum".into(),
            MaterialRef::DrudeLorentz(m) => format!("drude-lorentz({},{},{})", m.omega_p, m.omega_0, m.gamma),
            MaterialRef::Tabulated(t) => {
                let (a, b) = t.range();
                format!("table({} samples, {a}..{b})", t.omegas.len())
            }
        }
    }
}

pub fn eval_permittivity(m: &MaterialRef, omega: f64) -> Result<C64> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::param(format!("frequency must be positive and finite, got {omega}")));
    }
    match m {
        MaterialRef::Vacuum => Ok(C64::new(1.0, 0.0)),
        MaterialRef::DrudeLorentz(d) => Ok(d.eval(omega)),
        MaterialRef::Tabulated(t) => t.eval(omega),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResonanceParams {
    pub omega_l: f64,
    pub longitudinal_branch: C64,
}

pub fn resonance_params(m: &DrudeLorentzModel) -> ResonanceParams {
    let omega_l = m.omega_l();
    ResonanceParams { omega_l, longitudinal_branch: C64::new(omega_l, -m.gamma) }
}

/// Total `eps - 1` of the composed medium at `x`: the scatterer's own value
/// inside `V2` (the shell material is cancelled there), the shell value in
/// `V1 - V2`, zero elsewhere.
pub fn compose_scene_susceptibility(scene: &Scene, x: &Vec3, omega: f64) -> Result<C64> {
    let r = x.norm();
    if let Some(shell) = scene.active_shell() {
        if r >= shell.inner_radius && r < shell.outer_radius {
            return Ok(eval_permittivity(&shell.material, omega)? - 1.0);
        }
        if r >= shell.outer_radius {
            return Ok(C64::new(0.0, 0.0));
        }
    }
    match scene.voxel_containing(x) {
        Some(v) => Ok(eval_permittivity(&v.material, omega)? - 1.0),
        None => Ok(C64::new(0.0, 0.0)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KramersKronigReport {
    /// Largest `|eps'(w) - 1 - H[eps''](w)|` over the interior grid points.
    pub residual: f64,
    pub worst_omega: f64,
    /// Set when the grid under-resolves the resonance width.
    pub warning: Option<String>,
}

/// Checks `eps'(w) - 1 = (2/pi) P int w' eps''(w') / (w'^2 - w^2) dw'` on a
/// positive increasing grid. The integral is truncated to the grid span; the
/// pole is removed by subtracting the integrand's value at `w` and adding the
/// closed-form principal value of `1/(w'^2 - w^2)`. Both grid endpoints are
/// excluded from the maximum since truncation dominates there.
pub fn kramers_kronig_residual(m: &MaterialRef, grid: &[f64]) -> Result<KramersKronigReport> {
    if grid.len() < 8 {
        return Err(Error::param("Kramers-Kronig grid needs at least 8 points"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid[0] <= 0.0 {
        return Err(Error::param("Kramers-Kronig grid must be positive and strictly increasing"));
    }
    let eps: Vec<C64> = grid.iter().map(|&w| eval_permittivity(m, w)).collect::<Result<_>>()?;
    let f: Vec<f64> = grid.iter().zip(&eps).map(|(w, e)| w * e.im).collect();
    let n = grid.len();
    let (a, b) = (grid[0], grid[n - 1]);
    let mut residual: f64 = 0.0;
    let mut worst = grid[1];
    for i in 1..n - 1 {
        let w = grid[i];
        let fw = f[i];
        // d f / d w' at the pole, for the removable singularity
        let dfw = (f[i + 1] - f[i - 1]) / (grid[i + 1] - grid[i - 1]);
        let g = |j: usize| -> f64 {
            if j == i {
                dfw / (2.0 * w)
            } else {
                let wp = grid[j];
                (f[j] - fw) / ((wp - w) * (wp + w))
            }
        };
        let mut integral = 0.0;
        for j in 0..n - 1 {
            integral += 0.5 * (grid[j + 1] - grid[j]) * (g(j) + g(j + 1));
        }
        let pv = ((b - w) / (b + w) * (w + a) / (w - a)).ln() / (2.0 * w);
        let hilbert = 2.0 / std::f64::consts::PI * (integral + fw * pv);
        let r = (eps[i].re - 1.0 - hilbert).abs();
        if r > residual || r.is_nan() {
            residual = r;
            worst = w;
        }
    }
    let warning = match m {
        MaterialRef::DrudeLorentz(d) => {
            let lo = (d.omega_0 - 5.0 * d.gamma).max(a);
            let hi = (d.omega_l() + 5.0 * d.gamma).min(b);
            let coarse = grid.windows(2).filter(|p| p[1] >= lo && p[0] <= hi).map(|p| p[1] - p[0]).fold(0.0, f64::max);
            (coarse > 0.5 * d.gamma)
                .then(|| format!("grid spacing {coarse:.3e} near the resonance exceeds gamma/2 = {:.3e}", 0.5 * d.gamma))
        }
        MaterialRef::Tabulated(_) => {
            let noncausal = eps.iter().any(|e| e.im < 0.0);
            noncausal.then(|| "table has Im eps < 0 samples (non-causal)".to_string())
        }
        MaterialRef::Vacuum => None,
    };
    Ok(KramersKronigReport { residual, worst_omega: worst, warning })
}

/// Logarithmically spaced grid with `n` points from `a` to `b` inclusive.
pub fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    (0..n).map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp()).collect()
}
