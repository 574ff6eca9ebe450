//! Brute-force baselines kept independent of the production kernels: Born
//! series without a linear solve, a direct lattice count of box modes,
//! Richardson finite differences and refinement studies.
//!
//! Only the closed-form vacuum tensor is shared with the code under test.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::greens::vacuum_green;
use crate::linalg::{frobenius, CVec3, Dyad, Vec3, C64};
use crate::material::eval_permittivity;
use crate::scene::Scene;
use crate::units::Units;

/// Largest admissible contraction factor of the Born series.
pub const MAX_CONTRACTION: f64 = 0.5;
/// Minimum number of lattice modes in a counting band.
pub const MIN_COUNT_MODES: usize = 100;
/// Relative error bar above which a gradient is flagged.
pub const GRADIENT_FLAG_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub oracle: String,
    pub inputs_digest: String,
    pub values: Vec<f64>,
    pub error_estimate: f64,
    pub target: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    pub observed_order: Option<f64>,
    pub notes: Vec<String>,
}

impl OracleReport {
    /// Builds a report whose pass flag is `|value - target| <= tolerance`.
    pub fn compare(oracle: &str, inputs: &impl Serialize, value: f64, error: f64, target: f64, tolerance: f64) -> Result<Self> {
        Ok(OracleReport {
            oracle: oracle.to_string(),
            inputs_digest: digest(inputs)?,
            values: vec![value],
            error_estimate: positive(error, value),
            target: Some(target),
            tolerance,
            pass: (value - target).abs() <= tolerance,
            observed_order: None,
            notes: Vec::new(),
        })
    }

    /// Writes `<dir>/baselines/<scene_hash>/<oracle>.json`.
    pub fn archive(&self, dir: &Path, scene_hash: &str) -> Result<PathBuf> {
        let folder = dir.join("baselines").join(scene_hash);
        std::fs::create_dir_all(&folder)?;
        let path = folder.join(format!("{}.json", self.oracle));
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}

fn positive(error: f64, value: f64) -> f64 {
    if error > 0.0 {
        error
    } else {
        (f64::EPSILON * value.abs()).max(f64::MIN_POSITIVE)
    }
}

/// SHA-256 of the JSON encoding of `inputs`.
pub fn digest(inputs: &impl Serialize) -> Result<String> {
    let text = serde_json::to_string(inputs)?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

// ---------------------------------------------------------------------------
// Born series

#[derive(Debug, Clone)]
pub struct BornResult {
    pub value: Dyad,
    /// Row-sum bound on the interaction operator.
    pub contraction: f64,
}

/// `G_eff(a, b)` from the first `order` Neumann terms of the voxel
/// interaction, with no linear solve. The scene must have no active shell.
pub fn born_series_oracle(scene: &Scene, omega: f64, a: &Vec3, b: &Vec3, order: usize) -> Result<BornResult> {
    if order > 2 {
        return Err(Error::param(format!("Born order {order} > 2")));
    }
    if scene.active_shell().is_some() {
        return Err(Error::param("the Born oracle runs on vacuum-embedded scenes"));
    }
    let k = omega / scene.units.c;
    let dv = scene.voxel_volume();
    let pos: Vec<Vec3> = scene.voxels.iter().map(|v| v.position).collect();
    let chi: Vec<C64> =
        scene.voxels.iter().map(|v| eval_permittivity(&v.material, omega).map(|e| e - 1.0)).collect::<Result<_>>()?;
    let n = pos.len();
    // Interaction blocks K_uv = k^2 dV G(u, v) chi_v; diagonal is the
    // spherical-cell depolarization plus radiation reaction.
    let block = |u: usize, v: usize| -> Result<Dyad> {
        if u == v {
            let s = -chi[u] / 3.0 + C64::new(0.0, k.powi(3) * dv / (6.0 * PI)) * chi[u];
            Ok(Dyad::identity() * s)
        } else {
            Ok(vacuum_green(k, &pos[u], &pos[v])? * (chi[v] * k * k * dv))
        }
    };
    let mut contraction: f64 = 0.0;
    for u in 0..n {
        let mut row = 0.0;
        for v in 0..n {
            row += frobenius(&block(u, v)?);
        }
        contraction = contraction.max(row);
    }
    if contraction >= MAX_CONTRACTION {
        return Err(Error::Contraction(contraction));
    }
    let mut value = vacuum_green(k, a, b)?;
    if order == 0 || n == 0 {
        return Ok(BornResult { value, contraction });
    }
    let inc: Vec<Dyad> = pos.iter().map(|p| vacuum_green(k, p, b)).collect::<Result<_>>()?;
    let mut x = inc.clone();
    if order == 2 {
        for (u, xu) in x.iter_mut().enumerate() {
            for (v, iv) in inc.iter().enumerate() {
                *xu += block(u, v)? * iv;
            }
        }
    }
    for u in 0..n {
        value += vacuum_green(k, a, &pos[u])? * x[u] * (chi[u] * k * k * dv);
    }
    Ok(BornResult { value, contraction })
}

// ---------------------------------------------------------------------------
// Mode counting

/// Number of box modes (both polarizations) with `lo <= omega <= hi`.
pub fn lattice_mode_count(box_side: f64, lo: f64, hi: f64, units: &Units) -> u64 {
    if !(hi > 0.0) || hi < lo {
        return 0;
    }
    let unit = 2.0 * PI * units.c / box_side;
    let nmax = (hi / unit).floor() as i64;
    let (lo2, hi2) = ((lo / unit).max(0.0).powi(2), (hi / unit).powi(2));
    let mut count = 0u64;
    for i in -nmax..=nmax {
        for j in -nmax..=nmax {
            for l in -nmax..=nmax {
                let r2 = (i * i + j * j + l * l) as f64;
                if r2 > 0.0 && r2 >= lo2 && r2 <= hi2 {
                    count += 2;
                }
            }
        }
    }
    count
}

/// Band-averaged modal density per volume and frequency,
/// `count / (L^3 delta)`, for comparison with `omega^2 / (pi^2 c^3)`.
pub fn mode_counting_ldos(box_side: f64, omega: f64, delta: f64, units: &Units) -> Result<f64> {
    if !(box_side > 0.0 && omega > 0.0 && delta > 0.0) {
        return Err(Error::param("box side, omega and band width must be positive"));
    }
    let count = lattice_mode_count(box_side, omega - 0.5 * delta, omega + 0.5 * delta, units);
    if (count as usize) < MIN_COUNT_MODES {
        return Err(Error::EmptyShell(format!(
            "{count} modes in [{}, {}]; need at least {MIN_COUNT_MODES}, widen the band",
            omega - 0.5 * delta,
            omega + 0.5 * delta
        )));
    }
    Ok(count as f64 / (box_side.powi(3) * delta))
}

// ---------------------------------------------------------------------------
// Finite differences

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GradientEstimate {
    #[serde(serialize_with = "ser_cvec")]
    pub value: CVec3,
    /// `|D(h/2) - D(h)|` or the roundoff floor, whichever is larger.
    pub error_bar: f64,
    /// Roundoff contribution `~ eps |f| / h`.
    pub noise_floor: f64,
    pub step: f64,
    pub flagged: bool,
}

fn ser_cvec<S: serde::Serializer>(v: &CVec3, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(3))?;
    for z in v.iter() {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

/// Central differences at `h0` and `h0/2` combined by Richardson
/// extrapolation. Samples are taken in a fixed order.
pub fn richardson_gradient<F>(f: F, x: &Vec3, h0: f64) -> Result<GradientEstimate>
where
    F: Fn(&Vec3) -> Result<C64>,
{
    let scale = x.amax().max(h0);
    if !(h0 > 0.0) || h0 < 1e-8 * scale {
        return Err(Error::StepUnderflow(format!(
            "step {h0:.3e} is below the resolvable limit {:.3e} at |x| = {scale:.3e}; use a larger h",
            1e-8 * scale
        )));
    }
    let mut d = [CVec3::zeros(), CVec3::zeros()];
    let mut fmax: f64 = 0.0;
    for (lvl, h) in [h0, 0.5 * h0].into_iter().enumerate() {
        for i in 0..3 {
            let mut e = Vec3::zeros();
            e[i] = h;
            let (fp, fm) = (f(&(x + e))?, f(&(x - e))?);
            fmax = fmax.max(fp.norm()).max(fm.norm());
            d[lvl][i] = (fp - fm) / (2.0 * h);
        }
    }
    let value = (d[1] * C64::new(4.0, 0.0) - d[0]) / C64::new(3.0, 0.0);
    let noise_floor = 64.0 * f64::EPSILON * fmax / h0;
    let error_bar = (d[1] - d[0]).norm().max(noise_floor);
    let flagged = error_bar > GRADIENT_FLAG_FRACTION * value.norm();
    Ok(GradientEstimate { value, error_bar, noise_floor, step: h0, flagged })
}

// ---------------------------------------------------------------------------
// Refinement studies

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Knob {
    Pitch,
    Radius,
    Order,
    Grid,
}

/// What the three samples of a refinement study hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    /// Errors against a known target.
    Errors,
    /// Raw values; differences between levels are the errors.
    Values,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceSpec {
    pub task: String,
    pub knob: Knob,
    /// Knob settings from coarse to fine.
    pub levels: Vec<f64>,
    pub measure: Measure,
    pub min_order: Option<f64>,
    /// Bound on `|v2 - v1| / |v2|` for value sequences.
    pub max_final_change: Option<f64>,
    /// Errors at or below this count as converged to roundoff.
    pub floor: f64,
}

/// Observed order from three errors at levels refined by `ratio`.
pub fn order_from_errors(e: [f64; 3], ratio: f64) -> f64 {
    (e[1] / e[2]).ln() / ratio.ln()
}

/// Observed order from three values (two successive differences).
pub fn order_from_values(v: [f64; 3], ratio: f64) -> f64 {
    ((v[1] - v[0]).abs() / (v[2] - v[1]).abs()).ln() / ratio.ln()
}

/// Runs `eval` at the three levels of `spec` and checks the observed order.
pub fn quadrature_convergence<F>(spec: &ConvergenceSpec, eval: F) -> Result<OracleReport>
where
    F: Fn(f64) -> Result<f64>,
{
    if spec.levels.len() != 3 {
        return Err(Error::param("a refinement study takes exactly three levels"));
    }
    let v = [eval(spec.levels[0])?, eval(spec.levels[1])?, eval(spec.levels[2])?];
    let ratio = spec.levels[0] / spec.levels[1];
    let ratio = if ratio < 1.0 { 1.0 / ratio } else { ratio };
    let errs = match spec.measure {
        Measure::Errors => [v[0].abs(), v[1].abs(), v[2].abs()],
        Measure::Values => [(v[1] - v[0]).abs(), (v[2] - v[1]).abs(), (v[2] - v[1]).abs()],
    };
    let mut notes = Vec::new();
    let at_floor = errs.iter().all(|&e| e <= spec.floor);
    let order = if at_floor {
        notes.push(format!("all errors at or below the roundoff floor {:.1e}", spec.floor));
        None
    } else {
        let mono = match spec.measure {
            Measure::Errors => errs[1] < errs[0] && (errs[2] < errs[1] || errs[2] <= spec.floor),
            Measure::Values => errs[1] < errs[0] || errs[1] <= spec.floor,
        };
        if !mono {
            return Err(Error::Quadrature(format!(
                "{} vs {:?}: non-monotone sequence {:?} at levels {:?}",
                spec.task, spec.knob, v, spec.levels
            )));
        }
        let o = match spec.measure {
            Measure::Errors if errs[2] > spec.floor => order_from_errors(errs, ratio),
            Measure::Values if errs[1] > spec.floor => order_from_values(v, ratio),
            _ => f64::INFINITY,
        };
        Some(o)
    };
    let mut pass = true;
    if let (Some(min), Some(o)) = (spec.min_order, order) {
        pass &= o >= min;
    }
    let final_change = (v[2] - v[1]).abs() / v[2].abs().max(f64::MIN_POSITIVE);
    if let Some(max) = spec.max_final_change {
        if spec.measure == Measure::Values {
            pass &= final_change <= max;
            notes.push(format!("final relative change {final_change:.3e}"));
        }
    }
    Ok(OracleReport {
        oracle: format!("convergence-{}-{}", spec.task, knob_tag(spec.knob)),
        inputs_digest: digest(spec)?,
        values: v.to_vec(),
        error_estimate: positive(errs[2], v[2]),
        target: None,
        tolerance: spec.max_final_change.unwrap_or(0.0),
        pass,
        observed_order: order,
        notes,
    })
}

fn knob_tag(k: Knob) -> &'static str {
    match k {
        Knob::Pitch => "pitch",
        Knob::Radius => "radius",
        Knob::Order => "order",
        Knob::Grid => "grid",
    }
}
