//! LDOS, spontaneous emission, Green-trace gradients and the thermal Casimir
//! force on a voxel body.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fluctuations::{planck_weight, Ordering};
use crate::greens::ls::cell_polarizability;
use crate::greens::{EffectiveGreen, SolverOptions};
use crate::linalg::{pairwise_sum, to_complex, Dyad, Vec3, C64};
use crate::material::{eval_permittivity, MaterialRef};
use crate::oracle::{richardson_gradient, GradientEstimate};
use crate::scene::Scene;

/// Caveat attached to every force result.
pub const QUASI_STATIC_CAVEAT: &str = "valid only in the quasi-static limit";
/// Rule used for the coincident gradient.
pub const GRADIENT_RULE: &str = "scattered part only; the self-voxel is removed from its own environment";

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EmitterSpec {
    pub position: [f64; 3],
    pub orientation: [f64; 3],
    pub dipole: f64,
    pub omega: f64,
}

impl EmitterSpec {
    pub fn validate(&self) -> Result<()> {
        let n = Vec3::from(self.orientation).norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::param(format!("emitter orientation must be a unit vector, |n| = {n}")));
        }
        if !(self.dipole >= 0.0) || !(self.omega > 0.0) {
            return Err(Error::param("emitter needs |mu| >= 0 and omega > 0"));
        }
        Ok(())
    }
}

/// Subset of scatterer voxels forming one body.
#[derive(Debug, Clone, Serialize)]
pub struct BodySpec {
    pub voxels: Vec<usize>,
}

impl BodySpec {
    pub fn validate(&self, scene: &Scene) -> Result<()> {
        if self.voxels.is_empty() {
            return Err(Error::param("body has no voxels"));
        }
        let mut seen = self.voxels.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.voxels.len() {
            return Err(Error::param("body lists a voxel twice"));
        }
        if let Some(&bad) = seen.iter().find(|&&i| i >= scene.voxels.len()) {
            return Err(Error::param(format!("body voxel {bad} is not a scatterer voxel")));
        }
        Ok(())
    }
}

fn unit(n: &[f64; 3]) -> Result<Vec3> {
    let v = Vec3::from(*n);
    let norm = v.norm();
    if !(norm > 0.0) {
        return Err(Error::param("orientation must be nonzero"));
    }
    Ok(v / norm)
}

fn check_outside_voxels(scene: &Scene, x: &Vec3) -> Result<()> {
    if scene.voxel_containing(x).is_some() {
        return Err(Error::param(format!("point {x:?} lies inside a scatterer voxel")));
    }
    Ok(())
}

/// `(6 omega / (pi c^2)) Im[n . G_eff(x0, x0) . n]`.
pub fn ldos(scene: &Scene, omega: f64, x0: &Vec3, n_hat: &[f64; 3], opts: &SolverOptions) -> Result<f64> {
    let n = to_complex(&unit(n_hat)?);
    check_outside_voxels(scene, x0)?;
    let eg = EffectiveGreen::new(scene, omega, &[*x0], opts)?;
    let g = eg.pair(x0, x0)?;
    let c = scene.units.c;
    Ok(6.0 * omega / (PI * c * c) * (n.transpose() * g * n)[(0, 0)].im)
}

/// `omega^2 / (pi^2 c^3)`.
pub fn vacuum_ldos(omega: f64, c: f64) -> f64 {
    omega * omega / (PI * PI * c.powi(3))
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub ldos: f64,
    pub rate: f64,
    pub vacuum_rate: f64,
    pub purcell: f64,
}

/// `Gamma = (pi/3)(omega/hbar)|mu|^2 rho` and its ratio to the vacuum rate.
pub fn spontaneous_rate(scene: &Scene, emitter: &EmitterSpec, opts: &SolverOptions) -> Result<RateReport> {
    emitter.validate()?;
    let u = &scene.units;
    let rho = ldos(scene, emitter.omega, &Vec3::from(emitter.position), &emitter.orientation, opts)?;
    let pref = PI / 3.0 * emitter.omega / u.hbar * emitter.dipole * emitter.dipole;
    let rate = pref * rho;
    let vacuum_rate = pref * vacuum_ldos(emitter.omega, u.c);
    let purcell = if vacuum_rate > 0.0 { rate / vacuum_rate } else { 1.0 };
    Ok(RateReport { ldos: rho, rate, vacuum_rate, purcell })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    /// Derivative in the field point.
    Left,
    /// Derivative in the source point.
    Right,
    /// Derivative of the coincident trace.
    Both,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceGradient {
    pub side: Side,
    pub estimate: GradientEstimate,
    /// Whether `x` was a voxel centre whose own cell was taken out.
    pub self_voxel_excluded: bool,
    pub rule: &'static str,
}

/// Default finite-difference step for gradients of scattered fields.
pub fn default_step(scene: &Scene) -> f64 {
    0.125 * scene.voxel_pitch
}

/// Scene without voxel `u`.
fn environment(scene: &Scene, u: usize) -> Scene {
    let mut env = scene.clone();
    env.voxels.remove(u);
    env
}

fn probe_points(x: &Vec3, h: f64) -> Vec<Vec3> {
    let mut pts = vec![*x];
    for s in [h, 0.5 * h] {
        for i in 0..3 {
            let mut e = Vec3::zeros();
            e[i] = s;
            pts.push(x + e);
            pts.push(x - e);
        }
    }
    pts
}

/// Richardson gradient of `Tr G_scat` at coincidence. At a voxel centre the
/// voxel is taken out of its own environment.
pub fn green_trace_gradient(
    scene: &Scene,
    omega: f64,
    x: &Vec3,
    side: Side,
    h: Option<f64>,
    opts: &SolverOptions,
) -> Result<TraceGradient> {
    let h = h.unwrap_or_else(|| default_step(scene));
    let self_voxel = scene.voxels.iter().position(|v| (v.position - x).norm() <= 1e-12 * scene.voxel_pitch);
    let env = match self_voxel {
        Some(u) => environment(scene, u),
        None => {
            check_outside_voxels(scene, x)?;
            scene.clone()
        }
    };
    let eg = EffectiveGreen::new(&env, omega, &probe_points(x, h), opts)?;
    let trace = |g: Dyad| g.trace();
    let estimate = match side {
        Side::Left => {
            let r = eg.source(x)?;
            richardson_gradient(|p| Ok(trace(eg.scattered(&r, p)?)), x, h)?
        }
        Side::Right => richardson_gradient(|p| Ok(trace(eg.scattered(&eg.source(p)?, x)?)), x, h)?,
        Side::Both => richardson_gradient(|p| Ok(trace(eg.scattered(&eg.source(p)?, p)?)), x, h)?,
    };
    Ok(TraceGradient { side, estimate, self_voxel_excluded: self_voxel.is_some(), rule: GRADIENT_RULE })
}

// ---------------------------------------------------------------------------
// Thermal Casimir force

pub const DEFAULT_POINTS_PER_DECADE: usize = 200;
/// Default grid `[1e-2, 1e2] omega_L`.
pub const DEFAULT_GRID_SPAN: (f64, f64) = (1e-2, 1e2);
/// The upper edge is pushed out until the loss has fallen to this fraction
/// of its peak.
pub const LOSS_DECAY: f64 = 1e-8;
/// Largest tolerated tail bound relative to the total.
pub const MAX_TAIL_FRACTION: f64 = 0.01;
/// Number of edge samples used to fit a tail power law.
const TAIL_FIT_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ForceOptions {
    /// Explicit grid edges; `None` derives them from every dispersive voxel of the scene.
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
    pub points_per_decade: usize,
    /// Finite-difference step; `None` uses [`default_step`].
    pub step: Option<f64>,
    pub max_tail_fraction: f64,
}

impl Default for ForceOptions {
    fn default() -> Self {
        ForceOptions {
            omega_min: None,
            omega_max: None,
            points_per_decade: DEFAULT_POINTS_PER_DECADE,
            step: None,
            max_tail_fraction: MAX_TAIL_FRACTION,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FrequencyGrid {
    pub omega_min: f64,
    pub omega_max: f64,
    pub points_per_decade: usize,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct VoxelForce {
    pub voxel: usize,
    pub position: [f64; 3],
    pub force: [f64; 3],
}

#[derive(Debug, Clone, Serialize)]
pub struct ForceReport {
    pub temperature: f64,
    pub total: [f64; 3],
    /// Ordering with weight `1 / (1 - e^-x)`.
    pub plus_minus: [f64; 3],
    /// Ordering with weight `1 / (e^x - 1)`.
    pub minus_plus: [f64; 3],
    pub grid: FrequencyGrid,
    pub tail_bound: f64,
    /// Integrated finite-difference error bars.
    pub noise_floor: f64,
    pub per_voxel: Vec<VoxelForce>,
    pub gradient_rule: &'static str,
    pub caveat: &'static str,
    pub scene_hash: String,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SpectralForce {
    pub force: Vec3,
    pub error_bar: f64,
    pub roundoff: f64,
}

/// Spectral force `(hbar/pi) k^2 Im grad_1 Tr[alpha_d G_env,scat(x1, u)]` on
/// voxel `u`, with `alpha_d` the cell polarizability dressed by the
/// environment's coincident scattered field. Returns the force and the
/// integrand's error bar and roundoff floor.
pub fn spectral_voxel_force(scene: &Scene, omega: f64, u: usize, h: f64, opts: &SolverOptions) -> Result<SpectralForce> {
    let x = scene.voxels[u].position;
    let env = environment(scene, u);
    if env.voxels.is_empty() && env.active_shell().is_none() {
        return Ok(SpectralForce::default());
    }
    let eg = EffectiveGreen::new(&env, omega, &probe_points(&x, h), opts)?;
    let k = eg.k0;
    let chi = eval_permittivity(&scene.voxels[u].material, omega)? - 1.0;
    let alpha = cell_polarizability(k, scene.voxel_volume(), chi);
    let r = eg.source(&x)?;
    let gs = eg.scattered(&r, &x)?;
    let dressing = Dyad::identity() - gs * (alpha * k * k);
    let alpha_d = dressing
        .try_inverse()
        .ok_or_else(|| Error::Solve { reason: "singular dressed polarizability".into(), condition: f64::INFINITY })?
        * alpha;
    let g = richardson_gradient(|p| Ok(C64::new((alpha_d * eg.scattered(&r, p)?).trace().im, 0.0)), &x, h)?;
    let pref = scene.units.hbar / PI * k * k;
    let f = Vec3::new(g.value[0].re, g.value[1].re, g.value[2].re) * pref;
    Ok(SpectralForce { force: f, error_bar: pref * g.error_bar, roundoff: pref * g.noise_floor })
}

/// Smallest and largest `omega_L` over the scene's Drude-Lorentz voxels.
fn omega_l_range(scene: &Scene) -> Option<(f64, f64)> {
    scene
        .voxels
        .iter()
        .filter_map(|v| match &v.material {
            MaterialRef::DrudeLorentz(m) => Some(m.omega_l()),
            _ => None,
        })
        .fold(None, |acc: Option<(f64, f64)>, w| Some(acc.map_or((w, w), |(a, b)| (a.min(w), b.max(w)))))
}

/// Pushes `hi` out by decades until the scene loss at `hi` has fallen below
/// [`LOSS_DECAY`] of its peak on `[lo, hi]`.
fn loss_edge(scene: &Scene, lo: f64, hi: f64) -> Result<f64> {
    let loss = |w: f64| -> Result<f64> {
        let mut m: f64 = 0.0;
        for v in &scene.voxels {
            m = m.max(eval_permittivity(&v.material, w)?.im.abs());
        }
        Ok(m)
    };
    let mut peak: f64 = 0.0;
    for w in crate::material::log_grid(lo, hi, 400) {
        peak = peak.max(loss(w)?);
    }
    let mut hi = hi;
    for _ in 0..6 {
        if loss(hi)? <= LOSS_DECAY * peak {
            break;
        }
        hi *= 10.0;
    }
    Ok(hi)
}

/// Log grid over `[1e-2 min omega_L, 1e2 max omega_L]` of the scene's
/// materials, widened until the loss has decayed.
fn frequency_grid(scene: &Scene, o: &ForceOptions) -> Result<FrequencyGrid> {
    let wl = omega_l_range(scene);
    let lo = match (o.omega_min, wl) {
        (Some(w), _) => w,
        (None, Some((a, _))) => DEFAULT_GRID_SPAN.0 * a,
        (None, None) => return Err(Error::param("tabulated scenes need an explicit frequency grid")),
    };
    let hi = match (o.omega_max, wl) {
        (Some(w), _) => w,
        (None, Some((_, b))) => loss_edge(scene, lo, DEFAULT_GRID_SPAN.1 * b)?,
        (None, None) => return Err(Error::param("tabulated scenes need an explicit frequency grid")),
    };
    if !(lo > 0.0 && hi > lo) || o.points_per_decade == 0 {
        return Err(Error::param(format!("bad force grid [{lo}, {hi}]")));
    }
    let points = ((hi / lo).log10() * o.points_per_decade as f64).ceil() as usize + 1;
    Ok(FrequencyGrid { omega_min: lo, omega_max: hi, points_per_decade: o.points_per_decade, points })
}

/// Trapezoid weights in `ln omega` for `int f d omega`.
fn log_trapezoid(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let d = 0.5 * (grid[i + 1] / grid[i]).ln();
        w[i] += d * grid[i];
        w[i + 1] += d * grid[i + 1];
    }
    w
}

/// Tail estimate beyond one end of the grid from the envelope `max |f|` of
/// two adjacent edge windows. A decaying power law is integrated to
/// infinity. An upper edge that oscillates without decaying (retarded
/// regime) is bounded by its last-decade envelope times `omega_max`.
fn tail(grid: &[f64], values: &[f64], upper: bool) -> f64 {
    let n = grid.len();
    let m = TAIL_FIT_POINTS.min(n / 2);
    if m < 2 {
        return f64::INFINITY;
    }
    let (edge, inner): (Vec<usize>, Vec<usize>) =
        if upper { ((n - m..n).collect(), (n - 2 * m..n - m).collect()) } else { ((0..m).collect(), (m..2 * m).collect()) };
    let env = |idx: &[usize]| idx.iter().map(|&i| values[i].abs()).fold(0.0, f64::max);
    let centre = |idx: &[usize]| (grid[idx[0]] * grid[idx[idx.len() - 1]]).sqrt();
    let (a, a_in) = (env(&edge), env(&inner));
    if a == 0.0 {
        return 0.0;
    }
    let slope = if a_in > 0.0 { (a / a_in).ln() / (centre(&edge) / centre(&inner)).ln() } else { f64::INFINITY };
    if upper && slope < -1.0 {
        return a * grid[n - 1] / (-slope - 1.0);
    }
    if !upper && slope > -1.0 {
        return a * grid[0] / (slope + 1.0);
    }
    if upper {
        let decade: Vec<usize> = (0..n).filter(|&i| grid[i] >= 0.1 * grid[n - 1]).collect();
        let flips = decade.windows(2).filter(|w| values[w[0]] * values[w[1]] < 0.0).count();
        if flips >= 2 {
            return env(&decade) * grid[n - 1];
        }
    }
    f64::INFINITY
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Thermal Casimir force on `body` at temperature `t`, integrated over a
/// log grid with the symmetrized weight and split into the two orderings.
pub fn casimir_thermal_force(
    scene: &Scene,
    body: &BodySpec,
    t: f64,
    fo: &ForceOptions,
    opts: &SolverOptions,
) -> Result<ForceReport> {
    body.validate(scene)?;
    if !(t >= 0.0) {
        return Err(Error::param("temperature must be nonnegative"));
    }
    let grid = frequency_grid(scene, fo)?;
    let omegas = crate::material::log_grid(grid.omega_min, grid.omega_max, grid.points);
    let h = fo.step.unwrap_or_else(|| default_step(scene));
    // Spectral force per body voxel at every grid point, in grid order.
    let spectral: Vec<Vec<SpectralForce>> = omegas
        .par_iter()
        .map(|&w| body.voxels.iter().map(|&u| spectral_voxel_force(scene, w, u, h, opts)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let units = &scene.units;
    let weights = |w: f64, o: Ordering| -> f64 {
        if t == 0.0 {
            match o {
                Ordering::MinusPlus => 0.0,
                _ => 1.0,
            }
        } else {
            planck_weight(units.hbar * w / (units.kb * t), o)
        }
    };
    let quad = log_trapezoid(&omegas);
    let integrate = |o: Ordering, v: usize| -> Vec3 {
        let terms: Vec<Vec3> = omegas.iter().zip(&quad).zip(&spectral).map(|((&w, &q), s)| s[v].force * (q * weights(w, o))).collect();
        pairwise_sum(&terms)
    };
    let mut per_voxel = Vec::new();
    let (mut total, mut pm, mut mp) = (Vec::new(), Vec::new(), Vec::new());
    for (v, &u) in body.voxels.iter().enumerate() {
        let f = integrate(Ordering::Symmetrized, v);
        total.push(f);
        pm.push(integrate(Ordering::PlusMinus, v));
        mp.push(integrate(Ordering::MinusPlus, v));
        per_voxel.push(VoxelForce { voxel: u, position: arr(&scene.voxels[u].position), force: arr(&f) });
    }
    let (total, pm, mp) = (pairwise_sum(&total), pairwise_sum(&pm), pairwise_sum(&mp));
    // Integrand of the total, per component, for the tail estimate.
    let mut tail_bound = 0.0;
    for i in 0..3 {
        let g: Vec<f64> = omegas
            .iter()
            .zip(&spectral)
            .map(|(&w, s)| {
                let f: f64 = s.iter().map(|x| x.force[i]).sum();
                let floor: f64 = s.iter().map(|x| x.roundoff).sum();
                if f.abs() <= floor {
                    0.0
                } else {
                    f * weights(w, Ordering::Symmetrized)
                }
            })
            .collect();
        tail_bound += tail(&omegas, &g, true) + tail(&omegas, &g, false);
    }
    let noise_terms: Vec<f64> = omegas
        .iter()
        .zip(&quad)
        .zip(&spectral)
        .map(|((&w, &q), s)| q * weights(w, Ordering::Symmetrized) * s.iter().map(|x| x.error_bar).sum::<f64>())
        .collect();
    let noise_floor = pairwise_sum(&noise_terms);
    if tail_bound > fo.max_tail_fraction * total.norm() {
        return Err(Error::Quadrature(format!(
            "force frequency integral unconverged: tail bound {tail_bound:.3e} vs total {:.3e} on [{:.3e}, {:.3e}]",
            total.norm(),
            grid.omega_min,
            grid.omega_max
        )));
    }
    Ok(ForceReport {
        temperature: t,
        total: arr(&total),
        plus_minus: arr(&pm),
        minus_plus: arr(&mp),
        grid,
        tail_bound,
        noise_floor,
        per_voxel,
        gradient_rule: GRADIENT_RULE,
        caveat: QUASI_STATIC_CAVEAT,
        scene_hash: scene.hash(),
    })
}

/// Per-voxel force CSV: `voxel,x,y,z,fx,fy,fz`.
pub fn write_force_csv(report: &ForceReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["voxel", "x", "y", "z", "fx", "fy", "fz"])?;
    for v in &report.per_voxel {
        let mut row = vec![v.voxel.to_string()];
        row.extend(v.position.iter().chain(&v.force).map(|x| format!("{x:e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// LDOS averaged over the three axes, `(2 omega / (pi c^2)) Im Tr G`.
pub fn orientation_averaged_ldos(scene: &Scene, omega: f64, x0: &Vec3, opts: &SolverOptions) -> Result<f64> {
    check_outside_voxels(scene, x0)?;
    let eg = EffectiveGreen::new(scene, omega, &[*x0], opts)?;
    let c = scene.units.c;
    Ok(2.0 * omega / (PI * c * c) * eg.pair(x0, x0)?.trace().im)
}
