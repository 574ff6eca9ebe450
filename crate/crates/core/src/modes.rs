//! Born-von Karman plane-wave modes, their scattered counterparts in a
//! voxelized scene, and frequency-binned mode-sum spectral densities.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::greens::surface::sum_dyads;
use crate::greens::{EffectiveGreen, SolverOptions, SourceResponse};
use crate::linalg::{imag_part, to_complex, CVec3, Dyad, Vec3, C64};
use crate::scene::Scene;
use crate::units::Units;

pub const DEFAULT_MODE_CAP: usize = 4_000_000;

/// Fewer modes than this in a frequency band triggers a warning.
pub const MIN_BAND_MODES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    /// Lattice index, `k = 2 pi n / L`.
    pub n: [i64; 3],
    pub k: Vec3,
    /// 1 or 2.
    pub polarization: u8,
    pub unit: Vec3,
    pub omega: f64,
    /// `sqrt(hbar omega / (2 V))`.
    pub amplitude: f64,
}

impl Mode {
    /// `|n|^2`, shared by every mode of the same frequency.
    pub fn shell_index(&self) -> i64 {
        self.n.iter().map(|v| v * v).sum()
    }

    /// Bare plane-wave field at `x`.
    pub fn vacuum_field(&self, x: &Vec3) -> CVec3 {
        let phase = C64::from_polar(self.amplitude, self.k.dot(x));
        to_complex(&self.unit) * phase
    }
}

#[derive(Debug, Clone)]
pub struct ModeBasis {
    pub box_side: f64,
    pub units: Units,
    pub modes: Vec<Mode>,
}

impl ModeBasis {
    pub fn volume(&self) -> f64 {
        self.box_side.powi(3)
    }

    /// Lattice spacing in angular frequency, `2 pi c / L`.
    pub fn spacing(&self) -> f64 {
        2.0 * PI * self.units.c / self.box_side
    }

    pub fn in_band(&self, lo: f64, hi: f64) -> impl Iterator<Item = &Mode> {
        self.modes.iter().filter(move |m| m.omega >= lo && m.omega < hi)
    }
}

/// `e1 = z x k / |z x k|` (or `x` when `k || z`), `e2 = k x e1`.
pub fn polarization_pair(k: &Vec3) -> (Vec3, Vec3) {
    let khat = k.normalize();
    let z = Vec3::z();
    let e1 = z.cross(&khat);
    let e1 = if e1.norm() < 1e-12 { Vec3::x() } else { e1.normalize() };
    (e1, khat.cross(&e1))
}

/// Modes with `omega_lo <= omega < omega_hi` (`n = 0` excluded), ordered by
/// lattice index then polarization.
pub fn enumerate_band(box_side: f64, omega_lo: f64, omega_hi: f64, units: &Units, cap: usize) -> Result<ModeBasis> {
    if !(box_side > 0.0) {
        return Err(Error::param(format!("box side must be positive, got {box_side}")));
    }
    if !(omega_hi > omega_lo) {
        return Err(Error::param(format!("empty frequency band [{omega_lo}, {omega_hi})")));
    }
    let dk = 2.0 * PI / box_side;
    let kmax = omega_hi / units.c;
    let m = (kmax / dk).floor() as i64 + 1;
    let vol = box_side.powi(3);
    let expected = (8.0 * PI / 3.0 * ((kmax / dk).powi(3) - (omega_lo.max(0.0) / units.c / dk).powi(3))).max(0.0);
    if expected > 1.2 * cap as f64 + 100.0 {
        return Err(Error::ModeCap { count: expected as usize, cap });
    }
    let mut modes = Vec::new();
    for ix in -m..=m {
        for iy in -m..=m {
            for iz in -m..=m {
                if ix == 0 && iy == 0 && iz == 0 {
                    continue;
                }
                let k = Vec3::new(ix as f64, iy as f64, iz as f64) * dk;
                let omega = units.c * k.norm();
                if omega < omega_lo || omega >= omega_hi {
                    continue;
                }
                if modes.len() + 2 > cap {
                    return Err(Error::ModeCap { count: modes.len() + 2, cap });
                }
                let amplitude = (units.hbar * omega / (2.0 * vol)).sqrt();
                let (e1, e2) = polarization_pair(&k);
                for (j, unit) in [(1u8, e1), (2u8, e2)] {
                    modes.push(Mode { n: [ix, iy, iz], k, polarization: j, unit, omega, amplitude });
                }
            }
        }
    }
    Ok(ModeBasis { box_side, units: *units, modes })
}

/// All modes with `omega <= omega_max`.
pub fn enumerate_modes(box_side: f64, omega_max: f64, units: &Units, cap: usize) -> Result<ModeBasis> {
    let first = 2.0 * PI * units.c / box_side;
    if !(omega_max >= first) {
        return Err(Error::param(format!("omega_max {omega_max} lies below the first lattice shell {first}")));
    }
    // Closed upper edge: nudge by one ulp-scale step.
    enumerate_band(box_side, 0.0, omega_max * (1.0 + 1e-14), units, cap)
}

/// Default band width: two lattice spacings, widened until the band is
/// expected to hold [`MIN_BAND_MODES`] modes.
pub fn default_delta_omega(omega: f64, box_side: f64, units: &Units) -> f64 {
    let spacing = 2.0 * PI * units.c / box_side;
    let radius = omega / spacing;
    let per_spacing = 8.0 * PI * radius * radius;
    spacing * (2.0f64).max(MIN_BAND_MODES as f64 / per_spacing.max(1e-300))
}

/// How the scattered mode field is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FieldForm {
    /// `E_v + sum_u k^2 dV G_eff(x, u) chi_u E_v(u)`.
    #[default]
    Dressed,
    /// `E_v + sum_u k^2 dV G_v(x, u) chi_u E_eff(u)` with `E_eff` solved
    /// self-consistently at the voxels.
    SelfConsistent,
}

/// Scene factorized at one mode frequency.
pub struct ModeFieldSolver {
    eg: EffectiveGreen,
}

impl ModeFieldSolver {
    /// The scene must be vacuum-embedded (no active shell).
    pub fn new(scene: &Scene, omega: f64, points: &[Vec3], opts: &SolverOptions) -> Result<Self> {
        if scene.active_shell().is_some() {
            return Err(Error::InvalidScene("mode fields are defined for the vacuum-embedded scene; disable the shell".into()));
        }
        Ok(ModeFieldSolver { eg: EffectiveGreen::new(scene, omega, points, opts)? })
    }

    pub fn green(&self) -> &EffectiveGreen {
        &self.eg
    }

    fn check(&self, mode: &Mode) -> Result<()> {
        if (mode.omega - self.eg.omega).abs() > 1e-12 * self.eg.omega {
            return Err(Error::param(format!("mode frequency {} differs from the solver frequency {}", mode.omega, self.eg.omega)));
        }
        Ok(())
    }

    fn incident(&self, mode: &Mode) -> Vec<CVec3> {
        self.eg.system.positions.iter().map(|p| mode.vacuum_field(p)).collect()
    }

    pub fn field(&self, mode: &Mode, x: &Vec3, form: FieldForm) -> Result<CVec3> {
        self.check(mode)?;
        if self.eg.system.is_empty() {
            return Ok(mode.vacuum_field(x));
        }
        match (form, self.eg.voxel_at(x)) {
            (_, Some(u)) => Ok(self.eg.solve_incident(&self.incident(mode))?[u]),
            (FieldForm::SelfConsistent, None) => {
                let internal = self.eg.solve_incident(&self.incident(mode))?;
                Ok(mode.vacuum_field(x) + self.eg.radiate(x, &internal)?)
            }
            (FieldForm::Dressed, None) => {
                let r = self.eg.source(x)?;
                Ok(self.dressed(&r, mode))
            }
        }
    }

    /// Dressed-form field at `r.source` using the precomputed response
    /// `X(u, x) = G_eff(u, x)`; reciprocity gives `G_eff(x, u) = X^T`.
    fn dressed(&self, r: &SourceResponse, mode: &Mode) -> CVec3 {
        let sys = &self.eg.system;
        let scale = self.eg.k0 * self.eg.k0 * sys.cell_volume;
        let mut e = mode.vacuum_field(&r.source);
        for (u, p) in sys.positions.iter().enumerate() {
            e += r.internal[u].transpose() * mode.vacuum_field(p) * (scale * sys.chi[u]);
        }
        e
    }
}

/// Scattered field of one basis mode at `x`.
pub fn scattered_mode_field(scene: &Scene, mode: &Mode, x: &Vec3, form: FieldForm, opts: &SolverOptions) -> Result<CVec3> {
    ModeFieldSolver::new(scene, mode.omega, &[*x], opts)?.field(mode, x, form)
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeSumDensity {
    pub omega: f64,
    pub delta_omega: f64,
    #[serde(serialize_with = "crate::greens::export::ser_dyad")]
    pub value: Dyad,
    pub mode_count: usize,
    pub box_side: f64,
    pub warnings: Vec<String>,
}

/// `sum E_eff(a) E_eff^*(b) / delta_omega` over basis modes with
/// `|omega_alpha - omega| < delta_omega / 2`. Modes sharing a frequency share
/// one scene solve.
#[allow(clippy::too_many_arguments)]
pub fn mode_sum_spectral_density(
    scene: &Scene,
    a: &Vec3,
    b: &Vec3,
    omega: f64,
    delta_omega: f64,
    basis: &ModeBasis,
    form: FieldForm,
    opts: &SolverOptions,
) -> Result<ModeSumDensity> {
    if !(delta_omega > 0.0) {
        return Err(Error::param(format!("band width must be positive, got {delta_omega}")));
    }
    let (lo, hi) = (omega - 0.5 * delta_omega, omega + 0.5 * delta_omega);
    let mut groups: BTreeMap<i64, Vec<&Mode>> = BTreeMap::new();
    for m in basis.in_band(lo, hi) {
        groups.entry(m.shell_index()).or_default().push(m);
    }
    let count: usize = groups.values().map(Vec::len).sum();
    if count == 0 {
        return Err(Error::EmptyShell(format!("no modes in [{lo}, {hi}) for box side {}", basis.box_side)));
    }
    let mut warnings = Vec::new();
    if count < MIN_BAND_MODES {
        warnings.push(format!("only {count} modes in the band; the mode sum is poorly resolved"));
    }
    let groups: Vec<Vec<&Mode>> = groups.into_values().collect();
    let per_group: Vec<Vec<Dyad>> = groups
        .par_iter()
        .map(|modes| group_terms(scene, a, b, modes, form, opts))
        .collect::<Result<_>>()?;
    let terms: Vec<Dyad> = per_group.into_iter().flatten().collect();
    let value = sum_dyads(&terms) / C64::new(delta_omega, 0.0);
    Ok(ModeSumDensity { omega, delta_omega, value, mode_count: count, box_side: basis.box_side, warnings })
}

fn group_terms(scene: &Scene, a: &Vec3, b: &Vec3, modes: &[&Mode], form: FieldForm, opts: &SolverOptions) -> Result<Vec<Dyad>> {
    let outer = |ea: &CVec3, eb: &CVec3| ea * eb.map(|z| z.conj()).transpose();
    if scene.voxels.is_empty() && scene.active_shell().is_none() {
        return Ok(modes.iter().map(|m| outer(&m.vacuum_field(a), &m.vacuum_field(b))).collect());
    }
    let solver = ModeFieldSolver::new(scene, modes[0].omega, &[*a, *b], opts)?;
    let use_dressed = form == FieldForm::Dressed && solver.eg.voxel_at(a).is_none() && solver.eg.voxel_at(b).is_none();
    if use_dressed {
        let ra = solver.eg.source(a)?;
        let rb = if a == b { None } else { Some(solver.eg.source(b)?) };
        Ok(modes
            .iter()
            .map(|m| {
                let ea = solver.dressed(&ra, m);
                let eb = rb.as_ref().map(|r| solver.dressed(r, m)).unwrap_or(ea);
                outer(&ea, &eb)
            })
            .collect())
    } else {
        modes
            .iter()
            .map(|m| Ok(outer(&solver.field(m, a, form)?, &solver.field(m, b, form)?)))
            .collect()
    }
}

/// `(hbar / pi) (omega / c)^2 Im G_eff(a, b)`.
pub fn commutator_integral_density(scene: &Scene, a: &Vec3, b: &Vec3, omega: f64, opts: &SolverOptions) -> Result<Dyad> {
    let eg = EffectiveGreen::new(scene, omega, &[*a, *b], opts)?;
    let g = eg.pair(a, b)?;
    Ok(imag_part(&g) * C64::new(scene.units.hbar / PI * eg.k0 * eg.k0, 0.0))
}

/// Columns: `omega, row, col, re, im, mode_count, box_side`.
pub fn write_spectral_csv(rows: &[ModeSumDensity], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["omega", "row", "col", "re", "im", "mode_count", "box_side"])?;
    for d in rows {
        for i in 0..3 {
            for j in 0..3 {
                let z = d.value[(i, j)];
                w.write_record(&[
                    format!("{:e}", d.omega),
                    i.to_string(),
                    j.to_string(),
                    format!("{:e}", z.re),
                    format!("{:e}", z.im),
                    d.mode_count.to_string(),
                    format!("{:e}", d.box_side),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
