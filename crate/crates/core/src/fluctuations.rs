//! Noise-current correlator kernels and the commutator and thermal spectral
//! densities assembled from them.
//!
//! Every density carries the prefactor `(hbar / pi) (omega / c)^2`, so the
//! noise form `int k^2 eps'' G G^* dV`, the `Im G` form and the mode sum are
//! directly comparable.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greens::surface::{scatterer_volume_term, shell_volume_term};
use crate::greens::{EffectiveGreen, SolverOptions};
use crate::linalg::{imag_part, rel_diff, Dyad, Vec3, C64};
use crate::modes::ModeSumDensity;
use crate::scene::{attenuation_length, Scene, ShellRule};
use crate::units::Units;

/// Region of the noise-volume integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    Scatterer,
    Shell,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "region")]
pub enum Provenance {
    NoiseVolume(Region),
    ModeSum,
    ImagG,
}

impl Provenance {
    pub fn tag(&self) -> String {
        match self {
            Provenance::NoiseVolume(Region::Scatterer) => "noise-scatterer".into(),
            Provenance::NoiseVolume(Region::Shell) => "noise-shell".into(),
            Provenance::NoiseVolume(Region::All) => "noise-all".into(),
            Provenance::ModeSum => "mode-sum".into(),
            Provenance::ImagG => "imag-g".into(),
        }
    }
}

/// Operator ordering of a thermal correlator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ordering {
    /// `<E^- E^+>`, Bose weight `1 / (e^x - 1)`.
    MinusPlus,
    /// `<E^+ E^->`, weight `1 / (1 - e^-x)`.
    PlusMinus,
    /// Symmetrized, weight `coth(x / 2)`.
    Symmetrized,
}

impl Ordering {
    pub fn tag(self) -> &'static str {
        match self {
            Ordering::MinusPlus => "minus-plus",
            Ordering::PlusMinus => "plus-minus",
            Ordering::Symmetrized => "symmetrized",
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct DensityMeta {
    pub scene_hash: String,
    pub solver_tolerance: f64,
    pub shell_rule: Option<ShellRule>,
    pub shell_nodes: usize,
    pub mode_count: Option<usize>,
    pub delta_omega: Option<f64>,
    pub box_side: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelatorDensity {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub omega: f64,
    #[serde(serialize_with = "crate::greens::export::ser_dyad")]
    pub value: Dyad,
    pub provenance: Provenance,
    pub temperature: Option<f64>,
    pub ordering: Option<Ordering>,
    pub meta: DensityMeta,
}

fn prefactor(units: &Units, k0: f64) -> C64 {
    C64::new(units.hbar / PI * k0 * k0, 0.0)
}

/// Default shell rule: radial Gauss nodes scaled with the thickness in
/// attenuation lengths and wavelengths, angular degree twice the expansion
/// order.
pub fn auto_shell_rule(scene: &Scene, eg: &EffectiveGreen) -> Result<Option<ShellRule>> {
    let Some(shell) = scene.active_shell() else { return Ok(None) };
    let thickness = shell.outer_radius - shell.inner_radius;
    let att = attenuation_length(&shell.material, eg.omega, &scene.units)?;
    let per_att = if att.is_finite() { thickness / att } else { 0.0 };
    let radial = (16.0 + 8.0 * per_att + 4.0 * thickness * eg.k0 / PI).ceil().min(400.0) as usize;
    let lmax = eg.expansion_order().unwrap_or(4);
    let angular = (2 * lmax + 8).clamp(6, 512);
    Ok(Some(ShellRule::Spherical { radial, angular }))
}

/// Noise-region densities of one scene, split by region.
pub struct NoiseSplit {
    pub scatterer: Dyad,
    pub shell: Dyad,
    pub shell_nodes: usize,
    pub rule: Option<ShellRule>,
}

impl NoiseSplit {
    /// Region kernel times `scale`; `All` sums the scaled parts so that the
    /// split is additive bit for bit.
    pub fn region(&self, region: Region, scale: C64) -> Dyad {
        match region {
            Region::Scatterer => self.scatterer * scale,
            Region::Shell => self.shell * scale,
            Region::All => self.scatterer * scale + self.shell * scale,
        }
    }
}

/// Raw kernels `int k^2 eps'' G^T(x, a) G^*(x, b) dV` over the scatterer and
/// the shell (no prefactor).
pub fn noise_split(
    eg: &EffectiveGreen,
    scene: &Scene,
    a: &Vec3,
    b: &Vec3,
    rule: Option<ShellRule>,
) -> Result<NoiseSplit> {
    let ra = eg.source(a)?;
    let rb = if a == b { ra.clone() } else { eg.source(b)? };
    let scatterer = scatterer_volume_term(eg, &ra, &rb);
    let rule = match rule {
        Some(r) => Some(r),
        None => auto_shell_rule(scene, eg)?,
    };
    let (shell, shell_nodes) = match (scene.active_shell(), rule) {
        (Some(_), Some(r)) => shell_volume_term(eg, scene, &ra, &rb, r)?,
        _ => (Dyad::zeros(), 0),
    };
    Ok(NoiseSplit { scatterer, shell, shell_nodes, rule })
}

fn points(a: &Vec3) -> [f64; 3] {
    [a.x, a.y, a.z]
}

/// `(hbar/pi) k^2 int_region k^2 eps'' G(a, x) G^*(x, b) dV` with
/// `G = G_eff` of the composed scene. `rule = None` picks
/// [`auto_shell_rule`].
#[allow(clippy::too_many_arguments)]
pub fn noise_correlator_density(
    scene: &Scene,
    region: Region,
    omega: f64,
    a: &Vec3,
    b: &Vec3,
    rule: Option<ShellRule>,
    opts: &SolverOptions,
) -> Result<CorrelatorDensity> {
    let eg = EffectiveGreen::new(scene, omega, &[*a, *b], opts)?;
    let split = noise_split(&eg, scene, a, b, rule)?;
    let value = split.region(region, prefactor(&scene.units, eg.k0));
    Ok(CorrelatorDensity {
        a: points(a),
        b: points(b),
        omega,
        value,
        provenance: Provenance::NoiseVolume(region),
        temperature: None,
        ordering: None,
        meta: DensityMeta {
            scene_hash: eg.scene_hash.clone(),
            solver_tolerance: opts.tolerance,
            shell_rule: split.rule,
            shell_nodes: if region == Region::Scatterer { 0 } else { split.shell_nodes },
            warnings: eg.warnings.clone(),
            ..Default::default()
        },
    })
}

/// `(hbar/pi) k^2 Im G_eff(a, b)`.
pub fn commutator_density(scene: &Scene, omega: f64, a: &Vec3, b: &Vec3, opts: &SolverOptions) -> Result<CorrelatorDensity> {
    let eg = EffectiveGreen::new(scene, omega, &[*a, *b], opts)?;
    let g = eg.pair(a, b)?;
    Ok(CorrelatorDensity {
        a: points(a),
        b: points(b),
        omega,
        value: imag_part(&g) * prefactor(&scene.units, eg.k0),
        provenance: Provenance::ImagG,
        temperature: None,
        ordering: None,
        meta: DensityMeta {
            scene_hash: eg.scene_hash.clone(),
            solver_tolerance: opts.tolerance,
            warnings: eg.warnings.clone(),
            ..Default::default()
        },
    })
}

/// Wraps a mode-sum density as a correlator density.
pub fn from_mode_sum(d: &ModeSumDensity, a: &Vec3, b: &Vec3, scene_hash: &str) -> CorrelatorDensity {
    CorrelatorDensity {
        a: points(a),
        b: points(b),
        omega: d.omega,
        value: d.value,
        provenance: Provenance::ModeSum,
        temperature: None,
        ordering: None,
        meta: DensityMeta {
            scene_hash: scene_hash.to_string(),
            mode_count: Some(d.mode_count),
            delta_omega: Some(d.delta_omega),
            box_side: Some(d.box_side),
            warnings: d.warnings.clone(),
            ..Default::default()
        },
    }
}

/// Below this `x = hbar omega / k T` the factors use their Laurent series.
pub const SMALL_X: f64 = 1e-8;
/// Above this the exponentials are replaced by their asymptotic forms.
pub const LARGE_X: f64 = 50.0;

/// Thermal weight of `ordering` at `x = hbar omega / (k T)`; `x = inf` is
/// the zero-temperature limit.
pub fn planck_weight(x: f64, ordering: Ordering) -> f64 {
    let bose = if x.is_infinite() {
        0.0
    } else if x <= SMALL_X {
        1.0 / x - 0.5 + x / 12.0
    } else if x >= LARGE_X {
        let e = (-x).exp();
        e * (1.0 + e)
    } else {
        1.0 / x.exp_m1()
    };
    match ordering {
        Ordering::MinusPlus => bose,
        Ordering::PlusMinus => 1.0 + bose,
        Ordering::Symmetrized => {
            if x.is_infinite() {
                1.0
            } else if x <= SMALL_X {
                2.0 / x + x / 6.0
            } else if x >= LARGE_X {
                1.0 + 2.0 * (-x).exp()
            } else {
                1.0 / (0.5 * x).tanh()
            }
        }
    }
}

/// Planck factor of `ordering` at frequency `omega` and temperature `t`.
pub fn planck_factor(omega: f64, t: f64, ordering: Ordering, units: &Units) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::param(format!("omega must be positive, got {omega}")));
    }
    if !(t >= 0.0) {
        return Err(Error::param(format!("temperature must be nonnegative, got {t}")));
    }
    let x = if t == 0.0 { f64::INFINITY } else { units.hbar * omega / (units.kb * t) };
    Ok(planck_weight(x, ordering))
}

/// Commutator density weighted by the Planck factor of `ordering`.
pub fn thermal_correlator_density(
    scene: &Scene,
    omega: f64,
    a: &Vec3,
    b: &Vec3,
    t: f64,
    ordering: Ordering,
    opts: &SolverOptions,
) -> Result<CorrelatorDensity> {
    let w = planck_factor(omega, t, ordering, &scene.units)?;
    let mut d = commutator_density(scene, omega, a, b, opts)?;
    d.value *= C64::new(w, 0.0);
    d.temperature = Some(t);
    d.ordering = Some(ordering);
    Ok(d)
}

/// `sum_w rho(w) e^{-i w tau} dw` by the trapezoid rule on the given grid.
pub fn time_domain_correlator(densities: &[CorrelatorDensity], tau: f64) -> Result<Dyad> {
    if densities.len() < 2 {
        return Err(Error::Quadrature("time-domain synthesis needs at least two frequencies".into()));
    }
    let mut acc = Dyad::zeros();
    for pair in densities.windows(2) {
        let (d0, d1) = (&pair[0], &pair[1]);
        let h = d1.omega - d0.omega;
        if !(h > 0.0) {
            return Err(Error::Quadrature("frequency grid must increase strictly".into()));
        }
        let f0 = d0.value * C64::from_polar(1.0, -d0.omega * tau);
        let f1 = d1.value * C64::from_polar(1.0, -d1.omega * tau);
        acc += (f0 + f1) * C64::new(0.5 * h, 0.0);
    }
    Ok(acc)
}

type CacheKey = (String, u64, [u64; 3], [u64; 3], String);

/// Read-mostly cache of densities keyed by scene hash, frequency, points and
/// provenance.
#[derive(Default)]
pub struct DensityCache {
    inner: RwLock<BTreeMap<CacheKey, CorrelatorDensity>>,
}

impl DensityCache {
    fn key(scene_hash: &str, omega: f64, a: &Vec3, b: &Vec3, provenance: &Provenance) -> CacheKey {
        let bits = |p: &Vec3| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
        (scene_hash.to_string(), omega.to_bits(), bits(a), bits(b), provenance.tag())
    }

    pub fn get_or_insert_with(
        &self,
        scene_hash: &str,
        omega: f64,
        a: &Vec3,
        b: &Vec3,
        provenance: Provenance,
        compute: impl FnOnce() -> Result<CorrelatorDensity>,
    ) -> Result<CorrelatorDensity> {
        let key = Self::key(scene_hash, omega, a, b, &provenance);
        if let Some(d) = self.inner.read().expect("cache lock").get(&key) {
            return Ok(d.clone());
        }
        let d = compute()?;
        self.inner.write().expect("cache lock").entry(key).or_insert_with(|| d.clone());
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Columns: `omega, a, b, row, col, re, im, provenance, T, ordering`.
pub fn write_density_csv(rows: &[CorrelatorDensity], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["omega", "a", "b", "row", "col", "re", "im", "provenance", "T", "ordering"])?;
    let fmt = |p: &[f64; 3]| format!("{:e} {:e} {:e}", p[0], p[1], p[2]);
    for d in rows {
        for i in 0..3 {
            for j in 0..3 {
                let z = d.value[(i, j)];
                w.write_record(&[
                    format!("{:e}", d.omega),
                    fmt(&d.a),
                    fmt(&d.b),
                    i.to_string(),
                    j.to_string(),
                    format!("{:e}", z.re),
                    format!("{:e}", z.im),
                    d.provenance.tag(),
                    d.temperature.map(|t| format!("{t:e}")).unwrap_or_default(),
                    d.ordering.map(|o| o.tag().to_string()).unwrap_or_default(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Three-way equivalence

/// The three routes to the photonic part of the commutator density.
#[derive(Debug, Clone, Serialize)]
pub struct ThreeWay {
    /// Mode sum over the scattered box modes of the shell-free scene.
    #[serde(serialize_with = "crate::greens::export::ser_dyad")]
    pub mode_sum: Dyad,
    /// Noise correlator of the shell region.
    #[serde(serialize_with = "crate::greens::export::ser_dyad")]
    pub shell_noise: Dyad,
    /// `Im G` density minus the scatterer-region noise density.
    #[serde(serialize_with = "crate::greens::export::ser_dyad")]
    pub imag_minus_scatterer: Dyad,
    pub mode_count: usize,
    pub shell_nodes: usize,
    pub d_mode_shell: f64,
    pub d_mode_imag: f64,
    pub d_shell_imag: f64,
}

impl ThreeWay {
    pub fn worst(&self) -> f64 {
        self.d_mode_shell.max(self.d_mode_imag).max(self.d_shell_imag)
    }
}

/// Shell-side densities `(N_shell, (hbar/pi) k^2 Im G - N_scatterer)` of a
/// scene with an active shell, and the node count of the shell rule.
pub fn shell_side(
    scene: &Scene,
    omega: f64,
    a: &Vec3,
    b: &Vec3,
    rule: Option<ShellRule>,
    opts: &SolverOptions,
) -> Result<(Dyad, Dyad, usize)> {
    if scene.active_shell().is_none() {
        return Err(Error::param("the shell-side densities need an active shell"));
    }
    let eg = EffectiveGreen::new(scene, omega, &[*a, *b], opts)?;
    let split = noise_split(&eg, scene, a, b, rule)?;
    let pref = prefactor(&scene.units, eg.k0);
    let img = imag_part(&eg.pair(a, b)?) * pref;
    Ok((split.region(Region::Shell, pref), img - split.region(Region::Scatterer, pref), split.shell_nodes))
}

/// Mode-sum density of the shell-free scene in a box of side `box_side`
/// with the default band width.
pub fn mode_side(scene: &Scene, omega: f64, a: &Vec3, b: &Vec3, box_side: f64, opts: &SolverOptions) -> Result<ModeSumDensity> {
    use crate::modes::{default_delta_omega, enumerate_band, mode_sum_spectral_density, FieldForm, DEFAULT_MODE_CAP};
    let bare = scene.without_shell();
    let dw = default_delta_omega(omega, box_side, &scene.units);
    let basis = enumerate_band(box_side, omega - dw, omega + dw, &scene.units, DEFAULT_MODE_CAP)?;
    mode_sum_spectral_density(&bare, a, b, omega, dw, &basis, FieldForm::Dressed, opts)
}

pub fn three_way(
    scene: &Scene,
    omega: f64,
    a: &Vec3,
    b: &Vec3,
    box_side: f64,
    rule: Option<ShellRule>,
    opts: &SolverOptions,
) -> Result<ThreeWay> {
    let modes = mode_side(scene, omega, a, b, box_side, opts)?;
    let (shell_noise, imag_minus_scatterer, shell_nodes) = shell_side(scene, omega, a, b, rule, opts)?;
    Ok(ThreeWay {
        d_mode_shell: rel_diff(&modes.value, &shell_noise),
        d_mode_imag: rel_diff(&modes.value, &imag_minus_scatterer),
        d_shell_imag: rel_diff(&shell_noise, &imag_minus_scatterer),
        mode_sum: modes.value,
        shell_noise,
        imag_minus_scatterer,
        mode_count: modes.mode_count,
        shell_nodes,
    })
}

/// Settings of the equivalence check. Fan levels run coarse to fine.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EquivalenceSettings {
    pub omega: f64,
    pub a: [f64; 3],
    pub b: [f64; 3],
    /// Box sides of the mode-sum fan; the last is the reference box.
    pub box_sides: [f64; 3],
    /// Shell thicknesses in attenuation lengths (inner radius fixed).
    pub thickness_fan: [f64; 3],
    /// Cartesian shell-rule pitches.
    pub pitch_fan: [f64; 3],
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fan {
    pub knob: &'static str,
    pub levels: Vec<f64>,
    /// Which pair is tracked.
    pub pair: &'static str,
    pub disagreement: Vec<f64>,
    pub monotone: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub reference: ThreeWay,
    pub fans: Vec<Fan>,
    pub tolerance: f64,
    pub pass: bool,
}

fn fan(knob: &'static str, pair: &'static str, levels: &[f64], disagreement: Vec<f64>) -> Fan {
    let monotone = disagreement.windows(2).all(|w| w[1] < w[0]);
    Fan { knob, levels: levels.to_vec(), pair, disagreement, monotone }
}

/// Reference three-way agreement plus box-size, shell-thickness and
/// shell-pitch refinement fans.
pub fn verify_equivalence(scene: &Scene, s: &EquivalenceSettings, opts: &SolverOptions) -> Result<EquivalenceReport> {
    let shell = scene.active_shell().ok_or_else(|| Error::param("the equivalence check needs an active shell"))?.clone();
    let (a, b) = (Vec3::from(s.a), Vec3::from(s.b));
    let reference = three_way(scene, s.omega, &a, &b, s.box_sides[2], None, opts)?;

    let boxes = s
        .box_sides
        .iter()
        .map(|&l| Ok(rel_diff(&mode_side(scene, s.omega, &a, &b, l, opts)?.value, &reference.imag_minus_scatterer)))
        .collect::<Result<Vec<_>>>()?;

    let att = attenuation_length(&shell.material, s.omega, &scene.units)?;
    if !att.is_finite() {
        return Err(Error::param("the shell must be lossy at the check frequency"));
    }
    let thick = s
        .thickness_fan
        .iter()
        .map(|&n| {
            let mut sc = scene.clone();
            if let Some(sh) = sc.shell.as_mut() {
                sh.outer_radius = sh.inner_radius + n * att;
            }
            let (ii, iii, _) = shell_side(&sc, s.omega, &a, &b, None, opts)?;
            Ok(rel_diff(&ii, &iii))
        })
        .collect::<Result<Vec<_>>>()?;

    let pitch = s
        .pitch_fan
        .iter()
        .map(|&p| {
            let (ii, _, _) = shell_side(scene, s.omega, &a, &b, Some(ShellRule::Cartesian { pitch: p }), opts)?;
            Ok(rel_diff(&ii, &reference.imag_minus_scatterer))
        })
        .collect::<Result<Vec<_>>>()?;

    let fans = vec![
        fan("box-side", "mode-sum vs imag-minus-scatterer", &s.box_sides, boxes),
        fan("shell-thickness", "shell-noise vs imag-minus-scatterer", &s.thickness_fan, thick),
        fan("shell-pitch", "shell-noise vs imag-minus-scatterer", &s.pitch_fan, pitch),
    ];
    let pass = reference.worst() <= s.tolerance && fans.iter().all(|f| f.monotone);
    Ok(EquivalenceReport { reference, fans, tolerance: s.tolerance, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rel_diff;
    use crate::material::{DrudeLorentzModel, MaterialRef};
    use crate::scene::{Shell, Voxel};

    #[test]
    fn planck_limits() {
        let u = Units::default();
        assert!((planck_factor(2f64.ln(), 1.0, Ordering::MinusPlus, &u).unwrap() - 1.0).abs() < 1e-14);
        let x: f64 = 1e-10;
        let b = planck_weight(x, Ordering::MinusPlus);
        assert!(((b - (1.0 / x - 0.5)) / b).abs() < 1e-6);
        assert_eq!(planck_factor(1.0, 0.0, Ordering::MinusPlus, &u).unwrap(), 0.0);
        assert_eq!(planck_factor(1.0, 0.0, Ordering::PlusMinus, &u).unwrap(), 1.0);
        assert_eq!(planck_factor(1.0, 0.0, Ordering::Symmetrized, &u).unwrap(), 1.0);
        assert!(planck_factor(1.0, -1.0, Ordering::Symmetrized, &u).is_err());
        for x in [0.1, 1.0, 10.0] {
            let lhs = planck_weight(x, Ordering::MinusPlus) + planck_weight(x, Ordering::PlusMinus);
            assert!((lhs / planck_weight(x, Ordering::Symmetrized) - 1.0).abs() < 1e-12);
        }
        // Branch edges stay continuous.
        for edge in [SMALL_X, LARGE_X] {
            for o in [Ordering::MinusPlus, Ordering::PlusMinus, Ordering::Symmetrized] {
                let (lo, hi) = (planck_weight(edge * (1.0 - 1e-13), o), planck_weight(edge * (1.0 + 1e-13), o));
                assert!(((lo - hi) / hi).abs() < 1e-10, "{o:?} at {edge}");
            }
        }
    }

    fn lossy_scene() -> Scene {
        let omega = 2.0 * PI;
        let m = MaterialRef::DrudeLorentz(DrudeLorentzModel::through(omega, C64::new(2.0, 0.5)).unwrap());
        let sm = MaterialRef::DrudeLorentz(DrudeLorentzModel::through(omega, C64::new(1.0, 1.0)).unwrap());
        let mut s = Scene::empty(8.0, 0.05);
        s.voxels.push(Voxel { position: Vec3::zeros(), material: m });
        s.shell = Some(Shell { inner_radius: 0.5, outer_radius: 3.5, material: sm });
        s.shell_enabled = true;
        s
    }

    #[test]
    fn vacuum_noise_is_zero() {
        let s = Scene::empty(4.0, 0.1);
        let a = Vec3::new(0.1, 0.0, 0.0);
        let d = noise_correlator_density(&s, Region::All, 2.0 * PI, &a, &a, None, &SolverOptions::default()).unwrap();
        assert_eq!(d.value, Dyad::zeros());
    }

    #[test]
    fn region_split_adds_up_and_matches_imag_g() {
        let s = lossy_scene();
        let omega = 2.0 * PI;
        let a = Vec3::new(0.1, 0.02, 0.0);
        let b = Vec3::new(-0.05, 0.1, 0.03);
        let o = SolverOptions::default();
        let all = noise_correlator_density(&s, Region::All, omega, &a, &b, None, &o).unwrap();
        let sc = noise_correlator_density(&s, Region::Scatterer, omega, &a, &b, None, &o).unwrap();
        let sh = noise_correlator_density(&s, Region::Shell, omega, &a, &b, None, &o).unwrap();
        assert_eq!(all.value, sc.value + sh.value);
        let c = commutator_density(&s, omega, &a, &b, &o).unwrap();
        assert!(rel_diff(&all.value, &c.value) < 1e-6, "{}", rel_diff(&all.value, &c.value));
    }

    #[test]
    fn coincident_commutator_is_hermitian_positive() {
        let s = lossy_scene();
        let a = Vec3::new(0.1, 0.02, 0.0);
        let c = commutator_density(&s, 2.0 * PI, &a, &a, &SolverOptions::default()).unwrap();
        assert!(rel_diff(&c.value, &c.value.adjoint()) < 1e-12);
        for i in 0..3 {
            assert!(c.value[(i, i)].re > 0.0);
        }
    }

    #[test]
    fn thermal_orderings() {
        let s = lossy_scene();
        let a = Vec3::new(0.1, 0.02, 0.0);
        let o = SolverOptions::default();
        let omega = 2.0 * PI;
        let zero = thermal_correlator_density(&s, omega, &a, &a, 0.0, Ordering::MinusPlus, &o).unwrap();
        assert_eq!(zero.value, Dyad::zeros());
        let t = omega / 0.01;
        let sym = thermal_correlator_density(&s, omega, &a, &a, t, Ordering::Symmetrized, &o).unwrap();
        let com = commutator_density(&s, omega, &a, &a, &o).unwrap();
        let hi_t = com.value * C64::new(2.0 / 0.01, 0.0);
        assert!(rel_diff(&sym.value, &hi_t) < 0.01);
    }

    #[test]
    fn time_domain_at_zero_delay_is_the_integral() {
        let s = Scene::empty(4.0, 0.1);
        let a = Vec3::zeros();
        let o = SolverOptions::default();
        let ds: Vec<CorrelatorDensity> = (1..=3).map(|i| commutator_density(&s, i as f64, &a, &a, &o).unwrap()).collect();
        let g = time_domain_correlator(&ds, 0.0).unwrap();
        let expect = (ds[0].value + ds[1].value * C64::new(2.0, 0.0) + ds[2].value) * C64::new(0.5, 0.0);
        assert!(rel_diff(&g, &expect) < 1e-14);
    }

    #[test]
    fn cache_reuses_entries() {
        let cache = DensityCache::default();
        let s = Scene::empty(4.0, 0.1);
        let a = Vec3::zeros();
        let o = SolverOptions::default();
        let mut calls = 0;
        for _ in 0..3 {
            cache
                .get_or_insert_with(&s.hash(), 1.0, &a, &a, Provenance::ImagG, || {
                    calls += 1;
                    commutator_density(&s, 1.0, &a, &a, &o)
                })
                .unwrap();
        }
        assert_eq!((calls, cache.len()), (1, 1));
    }
}
