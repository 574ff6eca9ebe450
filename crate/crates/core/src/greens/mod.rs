//! Dyadic Green tensors: vacuum closed form, the layered-sphere background of
//! the absorbing shell, and the effective tensor of a voxelized scene.

pub mod export;
pub mod ls;
pub mod spherical;
pub mod surface;
pub mod vacuum;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{CVec3, Dyad, Vec3, C64, I};
use crate::scene::{voxel_susceptibilities, Scene};

pub use ls::{Background, Factorization, LsSystem, SelfTermRule, SolverKind, SolverOptions};
pub use spherical::{LayeredSphere, SourceCoefficients};
pub use surface::{greens_identity_residual, surface_functional, IdentityReport, SurfaceForm};
pub use vacuum::{vacuum_green, vacuum_green_curl, vacuum_imag_coincident};

use spherical::{identity_columns, regular_waves, Waves};
use vacuum::vacuum_green_unchecked;

/// Points closer than this fraction of a pitch are treated as coincident.
const COINCIDENCE_FRACTION: f64 = 1e-12;

fn background_for(scene: &Scene, k0: f64, extent: f64) -> Result<Background> {
    match scene.active_shell() {
        None => Ok(Background::Vacuum),
        Some(shell) => {
            let eps = crate::material::eval_permittivity(&shell.material, k0 * scene.units.c)?;
            let k1 = k0 * eps.sqrt();
            let bg = LayeredSphere::new(k0, vec![shell.inner_radius, shell.outer_radius], vec![k1], extent)?;
            Ok(Background::Layered(Box::new(bg)))
        }
    }
}

/// Radius bounding the voxels and every core point in `points`.
fn core_extent(scene: &Scene, points: &[Vec3]) -> f64 {
    let inner = scene.active_shell().map(|s| s.inner_radius).unwrap_or(f64::INFINITY);
    let r = points.iter().map(|p| p.norm()).filter(|&r| r < inner).fold(scene.max_voxel_radius(), f64::max);
    r * (1.0 + 1e-9) + 1e-300
}

/// Assembles the interaction matrix for the scene's voxels at `omega`.
pub fn assemble_ls_system(scene: &Scene, omega: f64, opts: &SolverOptions) -> Result<LsSystem> {
    let k0 = scene.units.k0(omega);
    let background = background_for(scene, k0, core_extent(scene, &[]))?;
    let positions = scene.voxels.iter().map(|v| v.position).collect();
    LsSystem::assemble(omega, k0, scene.voxel_volume(), positions, voxel_susceptibilities(scene, omega)?, background, opts)
}

/// Factorized scene ready to produce `G_eff(x, s)` for arbitrary sources.
///
/// Blocks at coincidence (`x = s`) hold the analytic `i k / (6 pi) I` in place
/// of the divergent vacuum term, plus every regular contribution.
#[derive(Debug, Clone)]
pub struct EffectiveGreen {
    pub omega: f64,
    pub k0: f64,
    pub scene_hash: String,
    pub system: LsSystem,
    factor: Option<Factorization>,
    core_radius: f64,
    pitch: f64,
    pub tolerance: f64,
    pub warnings: Vec<String>,
}

/// Self-consistent response of the scene to a unit dipole source at `source`.
#[derive(Debug, Clone)]
pub struct SourceResponse {
    pub source: Vec3,
    /// Field `X(u, s)` at each voxel, columns indexed by source polarization.
    pub internal: Vec<Dyad>,
    /// Induced source strength `k^2 dV chi_u X(u, s)`.
    weights: Vec<Dyad>,
    coef: Option<SourceCoefficients>,
}

impl EffectiveGreen {
    /// `points` lists every source and core target that will be queried; it
    /// fixes the truncation of the shell expansion.
    pub fn new(scene: &Scene, omega: f64, points: &[Vec3], opts: &SolverOptions) -> Result<Self> {
        if !(omega > 0.0) {
            return Err(Error::param(format!("omega must be positive, got {omega}")));
        }
        let k0 = scene.units.k0(omega);
        let background = background_for(scene, k0, core_extent(scene, points))?;
        let positions = scene.voxels.iter().map(|v| v.position).collect();
        let chi = voxel_susceptibilities(scene, omega)?;
        let system = LsSystem::assemble(omega, k0, scene.voxel_volume(), positions, chi, background, opts)?;
        let factor = if system.is_empty() { None } else { Some(system.factorize(opts)?) };
        let mut warnings = scene.compliance_warnings(points);
        if let Some(w) = scene.shell_thickness_warning(omega)? {
            warnings.push(w);
        }
        Ok(EffectiveGreen {
            omega,
            k0,
            scene_hash: scene.hash(),
            system,
            factor,
            core_radius: scene.active_shell().map(|s| s.inner_radius).unwrap_or(f64::INFINITY),
            pitch: scene.voxel_pitch,
            tolerance: opts.tolerance,
            warnings,
        })
    }

    pub fn solver_kind(&self) -> Option<SolverKind> {
        self.factor.as_ref().map(|f| f.kind())
    }

    pub fn condition_estimate(&self) -> Option<f64> {
        self.factor.as_ref().and_then(|f| f.condition_estimate())
    }

    pub fn background(&self) -> &Background {
        &self.system.background
    }

    /// Truncation order of the shell expansion, if any.
    pub fn expansion_order(&self) -> Option<usize> {
        self.layered().map(|b| b.lmax())
    }

    fn layered(&self) -> Option<&LayeredSphere> {
        match &self.system.background {
            Background::Layered(bg) => Some(bg),
            Background::Vacuum => None,
        }
    }

    fn coincident(&self, a: &Vec3, b: &Vec3) -> bool {
        (a - b).norm() <= COINCIDENCE_FRACTION * self.pitch
    }

    /// Background tensor between a core point and a voxel, `x != y`.
    fn background_green(&self, x: &Vec3, wx: Option<&Waves>, y: &Vec3, wy: Option<&Waves>) -> Dyad {
        let d = x - y;
        let mut g = vacuum_green_unchecked(self.k0, &d, d.norm());
        if let (Some(a), Some(b)) = (wx, wy) {
            g += self.system.background.reflected(self.k0, a, b);
        }
        g
    }

    pub fn source(&self, s: &Vec3) -> Result<SourceResponse> {
        let sys = &self.system;
        if s.norm() >= self.core_radius {
            return Err(Error::param("dipole sources must lie inside the vacuum core"));
        }
        if sys.positions.iter().any(|p| self.coincident(p, s)) {
            return Err(Error::CoincidentPoints);
        }
        let ws = self.layered().map(|bg| regular_waves(self.k0, s, bg.lmax()));
        let n = sys.len();
        let rhs: Vec<Dyad> = (0..n)
            .map(|u| self.background_green(&sys.positions[u], sys.voxel_waves.get(u), s, ws.as_ref()))
            .collect();
        let mut internal = vec![Dyad::zeros(); n];
        if let Some(f) = &self.factor {
            for col in 0..3 {
                let b = ls::stack_columns(&rhs, col);
                let x: DVector<C64> = f.solve(&sys.matrix, &b)?;
                for (u, blk) in internal.iter_mut().enumerate() {
                    blk.set_column(col, &ls::column_vec(&x, u));
                }
            }
        }
        let scale = self.k0 * self.k0 * sys.cell_volume;
        let weights: Vec<Dyad> = internal.iter().zip(&sys.chi).map(|(x, chi)| x * (scale * chi)).collect();
        let coef = self.layered().map(|bg| {
            let mut c = SourceCoefficients::new(bg.lmax());
            c.add_waves(self.k0, ws.as_ref().unwrap(), &identity_columns());
            for (u, w) in weights.iter().enumerate() {
                let cols = [w.column(0).into_owned(), w.column(1).into_owned(), w.column(2).into_owned()];
                c.add_waves(self.k0, &sys.voxel_waves[u], &cols);
            }
            c
        });
        Ok(SourceResponse { source: *s, internal, weights, coef })
    }

    fn in_core(&self, x: &Vec3) -> bool {
        x.norm() < self.core_radius
    }

    /// Direct vacuum contributions of the induced voxel sources at `x`.
    fn induced_direct(&self, r: &SourceResponse, x: &Vec3) -> Result<Dyad> {
        let mut g = Dyad::zeros();
        for (p, w) in self.system.positions.iter().zip(&r.weights) {
            if self.coincident(p, x) {
                return Err(Error::CoincidentPoints);
            }
            let d = x - p;
            g += vacuum_green_unchecked(self.k0, &d, d.norm()) * w;
        }
        Ok(g)
    }

    /// `G_eff(x, s) - G_vac(x, s)`; regular at `x = s`.
    pub fn scattered(&self, r: &SourceResponse, x: &Vec3) -> Result<Dyad> {
        let mut g = if self.in_core(x) { self.induced_direct(r, x)? } else { Dyad::zeros() };
        if let (Some(bg), Some(c)) = (self.layered(), &r.coef) {
            g += bg.field(c, x);
            if !self.in_core(x) {
                // Outside the core the series already holds the whole field.
                let d = x - r.source;
                g -= vacuum_green_unchecked(self.k0, &d, d.norm());
            }
        }
        Ok(g)
    }

    /// `G_eff(x, s)`.
    pub fn eval(&self, r: &SourceResponse, x: &Vec3) -> Result<Dyad> {
        if self.in_core(x) {
            let direct = if self.coincident(x, &r.source) {
                Dyad::identity() * (I * vacuum_imag_coincident(self.k0))
            } else {
                let d = x - r.source;
                vacuum_green_unchecked(self.k0, &d, d.norm())
            };
            if self.system.is_empty() && r.coef.is_none() {
                return Ok(direct);
            }
            let mut g = direct + self.induced_direct(r, x)?;
            if let (Some(bg), Some(c)) = (self.layered(), &r.coef) {
                g += bg.field(c, x);
            }
            Ok(g)
        } else {
            let bg = self.layered().expect("finite core implies a layered background");
            Ok(bg.field(r.coef.as_ref().unwrap(), x))
        }
    }

    /// `G_eff(x, s)` for several responses at one target.
    pub fn eval_many(&self, rs: &[&SourceResponse], x: &Vec3) -> Result<Vec<Dyad>> {
        match self.layered() {
            Some(bg) if !self.in_core(x) => {
                let coefs: Vec<&SourceCoefficients> = rs.iter().map(|r| r.coef.as_ref().unwrap()).collect();
                Ok(bg.field_many(&coefs, x))
            }
            _ => rs.iter().map(|r| self.eval(r, x)).collect(),
        }
    }

    /// `curl_x G_eff(x, s)`, `x != s`.
    pub fn eval_curl(&self, r: &SourceResponse, x: &Vec3) -> Result<Dyad> {
        if self.in_core(x) {
            let mut g = vacuum_green_curl(self.k0, x, &r.source)?;
            for (p, w) in self.system.positions.iter().zip(&r.weights) {
                g += vacuum_green_curl(self.k0, x, p)? * w;
            }
            if let (Some(bg), Some(c)) = (self.layered(), &r.coef) {
                g += bg.field_curl(c, x);
            }
            Ok(g)
        } else {
            let bg = self.layered().expect("finite core implies a layered background");
            Ok(bg.field_curl(r.coef.as_ref().unwrap(), x))
        }
    }

    /// Self-consistent voxel fields for an incident field sampled at the
    /// voxels (solves `(I - K) E = E_inc`).
    pub fn solve_incident(&self, incident: &[CVec3]) -> Result<Vec<CVec3>> {
        let n = self.system.len();
        if incident.len() != n {
            return Err(Error::param(format!("expected {n} incident samples, got {}", incident.len())));
        }
        let Some(f) = &self.factor else { return Ok(Vec::new()) };
        let mut b = DVector::zeros(3 * n);
        for (u, e) in incident.iter().enumerate() {
            b.rows_mut(3 * u, 3).copy_from(e);
        }
        let x = f.solve(&self.system.matrix, &b)?;
        Ok((0..n).map(|u| ls::column_vec(&x, u)).collect())
    }

    /// Field radiated into the core point `x` by voxel fields `internal`:
    /// `sum_u k^2 dV chi_u G_bg(x, u) E_u`.
    pub fn radiate(&self, x: &Vec3, internal: &[CVec3]) -> Result<CVec3> {
        if !self.in_core(x) {
            return Err(Error::param("radiated fields are evaluated inside the vacuum core"));
        }
        let sys = &self.system;
        let wx = self.layered().map(|bg| regular_waves(self.k0, x, bg.lmax()));
        let scale = self.k0 * self.k0 * sys.cell_volume;
        let mut e = CVec3::zeros();
        for (u, (p, eu)) in sys.positions.iter().zip(internal).enumerate() {
            if self.coincident(p, x) {
                return Err(Error::CoincidentPoints);
            }
            let g = self.background_green(x, wx.as_ref(), p, sys.voxel_waves.get(u));
            e += g * eu * (scale * sys.chi[u]);
        }
        Ok(e)
    }

    /// Index of the voxel whose centre coincides with `x`.
    pub fn voxel_at(&self, x: &Vec3) -> Option<usize> {
        self.system.positions.iter().position(|p| self.coincident(p, x))
    }

    /// Convenience: `G_eff(x, s)` for a single pair.
    pub fn pair(&self, x: &Vec3, s: &Vec3) -> Result<Dyad> {
        self.eval(&self.source(s)?, x)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockMeta {
    pub omega: f64,
    pub scene_hash: String,
    pub self_term_rule: &'static str,
    pub solver: Option<SolverKind>,
    pub solver_tolerance: f64,
    pub condition_estimate: Option<f64>,
    pub warnings: Vec<String>,
}

/// Dense table of 3x3 dyads indexed `(target, source)`.
#[derive(Debug, Clone)]
pub struct DyadicBlock {
    pub sources: Vec<Vec3>,
    pub targets: Vec<Vec3>,
    pub values: Vec<Dyad>,
    pub meta: BlockMeta,
}

impl DyadicBlock {
    pub fn get(&self, target: usize, source: usize) -> &Dyad {
        &self.values[target * self.sources.len() + source]
    }
}

/// `G_eff(target, source)` for every pair.
pub fn solve_effective_green(
    scene: &Scene,
    omega: f64,
    sources: &[Vec3],
    targets: &[Vec3],
    opts: &SolverOptions,
) -> Result<DyadicBlock> {
    let mut pts = sources.to_vec();
    pts.extend_from_slice(targets);
    let eg = EffectiveGreen::new(scene, omega, &pts, opts)?;
    let responses: Vec<SourceResponse> = sources.iter().map(|s| eg.source(s)).collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(sources.len() * targets.len());
    for t in targets {
        for r in &responses {
            values.push(eg.eval(r, t)?);
        }
    }
    if values.iter().any(|g| g.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
        return Err(Error::Solve { reason: "non-finite Green tensor entries".into(), condition: eg.condition_estimate().unwrap_or(f64::NAN) });
    }
    Ok(DyadicBlock {
        sources: sources.to_vec(),
        targets: targets.to_vec(),
        values,
        meta: BlockMeta {
            omega,
            scene_hash: eg.scene_hash.clone(),
            self_term_rule: eg.system.rule.tag(),
            solver: eg.solver_kind(),
            solver_tolerance: opts.tolerance,
            condition_estimate: eg.condition_estimate(),
            warnings: eg.warnings.clone(),
        },
    })
}

/// Column `j` of a dyad as a vector.
pub(crate) fn col(g: &Dyad, j: usize) -> CVec3 {
    g.column(j).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius;
    use crate::material::{DrudeLorentzModel, MaterialRef};
    use crate::scene::{Shell, Voxel};
    use std::f64::consts::PI;

    fn single_voxel(chi: C64, pitch: f64) -> Scene {
        let omega = 2.0 * PI;
        let m = DrudeLorentzModel::matching(omega, chi + 1.0, omega).unwrap();
        let mut s = Scene::empty(40.0, pitch);
        s.voxels.push(Voxel { position: Vec3::zeros(), material: MaterialRef::DrudeLorentz(m) });
        s
    }

    #[test]
    fn empty_scene_is_vacuum_bit_for_bit() {
        let s = Scene::empty(10.0, 0.1);
        let a = Vec3::new(0.1, 0.2, 0.3);
        let b = Vec3::new(-0.3, 0.0, 0.25);
        let blk = solve_effective_green(&s, 3.0, &[b], &[a], &SolverOptions::default()).unwrap();
        assert_eq!(*blk.get(0, 0), vacuum_green(3.0, &a, &b).unwrap());
    }

    #[test]
    fn single_voxel_matches_hand_solved_polarizability() {
        let chi = C64::new(1.0, 0.5);
        let s = single_voxel(chi, 0.05);
        let omega = 2.0 * PI;
        let k = omega;
        let a = Vec3::new(0.3, 0.1, -0.2);
        let b = Vec3::new(-0.1, 0.4, 0.2);
        let blk = solve_effective_green(&s, omega, &[b], &[a], &SolverOptions::default()).unwrap();
        let alpha = s.voxel_volume() * chi / (1.0 + chi / 3.0 - I * k.powi(3) * s.voxel_volume() * chi / (6.0 * PI));
        let expect = vacuum_green(k, &a, &b).unwrap()
            + vacuum_green(k, &a, &Vec3::zeros()).unwrap() * vacuum_green(k, &Vec3::zeros(), &b).unwrap() * (k * k * alpha);
        assert!(frobenius(&(blk.get(0, 0) - expect)) < 1e-12 * frobenius(&expect));
    }

    #[test]
    fn gmres_path_agrees_with_dense() {
        let omega = 2.0 * PI;
        let m = DrudeLorentzModel::matching(omega, C64::new(3.0, 0.4), omega).unwrap();
        let mut s = Scene::empty(40.0, 0.08);
        for i in 0..3 {
            for j in 0..2 {
                s.voxels.push(Voxel { position: Vec3::new(i as f64 * 0.08, j as f64 * 0.08, 0.0), material: MaterialRef::DrudeLorentz(m) });
            }
        }
        let a = Vec3::new(0.5, 0.1, 0.2);
        let b = Vec3::new(-0.3, 0.2, 0.1);
        let dense = solve_effective_green(&s, omega, &[b], &[a], &SolverOptions::default()).unwrap();
        let it_opts = SolverOptions { dense_limit: 0, tolerance: 1e-12, ..Default::default() };
        let iter = solve_effective_green(&s, omega, &[b], &[a], &it_opts).unwrap();
        assert_eq!(iter.meta.solver, Some(SolverKind::Gmres));
        assert!(frobenius(&(dense.get(0, 0) - iter.get(0, 0))) < 1e-10 * frobenius(dense.get(0, 0)));
    }

    #[test]
    fn shell_scene_is_reciprocal_and_series_consistent() {
        let omega = 2.0 * PI;
        let mut s = single_voxel(C64::new(1.0, 0.5), 0.05);
        let shell_m = DrudeLorentzModel::through(omega, C64::new(1.0, 0.2)).unwrap();
        s.shell = Some(Shell { inner_radius: 1.0, outer_radius: 1.5, material: MaterialRef::DrudeLorentz(shell_m) });
        s.shell_enabled = true;
        let a = Vec3::new(0.2, -0.1, 0.15);
        let b = Vec3::new(-0.25, 0.1, 0.05);
        let eg = EffectiveGreen::new(&s, omega, &[a, b], &SolverOptions::default()).unwrap();
        let gab = eg.pair(&a, &b).unwrap();
        let gba = eg.pair(&b, &a).unwrap();
        assert!(frobenius(&(gab - gba.transpose())) < 1e-10 * frobenius(&gab));
        // Just inside and just outside the core boundary the tangential field agrees.
        let r = eg.source(&b).unwrap();
        let dir = Vec3::new(0.3, -0.5, 0.8).normalize();
        let gi = eg.eval(&r, &(dir * (1.0 - 1e-9))).unwrap();
        let go = eg.eval(&r, &(dir * (1.0 + 1e-9))).unwrap();
        let n = crate::linalg::to_complex(&dir);
        for j in 0..3 {
            let ti = crate::linalg::cross(&n, &col(&gi, j));
            let to = crate::linalg::cross(&n, &col(&go, j));
            assert!((ti - to).norm() < 1e-6 * frobenius(&gi));
        }
    }
}
