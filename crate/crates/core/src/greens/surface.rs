//! Surface functional on a closed sphere and the Green identity
//!
//! `Im G(a, b) - S(a, b) = int k^2 eps''(x) G^T(x, a) G^*(x, b) dV`,
//!
//! where the volume integral runs over all lossy matter inside the sphere.
//! The exact surface term, from the vector Green theorem, is
//!
//! `S_ij = (1/2i) oint n . (F_j x curl E_i - E_i x curl F_j) dS`
//!
//! with `E_i = G(x, a) e_i` and `F_j = G^*(x, b) e_j`. For a large sphere in
//! vacuum it reduces to `k oint G^T(x, a) (I - n n) G^*(x, b) dS`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greens::{col, EffectiveGreen, SourceResponse, SolverOptions};
use crate::linalg::{cross, dot, frobenius, imag_part, to_complex, Dyad, Vec3, C64};
use crate::scene::{shell_nodes, Scene, ShellRule, SurfaceQuadrature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SurfaceForm {
    /// Green-theorem flux with the exact curls.
    #[default]
    Exact,
    /// Far-field (radiation-condition) reduction.
    Sommerfeld,
}

/// Checks that the sphere encloses every voxel and both points and lies in
/// vacuum (inside the core or beyond the outer shell radius).
fn check_surface(scene: &Scene, a: &Vec3, b: &Vec3, quad: &SurfaceQuadrature) -> Result<()> {
    let r = quad.radius;
    let reach = scene.max_voxel_radius() + 0.5 * 3f64.sqrt() * scene.voxel_pitch;
    if !scene.voxels.is_empty() && r <= reach {
        return Err(Error::param(format!("quadrature sphere R = {r} intersects scatterer voxels (reach {reach})")));
    }
    if a.norm() >= r || b.norm() >= r {
        return Err(Error::param("quadrature sphere must enclose both points"));
    }
    if let Some(shell) = scene.active_shell() {
        if r >= shell.inner_radius && r <= shell.outer_radius {
            return Err(Error::param(format!(
                "quadrature sphere R = {r} lies inside the absorbing shell [{}, {}]; place it in vacuum",
                shell.inner_radius, shell.outer_radius
            )));
        }
    }
    Ok(())
}

/// Surface term for precomputed responses to sources at `a` and `b`.
pub fn surface_term(
    eg: &EffectiveGreen,
    ra: &SourceResponse,
    rb: &SourceResponse,
    quad: &SurfaceQuadrature,
    form: SurfaceForm,
) -> Result<Dyad> {
    let k = eg.k0;
    let mut terms = Vec::with_capacity(quad.nodes.len());
    for node in &quad.nodes {
        let ga = eg.eval(ra, &node.position)?;
        let gb = eg.eval(rb, &node.position)?.map(|z| z.conj());
        let n = to_complex(&node.normal);
        let mut f = Dyad::zeros();
        match form {
            SurfaceForm::Exact => {
                let ca = eg.eval_curl(ra, &node.position)?;
                let cb = eg.eval_curl(rb, &node.position)?.map(|z| z.conj());
                for i in 0..3 {
                    let (e, ce) = (col(&ga, i), col(&ca, i));
                    for j in 0..3 {
                        let (fj, cf) = (col(&gb, j), col(&cb, j));
                        let flux = dot(&n, &(cross(&fj, &ce) - cross(&e, &cf)));
                        f[(i, j)] = flux / C64::new(0.0, 2.0);
                    }
                }
            }
            SurfaceForm::Sommerfeld => {
                let proj = Dyad::identity() - n * n.transpose();
                f = ga.transpose() * proj * gb * C64::new(k, 0.0);
            }
        }
        terms.push(f * C64::new(node.weight, 0.0));
    }
    Ok(sum_dyads(&terms))
}

pub(crate) fn sum_dyads(items: &[Dyad]) -> Dyad {
    match items.len() {
        0 => Dyad::zeros(),
        1 => items[0],
        n => {
            let (a, b) = items.split_at(n / 2);
            sum_dyads(a) + sum_dyads(b)
        }
    }
}

/// Surface term of the identity for `G_eff` of `scene` at `omega`.
pub fn surface_functional(
    scene: &Scene,
    omega: f64,
    a: &Vec3,
    b: &Vec3,
    quad: &SurfaceQuadrature,
    form: SurfaceForm,
    opts: &SolverOptions,
) -> Result<Dyad> {
    check_surface(scene, a, b, quad)?;
    let eg = EffectiveGreen::new(scene, omega, &[*a, *b, Vec3::new(quad.radius, 0.0, 0.0)], opts)?;
    let ra = eg.source(a)?;
    let rb = eg.source(b)?;
    surface_term(&eg, &ra, &rb, quad, form)
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    #[serde(serialize_with = "crate::greens::export::ser_dyad")]
    pub imag_g: Dyad,
    #[serde(serialize_with = "crate::greens::export::ser_dyad")]
    pub surface: Dyad,
    #[serde(serialize_with = "crate::greens::export::ser_dyad")]
    pub volume_scatterer: Dyad,
    #[serde(serialize_with = "crate::greens::export::ser_dyad")]
    pub volume_shell: Dyad,
    /// `|Im G - S - V| / |Im G|` (Frobenius norms).
    pub residual: f64,
    /// `|S| / |Im G|`.
    pub surface_fraction: f64,
    /// `|V| / |Im G|`.
    pub volume_fraction: f64,
    pub shell_nodes: usize,
}

impl IdentityReport {
    pub fn volume(&self) -> Dyad {
        self.volume_scatterer + self.volume_shell
    }
}

/// Scatterer-region volume term `sum_u k^2 eps''_u dV X(u,a)^T X(u,b)^*`.
pub fn scatterer_volume_term(eg: &EffectiveGreen, ra: &SourceResponse, rb: &SourceResponse) -> Dyad {
    let k2 = eg.k0 * eg.k0;
    let dv = eg.system.cell_volume;
    let terms: Vec<Dyad> = eg
        .system
        .chi
        .iter()
        .zip(ra.internal.iter().zip(&rb.internal))
        .map(|(chi, (xa, xb))| xa.transpose() * xb.map(|z| z.conj()) * C64::new(k2 * chi.im * dv, 0.0))
        .collect();
    sum_dyads(&terms)
}

/// Shell-region volume term over quadrature nodes of the shell.
pub fn shell_volume_term(
    eg: &EffectiveGreen,
    scene: &Scene,
    ra: &SourceResponse,
    rb: &SourceResponse,
    rule: ShellRule,
) -> Result<(Dyad, usize)> {
    let Some(shell) = scene.active_shell() else { return Ok((Dyad::zeros(), 0)) };
    let eps = crate::material::eval_permittivity(&shell.material, eg.omega)?;
    let k2 = eg.k0 * eg.k0;
    let nodes = shell_nodes(scene, rule, eg.omega)?;
    let same = ra.source == rb.source;
    let terms: Vec<Dyad> = nodes
        .par_iter()
        .map(|n| {
            let (ga, gb) = if same {
                let g = eg.eval(ra, &n.position)?;
                (g, g)
            } else {
                let v = eg.eval_many(&[ra, rb], &n.position)?;
                (v[0], v[1])
            };
            Ok(ga.transpose() * gb.map(|z| z.conj()) * C64::new(k2 * eps.im * n.weight, 0.0))
        })
        .collect::<Result<_>>()?;
    Ok((sum_dyads(&terms), nodes.len()))
}

/// Evaluates every term of the identity. A shell rule is required when the
/// sphere encloses an active shell.
#[allow(clippy::too_many_arguments)]
pub fn greens_identity_residual(
    scene: &Scene,
    omega: f64,
    a: &Vec3,
    b: &Vec3,
    quad: &SurfaceQuadrature,
    shell_rule: Option<ShellRule>,
    form: SurfaceForm,
    opts: &SolverOptions,
) -> Result<IdentityReport> {
    check_surface(scene, a, b, quad)?;
    let eg = EffectiveGreen::new(scene, omega, &[*a, *b, Vec3::new(quad.radius, 0.0, 0.0)], opts)?;
    let ra = eg.source(a)?;
    let rb = eg.source(b)?;
    identity_terms(&eg, scene, &ra, &rb, quad, shell_rule, form)
}

pub(crate) fn identity_terms(
    eg: &EffectiveGreen,
    scene: &Scene,
    ra: &SourceResponse,
    rb: &SourceResponse,
    quad: &SurfaceQuadrature,
    shell_rule: Option<ShellRule>,
    form: SurfaceForm,
) -> Result<IdentityReport> {
    // `eval(ra, b)` is G(b, a); reciprocity gives G(a, b) as its transpose.
    let imag_g = imag_part(&eg.eval(ra, &rb.source)?.transpose());
    let surface = surface_term(eg, ra, rb, quad, form)?;
    let volume_scatterer = scatterer_volume_term(eg, ra, rb);
    let encloses_shell = scene.active_shell().map(|s| quad.radius > s.outer_radius).unwrap_or(false);
    let (volume_shell, shell_nodes) = if encloses_shell {
        let rule = shell_rule.ok_or_else(|| Error::param("a shell rule is needed when the sphere encloses the shell"))?;
        shell_volume_term(eg, scene, ra, rb, rule)?
    } else {
        (Dyad::zeros(), 0)
    };
    let norm = frobenius(&imag_g);
    let total = surface + volume_scatterer + volume_shell;
    Ok(IdentityReport {
        imag_g,
        surface,
        volume_scatterer,
        volume_shell,
        residual: frobenius(&(imag_g - total)) / norm,
        surface_fraction: frobenius(&surface) / norm,
        volume_fraction: frobenius(&(volume_scatterer + volume_shell)) / norm,
        shell_nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greens::vacuum_imag_coincident;
    use crate::scene::sphere_quadrature;

    #[test]
    fn vacuum_surface_term_is_coincidence_constant() {
        let s = Scene::empty(10.0, 0.1);
        let a = Vec3::new(0.05, -0.1, 0.02);
        let k = 2.0 * std::f64::consts::PI;
        for (r, order) in [(1.0, 40), (2.0, 60)] {
            let q = sphere_quadrature(r, order).unwrap();
            let f = surface_functional(&s, k, &a, &a, &q, SurfaceForm::Exact, &SolverOptions::default()).unwrap();
            let expect = Dyad::identity() * C64::new(vacuum_imag_coincident(k), 0.0);
            assert!(frobenius(&(f - expect)) < 1e-10 * frobenius(&expect), "R={r}: {f}");
        }
    }

    #[test]
    fn surface_inside_shell_is_rejected() {
        let mut s = Scene::empty(10.0, 0.1);
        s.shell = Some(crate::scene::Shell { inner_radius: 1.0, outer_radius: 2.0, material: crate::material::MaterialRef::Vacuum });
        s.shell_enabled = true;
        let q = sphere_quadrature(1.5, 10).unwrap();
        let a = Vec3::zeros();
        assert!(surface_functional(&s, 1.0, &a, &a, &q, SurfaceForm::Exact, &SolverOptions::default()).is_err());
    }
    #[test]
    fn identity_closes_for_asymmetric_pair_near_a_lossy_voxel() {
        use crate::material::{DrudeLorentzModel, MaterialRef};
        use crate::scene::Voxel;
        let omega = 2.0 * std::f64::consts::PI;
        let m = MaterialRef::DrudeLorentz(DrudeLorentzModel::through(omega, C64::new(2.0, 0.5)).unwrap());
        let mut s = Scene::empty(40.0, 0.05);
        s.voxels.push(Voxel { position: Vec3::zeros(), material: m });
        let q = sphere_quadrature(0.5, 40).unwrap();
        let a = Vec3::new(0.1, 0.0, 0.0);
        let b = Vec3::new(-0.05, 0.1, 0.08);
        let rep = greens_identity_residual(&s, omega, &a, &b, &q, None, SurfaceForm::Exact, &SolverOptions::default()).unwrap();
        assert!(rep.residual < 1e-12, "residual {}", rep.residual);
        assert!(rep.volume_fraction > 1e-3);
    }
}
