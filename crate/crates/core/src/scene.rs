//! Scene geometry: voxelized scatterers inside a vacuum core of radius `R2`,
//! an optional concentric absorbing shell `R2 <= r < R1`, and the
//! quadrature rules used on spheres and inside the shell.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{C64, Vec3};
use crate::material::{eval_permittivity, DrudeLorentzModel, InterpolationRule, MaterialRef, TabulatedPermittivity};
use crate::special::gauss_legendre;
use crate::units::Units;

#[derive(Debug, Clone, PartialEq)]
pub struct Voxel {
    pub position: Vec3,
    pub material: MaterialRef,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shell {
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub material: MaterialRef,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub units: Units,
    /// Side of the periodic quantization box.
    pub box_side: f64,
    pub voxel_pitch: f64,
    /// Sorted lexicographically by position.
    pub voxels: Vec<Voxel>,
    pub shell: Option<Shell>,
    pub shell_enabled: bool,
}

impl Scene {
    /// Scene with no matter at all.
    pub fn empty(box_side: f64, voxel_pitch: f64) -> Self {
        Scene { units: Units::default(), box_side, voxel_pitch, voxels: Vec::new(), shell: None, shell_enabled: false }
    }

    pub fn with_units(mut self, units: Units) -> Self {
        self.units = units;
        self
    }

    pub fn voxel_volume(&self) -> f64 {
        self.voxel_pitch.powi(3)
    }

    pub fn active_shell(&self) -> Option<&Shell> {
        if self.shell_enabled {
            self.shell.as_ref()
        } else {
            None
        }
    }

    /// Same scene without the absorbing shell.
    pub fn without_shell(&self) -> Scene {
        let mut s = self.clone();
        s.shell_enabled = false;
        s
    }

    /// Voxel whose cube contains `x` (max-norm distance at most half a pitch).
    pub fn voxel_containing(&self, x: &Vec3) -> Option<&Voxel> {
        let half = 0.5 * self.voxel_pitch;
        self.voxels.iter().find(|v| (v.position - x).amax() <= half)
    }

    /// Distance from `x` to the nearest voxel centre.
    pub fn nearest_voxel_distance(&self, x: &Vec3) -> f64 {
        self.voxels.iter().map(|v| (v.position - x).norm()).fold(f64::INFINITY, f64::min)
    }

    pub fn max_voxel_radius(&self) -> f64 {
        self.voxels.iter().map(|v| v.position.norm()).fold(0.0, f64::max)
    }

    /// Bytes needed by a dense interaction matrix over the voxels.
    pub fn memory_estimate(&self) -> u64 {
        let n = 3 * self.voxels.len() as u64;
        n * n * 16
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_pitch > 0.0) {
            return Err(Error::InvalidScene(format!("voxel pitch must be positive, got {}", self.voxel_pitch)));
        }
        if !(self.box_side > 0.0) {
            return Err(Error::InvalidScene(format!("box side must be positive, got {}", self.box_side)));
        }
        if let Some(shell) = &self.shell {
            if !(shell.inner_radius > 0.0 && shell.inner_radius < shell.outer_radius) {
                return Err(Error::InvalidScene(format!(
                    "shell radii must satisfy 0 < R2 < R1 (got R2 = {}, R1 = {})",
                    shell.inner_radius, shell.outer_radius
                )));
            }
            if shell.outer_radius > 0.5 * self.box_side {
                return Err(Error::InvalidScene(format!(
                    "outer shell radius {} exceeds half the box side {}",
                    shell.outer_radius,
                    0.5 * self.box_side
                )));
            }
            for v in &self.voxels {
                if v.position.norm() >= shell.inner_radius {
                    return Err(Error::InvalidScene(format!(
                        "scatterer voxel at {:?} escapes the inner shell radius {}",
                        v.position.as_slice(),
                        shell.inner_radius
                    )));
                }
            }
        }
        let tol = self.voxel_pitch * (1.0 - 1e-9);
        for i in 0..self.voxels.len() {
            for j in i + 1..self.voxels.len() {
                if (self.voxels[i].position - self.voxels[j].position).amax() < tol {
                    return Err(Error::InvalidScene(format!(
                        "overlapping voxels at {:?} and {:?}",
                        self.voxels[i].position.as_slice(),
                        self.voxels[j].position.as_slice()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Content hash over geometry, materials and constants.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        let mut put = |s: String| {
            h.update(s.as_bytes());
            h.update(b"\n");
        };
        put(format!("units {:?} {:?} {:?}", self.units.hbar, self.units.c, self.units.kb));
        put(format!("box {:?} pitch {:?}", self.box_side, self.voxel_pitch));
        for v in &self.voxels {
            put(format!("voxel {:?} {:?} {:?} {}", v.position.x, v.position.y, v.position.z, material_key(&v.material)));
        }
        if let Some(s) = &self.shell {
            put(format!("shell {} {:?} {:?} {}", self.shell_enabled, s.inner_radius, s.outer_radius, material_key(&s.material)));
        }
        hex::encode(h.finalize())
    }

    /// Warnings about points that sit closer than the compliance margin to
    /// the shell's inner surface or closer than one pitch to a voxel.
    pub fn compliance_warnings(&self, points: &[Vec3]) -> Vec<String> {
        let mut out = Vec::new();
        for p in points {
            if let Some(shell) = self.active_shell() {
                if p.norm() > 0.8 * shell.inner_radius {
                    out.push(format!("point {:?} lies within 20% of the inner shell surface", p.as_slice()));
                }
            }
            let d = self.nearest_voxel_distance(p);
            if d < self.voxel_pitch {
                out.push(format!("point {:?} is {d:.3e} from a voxel centre, closer than one pitch", p.as_slice()));
            }
        }
        out
    }

    /// Shell-thickness rule of thumb: `R1 - R2 >= 3` attenuation lengths.
    pub fn shell_thickness_warning(&self, omega: f64) -> Result<Option<String>> {
        let Some(shell) = self.active_shell() else { return Ok(None) };
        let len = attenuation_length(&shell.material, omega, &self.units)?;
        let thickness = shell.outer_radius - shell.inner_radius;
        Ok((thickness < 3.0 * len).then(|| {
            format!("shell thickness {thickness:.4} is below 3 attenuation lengths ({:.4}) at omega = {omega}", 3.0 * len)
        }))
    }
}

fn material_key(m: &MaterialRef) -> String {
    match m {
        MaterialRef::Vacuum => "vacuum".into(),
        MaterialRef::DrudeLorentz(d) => format!("dl {:?} {:?} {:?}", d.omega_p, d.omega_0, d.gamma),
        MaterialRef::Tabulated(t) => {
            let mut s = format!("table {:?}", t.rule());
            for (w, e) in t.samples() {
                s.push_str(&format!(" {:?} {:?} {:?}", w, e.re, e.im));
            }
            s
        }
    }
}


/// `1 / Im[omega sqrt(eps) / c]`, infinite for lossless media.
pub fn attenuation_length(m: &MaterialRef, omega: f64, units: &Units) -> Result<f64> {
    let eps = eval_permittivity(m, omega)?;
    let im = (units.k0(omega) * eps.sqrt()).im;
    Ok(if im > 0.0 { 1.0 / im } else { f64::INFINITY })
}

// ---------------------------------------------------------------- config

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MaterialSpec {
    Vacuum,
    DrudeLorentz {
        omega_p: f64,
        omega_0: f64,
        gamma: f64,
    },
    Table {
        path: PathBuf,
        #[serde(default)]
        interpolation: InterpolationRule,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScattererSpec {
    Voxel { position: [f64; 3], material: String },
    Sphere { center: [f64; 3], radius: f64, material: String },
    Box { min: [f64; 3], max: [f64; 3], material: String },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ShellSpec {
    #[serde(default = "yes")]
    pub enabled: bool,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub material: String,
}

fn yes() -> bool {
    true
}

/// Scene file schema (TOML).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default)]
    pub units: Units,
    pub box_side: f64,
    pub voxel_pitch: f64,
    #[serde(default)]
    pub materials: BTreeMap<String, MaterialSpec>,
    #[serde(default)]
    pub scatterers: Vec<ScattererSpec>,
    pub shell: Option<ShellSpec>,
}

impl SceneConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}

/// Resolves materials (table paths relative to `base_dir`), rasterizes
/// primitives onto the pitch lattice and validates the result.
pub fn build_scene(config: &SceneConfig, base_dir: Option<&Path>) -> Result<Scene> {
    let mut materials: BTreeMap<&str, MaterialRef> = BTreeMap::new();
    materials.insert("vacuum", MaterialRef::Vacuum);
    for (name, spec) in &config.materials {
        let m = match spec {
            MaterialSpec::Vacuum => MaterialRef::Vacuum,
            MaterialSpec::DrudeLorentz { omega_p, omega_0, gamma } => {
                MaterialRef::DrudeLorentz(DrudeLorentzModel::new(*omega_p, *omega_0, *gamma)?)
            }
            MaterialSpec::Table { path, interpolation } => {
                let full = match base_dir {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                MaterialRef::Tabulated(Arc::new(TabulatedPermittivity::from_csv(&full, *interpolation)?))
            }
        };
        materials.insert(name.as_str(), m);
    }
    let lookup = |name: &str| -> Result<MaterialRef> {
        materials.get(name).cloned().ok_or_else(|| Error::Config(format!("unknown material '{name}'")))
    };
    let pitch = config.voxel_pitch;
    if !(pitch > 0.0) {
        return Err(Error::InvalidScene(format!("voxel pitch must be positive, got {pitch}")));
    }
    let mut voxels = Vec::new();
    for s in &config.scatterers {
        match s {
            ScattererSpec::Voxel { position, material } => {
                voxels.push(Voxel { position: Vec3::from(*position), material: lookup(material)? });
            }
            ScattererSpec::Sphere { center, radius, material } => {
                let m = lookup(material)?;
                let c = Vec3::from(*center);
                let lo = c - Vec3::repeat(*radius);
                let hi = c + Vec3::repeat(*radius);
                for p in lattice_points(&lo, &hi, pitch) {
                    if (p - c).norm() <= *radius {
                        voxels.push(Voxel { position: p, material: m.clone() });
                    }
                }
            }
            ScattererSpec::Box { min, max, material } => {
                let m = lookup(material)?;
                for p in lattice_points(&Vec3::from(*min), &Vec3::from(*max), pitch) {
                    voxels.push(Voxel { position: p, material: m.clone() });
                }
            }
        }
    }
    // Vacuum voxels carry no contrast; keep them out of the solve.
    voxels.retain(|v| !v.material.is_vacuum());
    voxels.sort_by(|a, b| {
        let ka = [a.position.x, a.position.y, a.position.z];
        let kb = [b.position.x, b.position.y, b.position.z];
        ka.partial_cmp(&kb).unwrap()
    });
    let (shell, shell_enabled) = match &config.shell {
        Some(s) => (
            Some(Shell { inner_radius: s.inner_radius, outer_radius: s.outer_radius, material: lookup(&s.material)? }),
            s.enabled,
        ),
        None => (None, false),
    };
    let scene = Scene { units: config.units, box_side: config.box_side, voxel_pitch: pitch, voxels, shell, shell_enabled };
    scene.validate()?;
    Ok(scene)
}

/// Points `i * pitch` (integer `i`) inside the closed box `[lo, hi]`.
fn lattice_points(lo: &Vec3, hi: &Vec3, pitch: f64) -> Vec<Vec3> {
    let eps = 1e-9;
    let range = |a: f64, b: f64| -> (i64, i64) { ((a / pitch - eps).ceil() as i64, (b / pitch + eps).floor() as i64) };
    let (x0, x1) = range(lo.x, hi.x);
    let (y0, y1) = range(lo.y, hi.y);
    let (z0, z1) = range(lo.z, hi.z);
    let mut out = Vec::new();
    for i in x0..=x1 {
        for j in y0..=y1 {
            for k in z0..=z1 {
                out.push(Vec3::new(i as f64 * pitch, j as f64 * pitch, k as f64 * pitch));
            }
        }
    }
    out
}

// ---------------------------------------------------------------- quadrature

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceNode {
    pub position: Vec3,
    pub normal: Vec3,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceQuadrature {
    pub radius: f64,
    /// Spherical-harmonic degree integrated exactly.
    pub degree: usize,
    pub nodes: Vec<SurfaceNode>,
}

pub const MAX_SPHERE_ORDER: usize = 512;

/// Product rule on a sphere centred at the origin: Gauss-Legendre in
/// `cos(theta)` times a uniform azimuth grid, exact for spherical harmonics
/// up to degree `order`.
pub fn sphere_quadrature(radius: f64, order: usize) -> Result<SurfaceQuadrature> {
    if !(6..=MAX_SPHERE_ORDER).contains(&order) {
        return Err(Error::param(format!("sphere quadrature order must be in [6, {MAX_SPHERE_ORDER}], got {order}")));
    }
    if !(radius > 0.0) {
        return Err(Error::param("sphere quadrature radius must be positive"));
    }
    let n_theta = (order + 2) / 2;
    let n_phi = order + 1;
    let (x, w) = gauss_legendre(n_theta);
    let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
    let mut nodes = Vec::with_capacity(n_theta * n_phi);
    for (ct, wt) in x.iter().zip(&w) {
        let st = (1.0 - ct * ct).max(0.0).sqrt();
        for j in 0..n_phi {
            let phi = (j as f64 + 0.5) * dphi;
            let normal = Vec3::new(st * phi.cos(), st * phi.sin(), *ct);
            nodes.push(SurfaceNode { position: normal * radius, normal, weight: wt * dphi * radius * radius });
        }
    }
    Ok(SurfaceQuadrature { radius, degree: order, nodes })
}

impl SurfaceQuadrature {
    pub fn integrate<F: Fn(&SurfaceNode) -> f64>(&self, f: F) -> f64 {
        let terms: Vec<f64> = self.nodes.iter().map(|n| n.weight * f(n)).collect();
        crate::linalg::pairwise_sum(&terms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeNode {
    pub position: Vec3,
    pub weight: f64,
}

/// Sub-samples per axis used to clip boundary cells.
const CLIP_SUBSAMPLES: usize = 8;

/// Cartesian cells of side `shell_pitch` (centred on `(i + 1/2) * pitch`, so
/// the lattice is inversion symmetric) covering `R2 <= r < R1`. Cells cut by
/// a boundary are clipped by sub-sampling; their node sits at the centroid of
/// the retained part. The pitch must not exceed a quarter of the shell's
/// attenuation length at `omega`.
pub fn shell_voxelization(scene: &Scene, shell_pitch: f64, omega: f64) -> Result<Vec<VolumeNode>> {
    let Some(shell) = scene.active_shell() else { return Ok(Vec::new()) };
    if shell.outer_radius <= shell.inner_radius {
        return Ok(Vec::new());
    }
    if !(shell_pitch > 0.0) {
        return Err(Error::param("shell pitch must be positive"));
    }
    let len = attenuation_length(&shell.material, omega, &scene.units)?;
    if shell_pitch > 0.25 * len {
        return Err(Error::Resolution(format!(
            "shell pitch {shell_pitch} exceeds a quarter attenuation length {:.4e} at omega = {omega}",
            0.25 * len
        )));
    }
    let (r2, r1) = (shell.inner_radius, shell.outer_radius);
    let h = shell_pitch;
    let n = (r1 / h).ceil() as i64;
    let half_diag = 0.5 * 3f64.sqrt() * h;
    let s = CLIP_SUBSAMPLES;
    let mut nodes = Vec::new();
    for i in -n..n {
        for j in -n..n {
            for k in -n..n {
                let c = Vec3::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h, (k as f64 + 0.5) * h);
                let r = c.norm();
                if r + half_diag < r2 || r - half_diag >= r1 {
                    continue;
                }
                if r - half_diag >= r2 && r + half_diag < r1 {
                    nodes.push(VolumeNode { position: c, weight: h * h * h });
                    continue;
                }
                let mut count = 0usize;
                let mut centroid = Vec3::zeros();
                for a in 0..s {
                    for b in 0..s {
                        for d in 0..s {
                            let off = |q: usize| ((q as f64 + 0.5) / s as f64 - 0.5) * h;
                            let p = c + Vec3::new(off(a), off(b), off(d));
                            let rp = p.norm();
                            if rp >= r2 && rp < r1 {
                                count += 1;
                                centroid += p;
                            }
                        }
                    }
                }
                if count > 0 {
                    let frac = count as f64 / (s * s * s) as f64;
                    nodes.push(VolumeNode { position: centroid / count as f64, weight: frac * h * h * h });
                }
            }
        }
    }
    Ok(nodes)
}

/// Spherical product rule for the shell: Gauss-Legendre in `r` (weight
/// `r^2`) times [`sphere_quadrature`] of degree `angular`.
pub fn shell_spherical_nodes(scene: &Scene, radial: usize, angular: usize) -> Result<Vec<VolumeNode>> {
    let Some(shell) = scene.active_shell() else { return Ok(Vec::new()) };
    if shell.outer_radius <= shell.inner_radius {
        return Ok(Vec::new());
    }
    if radial == 0 {
        return Err(Error::param("radial node count must be positive"));
    }
    let sphere = sphere_quadrature(1.0, angular)?;
    let (x, w) = gauss_legendre(radial);
    let (a, b) = (shell.inner_radius, shell.outer_radius);
    let half = 0.5 * (b - a);
    let mut nodes = Vec::with_capacity(radial * sphere.nodes.len());
    for (xi, wi) in x.iter().zip(&w) {
        let r = a + half * (xi + 1.0);
        for n in &sphere.nodes {
            nodes.push(VolumeNode { position: n.normal * r, weight: wi * half * r * r * n.weight });
        }
    }
    Ok(nodes)
}

/// Quadrature used for volume integrals over the shell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ShellRule {
    /// Clipped Cartesian cells, see [`shell_voxelization`].
    Cartesian { pitch: f64 },
    /// Radial Gauss times sphere rule, see [`shell_spherical_nodes`].
    Spherical { radial: usize, angular: usize },
}

pub fn shell_nodes(scene: &Scene, rule: ShellRule, omega: f64) -> Result<Vec<VolumeNode>> {
    match rule {
        ShellRule::Cartesian { pitch } => shell_voxelization(scene, pitch, omega),
        ShellRule::Spherical { radial, angular } => shell_spherical_nodes(scene, radial, angular),
    }
}

/// Convenience: builds an isotropic `eps - 1` value list for the voxels.
pub fn voxel_susceptibilities(scene: &Scene, omega: f64) -> Result<Vec<C64>> {
    scene.voxels.iter().map(|v| Ok(eval_permittivity(&v.material, omega)? - 1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn dl() -> MaterialSpec {
        MaterialSpec::DrudeLorentz { omega_p: 1.0, omega_0: 1.0, gamma: 0.1 }
    }

    fn config(scatterers: Vec<ScattererSpec>, pitch: f64) -> SceneConfig {
        let mut materials = BTreeMap::new();
        materials.insert("m".to_string(), dl());
        SceneConfig {
            units: Units::default(),
            box_side: 10.0,
            voxel_pitch: pitch,
            materials,
            scatterers,
            shell: Some(ShellSpec { enabled: true, inner_radius: 1.0, outer_radius: 2.0, material: "m".into() }),
        }
    }

    #[test]
    fn minimal_scene_has_one_voxel() {
        let c = config(vec![ScattererSpec::Voxel { position: [0.0; 3], material: "m".into() }], 0.1);
        assert_eq!(build_scene(&c, None).unwrap().voxels.len(), 1);
    }

    #[test]
    fn box_primitive_counts_and_orders() {
        let c = config(vec![ScattererSpec::Box { min: [-0.2; 3], max: [0.2; 3], material: "m".into() }], 0.2);
        let s = build_scene(&c, None).unwrap();
        assert_eq!(s.voxels.len(), 27);
        assert!((s.max_voxel_radius() - 3f64.sqrt() * 0.2).abs() < 1e-12);
        for w in s.voxels.windows(2) {
            let a = [w[0].position.x, w[0].position.y, w[0].position.z];
            let b = [w[1].position.x, w[1].position.y, w[1].position.z];
            assert!(a < b);
        }
    }

    #[test]
    fn escaping_voxel_and_bad_radii_rejected() {
        let c = config(vec![ScattererSpec::Voxel { position: [1.5, 0.0, 0.0], material: "m".into() }], 0.1);
        assert!(matches!(build_scene(&c, None), Err(Error::InvalidScene(_))));
        let mut c = config(vec![], 0.1);
        c.shell.as_mut().unwrap().outer_radius = 1.0;
        assert!(build_scene(&c, None).is_err());
    }

    #[test]
    fn overlapping_voxels_rejected() {
        let c = config(
            vec![
                ScattererSpec::Voxel { position: [0.0; 3], material: "m".into() },
                ScattererSpec::Voxel { position: [0.05, 0.0, 0.0], material: "m".into() },
            ],
            0.1,
        );
        assert!(matches!(build_scene(&c, None), Err(Error::InvalidScene(_))));
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
            box_side = 10.0
            voxel_pitch = 0.1
            [materials.gold]
            kind = "drude-lorentz"
            omega_p = 1.0
            omega_0 = 1.0
            gamma = 0.1
            [[scatterers]]
            kind = "voxel"
            position = [0.0, 0.0, 0.0]
            material = "gold"
            [shell]
            inner_radius = 1.0
            outer_radius = 2.0
            material = "gold"
        "#;
        let cfg = SceneConfig::from_toml_str(text).unwrap();
        let s = build_scene(&cfg, None).unwrap();
        assert!(s.shell_enabled);
        assert_eq!(s.voxels.len(), 1);
        let again = build_scene(&SceneConfig::from_toml_str(&toml::to_string(&cfg).unwrap()).unwrap(), None).unwrap();
        assert_eq!(s.hash(), again.hash());
    }

    #[test]
    fn sphere_rule_area_and_dipole_pattern() {
        for order in [6, 11, 30] {
            let q = sphere_quadrature(1.0, order).unwrap();
            let area: f64 = q.integrate(|_| 1.0);
            assert!((area - 4.0 * PI).abs() < 1e-10 * 4.0 * PI);
            let dip = q.integrate(|n| 1.0 - n.normal.z * n.normal.z);
            assert!((dip - 8.0 * PI / 3.0).abs() < 1e-12);
        }
        let q = sphere_quadrature(2.5, 8).unwrap();
        assert!((q.integrate(|_| 1.0) - 4.0 * PI * 6.25).abs() < 1e-10 * 4.0 * PI * 6.25);
        assert!(sphere_quadrature(1.0, 5).is_err());
    }

    #[test]
    fn shell_nodes_cover_volume() {
        let c = config(vec![], 0.1);
        let mut s = build_scene(&c, None).unwrap();
        s.shell.as_mut().unwrap().material = MaterialRef::DrudeLorentz(DrudeLorentzModel::new(1.0, 1.0, 1e-4).unwrap());
        let nodes = shell_voxelization(&s, 0.25, 3.0).unwrap();
        let vol: f64 = nodes.iter().map(|n| n.weight).sum();
        let exact = 4.0 * PI / 3.0 * 7.0;
        assert!((vol - exact).abs() < 0.01 * exact, "{vol} vs {exact}");
        assert!(nodes.iter().all(|n| n.weight > 0.0));
        let centroid: Vec3 = nodes.iter().map(|n| n.position * n.weight).sum::<Vec3>() / vol;
        assert!(centroid.norm() < 0.25);
    }

    #[test]
    fn spherical_shell_rule_is_exact_for_volume() {
        let s = build_scene(&config(vec![], 0.1), None).unwrap();
        let nodes = shell_spherical_nodes(&s, 4, 6).unwrap();
        let vol: f64 = nodes.iter().map(|n| n.weight).sum();
        assert!((vol - 4.0 * PI / 3.0 * 7.0).abs() < 1e-12 * vol);
    }

    #[test]
    fn shell_guard_and_degenerate_cases() {
        let c = config(vec![], 0.1);
        let s = build_scene(&c, None).unwrap();
        // Resonant absorber: attenuation length far below the pitch.
        assert!(matches!(shell_voxelization(&s, 0.5, 1.0), Err(Error::Resolution(_))));
        assert!(shell_voxelization(&s.without_shell(), 0.5, 1.0).unwrap().is_empty());
        let mut d = s.clone();
        d.shell.as_mut().unwrap().outer_radius = 1.0;
        assert!(shell_voxelization(&d, 0.5, 1.0).unwrap().is_empty());
    }
}
