//! C ABI over the `mqed` library.
//!
//! Scenes are opaque handles created from TOML text or a file and released
//! with [`mqed_scene_free`]. Every fallible call returns an [`MqedStatus`];
//! on failure [`mqed_last_error`] holds a message for the calling thread.
//! Dyads are written as 18 doubles: row-major `(re, im)` pairs.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use mqed::fluctuations::{commutator_density, planck_weight, Ordering};
use mqed::greens::{greens_identity_residual, solve_effective_green, SolverOptions, SurfaceForm};
use mqed::material::DrudeLorentzModel;
use mqed::observables::{casimir_thermal_force, ldos, spontaneous_rate, BodySpec, EmitterSpec, ForceOptions};
use mqed::polariton::{longitudinal_branch, transverse_branches};
use mqed::scene::{build_scene, sphere_quadrature, Scene, SceneConfig};
use mqed::{Dyad, Error, Vec3};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MqedStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    InvalidScene = 3,
    Config = 4,
    CoincidentPoints = 5,
    Solve = 6,
    NoConvergence = 7,
    Quadrature = 8,
    Resource = 9,
    Io = 10,
    Panic = 11,
}

/// Opaque scene handle.
pub struct MqedScene {
    scene: Scene,
}

/// Operator ordering selector for [`mqed_planck_weight`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MqedOrdering {
    MinusPlus = 0,
    PlusMinus = 1,
    Symmetrized = 2,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> MqedStatus {
    match e {
        Error::InvalidParameter(_) | Error::OutOfRange { .. } | Error::StepUnderflow(_) => MqedStatus::InvalidParameter,
        Error::InvalidScene(_) | Error::Resolution(_) => MqedStatus::InvalidScene,
        Error::Config(_) => MqedStatus::Config,
        Error::CoincidentPoints => MqedStatus::CoincidentPoints,
        Error::Solve { .. } | Error::Contraction(_) => MqedStatus::Solve,
        Error::NoConvergence { .. } => MqedStatus::NoConvergence,
        Error::Quadrature(_) | Error::EmptyShell(_) => MqedStatus::Quadrature,
        Error::MemoryCap { .. } | Error::ModeCap { .. } => MqedStatus::Resource,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => MqedStatus::Io,
    }
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard<F: FnOnce() -> Result<(), Error>>(f: F) -> MqedStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MqedStatus::Ok
        }
        Ok(Err(e)) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            MqedStatus::Panic
        }
    }
}

fn null() -> Error {
    Error::InvalidParameter("null pointer argument".into())
}

unsafe fn vec3(p: *const f64) -> Result<Vec3, Error> {
    if p.is_null() {
        return Err(null());
    }
    let s = std::slice::from_raw_parts(p, 3);
    Ok(Vec3::new(s[0], s[1], s[2]))
}

unsafe fn scene_ref<'a>(s: *const MqedScene) -> Result<&'a Scene, Error> {
    s.as_ref().map(|h| &h.scene).ok_or_else(null)
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, Error> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p).to_str().map_err(|_| Error::InvalidParameter("string is not UTF-8".into()))
}

unsafe fn write_dyad(g: &Dyad, out: *mut f64) -> Result<(), Error> {
    if out.is_null() {
        return Err(null());
    }
    let o = std::slice::from_raw_parts_mut(out, 18);
    for i in 0..3 {
        for j in 0..3 {
            o[2 * (3 * i + j)] = g[(i, j)].re;
            o[2 * (3 * i + j) + 1] = g[(i, j)].im;
        }
    }
    Ok(())
}

unsafe fn put(out: *mut f64, v: f64) -> Result<(), Error> {
    out.as_mut().map(|o| *o = v).ok_or_else(null)
}

fn null_status() -> MqedStatus {
    set_error("null pointer argument");
    MqedStatus::NullPointer
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn mqed_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a scene from TOML text. `base_dir` (nullable) resolves relative
/// table paths.
///
/// # Safety
/// `toml` must be a NUL-terminated string, `base_dir` null or one, and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mqed_scene_from_toml(toml: *const c_char, base_dir: *const c_char, out: *mut *mut MqedScene) -> MqedStatus {
    if toml.is_null() || out.is_null() {
        return null_status();
    }
    guard(|| {
        let cfg = SceneConfig::from_toml_str(text(toml)?)?;
        let dir = if base_dir.is_null() { None } else { Some(Path::new(text(base_dir)?)) };
        let scene = build_scene(&cfg, dir)?;
        *out = Box::into_raw(Box::new(MqedScene { scene }));
        Ok(())
    })
}

/// Builds a scene from a TOML file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mqed_scene_from_file(path: *const c_char, out: *mut *mut MqedScene) -> MqedStatus {
    if path.is_null() || out.is_null() {
        return null_status();
    }
    guard(|| {
        let p = Path::new(text(path)?);
        let cfg = SceneConfig::from_path(p)?;
        let scene = build_scene(&cfg, p.parent())?;
        *out = Box::into_raw(Box::new(MqedScene { scene }));
        Ok(())
    })
}

/// Releases a scene; null is ignored.
///
/// # Safety
/// `scene` must come from a constructor above and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mqed_scene_free(scene: *mut MqedScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Number of scatterer voxels; 0 for null.
///
/// # Safety
/// `scene` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mqed_scene_voxel_count(scene: *const MqedScene) -> usize {
    scene.as_ref().map(|s| s.scene.voxels.len()).unwrap_or(0)
}

/// Writes the 64-character hex scene hash plus NUL into `buf` (`len >= 65`).
///
/// # Safety
/// `scene` must be a live handle and `buf` hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn mqed_scene_hash(scene: *const MqedScene, buf: *mut c_char, len: usize) -> MqedStatus {
    if scene.is_null() || buf.is_null() {
        return null_status();
    }
    guard(|| {
        let h = scene_ref(scene)?.hash();
        if len < h.len() + 1 {
            return Err(Error::InvalidParameter(format!("hash buffer needs {} bytes", h.len() + 1)));
        }
        let dst = std::slice::from_raw_parts_mut(buf as *mut u8, h.len() + 1);
        dst[..h.len()].copy_from_slice(h.as_bytes());
        dst[h.len()] = 0;
        Ok(())
    })
}

/// `G_eff(a, b)` at `omega` into `out[18]`.
///
/// # Safety
/// `a`, `b` point to 3 doubles, `out` to 18.
#[no_mangle]
pub unsafe extern "C" fn mqed_green(scene: *const MqedScene, omega: f64, a: *const f64, b: *const f64, out: *mut f64) -> MqedStatus {
    if scene.is_null() || a.is_null() || b.is_null() || out.is_null() {
        return null_status();
    }
    guard(|| {
        let (a, b) = (vec3(a)?, vec3(b)?);
        let block = solve_effective_green(scene_ref(scene)?, omega, &[b], &[a], &SolverOptions::default())?;
        write_dyad(&block.values[0], out)
    })
}

/// Commutator density `(hbar/pi) k^2 Im G_eff(a, b)` into `out[18]`.
///
/// # Safety
/// As [`mqed_green`].
#[no_mangle]
pub unsafe extern "C" fn mqed_commutator_density(
    scene: *const MqedScene,
    omega: f64,
    a: *const f64,
    b: *const f64,
    out: *mut f64,
) -> MqedStatus {
    if scene.is_null() || a.is_null() || b.is_null() || out.is_null() {
        return null_status();
    }
    guard(|| {
        let d = commutator_density(scene_ref(scene)?, omega, &vec3(a)?, &vec3(b)?, &SolverOptions::default())?;
        write_dyad(&d.value, out)
    })
}

/// Projected LDOS at `x` along the unit vector `n`.
///
/// # Safety
/// `x` and `n` point to 3 doubles, `out` to one.
#[no_mangle]
pub unsafe extern "C" fn mqed_ldos(scene: *const MqedScene, omega: f64, x: *const f64, n: *const f64, out: *mut f64) -> MqedStatus {
    if scene.is_null() || x.is_null() || n.is_null() || out.is_null() {
        return null_status();
    }
    guard(|| {
        let nv = vec3(n)?;
        let v = ldos(scene_ref(scene)?, omega, &vec3(x)?, &[nv.x, nv.y, nv.z], &SolverOptions::default())?;
        put(out, v)
    })
}

/// Spontaneous emission rate and Purcell factor of a dipole `|mu| = dipole`
/// at `position` along `orientation`.
///
/// # Safety
/// Vector arguments point to 3 doubles; `rate` and `purcell` to one each.
#[no_mangle]
pub unsafe extern "C" fn mqed_spontaneous_rate(
    scene: *const MqedScene,
    omega: f64,
    position: *const f64,
    orientation: *const f64,
    dipole: f64,
    rate: *mut f64,
    purcell: *mut f64,
) -> MqedStatus {
    if scene.is_null() || position.is_null() || orientation.is_null() || rate.is_null() || purcell.is_null() {
        return null_status();
    }
    guard(|| {
        let (p, o) = (vec3(position)?, vec3(orientation)?);
        let e = EmitterSpec { position: [p.x, p.y, p.z], orientation: [o.x, o.y, o.z], dipole, omega };
        let r = spontaneous_rate(scene_ref(scene)?, &e, &SolverOptions::default())?;
        put(rate, r.rate)?;
        put(purcell, r.purcell)
    })
}

/// Relative residual of Im G(a, b) = surface + volume on a sphere of
/// `radius` with a rule of degree `order`.
///
/// # Safety
/// `a`, `b` point to 3 doubles, `out` to one.
#[no_mangle]
pub unsafe extern "C" fn mqed_identity_residual(
    scene: *const MqedScene,
    omega: f64,
    a: *const f64,
    b: *const f64,
    radius: f64,
    order: usize,
    out: *mut f64,
) -> MqedStatus {
    if scene.is_null() || a.is_null() || b.is_null() || out.is_null() {
        return null_status();
    }
    guard(|| {
        let q = sphere_quadrature(radius, order)?;
        let r = greens_identity_residual(
            scene_ref(scene)?,
            omega,
            &vec3(a)?,
            &vec3(b)?,
            &q,
            None,
            SurfaceForm::Exact,
            &SolverOptions::default(),
        )?;
        put(out, r.residual)
    })
}

/// Thermal Casimir force on the body formed by `voxels[0..count]` at
/// temperature `t`, with the default frequency grid, into `out[3]`.
///
/// # Safety
/// `voxels` points to `count` indices, `out` to 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn mqed_casimir_force(
    scene: *const MqedScene,
    voxels: *const usize,
    count: usize,
    t: f64,
    out: *mut f64,
) -> MqedStatus {
    if scene.is_null() || voxels.is_null() || out.is_null() {
        return null_status();
    }
    guard(|| {
        let body = BodySpec { voxels: std::slice::from_raw_parts(voxels, count).to_vec() };
        let r = casimir_thermal_force(scene_ref(scene)?, &body, t, &ForceOptions::default(), &SolverOptions::default())?;
        std::slice::from_raw_parts_mut(out, 3).copy_from_slice(&r.total);
        Ok(())
    })
}

/// Planck weight of `ordering` at `x = hbar omega / k_B T`.
///
/// # Safety
/// `out` must point to one double.
#[no_mangle]
pub unsafe extern "C" fn mqed_planck_weight(x: f64, ordering: MqedOrdering, out: *mut f64) -> MqedStatus {
    if out.is_null() {
        return null_status();
    }
    let o = match ordering {
        MqedOrdering::MinusPlus => Ordering::MinusPlus,
        MqedOrdering::PlusMinus => Ordering::PlusMinus,
        MqedOrdering::Symmetrized => Ordering::Symmetrized,
    };
    guard(|| put(out, planck_weight(x, o)))
}

/// Polariton frequencies at bare photon frequency `omega_alpha` into
/// `out[6]`: upper, lower and longitudinal roots as `(re, im)` pairs.
///
/// # Safety
/// `out` must point to 6 doubles.
#[no_mangle]
pub unsafe extern "C" fn mqed_polariton_branches(
    omega_p: f64,
    omega_0: f64,
    gamma: f64,
    omega_alpha: f64,
    out: *mut f64,
) -> MqedStatus {
    if out.is_null() {
        return null_status();
    }
    guard(|| {
        let m = DrudeLorentzModel::new(omega_p, omega_0, gamma)?;
        let (up, lo) = transverse_branches(&m, omega_alpha)?;
        let lg = longitudinal_branch(&m);
        let o = std::slice::from_raw_parts_mut(out, 6);
        for (k, p) in [up, lo, lg].iter().enumerate() {
            o[2 * k] = p.omega.re;
            o[2 * k + 1] = p.omega.im;
        }
        Ok(())
    })
}
