//! Command-line front end. Every run reads one TOML run file, writes its CSV
//! and JSON artifacts into an output directory and finishes with a
//! `manifest.json` that echoes the configuration, the scene hash, units,
//! solver settings and the SHA-256 of every artifact.
//!
//! Exit status: 0 on success, 2 when a verification subcommand ran but its
//! check failed, 1 for usage, configuration, I/O and numerical errors.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fluctuations::{
    commutator_density, from_mode_sum, mode_side, noise_correlator_density, planck_factor, time_domain_correlator,
    verify_equivalence, write_density_csv, CorrelatorDensity, EquivalenceSettings, Ordering, Region,
};
use crate::greens::{greens_identity_residual, solve_effective_green, IdentityReport, SolverOptions, SurfaceForm};
use crate::linalg::{frobenius, imag_part, Vec3, C64};
use crate::material::{log_grid, DrudeLorentzModel, MaterialRef};
use crate::observables::{
    casimir_thermal_force, ldos, orientation_averaged_ldos, spontaneous_rate, vacuum_ldos, write_force_csv, BodySpec,
    EmitterSpec, ForceOptions, MAX_TAIL_FRACTION, DEFAULT_POINTS_PER_DECADE,
};
use crate::oracle::{
    born_series_oracle, mode_counting_ldos, quadrature_convergence, ConvergenceSpec, Knob, Measure, OracleReport,
};
use crate::polariton::{dispersion_sweep, longitudinal_warning, write_dispersion_csv};
use crate::scene::{build_scene, sphere_quadrature, MaterialSpec, Scene, SceneConfig, ShellRule, Voxel};
use crate::units::Units;

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "MQED_THREADS";

// ---------------------------------------------------------------- arguments

#[derive(Debug, Parser)]
#[command(name = "mqed", version, about = "Macroscopic QED numerics on voxelized scenes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Run file (TOML).
    #[arg(long, value_name = "run.toml")]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` of the run file.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker threads; overrides the run file and MQED_THREADS.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, clap::Subcommand)]
pub enum CliCommand {
    /// Polariton branches over a sweep of bare photon frequencies.
    Dispersion(RunArgs),
    /// Local density of states at fixed points.
    Ldos(RunArgs),
    /// Spontaneous emission rates and Purcell factors.
    Rate(RunArgs),
    /// Field correlator densities (Im G, noise volume or mode sum).
    Correlator(RunArgs),
    /// Commutator density `(hbar/pi) k^2 Im G(a, b)`.
    Commutator(RunArgs),
    /// Im G = surface + volume check.
    VerifyIdentity(RunArgs),
    /// Mode sum / shell noise / Im G agreement with refinement fans.
    VerifyEquivalence(RunArgs),
    /// Thermal Casimir force on a body.
    Casimir(RunArgs),
    /// Reference oracles with archived baselines.
    OracleSuite(RunArgs),
}

impl CliCommand {
    fn split(&self) -> (Subcommand, &RunArgs) {
        match self {
            CliCommand::Dispersion(a) => (Subcommand::Dispersion, a),
            CliCommand::Ldos(a) => (Subcommand::Ldos, a),
            CliCommand::Rate(a) => (Subcommand::Rate, a),
            CliCommand::Correlator(a) => (Subcommand::Correlator, a),
            CliCommand::Commutator(a) => (Subcommand::Commutator, a),
            CliCommand::VerifyIdentity(a) => (Subcommand::VerifyIdentity, a),
            CliCommand::VerifyEquivalence(a) => (Subcommand::VerifyEquivalence, a),
            CliCommand::Casimir(a) => (Subcommand::Casimir, a),
            CliCommand::OracleSuite(a) => (Subcommand::OracleSuite, a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Dispersion,
    Ldos,
    Rate,
    Correlator,
    Commutator,
    VerifyIdentity,
    VerifyEquivalence,
    Casimir,
    OracleSuite,
}

impl Subcommand {
    pub const ALL: [Subcommand; 9] = [
        Subcommand::Dispersion,
        Subcommand::Ldos,
        Subcommand::Rate,
        Subcommand::Correlator,
        Subcommand::Commutator,
        Subcommand::VerifyIdentity,
        Subcommand::VerifyEquivalence,
        Subcommand::Casimir,
        Subcommand::OracleSuite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Dispersion => "dispersion",
            Subcommand::Ldos => "ldos",
            Subcommand::Rate => "rate",
            Subcommand::Correlator => "correlator",
            Subcommand::Commutator => "commutator",
            Subcommand::VerifyIdentity => "verify-identity",
            Subcommand::VerifyEquivalence => "verify-equivalence",
            Subcommand::Casimir => "casimir",
            Subcommand::OracleSuite => "oracle-suite",
        }
    }

    fn needs_scene(self) -> bool {
        !matches!(self, Subcommand::Dispersion | Subcommand::OracleSuite)
    }
}

impl std::str::FromStr for Subcommand {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Subcommand::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown subcommand '{s}'")))
    }
}

// ---------------------------------------------------------------- run file

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GridSpec {
    Linear { start: f64, stop: f64, points: usize },
    Log { start: f64, stop: f64, points: usize },
    List { values: Vec<f64> },
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        let v = match self {
            GridSpec::Linear { start, stop, points } => match points {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..*n).map(|i| start + (stop - start) * i as f64 / (n - 1) as f64).collect(),
            },
            GridSpec::Log { start, stop, points } => {
                if !(*start > 0.0 && *stop > 0.0) {
                    return Err(Error::Config("log grid edges must be positive".into()));
                }
                match points {
                    0 => Vec::new(),
                    1 => vec![*start],
                    n => log_grid(*start, *stop, *n),
                }
            }
            GridSpec::List { values } => values.clone(),
        };
        if v.is_empty() {
            return Err(Error::Config("frequency grid is empty".into()));
        }
        if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(Error::Config(format!("grid values must be positive and finite, got {x}")));
        }
        Ok(v)
    }
}

/// Optional overrides of [`SolverOptions`].
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub dense_limit: Option<usize>,
    pub tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
    pub restart: Option<usize>,
    pub memory_cap_bytes: Option<u64>,
}

impl SolverOverrides {
    pub fn apply(&self) -> SolverOptions {
        let d = SolverOptions::default();
        SolverOptions {
            dense_limit: self.dense_limit.unwrap_or(d.dense_limit),
            tolerance: self.tolerance.unwrap_or(d.tolerance),
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            restart: self.restart.unwrap_or(d.restart),
            memory_cap_bytes: self.memory_cap_bytes.unwrap_or(d.memory_cap_bytes),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DispersionSection {
    pub omega_p: f64,
    pub omega_0: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LdosSection {
    pub points: Vec<[f64; 3]>,
    /// Unit dipole axis; absent means the orientation average.
    pub orientation: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EmitterEntry {
    pub position: [f64; 3],
    pub orientation: [f64; 3],
    pub dipole: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    pub emitters: Vec<EmitterEntry>,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelatorSource {
    #[default]
    ImagG,
    Noise,
    ModeSum,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CorrelatorSection {
    pub a: [f64; 3],
    pub b: [f64; 3],
    #[serde(default)]
    pub source: CorrelatorSource,
    /// Noise-volume region; defaults to the whole volume.
    pub region: Option<Region>,
    pub shell_rule: Option<ShellRule>,
    /// Mode-sum box side; defaults to the scene box.
    pub box_side: Option<f64>,
    /// Thermal weighting; absent leaves the bare density.
    pub temperature: Option<f64>,
    pub ordering: Option<Ordering>,
    /// Delays `t_a - t_b` at which to synthesize the time-domain correlator
    /// from the grid densities.
    pub delays: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CommutatorSection {
    pub a: [f64; 3],
    pub b: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct IdentitySection {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub radius: f64,
    #[serde(default = "default_sphere_order")]
    pub order: usize,
    #[serde(default)]
    pub form: SurfaceForm,
    pub shell_rule: Option<ShellRule>,
    /// Largest accepted residual.
    #[serde(default = "default_identity_tolerance")]
    pub tolerance: f64,
}

fn default_sphere_order() -> usize {
    40
}

fn default_identity_tolerance() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CasimirSection {
    /// Body voxels by index into the sorted voxel list.
    pub voxels: Option<Vec<usize>>,
    /// Body voxels by bounding box `[min, max]`.
    pub within: Option<[[f64; 3]; 2]>,
    #[serde(default)]
    pub temperature: f64,
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
    pub points_per_decade: Option<usize>,
    pub step: Option<f64>,
    pub max_tail_fraction: Option<f64>,
}

impl CasimirSection {
    fn body(&self, scene: &Scene) -> Result<BodySpec> {
        let voxels = match (&self.voxels, &self.within) {
            (Some(v), None) => v.clone(),
            (None, Some([lo, hi])) => scene
                .voxels
                .iter()
                .enumerate()
                .filter(|(_, v)| (0..3).all(|i| v.position[i] >= lo[i] && v.position[i] <= hi[i]))
                .map(|(i, _)| i)
                .collect(),
            _ => return Err(Error::Config("[casimir] needs exactly one of `voxels` or `within`".into())),
        };
        let body = BodySpec { voxels };
        body.validate(scene)?;
        Ok(body)
    }

    fn force_options(&self) -> ForceOptions {
        ForceOptions {
            omega_min: self.omega_min,
            omega_max: self.omega_max,
            points_per_decade: self.points_per_decade.unwrap_or(DEFAULT_POINTS_PER_DECADE),
            step: self.step,
            max_tail_fraction: self.max_tail_fraction.unwrap_or(MAX_TAIL_FRACTION),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OracleSuiteSection {
    /// Oracle names to run; absent runs all.
    pub only: Option<Vec<String>>,
}

/// One run file. Relative paths resolve against the file's directory.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scene: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub threads: Option<usize>,
    #[serde(default)]
    pub solver: SolverOverrides,
    pub grid: Option<GridSpec>,
    pub dispersion: Option<DispersionSection>,
    pub ldos: Option<LdosSection>,
    pub rate: Option<RateSection>,
    pub correlator: Option<CorrelatorSection>,
    pub commutator: Option<CommutatorSection>,
    pub verify_identity: Option<IdentitySection>,
    pub verify_equivalence: Option<EquivalenceSettings>,
    pub casimir: Option<CasimirSection>,
    pub oracle_suite: Option<OracleSuiteSection>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read run file {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        if let Some(s) = cfg.scene_path() {
            if !s.is_file() {
                return Err(Error::Config(format!("scene file {} does not exist", s.display())));
            }
        }
        Ok(cfg)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn scene_path(&self) -> Option<PathBuf> {
        self.scene.as_ref().map(|p| self.resolve(p))
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(g) = &self.grid {
            g.values()?;
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }

    fn grid_values(&self) -> Result<Vec<f64>> {
        self.grid.as_ref().ok_or_else(|| Error::Config("this subcommand needs a [grid] section".into()))?.values()
    }

    /// Loads the scene with every Drude-Lorentz damping clamped to
    /// [`MIN_RELATIVE_GAMMA`]; returns a note per clamped material.
    pub fn load_scene(&self) -> Result<(Option<Scene>, Vec<String>)> {
        let Some(path) = self.scene_path() else { return Ok((None, Vec::new())) };
        let mut cfg = SceneConfig::from_path(&path)?;
        let mut notes = Vec::new();
        for (name, m) in cfg.materials.iter_mut() {
            if let MaterialSpec::DrudeLorentz { omega_p, omega_0, gamma } = m {
                notes.extend(clamp_gamma(&format!("material '{name}'"), *omega_p, *omega_0, gamma));
            }
        }
        Ok((Some(build_scene(&cfg, path.parent())?), notes))
    }
}

/// Smallest damping the front end accepts, as a fraction of `omega_L`.
pub const MIN_RELATIVE_GAMMA: f64 = 1e-6;

/// Raises a nonnegative `gamma` below `MIN_RELATIVE_GAMMA * omega_L` to that
/// floor. Negative or non-finite values are left for validation to reject.
fn clamp_gamma(label: &str, omega_p: f64, omega_0: f64, gamma: &mut f64) -> Option<String> {
    let floor = MIN_RELATIVE_GAMMA * (omega_p * omega_p + omega_0 * omega_0).sqrt();
    if *gamma >= 0.0 && *gamma < floor {
        let note = format!("{label}: gamma {} raised to {floor:e} ({MIN_RELATIVE_GAMMA:e} omega_L)", *gamma);
        *gamma = floor;
        Some(note)
    } else {
        None
    }
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref().ok_or_else(|| Error::Config(format!("missing [{name}] section")))
}

// ---------------------------------------------------------------- outcome

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct Artifact {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Pass,
    VerificationFailed,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub artifacts: Vec<Artifact>,
    pub manifest: PathBuf,
    pub inputs_digest: String,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        match self.status {
            RunStatus::Pass => 0,
            RunStatus::VerificationFailed => 2,
        }
    }
}

/// What a subcommand body produced before the manifest is written.
struct Produced {
    files: Vec<PathBuf>,
    pass: bool,
    warnings: Vec<String>,
}

impl Produced {
    fn ok(files: Vec<PathBuf>) -> Self {
        Produced { files, pass: true, warnings: Vec::new() }
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

// ---------------------------------------------------------------- driver

/// Runs `cmd` with `config`, writing artifacts and `manifest.json` into
/// the configured output directory. `threads` (CLI flag) overrides the run
/// file, which overrides [`THREADS_ENV`].
pub fn run_subcommand(cmd: Subcommand, config: &RunConfig, threads: Option<usize>) -> Result<RunOutcome> {
    let threads = match threads.or(config.threads) {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| Error::Config(format!("{THREADS_ENV}={v} is not a count")))?),
            Err(_) => None,
        },
    };
    if threads == Some(0) {
        return Err(Error::Config("threads must be at least 1".into()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_in_pool(cmd, config, pool.current_num_threads()))
}

fn run_in_pool(cmd: Subcommand, config: &RunConfig, threads: usize) -> Result<RunOutcome> {
    let start = Instant::now();
    let out = config.output_path();
    std::fs::create_dir_all(&out)?;
    let (scene, scene_notes) = config.load_scene()?;
    if cmd.needs_scene() && scene.is_none() {
        return Err(Error::Config(format!("{} needs a scene file", cmd.name())));
    }
    let opts = config.solver.apply();
    let produced = match cmd {
        Subcommand::Dispersion => run_dispersion(config, &out)?,
        Subcommand::Ldos => run_ldos(config, scene.as_ref().unwrap(), &opts, &out)?,
        Subcommand::Rate => run_rate(config, scene.as_ref().unwrap(), &opts, &out)?,
        Subcommand::Correlator => run_correlator(config, scene.as_ref().unwrap(), &opts, &out)?,
        Subcommand::Commutator => run_commutator(config, scene.as_ref().unwrap(), &opts, &out)?,
        Subcommand::VerifyIdentity => run_identity(config, scene.as_ref().unwrap(), &opts, &out)?,
        Subcommand::VerifyEquivalence => run_equivalence(config, scene.as_ref().unwrap(), &opts, &out)?,
        Subcommand::Casimir => run_casimir(config, scene.as_ref().unwrap(), &opts, &out)?,
        Subcommand::OracleSuite => run_oracle_suite(config, &opts, &out)?,
    };
    let mut artifacts = Vec::with_capacity(produced.files.len());
    for f in &produced.files {
        let rel = f.strip_prefix(&out).unwrap_or(f).to_string_lossy().replace('\\', "/");
        artifacts.push(Artifact { path: rel, sha256: sha256_file(f)? });
    }
    let status = if produced.pass { RunStatus::Pass } else { RunStatus::VerificationFailed };
    let units = scene.as_ref().map(|s| s.units).unwrap_or_default();
    let scene_hash = scene.as_ref().map(Scene::hash);
    // Output location and worker count do not change any number.
    let mut echo = config.clone();
    echo.output_dir = PathBuf::new();
    echo.threads = None;
    let inputs = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": cmd.name(),
        "config": echo,
        "scene_hash": scene_hash,
        "units": units,
        "solver": opts,
    });
    let inputs_digest = crate::oracle::digest(&inputs)?;
    let manifest = serde_json::json!({
        "tool": "mqed",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": cmd.name(),
        "config": config,
        "inputs_digest": inputs_digest,
        "scene_hash": scene_hash,
        "units": units,
        "solver": opts,
        "threads": threads,
        "artifacts": artifacts,
        "status": status,
        "warnings": scene_notes.iter().chain(&produced.warnings).collect::<Vec<_>>(),
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    let manifest_path = out.join("manifest.json");
    write_json(&manifest_path, &manifest)?;
    Ok(RunOutcome { status, artifacts, manifest: manifest_path, inputs_digest })
}

/// Parses `args` (including the program name), runs and returns the exit
/// status. Errors go to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let (cmd, args) = cli.command.split();
    let result = RunConfig::from_path(&args.config).and_then(|mut cfg| {
        if let Some(o) = &args.output {
            // The flag is relative to the working directory, not the run file.
            cfg.output_dir = std::env::current_dir()?.join(o);
        }
        run_subcommand(cmd, &cfg, args.threads)
    });
    match result {
        Ok(o) => {
            if o.status == RunStatus::VerificationFailed {
                eprintln!("mqed {}: verification failed; see {}", cmd.name(), o.manifest.display());
            }
            o.exit_code()
        }
        Err(e) => {
            eprintln!("mqed {}: {e}", cmd.name());
            1
        }
    }
}

// ---------------------------------------------------------------- subcommands

fn run_dispersion(config: &RunConfig, out: &Path) -> Result<Produced> {
    let s = section(&config.dispersion, "dispersion")?;
    let mut gamma = s.gamma;
    let clamped = clamp_gamma("[dispersion]", s.omega_p, s.omega_0, &mut gamma);
    let m = DrudeLorentzModel::new(s.omega_p, s.omega_0, gamma)?;
    let sweep = config.grid_values()?;
    let points = dispersion_sweep(&m, &sweep)?;
    let path = out.join("dispersion.csv");
    write_dispersion_csv(&points, &path)?;
    let mut p = Produced::ok(vec![path]);
    p.warnings.extend(clamped);
    p.warnings.extend(longitudinal_warning(&m));
    Ok(p)
}

fn run_ldos(config: &RunConfig, scene: &Scene, opts: &SolverOptions, out: &Path) -> Result<Produced> {
    let s = section(&config.ldos, "ldos")?;
    if s.points.is_empty() {
        return Err(Error::Config("[ldos] lists no points".into()));
    }
    let omegas = config.grid_values()?;
    let jobs: Vec<(f64, usize)> = omegas.iter().flat_map(|&w| (0..s.points.len()).map(move |i| (w, i))).collect();
    let values: Vec<f64> = jobs
        .par_iter()
        .map(|&(w, i)| {
            let x = Vec3::from(s.points[i]);
            match &s.orientation {
                Some(n) => ldos(scene, w, &x, n, opts),
                None => orientation_averaged_ldos(scene, w, &x, opts),
            }
        })
        .collect::<Result<_>>()?;
    let path = out.join("ldos.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["omega", "point", "x", "y", "z", "ldos", "vacuum_ldos", "ratio"])?;
    for (&(omega, i), &v) in jobs.iter().zip(&values) {
        let p = s.points[i];
        let vac = vacuum_ldos(omega, scene.units.c);
        w.write_record(&[num(omega), i.to_string(), num(p[0]), num(p[1]), num(p[2]), num(v), num(vac), num(v / vac)])?;
    }
    w.flush()?;
    let mut p = Produced::ok(vec![path]);
    let pts: Vec<Vec3> = s.points.iter().map(|&q| Vec3::from(q)).collect();
    p.warnings = scene.compliance_warnings(&pts);
    Ok(p)
}

fn run_rate(config: &RunConfig, scene: &Scene, opts: &SolverOptions, out: &Path) -> Result<Produced> {
    let s = section(&config.rate, "rate")?;
    if s.emitters.is_empty() {
        return Err(Error::Config("[rate] lists no emitters".into()));
    }
    let omegas = config.grid_values()?;
    let jobs: Vec<EmitterSpec> = omegas
        .iter()
        .flat_map(|&w| {
            s.emitters.iter().map(move |e| EmitterSpec { position: e.position, orientation: e.orientation, dipole: e.dipole, omega: w })
        })
        .collect();
    let reports = jobs.par_iter().map(|e| spontaneous_rate(scene, e, opts)).collect::<Result<Vec<_>>>()?;
    let path = out.join("rate.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["omega", "emitter", "ldos", "rate", "vacuum_rate", "purcell"])?;
    for (k, (e, r)) in jobs.iter().zip(&reports).enumerate() {
        let idx = k % s.emitters.len();
        w.write_record(&[num(e.omega), idx.to_string(), num(r.ldos), num(r.rate), num(r.vacuum_rate), num(r.purcell)])?;
    }
    w.flush()?;
    Ok(Produced::ok(vec![path]))
}

fn run_correlator(config: &RunConfig, scene: &Scene, opts: &SolverOptions, out: &Path) -> Result<Produced> {
    let s = section(&config.correlator, "correlator")?;
    if s.ordering.is_some() && s.temperature.is_none() {
        return Err(Error::Config("[correlator] ordering needs a temperature".into()));
    }
    let (a, b) = (Vec3::from(s.a), Vec3::from(s.b));
    let omegas = config.grid_values()?;
    let hash = scene.hash();
    let rows: Vec<CorrelatorDensity> = omegas
        .par_iter()
        .map(|&w| {
            let mut d = match s.source {
                CorrelatorSource::ImagG => commutator_density(scene, w, &a, &b, opts)?,
                CorrelatorSource::Noise => {
                    noise_correlator_density(scene, s.region.unwrap_or(Region::All), w, &a, &b, s.shell_rule, opts)?
                }
                CorrelatorSource::ModeSum => {
                    let l = s.box_side.unwrap_or(scene.box_side);
                    from_mode_sum(&mode_side(scene, w, &a, &b, l, opts)?, &a, &b, &hash)
                }
            };
            if let Some(t) = s.temperature {
                let o = s.ordering.unwrap_or(Ordering::Symmetrized);
                d.value *= C64::new(planck_factor(w, t, o, &scene.units)?, 0.0);
                d.temperature = Some(t);
                d.ordering = Some(o);
            }
            Ok(d)
        })
        .collect::<Result<_>>()?;
    let path = out.join("correlator.csv");
    write_density_csv(&rows, &path)?;
    let mut files = vec![path];
    if let Some(delays) = &s.delays {
        let path = out.join("correlator_time.csv");
        write_time_csv(&rows, delays, &path)?;
        files.push(path);
    }
    let mut p = Produced::ok(files);
    p.warnings = rows.iter().flat_map(|d| d.meta.warnings.iter().cloned()).collect();
    p.warnings.dedup();
    Ok(p)
}

/// Columns: `tau, row, col, re, im`.
fn write_time_csv(rows: &[CorrelatorDensity], delays: &[f64], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["tau", "row", "col", "re", "im"])?;
    for &tau in delays {
        if !tau.is_finite() {
            return Err(Error::Config(format!("[correlator] delay {tau} is not finite")));
        }
        let g = time_domain_correlator(rows, tau)?;
        for i in 0..3 {
            for j in 0..3 {
                w.write_record(&[num(tau), i.to_string(), j.to_string(), num(g[(i, j)].re), num(g[(i, j)].im)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn run_commutator(config: &RunConfig, scene: &Scene, opts: &SolverOptions, out: &Path) -> Result<Produced> {
    let s = section(&config.commutator, "commutator")?;
    let (a, b) = (Vec3::from(s.a), Vec3::from(s.b));
    let omegas = config.grid_values()?;
    let rows: Vec<CorrelatorDensity> =
        omegas.par_iter().map(|&w| commutator_density(scene, w, &a, &b, opts)).collect::<Result<_>>()?;
    let path = out.join("commutator.csv");
    write_density_csv(&rows, &path)?;
    Ok(Produced::ok(vec![path]))
}

fn run_identity(config: &RunConfig, scene: &Scene, opts: &SolverOptions, out: &Path) -> Result<Produced> {
    let s = section(&config.verify_identity, "verify_identity")?;
    let (a, b) = (Vec3::from(s.a), Vec3::from(s.b));
    let quad = sphere_quadrature(s.radius, s.order)?;
    let omegas = config.grid_values()?;
    let reports: Vec<IdentityReport> = omegas
        .par_iter()
        .map(|&w| greens_identity_residual(scene, w, &a, &b, &quad, s.shell_rule, s.form, opts))
        .collect::<Result<_>>()?;
    let csv_path = out.join("identity.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["omega", "residual", "surface_fraction", "volume_fraction", "shell_nodes"])?;
    for (&omega, r) in omegas.iter().zip(&reports) {
        w.write_record(&[
            num(omega),
            num(r.residual),
            num(r.surface_fraction),
            num(r.volume_fraction),
            r.shell_nodes.to_string(),
        ])?;
    }
    w.flush()?;
    let pass = reports.iter().all(|r| r.residual <= s.tolerance);
    let json_path = out.join("identity.json");
    let rows: Vec<_> = omegas
        .iter()
        .zip(&reports)
        .map(|(w, r)| serde_json::json!({ "omega": w, "report": r }))
        .collect();
    write_json(&json_path, &serde_json::json!({ "tolerance": s.tolerance, "pass": pass, "runs": rows }))?;
    Ok(Produced { files: vec![csv_path, json_path], pass, warnings: Vec::new() })
}

fn run_equivalence(config: &RunConfig, scene: &Scene, opts: &SolverOptions, out: &Path) -> Result<Produced> {
    let s = section(&config.verify_equivalence, "verify_equivalence")?;
    let report = verify_equivalence(scene, s, opts)?;
    let json_path = out.join("equivalence.json");
    write_json(&json_path, &report)?;
    let csv_path = out.join("equivalence_fans.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["knob", "level", "pair", "disagreement", "monotone"])?;
    for f in &report.fans {
        for (l, d) in f.levels.iter().zip(&f.disagreement) {
            w.write_record(&[f.knob.to_string(), num(*l), f.pair.to_string(), num(*d), f.monotone.to_string()])?;
        }
    }
    w.flush()?;
    Ok(Produced { files: vec![json_path, csv_path], pass: report.pass, warnings: Vec::new() })
}

fn run_casimir(config: &RunConfig, scene: &Scene, opts: &SolverOptions, out: &Path) -> Result<Produced> {
    let s = section(&config.casimir, "casimir")?;
    let body = s.body(scene)?;
    let report = casimir_thermal_force(scene, &body, s.temperature, &s.force_options(), opts)?;
    let csv_path = out.join("force.csv");
    write_force_csv(&report, &csv_path)?;
    let json_path = out.join("force.json");
    write_json(&json_path, &report)?;
    let mut p = Produced::ok(vec![csv_path, json_path]);
    p.warnings.push(format!("force {}", report.caveat));
    Ok(p)
}

// ---------------------------------------------------------------- oracle suite

/// Names of the built-in oracles, in run order.
pub const ORACLES: [&str; 6] = [
    "mode-count-ldos",
    "born-weak-contrast",
    "surface-order-vacuum",
    "identity-pitch",
    "cube-subdivision",
    "force-grid",
];

/// Wavelength of every reference problem (c = 1).
const REFERENCE_OMEGA: f64 = 2.0 * std::f64::consts::PI;

fn dl_through(omega: f64, eps: C64) -> Result<MaterialRef> {
    Ok(MaterialRef::DrudeLorentz(DrudeLorentzModel::through(omega, eps)?))
}

/// Cube of side `side` centred at the origin, cut into `n^3` voxels.
pub fn subdivided_cube(side: f64, n: usize, material: &MaterialRef, box_side: f64) -> Scene {
    let p = side / n as f64;
    let mut s = Scene::empty(box_side, p);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let c = Vec3::new((i as f64 + 0.5) * p, (j as f64 + 0.5) * p, (k as f64 + 0.5) * p) - Vec3::repeat(side / 2.0);
                s.voxels.push(Voxel { position: c, material: material.clone() });
            }
        }
    }
    s
}

/// Two quasi-static Drude-Lorentz voxels `d = 3` pitches apart on x.
pub fn quasi_static_pair() -> Result<Scene> {
    let mut s = Scene::empty(4.0, 0.01);
    s.voxels.push(Voxel { position: Vec3::zeros(), material: MaterialRef::DrudeLorentz(DrudeLorentzModel::new(1.0, 1.0, 0.1)?) });
    s.voxels.push(Voxel {
        position: Vec3::new(0.03, 0.0, 0.0),
        material: MaterialRef::DrudeLorentz(DrudeLorentzModel::new(1.5, 1.2, 0.05)?),
    });
    s.validate()?;
    Ok(s)
}

/// Points used by the identity and cube-subdivision oracles.
pub const CUBE_POINTS: ([f64; 3], [f64; 3]) = ([0.08, 0.02, 0.0], [-0.05, 0.07, 0.03]);

/// Runs one named oracle and returns its report and the hash of the scene
/// it ran on.
pub fn run_oracle(name: &str, opts: &SolverOptions) -> Result<(OracleReport, String)> {
    let omega = REFERENCE_OMEGA;
    let units = Units::default();
    match name {
        "mode-count-ldos" => {
            let l = 40.0 * std::f64::consts::PI * units.c / omega;
            let delta = crate::modes::default_delta_omega(omega, l, &units);
            let value = mode_counting_ldos(l, omega, delta, &units)?;
            let target = vacuum_ldos(omega, units.c);
            let inputs = serde_json::json!({ "box_side": l, "omega": omega, "delta": delta });
            let r = OracleReport::compare(name, &inputs, value, 0.0, target, 0.05 * target)?;
            Ok((r, Scene::empty(l, 1.0).hash()))
        }
        "born-weak-contrast" => {
            let m = dl_through(omega, C64::new(1.0 + 1e-3, 1e-3))?;
            let scene = subdivided_cube(0.1, 2, &m, 4.0);
            let (a, b) = (Vec3::new(0.2, 0.05, 0.0), Vec3::new(-0.1, 0.15, 0.1));
            let born = born_series_oracle(&scene, omega, &a, &b, 2)?;
            let block = solve_effective_green(&scene, omega, &[b], &[a], opts)?;
            let g0 = crate::greens::vacuum_green(omega / units.c, &a, &b)?;
            let exact = block.values[0] - g0;
            let value = frobenius(&(born.value - g0 - exact)) / frobenius(&exact);
            let c = born.contraction;
            // Remainder of the Neumann series after the second term.
            let tolerance = 4.0 * c * c / (1.0 - c);
            let inputs = serde_json::json!({ "scene": scene.hash(), "omega": omega, "a": [a.x, a.y, a.z], "b": [b.x, b.y, b.z] });
            let mut r = OracleReport::compare(name, &inputs, value, f64::EPSILON, 0.0, tolerance)?;
            r.notes.push(format!("contraction {c:.3e}"));
            Ok((r, scene.hash()))
        }
        "surface-order-vacuum" => {
            let scene = Scene::empty(10.0, 0.1);
            let (a, b) = (Vec3::new(0.1, -0.05, 0.02), Vec3::new(-0.05, 0.1, 0.08));
            let exact = imag_part(&crate::greens::vacuum_green(omega / units.c, &a, &b)?);
            let spec = ConvergenceSpec {
                task: "surface-vacuum".into(),
                knob: Knob::Order,
                levels: vec![6.0, 12.0, 24.0],
                measure: Measure::Errors,
                min_order: Some(1.0),
                max_final_change: None,
                floor: 1e-10,
            };
            let mut r = quadrature_convergence(&spec, |order| {
                let q = sphere_quadrature(1.0, order as usize)?;
                let s = crate::greens::surface_functional(&scene, omega, &a, &b, &q, SurfaceForm::Exact, opts)?;
                Ok(frobenius(&(s - exact)) / frobenius(&exact))
            })?;
            r.oracle = name.into();
            Ok((r, scene.hash()))
        }
        "identity-pitch" | "cube-subdivision" => {
            let m = dl_through(omega, C64::new(2.0, 0.5))?;
            let (a, b) = (Vec3::from(CUBE_POINTS.0), Vec3::from(CUBE_POINTS.1));
            let q = sphere_quadrature(0.5, 40)?;
            let levels = [2usize, 4, 8];
            let side = 0.05;
            let runs: Vec<(f64, f64)> = levels
                .iter()
                .map(|&n| {
                    let s = subdivided_cube(side, n, &m, 4.0);
                    if name == "identity-pitch" {
                        Ok((greens_identity_residual(&s, omega, &a, &b, &q, None, SurfaceForm::Exact, opts)?.residual, 0.0))
                    } else {
                        Ok((0.0, solve_effective_green(&s, omega, &[b], &[a], opts)?.values[0][(0, 0)].re))
                    }
                })
                .collect::<Result<_>>()?;
            let pitches: Vec<f64> = levels.iter().map(|&n| side / n as f64).collect();
            let spec = if name == "identity-pitch" {
                ConvergenceSpec {
                    task: "identity".into(),
                    knob: Knob::Pitch,
                    levels: pitches.clone(),
                    measure: Measure::Errors,
                    min_order: Some(1.0),
                    max_final_change: None,
                    floor: 1e-10,
                }
            } else {
                ConvergenceSpec {
                    task: "cube-green".into(),
                    knob: Knob::Pitch,
                    levels: pitches.clone(),
                    measure: Measure::Values,
                    min_order: Some(1.0),
                    max_final_change: Some(0.01),
                    floor: 0.0,
                }
            };
            let pick = |h: f64| -> Result<f64> {
                let i = pitches.iter().position(|&p| p == h).expect("one of the convergence levels");
                Ok(if name == "identity-pitch" { runs[i].0 } else { runs[i].1 })
            };
            let mut r = quadrature_convergence(&spec, pick)?;
            r.oracle = name.into();
            Ok((r, subdivided_cube(side, levels[2], &m, 4.0).hash()))
        }
        "force-grid" => {
            let scene = quasi_static_pair()?;
            let body = BodySpec { voxels: vec![0] };
            let spec = ConvergenceSpec {
                task: "force".into(),
                knob: Knob::Grid,
                levels: vec![50.0, 100.0, 200.0],
                measure: Measure::Values,
                min_order: Some(1.0),
                max_final_change: Some(1e-3),
                floor: 0.0,
            };
            let mut r = quadrature_convergence(&spec, |ppd| {
                let fo = ForceOptions { points_per_decade: ppd as usize, ..Default::default() };
                Ok(casimir_thermal_force(&scene, &body, 0.0, &fo, opts)?.total[0])
            })?;
            r.oracle = name.into();
            Ok((r, scene.hash()))
        }
        _ => Err(Error::Config(format!("unknown oracle '{name}'; known: {}", ORACLES.join(", ")))),
    }
}

fn run_oracle_suite(config: &RunConfig, opts: &SolverOptions, out: &Path) -> Result<Produced> {
    let names: Vec<String> = match config.oracle_suite.as_ref().and_then(|s| s.only.clone()) {
        Some(v) => v,
        None => ORACLES.iter().map(|s| s.to_string()).collect(),
    };
    let mut files = Vec::new();
    let mut reports = Vec::new();
    for n in &names {
        let (r, hash) = run_oracle(n, opts)?;
        files.push(r.archive(out, &hash)?);
        reports.push(r);
    }
    let path = out.join("oracle_suite.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["oracle", "pass", "value", "target", "tolerance", "error_estimate", "observed_order"])?;
    for r in &reports {
        w.write_record(&[
            r.oracle.clone(),
            r.pass.to_string(),
            num(*r.values.last().unwrap_or(&f64::NAN)),
            r.target.map(num).unwrap_or_default(),
            num(r.tolerance),
            num(r.error_estimate),
            r.observed_order.map(num).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    files.push(path);
    let pass = reports.iter().all(|r| r.pass);
    Ok(Produced { files, pass, warnings: Vec::new() })
}
