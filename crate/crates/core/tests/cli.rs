use std::fs;
use std::path::{Path, PathBuf};

use mqed::cli::{main_with_args, run_oracle, run_subcommand, RunConfig, RunStatus, Subcommand};
use mqed::greens::SolverOptions;

const LOSSY_SCENE: &str = r#"
box_side = 10.0
voxel_pitch = 0.05

[materials.lossy]
kind = "drude-lorentz"
omega_p = 4.0
omega_0 = 6.0
gamma = 1.0

[materials.other]
kind = "drude-lorentz"
omega_p = 3.0
omega_0 = 5.0
gamma = 0.5

[[scatterers]]
kind = "voxel"
position = [0.0, 0.0, 0.0]
material = "lossy"

[[scatterers]]
kind = "voxel"
position = [0.15, 0.0, 0.0]
material = "other"
"#;

// Slow oscillators a few pitches apart keep the force integrand compact.
const PAIR_SCENE: &str = r#"
box_side = 4.0
voxel_pitch = 0.01

[materials.a]
kind = "drude-lorentz"
omega_p = 1.0
omega_0 = 1.0
gamma = 0.1

[materials.b]
kind = "drude-lorentz"
omega_p = 1.5
omega_0 = 1.2
gamma = 0.05

[[scatterers]]
kind = "voxel"
position = [0.0, 0.0, 0.0]
material = "a"

[[scatterers]]
kind = "voxel"
position = [0.03, 0.0, 0.0]
material = "b"
"#;

const VACUUM_SCENE: &str = "box_side = 10.0\nvoxel_pitch = 0.1\n";

fn setup(scene: &str, run: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("scene.toml"), scene).unwrap();
    let run_path = dir.path().join("run.toml");
    fs::write(&run_path, run).unwrap();
    (dir, run_path)
}

fn exit(sub: &str, run: &Path, extra: &[&str]) -> i32 {
    let mut args = vec!["mqed".to_string(), sub.to_string(), "--config".into(), run.display().to_string()];
    args.extend(extra.iter().map(|s| s.to_string()));
    main_with_args(args)
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn dispersion_has_two_transverse_branches_and_the_longitudinal_line() {
    let run = "output_dir = \"out\"\n[grid]\nkind = \"linear\"\nstart = 0.1\nstop = 3.0\npoints = 30\n\
               [dispersion]\nomega_p = 1.0\nomega_0 = 1.0\ngamma = 0.01\n";
    let (dir, run_path) = setup(VACUUM_SCENE, run);
    assert_eq!(exit("dispersion", &run_path, &[]), 0);
    let rows = csv_rows(&dir.path().join("out/dispersion.csv"));
    assert_eq!(rows.len(), 90);
    let of = |tag: &str| rows.iter().filter(|r| &r[1] == tag).count();
    assert_eq!((of("upper"), of("lower"), of("longitudinal")), (30, 30, 30));
    for r in rows.iter().filter(|r| &r[1] == "longitudinal") {
        assert_eq!(r[2].parse::<f64>().unwrap(), 2f64.sqrt());
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "pass");
    assert_eq!(manifest["artifacts"][0]["path"], "dispersion.csv");
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn vacuum_identity_passes_and_records_the_residual() {
    let run = "scene = \"scene.toml\"\n[grid]\nkind = \"list\"\nvalues = [1.0, 6.283185307179586]\n\
               [verify_identity]\na = [0.1, -0.05, 0.02]\nb = [-0.05, 0.1, 0.08]\nradius = 1.0\norder = 40\n";
    let (dir, run_path) = setup(VACUUM_SCENE, run);
    assert_eq!(exit("verify-identity", &run_path, &[]), 0);
    for r in csv_rows(&dir.path().join("out/identity.csv")) {
        assert!(r[1].parse::<f64>().unwrap() < 1e-6);
    }
}

#[test]
fn failed_verification_exits_with_two() {
    // A zero tolerance cannot be met by a floating-point residual.
    let run = "scene = \"scene.toml\"\n[grid]\nkind = \"list\"\nvalues = [2.0]\n\
               [verify_identity]\na = [0.3, 0.05, 0.0]\nb = [-0.05, 0.3, 0.08]\nradius = 0.6\ntolerance = 0.0\n";
    let (dir, run_path) = setup(LOSSY_SCENE, run);
    assert_eq!(exit("verify-identity", &run_path, &[]), 2);
    let cfg = RunConfig::from_path(&run_path).unwrap();
    let o = run_subcommand(Subcommand::VerifyIdentity, &cfg, Some(1)).unwrap();
    assert_eq!(o.status, RunStatus::VerificationFailed);
    assert!(dir.path().join("out/identity.json").is_file());
}

#[test]
fn usage_and_io_faults_exit_with_one() {
    let (dir, run_path) = setup(VACUUM_SCENE, "bogus_key = 3\n");
    assert_eq!(exit("ldos", &run_path, &[]), 1);
    assert_eq!(main_with_args(["mqed", "plot", "--config", "x.toml"]), 1);
    assert_eq!(main_with_args(["mqed", "ldos"]), 1);
    assert_eq!(exit("ldos", &dir.path().join("missing.toml"), &[]), 1);
    // Scene path that does not exist.
    let (_d, run) = setup(VACUUM_SCENE, "scene = \"nowhere.toml\"\n");
    assert_eq!(exit("ldos", &run, &[]), 1);
    // Missing section.
    let (_d, run) = setup(VACUUM_SCENE, "scene = \"scene.toml\"\n[grid]\nkind = \"list\"\nvalues = [1.0]\n");
    assert_eq!(exit("ldos", &run, &[]), 1);
    // Output directory blocked by a regular file: an I/O fault, not a
    // verification failure.
    let (d, run) = setup(
        VACUUM_SCENE,
        "scene = \"scene.toml\"\noutput_dir = \"blocked\"\n[grid]\nkind = \"list\"\nvalues = [1.0]\n\
         [verify_identity]\na = [0.1, 0.0, 0.0]\nb = [0.0, 0.1, 0.0]\nradius = 1.0\ntolerance = 0.0\n",
    );
    fs::write(d.path().join("blocked"), "file").unwrap();
    assert_eq!(exit("verify-identity", &run, &[]), 1);
    assert_eq!(main_with_args(["mqed", "--help"]), 0);
}

#[test]
fn unknown_subcommand_names_are_config_errors() {
    assert!("bogus".parse::<Subcommand>().is_err());
    assert_eq!("oracle-suite".parse::<Subcommand>().unwrap(), Subcommand::OracleSuite);
}

const DETERMINISM_RUN: &str = r#"
scene = "scene.toml"

[grid]
kind = "log"
start = 0.5
stop = 8.0
points = 6

[ldos]
points = [[0.3, 0.1, 0.0], [0.0, 0.3, 0.2]]

[rate]
emitters = [{ position = [0.3, 0.1, 0.0], orientation = [0.0, 0.0, 1.0], dipole = 0.2 }]

[correlator]
a = [0.3, 0.1, 0.0]
b = [0.0, 0.3, 0.2]
source = "imag-g"
temperature = 1.5
ordering = "minus-plus"

[commutator]
a = [0.3, 0.1, 0.0]
b = [0.0, 0.3, 0.2]

[casimir]
voxels = [0]
temperature = 0.5
points_per_decade = 40
"#;

fn artifact_bytes(out: &Path, o: &mqed::cli::RunOutcome) -> Vec<(String, Vec<u8>)> {
    o.artifacts.iter().map(|a| (a.path.clone(), fs::read(out.join(&a.path)).unwrap())).collect()
}

#[test]
fn reruns_are_bit_identical() {
    let (dir, run_path) = setup(PAIR_SCENE, DETERMINISM_RUN);
    let base = RunConfig::from_path(&run_path).unwrap();
    for sub in [Subcommand::Ldos, Subcommand::Rate, Subcommand::Correlator, Subcommand::Commutator, Subcommand::Casimir] {
        let mut runs = Vec::new();
        for (k, threads) in [1usize, 1, 3].into_iter().enumerate() {
            let mut cfg = base.clone();
            cfg.output_dir = dir.path().join(format!("{}-{k}", sub.name()));
            let o = run_subcommand(sub, &cfg, Some(threads)).unwrap();
            assert_eq!(o.status, RunStatus::Pass);
            runs.push((o.inputs_digest.clone(), artifact_bytes(&cfg.output_dir, &o)));
        }
        assert_eq!(runs[0], runs[1], "{} single-threaded reruns differ", sub.name());
        assert_eq!(runs[0], runs[2], "{} depends on the worker count", sub.name());
    }
}

#[test]
fn oracle_reports_are_deterministic() {
    let opts = SolverOptions::default();
    for name in ["mode-count-ldos", "born-weak-contrast", "force-grid"] {
        let (a, ha) = run_oracle(name, &opts).unwrap();
        let (b, hb) = run_oracle(name, &opts).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.pass, "{name}: {a:?}");
    }
}

#[test]
fn oracle_suite_archives_baselines() {
    let (dir, run_path) = setup(VACUUM_SCENE, "[oracle_suite]\nonly = [\"mode-count-ldos\", \"surface-order-vacuum\"]\n");
    assert_eq!(exit("oracle-suite", &run_path, &[]), 0);
    let out = dir.path().join("out");
    let found: Vec<String> = fs::read_dir(out.join("baselines"))
        .unwrap()
        .flat_map(|d| fs::read_dir(d.unwrap().path()).unwrap())
        .map(|f| f.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(found.contains(&"mode-count-ldos.json".to_string()));
    assert!(found.contains(&"surface-order-vacuum.json".to_string()));
    assert_eq!(csv_rows(&out.join("oracle_suite.csv")).len(), 2);
}

#[test]
fn output_flag_overrides_the_run_file() {
    let run = "scene = \"scene.toml\"\n[grid]\nkind = \"list\"\nvalues = [1.0]\n[commutator]\na = [0.1, 0.0, 0.0]\nb = [0.0, 0.1, 0.0]\n";
    let (dir, run_path) = setup(VACUUM_SCENE, run);
    let target = dir.path().join("elsewhere");
    assert_eq!(exit("commutator", &run_path, &["--output", target.to_str().unwrap(), "--threads", "2"]), 0);
    assert!(target.join("commutator.csv").is_file());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn vanishing_damping_is_clamped_and_reported() {
    let run = "[grid]\nkind = \"list\"\nvalues = [0.5, 2.0]\n[dispersion]\nomega_p = 1.0\nomega_0 = 1.0\ngamma = 0.0\n";
    let (dir, run_path) = setup(VACUUM_SCENE, run);
    assert_eq!(exit("dispersion", &run_path, &[]), 0);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    let warnings = manifest["warnings"].as_array().unwrap();
    assert!(warnings.iter().any(|w| w.as_str().unwrap().contains("raised")), "{warnings:?}");
    let rows = csv_rows(&dir.path().join("out/dispersion.csv"));
    let lon: f64 = rows.iter().find(|r| &r[1] == "longitudinal").unwrap()[3].parse().unwrap();
    assert_eq!(lon, -1e-6 * 2f64.sqrt());
    // Negative damping is still rejected.
    let (_d, run_path) = setup(VACUUM_SCENE, &run.replace("gamma = 0.0", "gamma = -1.0"));
    assert_eq!(exit("dispersion", &run_path, &[]), 1);
}

#[test]
fn time_domain_correlator_is_the_trapezoid_sum_of_the_densities() {
    let run = "scene = \"scene.toml\"\n[grid]\nkind = \"linear\"\nstart = 1.0\nstop = 3.0\npoints = 5\n\
               [correlator]\na = [0.3, 0.1, 0.0]\nb = [0.0, 0.3, 0.2]\ndelays = [0.0, 0.7]\n";
    let (dir, run_path) = setup(LOSSY_SCENE, run);
    assert_eq!(exit("correlator", &run_path, &[]), 0);
    let freq = csv_rows(&dir.path().join("out/correlator.csv"));
    let time = csv_rows(&dir.path().join("out/correlator_time.csv"));
    assert_eq!(time.len(), 18);
    let f = |r: &csv::StringRecord, k: usize| r[k].parse::<f64>().unwrap();
    for (row, col) in [(0usize, 0usize), (0, 1), (2, 1)] {
        let pick: Vec<&csv::StringRecord> =
            freq.iter().filter(|r| r[3].parse::<usize>().unwrap() == row && r[4].parse::<usize>().unwrap() == col).collect();
        assert_eq!(pick.len(), 5);
        let (mut re, mut im) = (0.0, 0.0);
        for w in pick.windows(2) {
            let h = f(w[1], 0) - f(w[0], 0);
            re += 0.5 * h * (f(w[0], 5) + f(w[1], 5));
            im += 0.5 * h * (f(w[0], 6) + f(w[1], 6));
        }
        let t0 = time.iter().find(|r| f(r, 0) == 0.0 && r[1] == *row.to_string() && r[2] == *col.to_string()).unwrap();
        let scale = re.abs().max(im.abs());
        assert!((f(t0, 3) - re).abs() <= 1e-12 * scale && (f(t0, 4) - im).abs() <= 1e-12 * scale);
    }
}
