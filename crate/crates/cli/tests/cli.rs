//! Config schema, scenario generation contracts, and end-to-end binary
//! behaviour (exit codes, artifact layout, determinism).

use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use wavemap_cli::config::{parse_config, GradingChoice};
use wavemap_cli::scenarios::make_initial_data;
use wavemap_core::bubbles::{bubble_state, q_eval};
use wavemap_core::functionals::energy;
use wavemap_core::snapshot::{read_snapshot, write_snapshot};
use wavemap_core::{make_grid, FieldState, Grading, RadialGrid};

const K1_THRESHOLD: f64 = 8.0 * std::f64::consts::PI;

fn grid(r_max: f64, n: usize, k: u32) -> Arc<RadialGrid> {
    Arc::new(make_grid(r_max, n, Grading::Uniform, k).unwrap())
}

fn gen(config: &str) -> (FieldState, Vec<String>) {
    let cfg = parse_config(config).unwrap();
    let v = cfg.validate().unwrap();
    let g = Arc::new(make_grid(v.r_max, v.n, v.grading, v.k).unwrap());
    let mut notes = Vec::new();
    let state = make_initial_data(&v.scenario, &g, v.seed, Path::new("."), &mut notes).unwrap();
    (state, notes)
}

/// Top-level keys must precede the `[grid]` section; the scenario table
/// comes last so nothing leaks into it.
fn config_with(top: &str, grid_body: &str, scenario: &str) -> String {
    format!(
        "k = 1\nt_final = 1.0\ncadence = 0.5\n{top}\n[grid]\n{grid_body}\n{scenario}\n"
    )
}

fn base_config(scenario: &str) -> String {
    config_with("", "r_max = 20.0\nn = 256", scenario)
}

/// Geometric grid reaching r ~ 4e-5, enough to resolve bubble scales down
/// to a few 1e-2.
fn fine_origin_config(top: &str, scenario: &str) -> String {
    config_with(top, "r_max = 20.0\nn = 256\ngrading = \"geometric\"\nratio = 0.95", scenario)
}

// ---- config schema ----------------------------------------------------

#[test]
fn minimal_config_fills_defaults() {
    let cfg = parse_config(&base_config("[scenario]\nname = \"zero\"")).unwrap();
    assert_eq!(cfg.seed, 0);
    assert_eq!(cfg.grid.grading, GradingChoice::Uniform);
    assert!(cfg.diagnostics.fit && cfg.diagnostics.classify);
    let v = cfg.validate().unwrap();
    assert_eq!(v.k, 1);
    assert_eq!(v.control.cfl, 0.125);
    assert_eq!(v.thresholds.d_certify, 0.01);
}

#[test]
fn unknown_keys_are_hard_errors() {
    let top = config_with("typo_key = 1", "r_max = 20.0\nn = 256", "[scenario]\nname = \"zero\"");
    assert!(parse_config(&top).is_err());

    let nested = base_config("[scenario]\nname = \"zero\"\n[control]\ncfl_number = 0.1");
    assert!(parse_config(&nested).is_err());

    let threshold = base_config("[scenario]\nname = \"zero\"\n[thresholds]\nd_certfy = 0.1");
    assert!(parse_config(&threshold).is_err());
}

#[test]
fn scenario_params_validated_against_schema() {
    let stray = parse_config(&base_config(
        "[scenario]\nname = \"pure_bubble\"\nlambda = 1.0\nwobble = 2.0",
    ))
    .unwrap();
    let err = stray.validate().unwrap_err().to_string();
    assert!(err.contains("pure_bubble"), "{err}");

    let zero_extra = parse_config(&base_config("[scenario]\nname = \"zero\"\nlambda = 1.0"))
        .unwrap()
        .validate();
    assert!(zero_extra.is_err());

    let unknown = parse_config(&base_config("[scenario]\nname = \"breather\""))
        .unwrap()
        .validate()
        .unwrap_err()
        .to_string();
    assert!(unknown.contains("breather") && unknown.contains("pure_bubble"), "{unknown}");
}

#[test]
fn grading_and_ratio_must_agree() {
    let cfg = parse_config(&base_config("[scenario]\nname = \"zero\""));
    assert!(cfg.is_ok());

    let uniform_ratio =
        base_config("[scenario]\nname = \"zero\"").replace("n = 256", "n = 256\nratio = 0.5");
    assert!(parse_config(&uniform_ratio).unwrap().validate().is_err());

    let geometric_missing = base_config("[scenario]\nname = \"zero\"")
        .replace("n = 256", "n = 256\ngrading = \"geometric\"");
    assert!(parse_config(&geometric_missing).unwrap().validate().is_err());
}

#[test]
fn diagnostics_and_threshold_ranges_enforced() {
    let bad_fraction = base_config(
        "[scenario]\nname = \"zero\"\n[diagnostics]\nradiation_cutoff_fraction = 1.5",
    );
    assert!(parse_config(&bad_fraction).unwrap().validate().is_err());

    let bad_threshold = base_config("[scenario]\nname = \"zero\"\n[thresholds]\nd_certify = 0.0");
    assert!(parse_config(&bad_threshold).unwrap().validate().is_err());
}

// ---- scenario generation contracts -------------------------------------

#[test]
fn below_threshold_stays_under_ceiling() {
    let (state, notes) = gen(&base_config(
        "[scenario]\nname = \"below_threshold\"\namplitude = 50.0\nwidth = 2.0",
    ));
    let e = energy(&state).unwrap().total;
    assert!(e < 0.9 * K1_THRESHOLD, "E = {e}");
    assert!(notes.iter().any(|n| n.contains("rescaled")), "{notes:?}");
}

#[test]
fn below_threshold_energy_fraction_hits_target() {
    let (state, _) = gen(&base_config(
        "[scenario]\nname = \"below_threshold\"\namplitude = 1.0\nwidth = 2.0\nenergy_fraction = 0.5",
    ));
    let e = energy(&state).unwrap().total;
    let target = 0.5 * K1_THRESHOLD;
    assert!(
        (e - target).abs() <= 1e-9 * target,
        "E = {e}, target = {target}"
    );
}

#[test]
fn below_threshold_unreachable_fraction_errors() {
    // A bump much wider than the domain keeps almost no energy on the grid,
    // so no admissible amplitude reaches half the threshold.
    let cfg = parse_config(&base_config(
        "[scenario]\nname = \"below_threshold\"\namplitude = 1.0\nwidth = 1.0e6\nenergy_fraction = 0.5",
    ))
    .unwrap();
    let v = cfg.validate().unwrap();
    let g = grid(20.0, 256, 1);
    let mut notes = Vec::new();
    let err = make_initial_data(&v.scenario, &g, 0, Path::new("."), &mut notes)
        .unwrap_err()
        .to_string();
    assert!(err.contains("tops out"), "{err}");
}

const PERTURBED: &str =
    "[scenario]\nname = \"two_bubble_perturbed\"\niota = 1\nlambda = 0.1\nmu = 1.0\nepsilon = 0.01";

#[test]
fn perturbed_pair_is_seed_deterministic() {
    let (a, _) = gen(&fine_origin_config("", PERTURBED));
    let (b, _) = gen(&fine_origin_config("", PERTURBED));
    assert_eq!(a.psi, b.psi);
    assert_eq!(a.psidot, b.psidot);

    let (c, _) = gen(&fine_origin_config("seed = 7", PERTURBED));
    assert_ne!(a.psi, c.psi);
}

#[test]
fn perturbed_pair_scenario_seed_overrides_run_seed() {
    let run_seeded = fine_origin_config("seed = 3", PERTURBED);
    let scenario_seeded = fine_origin_config("", &format!("{PERTURBED}\nseed = 3"));
    let (a, _) = gen(&run_seeded);
    let (b, _) = gen(&scenario_seeded);
    assert_eq!(a.psi, b.psi, "scenario seed must mirror the run seed path");
}

#[test]
fn truncated_bubble_has_compact_deviation_support() {
    let (state, _) = gen(&fine_origin_config(
        "",
        "[scenario]\nname = \"truncated_bubble\"\nlambda = 0.05\ncutoff = 1.0",
    ));
    assert_eq!(state.class, (0, 0));
    let r = state.grid.nodes();
    for (i, &ri) in r.iter().enumerate() {
        if ri <= 0.5 {
            let q = q_eval(0.05, 1, ri);
            assert!((state.psi[i] - q).abs() <= 1e-15 * q.abs().max(1.0));
        }
        if ri >= 1.0 {
            assert_eq!(state.psi[i], 0.0, "psi({ri}) nonzero past the cutoff");
        }
    }
}

#[test]
fn linear_burst_is_class_zero_with_finite_energy() {
    let (state, _) = gen(&base_config(
        "[scenario]\nname = \"linear_burst\"\namplitude = 0.3\ncenter = 10.0\nwidth = 2.0",
    ));
    assert_eq!(state.class, (0, 0));
    let e = energy(&state).unwrap().total;
    assert!(e.is_finite() && e > 0.0);
    assert!(state.psidot.iter().any(|&v| v != 0.0), "burst must move");
}

#[test]
fn custom_csv_round_trips_and_checks_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let g = grid(20.0, 256, 1);
    let bubble = bubble_state(&g, 2.0).unwrap();
    let path = dir.path().join("input.csv");
    write_snapshot(&bubble, &path).unwrap();

    let cfg = base_config(&format!(
        "[scenario]\nname = \"custom_csv\"\npath = \"{}\"",
        path.display()
    ));
    let (state, _) = gen(&cfg);
    assert_eq!(state.psi, bubble.psi);
    assert_eq!(state.psidot, bubble.psidot);
    assert_eq!(state.class, (0, 1));

    let mismatched = cfg.replace("n = 256", "n = 512");
    let parsed = parse_config(&mismatched).unwrap().validate().unwrap();
    let g2 = grid(20.0, 512, 1);
    let mut notes = Vec::new();
    let err = make_initial_data(&parsed.scenario, &g2, 0, Path::new("."), &mut notes)
        .unwrap_err()
        .to_string();
    assert!(err.contains("512") && err.contains("256"), "{err}");
}

// ---- binary behaviour ---------------------------------------------------

fn wavemap() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wavemap"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn quick_config(top: &str, grid_body: &str, scenario: &str) -> String {
    format!("k = 1\nt_final = 0.25\ncadence = 0.25\n{top}\n[grid]\n{grid_body}\n{scenario}\n")
}

fn quick_zero_config() -> String {
    quick_config("", "r_max = 10.0\nn = 128", "[scenario]\nname = \"zero\"")
}

#[test]
fn simulate_writes_the_documented_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", &quick_zero_config());
    let out = dir.path().join("out");
    let status = wavemap()
        .args(["simulate"])
        .arg(&cfg)
        .arg("--output")
        .arg(&out)
        .arg("--emit-plotdata")
        .status()
        .unwrap();
    assert!(status.success());
    for f in [
        "run.json",
        "series.csv",
        "fits.csv",
        "verdict.json",
        "timings.json",
        "snapshots/snap_000000.csv",
        "snapshots/snap_000001.csv",
        "plotdata/profiles.csv",
        "plotdata/series_long.csv",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let series = std::fs::read_to_string(out.join("series.csv")).unwrap();
    assert!(series.starts_with(
        "time,dt,energy_total,energy_kin,energy_pot,e_norm,local_e_interior,local_e_exterior\n"
    ));
    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["termination"], "reached_t_final");
    assert_eq!(run["diagnostics"]["verdict"], "scattering");
    assert_eq!(run["seed"], 0);
    assert!(run["config"]["scenario"]["name"] == "zero");

    let verdict: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("verdict.json")).unwrap()).unwrap();
    assert_eq!(verdict["verdict"], "scattering");
    assert!(verdict["thresholds_sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn version_flag_matches_run_json_identifier() {
    let output = wavemap().arg("--version").output().unwrap();
    let printed = String::from_utf8(output.stdout).unwrap();
    let printed = printed.trim();

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", &quick_zero_config());
    let out = dir.path().join("out");
    assert!(wavemap()
        .args(["simulate"])
        .arg(&cfg)
        .arg("--output")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["version"].as_str().unwrap(), printed);
}

#[test]
fn reruns_are_byte_identical_outside_timings() {
    let dir = tempfile::tempdir().unwrap();
    let body = quick_config(
        "seed = 11",
        "r_max = 20.0\nn = 128\ngrading = \"geometric\"\nratio = 0.95",
        "[scenario]\nname = \"two_bubble_perturbed\"\niota = 1\nlambda = 0.1\nmu = 1.0\nepsilon = 0.01",
    );
    let cfg = write_config(dir.path(), "run.toml", &body);
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    for out in [&out1, &out2] {
        assert!(wavemap()
            .args(["simulate"])
            .arg(&cfg)
            .arg("--output")
            .arg(out)
            .status()
            .unwrap()
            .success());
    }
    for f in ["run.json", "series.csv", "fits.csv", "verdict.json"] {
        let a = std::fs::read(out1.join(f)).unwrap();
        let b = std::fs::read(out2.join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between identical reruns");
    }
    let snaps = |d: &Path| {
        let mut v: Vec<_> = std::fs::read_dir(d.join("snapshots"))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        v.sort();
        v
    };
    for (a, b) in snaps(&out1).iter().zip(snaps(&out2).iter()) {
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }
}

#[test]
fn output_root_env_places_relative_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "run.toml",
        &quick_config(
            "output = \"nested/run\"",
            "r_max = 10.0\nn = 128",
            "[scenario]\nname = \"zero\"",
        ),
    );
    assert!(wavemap()
        .args(["simulate"])
        .arg(&cfg)
        .env("WAVEMAP_OUTPUT_ROOT", dir.path())
        .status()
        .unwrap()
        .success());
    assert!(dir.path().join("nested/run/run.json").is_file());
}

#[test]
fn missing_output_directory_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", &quick_zero_config());
    let out = wavemap().args(["simulate"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("--output"), "{stderr}");
}

#[test]
fn malformed_custom_csv_reports_missing_key_in_error_json() {
    let dir = tempfile::tempdir().unwrap();
    // Snapshot missing its R_max metadata line.
    let bad = dir.path().join("bad.csv");
    std::fs::write(
        &bad,
        "# k 1\n# ell 0\n# m 0\n# time 0.0\n# N 2\n# grading uniform\nr,psi,psidot\n1.0,0.0,0.0\n2.0,0.0,0.0\n",
    )
    .unwrap();
    let cfg = write_config(
        dir.path(),
        "run.toml",
        &quick_zero_config().replace(
            "[scenario]\nname = \"zero\"\n",
            "[scenario]\nname = \"custom_csv\"\npath = \"bad.csv\"\n",
        ),
    );
    let out_dir = dir.path().join("out");
    let out = wavemap()
        .args(["simulate"])
        .arg(&cfg)
        .arg("--output")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("error.json")).unwrap())
            .unwrap();
    assert_eq!(err["stage"], "scenario");
    assert!(
        err["error"].as_str().unwrap().contains("R_max"),
        "error.json must name the missing metadata key: {err}"
    );
}

#[test]
fn analyze_recreates_fit_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", &quick_zero_config());
    let out = dir.path().join("out");
    assert!(wavemap()
        .args(["simulate"])
        .arg(&cfg)
        .arg("--output")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let before = std::fs::read(out.join("verdict.json")).unwrap();
    std::fs::remove_file(out.join("verdict.json")).unwrap();
    std::fs::remove_file(out.join("fits.csv")).unwrap();
    assert!(wavemap().args(["analyze"]).arg(&out).status().unwrap().success());
    let after = std::fs::read(out.join("verdict.json")).unwrap();
    assert_eq!(before, after, "analyze must reproduce the stored verdict");
    assert!(out.join("fits.csv").is_file());
}

#[test]
fn fit_subcommand_recovers_bubble_scale() {
    let dir = tempfile::tempdir().unwrap();
    let g = grid(40.0, 512, 1);
    let snap = dir.path().join("bubble.csv");
    write_snapshot(&bubble_state(&g, 2.0).unwrap(), &snap).unwrap();
    let out = wavemap().args(["fit"]).arg(&snap).output().unwrap();
    assert!(out.status.success());
    let fit: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(fit["kind"], "single_bubble");
    let lambda = fit["lambda"].as_f64().unwrap();
    assert!((lambda - 2.0).abs() <= 2e-3, "lambda = {lambda}");
}

#[test]
fn validate_accepts_good_and_rejects_corrupt_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let g = grid(20.0, 128, 1);
    let snap = dir.path().join("ok.csv");
    write_snapshot(&bubble_state(&g, 1.0).unwrap(), &snap).unwrap();
    let out = wavemap().args(["validate"]).arg(&snap).output().unwrap();
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["m"], 1);
    assert_eq!(summary["n"], 128);

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "not a snapshot\n").unwrap();
    assert!(!wavemap().args(["validate"]).arg(&bad).status().unwrap().success());
}

#[test]
fn snapshot_round_trip_is_bit_exact_through_the_cli_formats() {
    let dir = tempfile::tempdir().unwrap();
    let g = grid(20.0, 128, 1);
    let mut state = bubble_state(&g, 0.7).unwrap();
    state.psi[3] = f64::from_bits(0x3FF123456789ABCD);
    state.psidot[4] = -1.0e-17;
    let path = dir.path().join("s.csv");
    write_snapshot(&state, &path).unwrap();
    let back = read_snapshot(&path).unwrap();
    assert_eq!(state.psi, back.psi);
    assert_eq!(state.psidot, back.psidot);
}

#[test]
fn sweep_single_point_matches_single_run_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "template.toml", &quick_zero_config());
    let s1 = dir.path().join("s1");
    let s2 = dir.path().join("s2");
    for s in [&s1, &s2] {
        let status = wavemap()
            .args(["sweep"])
            .arg(&cfg)
            .args(["--grid", "seed=5", "-j", "2"])
            .arg("--output")
            .arg(s)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let index = std::fs::read_to_string(s1.join("index.csv")).unwrap();
    let lines: Vec<&str> = index.lines().collect();
    assert_eq!(lines.len(), 2, "{index}");
    assert!(lines[0].starts_with("run,seed,status,"));
    assert!(lines[1].starts_with("run_0000,5,ok,reached_t_final,scattering,"));
    assert!(s1.join("run_0000/run.json").is_file());

    let a = std::fs::read(s1.join("index.csv")).unwrap();
    let b = std::fs::read(s2.join("index.csv")).unwrap();
    assert_eq!(a, b, "sweep index must be deterministic");
}

#[test]
fn sweep_records_per_run_failures_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "template.toml", &quick_zero_config());
    let out = dir.path().join("s");
    // k = 0 fails validation; k = 1 runs.
    let status = wavemap()
        .args(["sweep"])
        .arg(&cfg)
        .args(["--grid", "k=0,1"])
        .arg("--output")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success(), "sweep itself must not abort");
    let index = std::fs::read_to_string(out.join("index.csv")).unwrap();
    let lines: Vec<&str> = index.lines().collect();
    assert!(lines[1].contains(",error,"), "{index}");
    assert!(lines[2].contains(",ok,"), "{index}");
    assert!(out.join("run_0000/error.json").is_file());
    assert!(out.join("run_0001/run.json").is_file());
}
