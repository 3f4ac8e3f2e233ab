//! One run end to end: scenario generation, evolution, diagnostics, and
//! artifact emission. Every artifact except timings.json is a pure function
//! of (config, seed), so identical reruns are byte-identical; wall-clock
//! measurements live in timings.json alone.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use wavemap_core::analysis::{
    classify_outcome, energy_budget, extract_blowup_profile, extract_radiation_global,
    track_scales, ClassifierThresholds, RadiationFit, RadiationKind, RunVerdict, ScaleSeries,
};
use wavemap_core::evolve::{evolve, linear_evolve, Flow, Termination, Trajectory};
use wavemap_core::functionals::{e_norm_offset, energy, local_e_norm};
use wavemap_core::snapshot::{read_snapshot, write_snapshot};
use wavemap_core::{make_grid, FieldState};

use crate::config::{load_config, RunConfig, ValidatedRun};
use crate::error::{config_err, CliError, Result};
use crate::scenarios::make_initial_data;
use crate::{build_identifier, fmt_f64, plotdata};

/// An error tagged with the stage that raised it; error.json carries both.
#[derive(Debug)]
pub struct StagedError {
    pub stage: &'static str,
    pub error: CliError,
}

impl std::fmt::Display for StagedError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}", self.stage, self.error)
    }
}

pub type StagedResult<T> = std::result::Result<T, StagedError>;

fn at<E: Into<CliError>>(stage: &'static str) -> impl FnOnce(E) -> StagedError {
    move |e| StagedError {
        stage,
        error: e.into(),
    }
}

/// JSON guard: non-finite floats become null rather than a serialization
/// failure.
fn fin(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyEcho {
    pub total: f64,
    pub kinetic: f64,
    pub potential: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioEcho {
    pub name: String,
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub iota: i32,
    pub samples: usize,
    pub converged: usize,
    pub final_lambda: Option<f64>,
    pub final_mu: Option<f64>,
    pub final_d: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RadiationSummary {
    pub kind: String,
    pub reference_time: f64,
    pub energy: Option<f64>,
    pub mismatch_first: Option<f64>,
    pub mismatch_last: Option<f64>,
    pub t_plus: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BudgetSummary {
    pub total: f64,
    pub bubble_pair: f64,
    pub radiation_energy: f64,
    pub deficit: f64,
    pub radiation_is_exterior: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub fit: Option<FitSummary>,
    pub radiation: Option<RadiationSummary>,
    pub budget: Option<BudgetSummary>,
    pub verdict: Option<String>,
}

/// run.json payload. `config` is the normalized echo, complete enough for
/// `analyze` to re-run the diagnostics without the original file.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub version: &'static str,
    pub seed: u64,
    pub scenario: ScenarioEcho,
    pub termination: String,
    pub t_initial: f64,
    pub t_final_requested: f64,
    pub t_reached: f64,
    pub n_steps: usize,
    pub n_snapshots: usize,
    pub energy_initial: EnergyEcho,
    pub energy_final: EnergyEcho,
    pub energy_drift: Option<f64>,
    pub e_norm_drift: Option<f64>,
    pub diagnostics: DiagnosticsReport,
    pub notes: Vec<String>,
    pub config: RunConfig,
}

/// Everything `simulate` hands back to callers (tests drive this directly).
pub struct RunArtifacts {
    pub report: RunReport,
    pub trajectory: Trajectory,
    pub diagnostics: Diagnostics,
}

/// Per-snapshot scalar series backing series.csv.
pub struct SeriesRow {
    pub time: f64,
    pub dt: f64,
    pub energy: EnergyEcho,
    pub e_norm: f64,
    pub interior: f64,
    pub exterior: f64,
}

fn energy_echo(state: &FieldState) -> Result<EnergyEcho> {
    let e = energy(state)?;
    Ok(EnergyEcho {
        total: e.total,
        kinetic: e.kinetic,
        potential: e.potential,
    })
}

/// Step size in effect at time t: the latest recorded step not after t.
fn dt_at(traj: &Trajectory, t: f64) -> f64 {
    let fuzz = 1e-9 * (1.0 + t.abs());
    let mut dt = traj.steps.first().map(|s| s.dt).unwrap_or(0.0);
    for s in &traj.steps {
        if s.time > t + fuzz {
            break;
        }
        dt = s.dt;
    }
    dt
}

pub fn series_rows(traj: &Trajectory) -> Result<Vec<SeriesRow>> {
    let mut rows = Vec::with_capacity(traj.snapshots.len());
    for snap in &traj.snapshots {
        let r_max = snap.grid.r_max();
        let interior = local_e_norm(snap, 0.0, 1.0f64.min(r_max), snap.origin_value())?
            .max(0.0)
            .sqrt();
        let exterior = local_e_norm(snap, 0.5 * r_max, r_max, snap.boundary_value())?
            .max(0.0)
            .sqrt();
        rows.push(SeriesRow {
            time: snap.time,
            dt: dt_at(traj, snap.time),
            energy: energy_echo(snap)?,
            e_norm: e_norm_offset(snap, snap.boundary_value())?,
            interior,
            exterior,
        });
    }
    Ok(rows)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text.as_bytes())?;
    Ok(())
}

fn write_series_csv(path: &Path, rows: &[SeriesRow]) -> Result<()> {
    let mut out = String::from(
        "time,dt,energy_total,energy_kin,energy_pot,e_norm,local_e_interior,local_e_exterior\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt_f64(r.time),
            fmt_f64(r.dt),
            fmt_f64(r.energy.total),
            fmt_f64(r.energy.kinetic),
            fmt_f64(r.energy.potential),
            fmt_f64(r.e_norm),
            fmt_f64(r.interior),
            fmt_f64(r.exterior),
        ));
    }
    write_text(path, &out)
}

fn write_fits_csv(path: &Path, fits: Option<&ScaleSeries>) -> Result<()> {
    let mut out = String::from("time,sign,lambda,mu,residual_sq,separation,d_value,converged\n");
    if let Some(series) = fits {
        for s in &series.samples {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                fmt_f64(s.time),
                s.fit.sign,
                fmt_f64(s.fit.lambda),
                fmt_f64(s.fit.mu),
                fmt_f64(s.fit.residual_sq),
                fmt_f64(s.fit.separation_term),
                fmt_f64(s.fit.d_value),
                s.fit.converged,
            ));
        }
    }
    write_text(path, &out)
}

#[derive(Serialize)]
struct ThresholdsEcho {
    d_certify: f64,
    d_stay_away: f64,
    rate_ratio: f64,
    horizon_ratio: f64,
    interior_fraction: f64,
    single_fit_distance: f64,
}

impl ThresholdsEcho {
    fn new(t: &ClassifierThresholds) -> Self {
        ThresholdsEcho {
            d_certify: t.d_certify,
            d_stay_away: t.d_stay_away,
            rate_ratio: t.rate_ratio,
            horizon_ratio: t.horizon_ratio,
            interior_fraction: t.interior_fraction,
            single_fit_distance: t.single_fit_distance,
        }
    }
}

#[derive(Serialize)]
struct GateEcho {
    name: String,
    value: Option<f64>,
    threshold: f64,
    pass: bool,
}

#[derive(Serialize)]
struct VerdictFile {
    version: &'static str,
    seed: u64,
    verdict: &'static str,
    iota: i32,
    gates: Vec<GateEcho>,
    notes: Vec<String>,
    thresholds: ThresholdsEcho,
    /// SHA-256 of the serialized thresholds block, so downstream tooling can
    /// detect verdicts produced under different conventions.
    thresholds_sha256: String,
    t_plus: Option<(f64, f64)>,
}

fn thresholds_hash(echo: &ThresholdsEcho) -> Result<String> {
    let canon = serde_json::to_string(echo)?;
    let mut hasher = Sha256::new();
    hasher.update(canon.as_bytes());
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    Ok(hex)
}

fn write_verdict_json(
    path: &Path,
    rv: &RunVerdict,
    thresholds: &ClassifierThresholds,
    seed: u64,
) -> Result<()> {
    let echo = ThresholdsEcho::new(thresholds);
    let file = VerdictFile {
        version: build_identifier(),
        seed,
        verdict: rv.verdict.as_str(),
        iota: rv.iota,
        gates: rv
            .gates
            .iter()
            .map(|g| GateEcho {
                name: g.name.clone(),
                value: fin(g.value),
                threshold: g.threshold,
                pass: g.pass,
            })
            .collect(),
        notes: rv.notes.clone(),
        thresholds_sha256: thresholds_hash(&echo)?,
        thresholds: echo,
        t_plus: rv.evidence.t_plus,
    };
    write_text(path, &(serde_json::to_string_pretty(&file)? + "\n"))
}

#[derive(Serialize)]
struct ErrorFile<'a> {
    version: &'static str,
    stage: &'a str,
    error: String,
}

/// Machine-readable failure record; partial outputs in the directory are
/// kept as they were.
pub fn write_error_json(dir: &Path, err: &StagedError) {
    let file = ErrorFile {
        version: build_identifier(),
        stage: err.stage,
        error: err.error.to_string(),
    };
    if std::fs::create_dir_all(dir).is_ok() {
        if let Ok(text) = serde_json::to_string_pretty(&file) {
            let _ = std::fs::write(dir.join("error.json"), text + "\n");
        }
    }
}

#[derive(Serialize)]
struct TimingsFile {
    wall_seconds_total: f64,
    wall_seconds_evolve: f64,
    wall_seconds_diagnostics: f64,
}

/// Diagnostics bundle shared by `simulate` and `analyze`. Individual
/// diagnostics that cannot run (wrong class, missing data) degrade to a
/// note rather than failing the run: undetermined is the safe output.
pub struct Diagnostics {
    pub radiation: Option<RadiationFit>,
    pub fits: Option<ScaleSeries>,
    pub budget: Option<BudgetSummary>,
    pub verdict: Option<RunVerdict>,
    pub notes: Vec<String>,
}

pub fn compute_diagnostics(traj: &Trajectory, v: &ValidatedRun) -> Diagnostics {
    let dg = &v.diagnostics;
    let mut notes = Vec::new();

    let mut radiation = None;
    if dg.radiation {
        let extracted = match traj.termination {
            Termination::ReachedTFinal => {
                let f = dg.radiation_cutoff_fraction;
                Some(extract_radiation_global(traj, |t| (1.0 - f) * t, &v.control))
            }
            Termination::BlowupUnderresolved => {
                Some(extract_blowup_profile(traj, dg.blowup_cone_factor))
            }
            _ => None,
        };
        match extracted {
            Some(Ok(rf)) => radiation = Some(rf),
            Some(Err(e)) => notes.push(format!("radiation extraction skipped: {e}")),
            None => notes.push(format!(
                "radiation extraction skipped: run terminated with {}",
                traj.termination.as_str()
            )),
        }
    }

    let mut fits = None;
    if dg.fit {
        match track_scales(traj, radiation.as_ref()) {
            Ok(series) => fits = Some(series),
            Err(e) => notes.push(format!("scale tracking skipped: {e}")),
        }
    }

    let mut budget = None;
    if dg.budget {
        match fits.as_ref().and_then(|s| s.samples.last()) {
            Some(last) => {
                let rad_state = radiation.as_ref().map(|r| &r.radiation_state);
                match energy_budget(traj.final_state(), &last.fit, rad_state) {
                    Ok(b) => {
                        budget = Some(BudgetSummary {
                            total: b.total,
                            bubble_pair: b.bubble_pair,
                            radiation_energy: b.radiation_energy,
                            deficit: b.deficit,
                            radiation_is_exterior: b.radiation_is_exterior,
                        })
                    }
                    Err(e) => notes.push(format!("energy budget skipped: {e}")),
                }
            }
            None => notes.push("energy budget skipped: no scale fits available".into()),
        }
    }

    let mut verdict = None;
    if dg.classify {
        let empty = ScaleSeries {
            iota: 0,
            samples: Vec::new(),
        };
        let fits_ref = fits.as_ref().unwrap_or(&empty);
        match classify_outcome(traj, fits_ref, radiation.as_ref(), &v.thresholds) {
            Ok(rv) => verdict = Some(rv),
            Err(e) => notes.push(format!("classification skipped: {e}")),
        }
    }

    Diagnostics {
        radiation,
        fits,
        budget,
        verdict,
        notes,
    }
}

fn fit_summary(series: &ScaleSeries) -> FitSummary {
    let last = series.samples.last();
    FitSummary {
        iota: series.iota,
        samples: series.samples.len(),
        converged: series.samples.iter().filter(|s| s.fit.converged).count(),
        final_lambda: last.and_then(|s| fin(s.fit.lambda)),
        final_mu: last.and_then(|s| fin(s.fit.mu)),
        final_d: last.and_then(|s| fin(s.fit.d_value)),
    }
}

fn radiation_summary(rf: &RadiationFit) -> RadiationSummary {
    RadiationSummary {
        kind: match rf.kind {
            RadiationKind::GlobalLinear => "global_linear".into(),
            RadiationKind::StaticProfile => "static_profile".into(),
        },
        reference_time: rf.radiation_state.time,
        energy: energy(&rf.radiation_state).ok().and_then(|e| fin(e.total)),
        mismatch_first: rf.mismatch_series.first().and_then(|p| fin(p.1)),
        mismatch_last: rf.mismatch_series.last().and_then(|p| fin(p.1)),
        t_plus: rf.t_plus,
    }
}

/// Run a validated config into `dir`. Artifacts: snapshots/, series.csv,
/// fits.csv, verdict.json, run.json, timings.json (and plotdata/ on
/// request). Returns the written report plus the in-memory trajectory.
pub fn execute_run(
    cfg: &RunConfig,
    dir: &Path,
    base_dir: &Path,
    emit_plotdata: bool,
) -> StagedResult<RunArtifacts> {
    let t_start = Instant::now();
    let v = cfg.validate().map_err(at("config"))?;
    let grid = Arc::new(
        make_grid(v.r_max, v.n, v.grading, v.k)
            .map_err(CliError::Core)
            .map_err(at("config"))?,
    );

    let mut notes = Vec::new();
    let state0 =
        make_initial_data(&v.scenario, &grid, v.seed, base_dir, &mut notes).map_err(at("scenario"))?;
    let energy_initial = energy_echo(&state0).map_err(at("scenario"))?;

    std::fs::create_dir_all(dir.join("snapshots")).map_err(at("output"))?;

    let t_evolve = Instant::now();
    let traj = match v.flow {
        Flow::Nonlinear => evolve(&state0, v.t_final, &v.control, v.cadence),
        Flow::Linear => linear_evolve(&state0, v.t_final, &v.control, v.cadence),
    }
    .map_err(CliError::Core)
    .map_err(at("evolve"))?;
    let wall_evolve = t_evolve.elapsed().as_secs_f64();

    for (i, snap) in traj.snapshots.iter().enumerate() {
        let path = dir.join("snapshots").join(format!("snap_{i:06}.csv"));
        write_snapshot(snap, &path)
            .map_err(CliError::Core)
            .map_err(at("output"))?;
    }
    let rows = series_rows(&traj).map_err(at("output"))?;
    write_series_csv(&dir.join("series.csv"), &rows).map_err(at("output"))?;

    let t_diag = Instant::now();
    let diag = compute_diagnostics(&traj, &v);
    let wall_diag = t_diag.elapsed().as_secs_f64();
    notes.extend(diag.notes.iter().cloned());

    if v.diagnostics.fit {
        write_fits_csv(&dir.join("fits.csv"), diag.fits.as_ref()).map_err(at("output"))?;
    }
    if let Some(rv) = &diag.verdict {
        write_verdict_json(&dir.join("verdict.json"), rv, &v.thresholds, v.seed)
            .map_err(at("output"))?;
    }

    let energy_final = energy_echo(traj.final_state()).map_err(at("output"))?;
    let report = RunReport {
        version: build_identifier(),
        seed: v.seed,
        scenario: ScenarioEcho {
            name: v.scenario.name().into(),
            params: v.scenario.params_json(),
        },
        termination: traj.termination.as_str().into(),
        t_initial: state0.time,
        t_final_requested: v.t_final,
        t_reached: traj.final_state().time,
        n_steps: traj.steps.len().saturating_sub(1),
        n_snapshots: traj.snapshots.len(),
        energy_initial,
        energy_final,
        energy_drift: fin(traj.energy_drift()),
        e_norm_drift: fin(traj.e_norm_drift()),
        diagnostics: DiagnosticsReport {
            fit: diag.fits.as_ref().map(fit_summary),
            radiation: diag.radiation.as_ref().map(radiation_summary),
            budget: diag.budget.clone(),
            verdict: diag.verdict.as_ref().map(|rv| rv.verdict.as_str().into()),
        },
        notes,
        config: cfg.normalized(),
    };
    let report_json = serde_json::to_string_pretty(&report).map_err(at("output"))?;
    write_text(&dir.join("run.json"), &(report_json + "\n")).map_err(at("output"))?;

    if emit_plotdata {
        plotdata::emit(dir, &traj.snapshots, &rows).map_err(at("output"))?;
    }

    let timings = TimingsFile {
        wall_seconds_total: t_start.elapsed().as_secs_f64(),
        wall_seconds_evolve: wall_evolve,
        wall_seconds_diagnostics: wall_diag,
    };
    let timings_json = serde_json::to_string_pretty(&timings).map_err(at("output"))?;
    write_text(&dir.join("timings.json"), &(timings_json + "\n")).map_err(at("output"))?;

    Ok(RunArtifacts {
        report,
        trajectory: traj,
        diagnostics: diag,
    })
}

fn termination_from_str(s: &str) -> Result<Termination> {
    Ok(match s {
        "reached_t_final" => Termination::ReachedTFinal,
        "blowup_underresolved" => Termination::BlowupUnderresolved,
        "energy_cap_hit" => Termination::EnergyCapHit,
        "step_floor_hit" => Termination::StepFloorHit,
        other => return config_err(format!("unknown termination `{other}` in run.json")),
    })
}

/// Reload a stored run as a trajectory: snapshots plus termination, no step
/// series (per-step scalars are not reconstructible from snapshots).
pub fn load_run_dir(dir: &Path) -> Result<(RunConfig, Trajectory)> {
    let run_json_path = dir.join("run.json");
    let text = std::fs::read_to_string(&run_json_path).map_err(|e| {
        CliError::Config(format!(
            "cannot read {} (did the run fail?): {e}",
            run_json_path.display()
        ))
    })?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("run.json is not valid JSON: {e}")))?;
    let cfg_value = value
        .get("config")
        .cloned()
        .ok_or_else(|| CliError::Config("run.json has no config echo".into()))?;
    let cfg: RunConfig = serde_json::from_value(cfg_value)
        .map_err(|e| CliError::Config(format!("run.json config echo does not validate: {e}")))?;
    let termination = termination_from_str(
        value
            .get("termination")
            .and_then(|t| t.as_str())
            .ok_or_else(|| CliError::Config("run.json has no termination field".into()))?,
    )?;

    let snap_dir = dir.join("snapshots");
    let mut names: Vec<PathBuf> = std::fs::read_dir(&snap_dir)
        .map_err(|e| CliError::Config(format!("cannot list {}: {e}", snap_dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == "csv").unwrap_or(false))
        .collect();
    names.sort();
    if names.is_empty() {
        return config_err(format!("no snapshots under {}", snap_dir.display()));
    }
    let mut snapshots = Vec::with_capacity(names.len());
    for p in &names {
        snapshots.push(read_snapshot(p)?);
    }

    Ok((
        cfg,
        Trajectory {
            snapshots,
            steps: Vec::new(),
            termination,
        },
    ))
}

/// Re-run the diagnostics of a stored run, rewriting fits.csv, verdict.json
/// (and plotdata/ on request). series.csv and run.json are left as the
/// original simulation wrote them.
pub fn analyze_dir(dir: &Path, emit_plotdata: bool) -> Result<Option<RunVerdict>> {
    let (cfg, traj) = load_run_dir(dir)?;
    let v = cfg.validate()?;
    let diag = compute_diagnostics(&traj, &v);
    if v.diagnostics.fit {
        write_fits_csv(&dir.join("fits.csv"), diag.fits.as_ref())?;
    }
    if let Some(rv) = &diag.verdict {
        write_verdict_json(&dir.join("verdict.json"), rv, &v.thresholds, v.seed)?;
    }
    if emit_plotdata {
        let rows = series_rows(&traj)?;
        plotdata::emit(dir, &traj.snapshots, &rows)?;
    }
    for note in &diag.notes {
        eprintln!("note: {note}");
    }
    Ok(diag.verdict)
}

/// Resolve where a run's outputs go: explicit flag, then the config's
/// `output` key; relative paths are planted under WAVEMAP_OUTPUT_ROOT (or
/// the working directory).
pub fn resolve_output_dir(cli: Option<&Path>, cfg_output: Option<&str>) -> Result<PathBuf> {
    let chosen: PathBuf = match (cli, cfg_output) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(s)) => PathBuf::from(s),
        (None, None) => {
            return config_err(
                "no output directory: pass --output or set `output` in the config",
            )
        }
    };
    if chosen.is_absolute() {
        Ok(chosen)
    } else {
        let root = std::env::var_os("WAVEMAP_OUTPUT_ROOT")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(root.join(chosen))
    }
}

/// `simulate` entry point: load, resolve the directory, run, and on failure
/// leave error.json behind. Returns the process exit code.
pub fn simulate_command(
    config_path: &Path,
    output: Option<&Path>,
    emit_plotdata: bool,
) -> i32 {
    let cfg = match load_config(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let dir = match resolve_output_dir(output, cfg.output.as_deref()) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let base_dir = config_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    match execute_run(&cfg, &dir, &base_dir, emit_plotdata) {
        Ok(artifacts) => {
            let verdict = artifacts
                .report
                .diagnostics
                .verdict
                .as_deref()
                .unwrap_or("none");
            println!(
                "{}: {} after {} steps, verdict {verdict} -> {}",
                artifacts.report.scenario.name,
                artifacts.report.termination,
                artifacts.report.n_steps,
                dir.display()
            );
            0
        }
        Err(staged) => {
            write_error_json(&dir, &staged);
            eprintln!("error: {staged}");
            1
        }
    }
}
