//! Parameter sweeps: a template config, a grid of dotted-key overrides, one
//! run directory per combination, and an index.csv summarizing the lot.
//! Individual run failures are recorded (error.json in the run directory,
//! status column in the index) without aborting the sweep.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use crate::config::RunConfig;
use crate::error::{config_err, CliError, Result};
use crate::fmt_f64;
use crate::runner::{execute_run, resolve_output_dir, write_error_json, StagedError};

#[derive(Debug, Clone)]
pub struct Axis {
    pub path: String,
    pub values: Vec<toml::Value>,
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axes: Vec<Axis>,
}

impl SweepSpec {
    pub fn total(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    /// Override set for combination `index`; the last axis varies fastest.
    fn combo(&self, index: usize) -> Vec<(&str, toml::Value)> {
        let mut rem = index;
        let mut out = vec![None; self.axes.len()];
        for (j, axis) in self.axes.iter().enumerate().rev() {
            let n = axis.values.len();
            out[j] = Some((axis.path.as_str(), axis.values[rem % n].clone()));
            rem /= n;
        }
        out.into_iter().map(|v| v.unwrap()).collect()
    }
}

fn parse_scalar(s: &str) -> Result<toml::Value> {
    if s.is_empty() {
        return config_err("empty value in grid spec");
    }
    if let Ok(i) = s.parse::<i64>() {
        return Ok(toml::Value::Integer(i));
    }
    if let Ok(f) = s.parse::<f64>() {
        return Ok(toml::Value::Float(f));
    }
    Ok(match s {
        "true" => toml::Value::Boolean(true),
        "false" => toml::Value::Boolean(false),
        other => toml::Value::String(other.to_string()),
    })
}

/// Grammar: `key=1,2;other.key=a,b`. Keys are dotted paths into the config
/// table; values are parsed as integer, then float, then bool, then string.
pub fn parse_grid_spec(spec: &str) -> Result<SweepSpec> {
    let mut axes: Vec<Axis> = Vec::new();
    for part in spec.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (path, values) = part
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("grid axis `{part}` is missing `=`")))?;
        let path = path.trim();
        if path.is_empty() {
            return config_err(format!("grid axis `{part}` has an empty key"));
        }
        if axes.iter().any(|a| a.path == path) {
            return config_err(format!("grid axis `{path}` appears twice"));
        }
        let values = values
            .split(',')
            .map(|v| parse_scalar(v.trim()))
            .collect::<Result<Vec<_>>>()?;
        axes.push(Axis {
            path: path.to_string(),
            values,
        });
    }
    if axes.is_empty() {
        return config_err("grid spec has no axes");
    }
    Ok(SweepSpec { axes })
}

/// Insert `value` at a dotted path, creating intermediate tables as needed.
pub fn set_path(table: &mut toml::Table, dotted: &str, value: toml::Value) -> Result<()> {
    let segs: Vec<&str> = dotted.split('.').collect();
    if segs.iter().any(|s| s.is_empty()) {
        return config_err(format!("grid key `{dotted}` has an empty segment"));
    }
    let mut cur = table;
    for seg in &segs[..segs.len() - 1] {
        let entry = cur
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| {
            CliError::Config(format!("grid key `{dotted}`: `{seg}` is not a table"))
        })?;
    }
    cur.insert(segs[segs.len() - 1].to_string(), value);
    Ok(())
}

/// Axis values as they appear in index.csv cells.
fn value_text(v: &toml::Value) -> String {
    match v {
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => format!("{f}"),
        toml::Value::Boolean(b) => b.to_string(),
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

struct RunOutcome {
    status: &'static str,
    termination: Option<String>,
    verdict: Option<String>,
    final_d: Option<f64>,
    energy_drift: Option<f64>,
    n_steps: Option<usize>,
    seed: Option<u64>,
    wall_seconds: f64,
}

fn run_one(
    base: &toml::Table,
    spec: &SweepSpec,
    index: usize,
    root: &Path,
    base_dir: &Path,
    width: usize,
) -> RunOutcome {
    let t0 = Instant::now();
    let dir = root.join(format!("run_{index:0width$}"));
    let mut outcome = RunOutcome {
        status: "error",
        termination: None,
        verdict: None,
        final_d: None,
        energy_drift: None,
        n_steps: None,
        seed: None,
        wall_seconds: 0.0,
    };

    let mut table = base.clone();
    table.remove("output");
    let mut staged: Option<StagedError> = None;
    for (path, value) in spec.combo(index) {
        if let Err(e) = set_path(&mut table, path, value) {
            staged = Some(StagedError {
                stage: "config",
                error: e,
            });
            break;
        }
    }
    if staged.is_none() {
        match toml::Value::Table(table).try_into::<RunConfig>() {
            Ok(cfg) => {
                outcome.seed = Some(cfg.seed);
                match execute_run(&cfg, &dir, base_dir, false) {
                    Ok(art) => {
                        outcome.status = "ok";
                        outcome.termination = Some(art.report.termination.clone());
                        outcome.verdict = art.report.diagnostics.verdict.clone();
                        outcome.final_d =
                            art.report.diagnostics.fit.as_ref().and_then(|f| f.final_d);
                        outcome.energy_drift = art.report.energy_drift;
                        outcome.n_steps = Some(art.report.n_steps);
                        outcome.seed = Some(art.report.seed);
                    }
                    Err(e) => staged = Some(e),
                }
            }
            Err(e) => {
                staged = Some(StagedError {
                    stage: "config",
                    error: CliError::Config(format!("combination {index}: {e}")),
                })
            }
        }
    }
    if let Some(e) = &staged {
        write_error_json(&dir, e);
        eprintln!("run_{index:0width$}: {e}");
    }
    outcome.wall_seconds = t0.elapsed().as_secs_f64();
    outcome
}

pub struct SweepSummary {
    pub total: usize,
    pub failures: usize,
    pub root: PathBuf,
}

pub fn run_sweep(
    template: &Path,
    grid: &str,
    jobs: usize,
    output: Option<&Path>,
) -> Result<SweepSummary> {
    let text = std::fs::read_to_string(template).map_err(|e| {
        CliError::Config(format!("cannot read template {}: {e}", template.display()))
    })?;
    let base: toml::Table = text
        .parse()
        .map_err(|e| CliError::Config(format!("template parse error: {e}")))?;
    let spec = parse_grid_spec(grid)?;
    let cfg_output = base.get("output").and_then(|v| v.as_str());
    let root = resolve_output_dir(output, cfg_output)?;
    std::fs::create_dir_all(&root)?;
    let base_dir = template
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();

    let total = spec.total();
    let width = 4usize.max(total.saturating_sub(1).to_string().len());
    let next = AtomicUsize::new(0);
    let results: Vec<Mutex<Option<RunOutcome>>> = (0..total).map(|_| Mutex::new(None)).collect();
    let workers = jobs.max(1).min(total.max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= total {
                    break;
                }
                let outcome = run_one(&base, &spec, i, &root, &base_dir, width);
                *results[i].lock().unwrap() = Some(outcome);
            });
        }
    });

    let opt_f64 = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let mut index = String::from("run");
    for axis in &spec.axes {
        index.push(',');
        index.push_str(&axis.path);
    }
    index.push_str(",status,termination,verdict,final_d,energy_drift,n_steps,seed\n");
    let mut timings = String::from("run,wall_seconds\n");
    let mut failures = 0usize;
    for (i, slot) in results.iter().enumerate() {
        let guard = slot.lock().unwrap();
        let outcome = guard.as_ref().expect("worker filled every slot");
        if outcome.status != "ok" {
            failures += 1;
        }
        index.push_str(&format!("run_{i:0width$}"));
        for (_, value) in spec.combo(i) {
            index.push(',');
            index.push_str(&value_text(&value));
        }
        index.push_str(&format!(
            ",{},{},{},{},{},{},{}\n",
            outcome.status,
            outcome.termination.as_deref().unwrap_or(""),
            outcome.verdict.as_deref().unwrap_or(""),
            opt_f64(outcome.final_d),
            opt_f64(outcome.energy_drift),
            outcome.n_steps.map(|n| n.to_string()).unwrap_or_default(),
            outcome.seed.map(|s| s.to_string()).unwrap_or_default(),
        ));
        timings.push_str(&format!("run_{i:0width$},{:.6}\n", outcome.wall_seconds));
    }
    std::fs::write(root.join("index.csv"), index.as_bytes())?;
    std::fs::write(root.join("timings.csv"), timings.as_bytes())?;

    Ok(SweepSummary {
        total,
        failures,
        root,
    })
}

pub fn sweep_command(template: &Path, grid: &str, jobs: usize, output: Option<&Path>) -> i32 {
    match run_sweep(template, grid, jobs, output) {
        Ok(summary) => {
            println!(
                "sweep: {} runs, {} failed -> {}",
                summary.total,
                summary.failures,
                summary.root.display()
            );
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
