use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wavemap_cli::runner::{analyze_dir, simulate_command};
use wavemap_cli::sweep::sweep_command;
use wavemap_cli::{CliError, Result};
use wavemap_core::bubbles::{proximity, proximity_min, single_bubble_fit};
use wavemap_core::functionals::{e_norm_offset, energy};
use wavemap_core::snapshot::read_snapshot;
use wavemap_core::state::CLASS_TOL;
use wavemap_core::{FieldState, Grading};

#[derive(Parser)]
#[command(
    name = "wavemap",
    version,
    about = "Equivariant wave-map evolution and bubble diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configured simulation into an output directory.
    Simulate {
        config: PathBuf,
        /// Output directory (overrides the config's `output` key).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write downsampled plotdata/ CSVs.
        #[arg(long)]
        emit_plotdata: bool,
    },
    /// Re-run diagnostics on a stored run directory.
    Analyze {
        run_dir: PathBuf,
        /// Also write downsampled plotdata/ CSVs.
        #[arg(long)]
        emit_plotdata: bool,
    },
    /// Fit bubble parameters to a stored snapshot.
    Fit {
        snapshot: PathBuf,
        /// Restrict the two-bubble fit to one orientation (+1 or -1).
        #[arg(long, allow_hyphen_values = true)]
        sign: Option<i32>,
    },
    /// Sweep a config template over a parameter grid.
    Sweep {
        template: PathBuf,
        /// Axes: `key=v1,v2;other.key=a,b` (dotted keys into the config).
        #[arg(long)]
        grid: String,
        /// Concurrent runs.
        #[arg(short = 'j', long = "jobs", default_value_t = 1)]
        jobs: usize,
        /// Sweep root directory (overrides the template's `output` key).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check a snapshot file and print a summary of its contents.
    Validate { snapshot: PathBuf },
}

fn negated_bubble_frame(state: &FieldState) -> Result<FieldState> {
    FieldState::new(
        state.grid.clone(),
        state.psi.iter().map(|x| -x).collect(),
        state.psidot.iter().map(|x| -x).collect(),
        (0, 1),
        state.time,
    )
    .map_err(CliError::Core)
}

fn fit_command(path: &Path, sign: Option<i32>) -> Result<()> {
    let state = read_snapshot(path)?;
    if state.ell() != 0 {
        return Err(CliError::Config(format!(
            "fit expects a snapshot with zero value at the origin, got class ({}, {})",
            state.ell(),
            state.m()
        )));
    }
    let payload = match state.m() {
        0 => {
            let fit = match sign {
                Some(s) => proximity(&state, s)?,
                None => proximity_min(&state)?,
            };
            serde_json::json!({
                "kind": "two_bubble",
                "sign": fit.sign,
                "lambda": fit.lambda,
                "mu": fit.mu,
                "residual_sq": fit.residual_sq,
                "separation": fit.separation_term,
                "d_value": fit.d_value,
                "converged": fit.converged,
            })
        }
        m @ (1 | -1) => {
            if sign.is_some() {
                return Err(CliError::Config(
                    "--sign applies to class (0, 0) snapshots only".into(),
                ));
            }
            let oriented = if m == 1 {
                state.clone()
            } else {
                negated_bubble_frame(&state)?
            };
            let fit = single_bubble_fit(&oriented)?;
            serde_json::json!({
                "kind": "single_bubble",
                "m": m,
                "lambda": fit.lambda,
                "distance": fit.distance,
                "converged": fit.converged,
            })
        }
        m => {
            return Err(CliError::Config(format!(
                "fit handles boundary classes m in {{-1, 0, 1}}, got m = {m}"
            )))
        }
    };
    println!("{}", serde_json::to_string_pretty(&payload)?);
    Ok(())
}

fn validate_command(path: &Path) -> Result<()> {
    let state = read_snapshot(path)?;
    state.validate_class(CLASS_TOL)?;
    let e = energy(&state)?;
    let e_norm = e_norm_offset(&state, state.boundary_value())?;
    let grid = &state.grid;
    let grading = match grid.grading() {
        Grading::Uniform => "uniform".to_string(),
        Grading::Geometric { ratio } => format!("geometric {ratio}"),
    };
    let payload = serde_json::json!({
        "ok": true,
        "k": grid.k(),
        "ell": state.ell(),
        "m": state.m(),
        "n": grid.len(),
        "r_max": grid.r_max(),
        "grading": grading,
        "time": state.time,
        "origin_value": state.origin_value(),
        "boundary_value": state.boundary_value(),
        "energy": {
            "total": e.total,
            "kinetic": e.kinetic,
            "potential": e.potential,
        },
        "e_norm": e_norm,
    });
    println!("{}", serde_json::to_string_pretty(&payload)?);
    Ok(())
}

fn report(result: Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Simulate {
            config,
            output,
            emit_plotdata,
        } => simulate_command(&config, output.as_deref(), emit_plotdata),
        Command::Analyze {
            run_dir,
            emit_plotdata,
        } => report(analyze_dir(&run_dir, emit_plotdata).map(|verdict| {
            let v = verdict.map(|rv| rv.verdict.as_str()).unwrap_or("none");
            println!("analyze: verdict {v} -> {}", run_dir.display());
        })),
        Command::Fit { snapshot, sign } => report(fit_command(&snapshot, sign)),
        Command::Sweep {
            template,
            grid,
            jobs,
            output,
        } => sweep_command(&template, &grid, jobs, output.as_deref()),
        Command::Validate { snapshot } => report(validate_command(&snapshot)),
    };
    ExitCode::from(code as u8)
}
