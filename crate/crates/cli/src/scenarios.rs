//! Initial-data generators. Each scenario validates its parameters against
//! its own schema (unknown keys are hard errors), constructs the state, and
//! checks the documented class and energy contracts before handing it to
//! the solver.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Deserialize;
use serde_json::json;
use wavemap_core::bubbles::{bubble_state, q_eval, two_bubble_state};
use wavemap_core::functionals::energy;
use wavemap_core::snapshot::read_snapshot;
use wavemap_core::state::CLASS_TOL;
use wavemap_core::{FieldState, RadialGrid};

use crate::error::{config_err, scenario_err, CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Zero,
    PureBubble {
        lambda: f64,
    },
    TwoBubble {
        iota: i32,
        lambda: f64,
        mu: f64,
    },
    TwoBubblePerturbed {
        iota: i32,
        lambda: f64,
        mu: f64,
        epsilon: f64,
        /// Falls back to the run-level seed when absent.
        seed: Option<u64>,
    },
    BelowThreshold {
        amplitude: f64,
        width: f64,
        /// When set, the amplitude is solved so E = fraction * 8k pi; must
        /// stay under the scenario's 0.9 energy ceiling.
        energy_fraction: Option<f64>,
    },
    TruncatedBubble {
        lambda: f64,
        cutoff: f64,
    },
    LinearBurst {
        amplitude: f64,
        center: f64,
        width: f64,
    },
    CustomCsv {
        path: String,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PureBubbleParams {
    lambda: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TwoBubbleParams {
    iota: i32,
    lambda: f64,
    mu: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TwoBubblePerturbedParams {
    iota: i32,
    lambda: f64,
    mu: f64,
    epsilon: f64,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BelowThresholdParams {
    amplitude: f64,
    width: f64,
    #[serde(default)]
    energy_fraction: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TruncatedBubbleParams {
    lambda: f64,
    cutoff: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearBurstParams {
    amplitude: f64,
    center: f64,
    width: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomCsvParams {
    path: String,
}

fn typed<T: serde::de::DeserializeOwned>(name: &str, table: toml::Table) -> Result<T> {
    T::deserialize(toml::Value::Table(table))
        .map_err(|e| CliError::Config(format!("scenario `{name}`: {e}")))
}

/// Parse a `[scenario]` table: a `name` key plus the scenario's parameters.
pub fn scenario_from_table(table: &toml::Table) -> Result<Scenario> {
    let name = match table.get("name") {
        Some(toml::Value::String(s)) => s.clone(),
        Some(_) => return config_err("scenario.name must be a string"),
        None => return config_err("scenario table is missing its `name` key"),
    };
    let mut rest = table.clone();
    rest.remove("name");
    match name.as_str() {
        "zero" => {
            if let Some(key) = rest.keys().next() {
                return config_err(format!("scenario `zero` takes no parameters, got `{key}`"));
            }
            Ok(Scenario::Zero)
        }
        "pure_bubble" => {
            let p: PureBubbleParams = typed(&name, rest)?;
            Ok(Scenario::PureBubble { lambda: p.lambda })
        }
        "two_bubble" => {
            let p: TwoBubbleParams = typed(&name, rest)?;
            Ok(Scenario::TwoBubble {
                iota: p.iota,
                lambda: p.lambda,
                mu: p.mu,
            })
        }
        "two_bubble_perturbed" => {
            let p: TwoBubblePerturbedParams = typed(&name, rest)?;
            Ok(Scenario::TwoBubblePerturbed {
                iota: p.iota,
                lambda: p.lambda,
                mu: p.mu,
                epsilon: p.epsilon,
                seed: p.seed,
            })
        }
        "below_threshold" => {
            let p: BelowThresholdParams = typed(&name, rest)?;
            Ok(Scenario::BelowThreshold {
                amplitude: p.amplitude,
                width: p.width,
                energy_fraction: p.energy_fraction,
            })
        }
        "truncated_bubble" => {
            let p: TruncatedBubbleParams = typed(&name, rest)?;
            Ok(Scenario::TruncatedBubble {
                lambda: p.lambda,
                cutoff: p.cutoff,
            })
        }
        "linear_burst" => {
            let p: LinearBurstParams = typed(&name, rest)?;
            Ok(Scenario::LinearBurst {
                amplitude: p.amplitude,
                center: p.center,
                width: p.width,
            })
        }
        "custom_csv" => {
            let p: CustomCsvParams = typed(&name, rest)?;
            Ok(Scenario::CustomCsv { path: p.path })
        }
        other => config_err(format!(
            "unknown scenario `{other}`; expected one of zero, pure_bubble, two_bubble, \
             two_bubble_perturbed, below_threshold, truncated_bubble, linear_burst, custom_csv"
        )),
    }
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Zero => "zero",
            Scenario::PureBubble { .. } => "pure_bubble",
            Scenario::TwoBubble { .. } => "two_bubble",
            Scenario::TwoBubblePerturbed { .. } => "two_bubble_perturbed",
            Scenario::BelowThreshold { .. } => "below_threshold",
            Scenario::TruncatedBubble { .. } => "truncated_bubble",
            Scenario::LinearBurst { .. } => "linear_burst",
            Scenario::CustomCsv { .. } => "custom_csv",
        }
    }

    /// Parameter echo for run summaries.
    pub fn params_json(&self) -> serde_json::Value {
        match self {
            Scenario::Zero => json!({}),
            Scenario::PureBubble { lambda } => json!({ "lambda": lambda }),
            Scenario::TwoBubble { iota, lambda, mu } => {
                json!({ "iota": iota, "lambda": lambda, "mu": mu })
            }
            Scenario::TwoBubblePerturbed {
                iota,
                lambda,
                mu,
                epsilon,
                seed,
            } => json!({
                "iota": iota, "lambda": lambda, "mu": mu,
                "epsilon": epsilon, "seed": seed,
            }),
            Scenario::BelowThreshold {
                amplitude,
                width,
                energy_fraction,
            } => json!({
                "amplitude": amplitude, "width": width,
                "energy_fraction": energy_fraction,
            }),
            Scenario::TruncatedBubble { lambda, cutoff } => {
                json!({ "lambda": lambda, "cutoff": cutoff })
            }
            Scenario::LinearBurst {
                amplitude,
                center,
                width,
            } => json!({ "amplitude": amplitude, "center": center, "width": width }),
            Scenario::CustomCsv { path } => json!({ "path": path }),
        }
    }
}

/// Map a 64-bit draw to [0, 1) with the conventional 53-bit mantissa shift;
/// bit-identical on every platform.
fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Quintic step: 0 below lo, 1 above hi, C^2 across the band.
fn ramp(r: f64, lo: f64, hi: f64) -> f64 {
    if r <= lo {
        0.0
    } else if r >= hi {
        1.0
    } else {
        let x = (r - lo) / (hi - lo);
        x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
    }
}

/// Odd-reflected Gaussian bump: vanishes at r = 0 like r, decays at both
/// ends, so adding it to a field preserves the class.
fn odd_bump(r: f64, center: f64, width: f64) -> f64 {
    let a = (r - center) / width;
    let b = (r + center) / width;
    (-a * a).exp() - (-b * b).exp()
}

fn threshold_energy(k: u32) -> f64 {
    8.0 * k as f64 * PI
}

/// Build the state a scenario describes on the given grid.
///
/// `base_dir` anchors relative custom_csv paths (the config file's
/// directory); `notes` receives human-readable records of any rescaling.
pub fn make_initial_data(
    scenario: &Scenario,
    grid: &Arc<RadialGrid>,
    run_seed: u64,
    base_dir: &Path,
    notes: &mut Vec<String>,
) -> Result<FieldState> {
    let state = match scenario {
        Scenario::Zero => FieldState::zero(grid.clone()),
        Scenario::PureBubble { lambda } => bubble_state(grid, *lambda)?,
        Scenario::TwoBubble { iota, lambda, mu } => {
            two_bubble_state(grid, *iota, *lambda, *mu, None)?
        }
        Scenario::TwoBubblePerturbed {
            iota,
            lambda,
            mu,
            epsilon,
            seed,
        } => perturbed_pair(grid, *iota, *lambda, *mu, *epsilon, seed.unwrap_or(run_seed))?,
        Scenario::BelowThreshold {
            amplitude,
            width,
            energy_fraction,
        } => below_threshold(grid, *amplitude, *width, *energy_fraction, notes)?,
        Scenario::TruncatedBubble { lambda, cutoff } => truncated_bubble(grid, *lambda, *cutoff)?,
        Scenario::LinearBurst {
            amplitude,
            center,
            width,
        } => linear_burst(grid, *amplitude, *center, *width)?,
        Scenario::CustomCsv { path } => custom_csv(grid, path, base_dir)?,
    };
    state
        .validate_class(CLASS_TOL)
        .map_err(|e| CliError::Scenario(format!("{}: {e}", scenario.name())))?;
    Ok(state)
}

fn perturbed_pair(
    grid: &Arc<RadialGrid>,
    iota: i32,
    lambda: f64,
    mu: f64,
    epsilon: f64,
    seed: u64,
) -> Result<FieldState> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return scenario_err(format!("epsilon must be nonnegative, got {epsilon}"));
    }
    let mut state = two_bubble_state(grid, iota, lambda, mu, None)?;
    // Three class-preserving bumps with log-uniform centers between the two
    // scales. Draw order (a, center, width, b per bump) is part of the
    // reproducibility contract.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..3 {
        let a = 2.0 * unit(&mut rng) - 1.0;
        let c = (lambda.ln() + (mu.ln() - lambda.ln()) * unit(&mut rng)).exp();
        let w = c * (0.2 + 0.3 * unit(&mut rng));
        let b = 2.0 * unit(&mut rng) - 1.0;
        for (i, &r) in grid.nodes().iter().enumerate() {
            let bump = odd_bump(r, c, w);
            state.psi[i] += epsilon * a * bump;
            state.psidot[i] += epsilon * b * bump / w;
        }
    }
    Ok(state)
}

/// Peak-normalized bump (r/w)^k e^{-(r/w)^2}, class (0, 0), psidot = 0.
fn bump_state(grid: &Arc<RadialGrid>, amplitude: f64, width: f64) -> Result<FieldState> {
    let k = grid.k();
    let peak = (0.5 * k as f64).powf(0.5 * k as f64) * (-0.5 * k as f64).exp();
    let psi = grid
        .nodes()
        .iter()
        .map(|&r| {
            let x = r / width;
            amplitude * x.powi(k as i32) * (-x * x).exp() / peak
        })
        .collect();
    FieldState::new(grid.clone(), psi, vec![0.0; grid.len()], (0, 0), 0.0).map_err(CliError::Core)
}

fn below_threshold(
    grid: &Arc<RadialGrid>,
    amplitude: f64,
    width: f64,
    energy_fraction: Option<f64>,
    notes: &mut Vec<String>,
) -> Result<FieldState> {
    if !(width > 0.0 && width.is_finite()) {
        return scenario_err(format!("width must be positive, got {width}"));
    }
    if !(amplitude > 0.0 && amplitude.is_finite()) {
        return scenario_err(format!("amplitude must be positive, got {amplitude}"));
    }
    let ceiling = 0.9 * threshold_energy(grid.k());
    let energy_of = |a: f64| -> Result<f64> {
        Ok(energy(&bump_state(grid, a, width)?)?.total)
    };

    let a = match energy_fraction {
        Some(f) => {
            if !(f > 0.0 && f < 0.9) {
                return scenario_err(format!(
                    "energy_fraction must lie in (0, 0.9) to stay below threshold, got {f}"
                ));
            }
            // The peak amplitude is capped at pi/2, where the potential term
            // sin^2(psi) is still monotone in the amplitude, so the energy
            // is strictly increasing and bisection is exact.
            let target = f * threshold_energy(grid.k());
            let mut hi = FRAC_PI_2;
            let e_hi = energy_of(hi)?;
            if e_hi < target {
                return scenario_err(format!(
                    "energy_fraction {f} asks for E = {target:.6}, but the bump family \
                     tops out at E = {e_hi:.6}; use a different scenario"
                ));
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid == lo || mid == hi {
                    break;
                }
                if energy_of(mid)? < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let a = 0.5 * (lo + hi);
            notes.push(format!(
                "below_threshold: amplitude solved to {a:.12} for E = {:.12} \
                 (target fraction {f} of threshold)",
                energy_of(a)?
            ));
            a
        }
        None => {
            let mut a = amplitude;
            let mut shrunk = 0;
            for _ in 0..200 {
                if energy_of(a)? < ceiling {
                    break;
                }
                a *= 0.9;
                shrunk += 1;
            }
            if shrunk > 0 {
                notes.push(format!(
                    "below_threshold: amplitude rescaled {shrunk} times to {a:.12} to keep \
                     E under 0.9 of threshold"
                ));
            }
            a
        }
    };

    let state = bump_state(grid, a, width)?;
    let e = energy(&state)?.total;
    if e >= ceiling {
        return scenario_err(format!(
            "below_threshold generated E = {e:.6}, not under the 0.9 threshold ceiling {ceiling:.6}"
        ));
    }
    Ok(state)
}

fn truncated_bubble(grid: &Arc<RadialGrid>, lambda: f64, cutoff: f64) -> Result<FieldState> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return scenario_err(format!("lambda must be positive, got {lambda}"));
    }
    if !(cutoff > 0.0 && cutoff <= grid.r_max()) {
        return scenario_err(format!(
            "cutoff must lie in (0, R_max = {}], got {cutoff}",
            grid.r_max()
        ));
    }
    let k = grid.k();
    let psi = grid
        .nodes()
        .iter()
        .map(|&r| q_eval(lambda, k, r) * (1.0 - ramp(r, 0.5 * cutoff, cutoff)))
        .collect();
    FieldState::new(grid.clone(), psi, vec![0.0; grid.len()], (0, 0), 0.0).map_err(CliError::Core)
}

fn linear_burst(
    grid: &Arc<RadialGrid>,
    amplitude: f64,
    center: f64,
    width: f64,
) -> Result<FieldState> {
    if !(center > 0.0 && center < grid.r_max()) {
        return scenario_err(format!(
            "center must lie in (0, R_max = {}), got {center}",
            grid.r_max()
        ));
    }
    if !(width > 0.0 && width.is_finite()) {
        return scenario_err(format!("width must be positive, got {width}"));
    }
    if !amplitude.is_finite() {
        return scenario_err(format!("amplitude must be finite, got {amplitude}"));
    }
    // Odd-reflected Gaussian shell; psidot = -d_r psi gives an outgoing
    // burst to leading order.
    let mut psi = Vec::with_capacity(grid.len());
    let mut dot = Vec::with_capacity(grid.len());
    for &r in grid.nodes() {
        let a = (r - center) / width;
        let b = (r + center) / width;
        let ga = (-a * a).exp();
        let gb = (-b * b).exp();
        psi.push(amplitude * (ga - gb));
        let d_r = amplitude * (-2.0 * a / width * ga + 2.0 * b / width * gb);
        dot.push(-d_r);
    }
    FieldState::new(grid.clone(), psi, dot, (0, 0), 0.0).map_err(CliError::Core)
}

fn custom_csv(grid: &Arc<RadialGrid>, path: &str, base_dir: &Path) -> Result<FieldState> {
    let p = Path::new(path);
    let resolved = if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    };
    let state = read_snapshot(&resolved)?;
    if !state.grid.same_discretization(grid) {
        return config_err(format!(
            "custom_csv grid (k = {}, N = {}, R_max = {}) does not match the configured grid \
             (k = {}, N = {}, R_max = {})",
            state.grid.k(),
            state.grid.len(),
            state.grid.r_max(),
            grid.k(),
            grid.len(),
            grid.r_max()
        ));
    }
    Ok(state)
}
