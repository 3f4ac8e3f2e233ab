//! Trajectory-level resolution diagnostics: separating a run into bubbles
//! plus radiation, tracking the bubble scales in time, checking the energy
//! budget of the decomposition, and classifying the outcome.
//!
//! Everything here is read-only over an immutable trajectory. The
//! classifier is a phenomenology instrument: it certifies that a run's
//! diagnostics pass a documented set of gates, and reports `Undetermined`
//! with the failing gates whenever they do not.

use std::f64::consts::PI;

use crate::bubbles::{
    proximity_min, proximity_seeded, residual_fit, single_bubble_fit, BubbleFit,
};
use crate::error::{param_err, CoreError, Result};
use crate::evolve::{bubble_scale_proxy, evolve_at_times, Flow, StepControl, Termination, Trajectory};
use crate::functionals::{energy, local_e_norm, local_energy};
use crate::state::FieldState;

/// Which kind of remainder a radiation fit describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadiationKind {
    /// A solution of the linear flow, reported at a reference time; it must
    /// be replayed under the linear flow to compare at other times.
    GlobalLinear,
    /// A static exterior profile; time-independent by construction.
    StaticProfile,
}

/// Radiation component extracted from a trajectory, with the matching
/// cutoffs and the exterior mismatch it achieved at each matched time.
#[derive(Debug, Clone)]
pub struct RadiationFit {
    pub kind: RadiationKind,
    pub radiation_state: FieldState,
    /// (t, ρ(t)) pairs: the exterior matching radius used at each time.
    pub cutoff_series: Vec<(f64, f64)>,
    /// (t, ‖ψ(t) − radiation‖_{ℰ(r ≥ ρ(t))}) pairs.
    pub mismatch_series: Vec<(f64, f64)>,
    /// Estimated concentration time and uncertainty band, blow-up case only.
    pub t_plus: Option<(f64, f64)>,
}

fn time_fuzz(t: f64) -> f64 {
    1e-9 * (1.0 + t.abs())
}

/// Quintic ramp: 0 below the window, 1 above, C² across it.
fn smooth_ramp(r: f64, lo: f64, hi: f64) -> f64 {
    if r <= lo {
        0.0
    } else if r >= hi {
        1.0
    } else {
        let x = (r - lo) / (hi - lo);
        x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
    }
}

/// Least-squares line through (x, y) points: (slope, intercept, residual rms).
fn line_fit(pts: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = pts.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in pts {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (pts
        .iter()
        .map(|&(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum::<f64>()
        / nf)
        .sqrt();
    Some((slope, intercept, rms))
}

fn series_slope(pts: &[(f64, f64)]) -> f64 {
    line_fit(pts).map(|(s, _, _)| s).unwrap_or(0.0)
}

fn last_half(pts: &[(f64, f64)]) -> &[(f64, f64)] {
    if pts.len() < 4 {
        pts
    } else {
        &pts[pts.len() / 2..]
    }
}

/// Indices of the snapshots in the last half of the trajectory's time span.
fn late_window(traj: &Trajectory) -> Vec<usize> {
    let t0 = traj.snapshots.first().map(|s| s.time).unwrap_or(0.0);
    let t1 = traj.snapshots.last().map(|s| s.time).unwrap_or(0.0);
    let t_mid = t0 + 0.5 * (t1 - t0);
    let fuzz = time_fuzz(t1);
    (0..traj.snapshots.len())
        .filter(|&i| traj.snapshots[i].time >= t_mid - fuzz)
        .collect()
}

/// Concentration-time estimate from the shrinking of the bubble-scale
/// proxy: least squares on log(scale) over the last resolved samples, with
/// the local decay rate converted to a time-to-collapse. Returns the
/// estimate and an uncertainty band, or None when the proxy is missing or
/// not shrinking.
pub fn estimate_t_plus(traj: &Trajectory) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = traj
        .snapshots
        .iter()
        .filter_map(|s| bubble_scale_proxy(s).map(|(scale, _)| (s.time, scale)))
        .filter(|&(_, l)| l > 0.0 && l.is_finite())
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let tail: Vec<(f64, f64)> = pts[pts.len().saturating_sub(10)..]
        .iter()
        .map(|&(t, l)| (t, l.ln()))
        .collect();
    let (slope, _, rms) = line_fit(&tail)?;
    if !(slope < 0.0) {
        return None;
    }
    let t_last = tail.last().unwrap().0;
    let t_hat = t_last - 1.0 / slope;
    let mean_gap = (t_last - tail[0].0) / (tail.len() - 1) as f64;
    let band = (rms / slope.abs()).max(0.5 * mean_gap);
    Some((t_hat, band))
}

/// Recover the linear radiation component of a run that reached its final
/// time: taper each late snapshot to its exterior r ≥ ρ(t) = t − A(t),
/// back-propagate to a common reference time under the linear flow,
/// average the backward images where they are determined, and score the
/// average by re-propagating it forward and measuring the exterior
/// ℰ-distance beyond ρ(t).
///
/// The taper (re-basing by mπ for m ≠ 0) removes whatever still interacts
/// inside the matching radius; without it the interior residue rides the
/// replay outward and pollutes the exterior scores at later times. The
/// backward image of exterior data is determined only on
/// r ≥ ρ(tᵢ) + (tᵢ − t_ref), so each field is weighted to zero below that
/// radius; the reference snapshot keeps full weight and supplies the
/// interior.
pub fn extract_radiation_global<F>(
    traj: &Trajectory,
    cutoff_of_t: F,
    control: &StepControl,
) -> Result<RadiationFit>
where
    F: Fn(f64) -> f64,
{
    if traj.termination != Termination::ReachedTFinal {
        return param_err(format!(
            "radiation extraction needs a run that reached its final time, got {}",
            traj.termination.as_str()
        ));
    }
    let window = late_window(traj);
    if window.len() < 2 {
        return Err(CoreError::InsufficientData(format!(
            "radiation matching needs at least 2 late snapshots, found {}",
            window.len()
        )));
    }
    let first = &traj.snapshots[window[0]];
    if first.ell() != 0 {
        return param_err(format!(
            "radiation extraction needs class (0, m) data, got ({}, {})",
            first.class.0, first.class.1
        ));
    }
    let grid = first.grid.clone();
    let m = first.m();
    let m_pi = m as f64 * PI;
    let t_ref = first.time;

    let mut cutoff_series = Vec::with_capacity(window.len());
    for &i in &window {
        let t = traj.snapshots[i].time;
        let rho = t - cutoff_of_t(t);
        if !rho.is_finite() || rho >= grid.r_max() {
            return param_err(format!(
                "matching cutoff {rho} at t = {t} reaches past R_max = {}; enlarge the domain",
                grid.r_max()
            ));
        }
        cutoff_series.push((t, rho.max(0.0)));
    }

    // Back-propagate each late snapshot to t_ref and average over the
    // radii where each backward image is determined. Numerical precursors
    // leak marginally past the light cone, so the trust edge is pushed out
    // by a few of the coarsest cells.
    let n = grid.len();
    let nodes = grid.nodes();
    let h_max = (1..n)
        .map(|j| nodes[j] - nodes[j - 1])
        .fold(nodes[0], f64::max);
    let margin = 1.0;
    let mut num_psi = vec![0.0; n];
    let mut num_dot = vec![0.0; n];
    let mut den = vec![0.0; n];
    for (pos, &i) in window.iter().enumerate() {
        let snap = &traj.snapshots[i];
        let rho = cutoff_series[pos].1;
        let mut psi = vec![0.0; n];
        let mut dot = vec![0.0; n];
        for (j, &r) in nodes.iter().enumerate() {
            let chi = smooth_ramp(r, 0.5 * rho, rho.max(nodes[0]));
            psi[j] = chi * (snap.psi[j] - m_pi);
            dot[j] = chi * snap.psidot[j];
        }
        let delta = snap.time - t_ref;
        if delta > time_fuzz(t_ref) {
            for v in dot.iter_mut() {
                *v = -*v;
            }
            let back = FieldState::new(grid.clone(), psi, dot, (0, 0), 0.0)?;
            let replay = evolve_at_times(&back, control, Flow::Linear, &[delta])?;
            if replay.termination != Termination::ReachedTFinal {
                return Err(CoreError::Numeric {
                    what: format!(
                        "backward radiation replay stopped early: {}",
                        replay.termination.as_str()
                    ),
                    index: None,
                });
            }
            let end = replay.final_state();
            psi = end.psi.clone();
            dot = end.psidot.iter().map(|v| -v).collect();
        }
        let trusted = rho + delta;
        for (j, &r) in nodes.iter().enumerate() {
            let w = if pos == 0 {
                1.0
            } else {
                smooth_ramp(r, trusted, trusted + margin)
            };
            num_psi[j] += w * psi[j];
            num_dot[j] += w * dot[j];
            den[j] += w;
        }
    }
    for j in 0..n {
        num_psi[j] /= den[j];
        num_dot[j] /= den[j];
    }
    let radiation_state = FieldState::new(grid.clone(), num_psi, num_dot, (0, 0), t_ref)?;

    // Forward replay of the average, sampled at the matched times.
    let forward_times: Vec<f64> = window
        .iter()
        .map(|&i| traj.snapshots[i].time)
        .filter(|&t| t > t_ref + time_fuzz(t_ref))
        .collect();
    let mut rad_at: Vec<FieldState> = vec![radiation_state.clone()];
    if !forward_times.is_empty() {
        let replay = evolve_at_times(&radiation_state, control, Flow::Linear, &forward_times)?;
        if replay.termination != Termination::ReachedTFinal {
            return Err(CoreError::Numeric {
                what: format!(
                    "forward radiation replay stopped early: {}",
                    replay.termination.as_str()
                ),
                index: None,
            });
        }
        for &t in &forward_times {
            let nearest = replay
                .snapshots
                .iter()
                .min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))
                .expect("replay holds at least the initial state");
            if (nearest.time - t).abs() > time_fuzz(t) {
                return Err(CoreError::Numeric {
                    what: format!("radiation replay missed the sample time {t}"),
                    index: None,
                });
            }
            rad_at.push(nearest.clone());
        }
    }

    let mut mismatch_series = Vec::with_capacity(window.len());
    for (pos, &i) in window.iter().enumerate() {
        let snap = &traj.snapshots[i];
        let rad = &rad_at[pos];
        let psi: Vec<f64> = snap.psi.iter().zip(&rad.psi).map(|(a, b)| a - b).collect();
        let dot: Vec<f64> = snap
            .psidot
            .iter()
            .zip(&rad.psidot)
            .map(|(a, b)| a - b)
            .collect();
        let phi = FieldState::new(grid.clone(), psi, dot, (0, m), snap.time)?;
        let rho = cutoff_series[pos].1;
        let sq = local_e_norm(&phi, rho, grid.r_max(), m_pi)?;
        mismatch_series.push((snap.time, sq.max(0.0).sqrt()));
    }

    Ok(RadiationFit {
        kind: RadiationKind::GlobalLinear,
        radiation_state,
        cutoff_series,
        mismatch_series,
        t_plus: None,
    })
}

/// Estimate the static exterior profile of a concentrating run: average
/// the late snapshots pointwise over the region r ≥ c·(T₊ − t) that has
/// already settled, filling the still-active interior from the last
/// snapshot. The mismatch series scores each late snapshot against the
/// profile beyond ρ(t) = T₊ − t.
pub fn extract_blowup_profile(traj: &Trajectory, cone_factor: f64) -> Result<RadiationFit> {
    if !(cone_factor > 1.0) {
        return param_err(format!(
            "averaging cone factor must exceed 1, got {cone_factor}"
        ));
    }
    let window = late_window(traj);
    if window.len() < 5 {
        return Err(CoreError::InsufficientData(format!(
            "blow-up profile estimation needs at least 5 late snapshots, found {}",
            window.len()
        )));
    }
    let last = &traj.snapshots[*window.last().unwrap()];
    let grid = last.grid.clone();
    let t_last = last.time;
    let t_first = traj.snapshots[window[0]].time;

    let (t_hat, band) = match estimate_t_plus(traj) {
        Some((t, b)) if t > t_last => (t, b),
        // No shrinking proxy: treat the field as already settled just past
        // the end of the run, with the whole window as the uncertainty.
        _ => {
            let prev = traj.snapshots[window[window.len() - 2]].time;
            (t_last + (t_last - prev).max(time_fuzz(t_last)), t_last - t_first)
        }
    };

    let n = grid.len();
    let mut psi = vec![0.0; n];
    let mut dot = vec![0.0; n];
    for (j, &r) in grid.nodes().iter().enumerate() {
        let mut count = 0.0;
        for &i in &window {
            let snap = &traj.snapshots[i];
            if r >= cone_factor * (t_hat - snap.time) {
                psi[j] += snap.psi[j];
                dot[j] += snap.psidot[j];
                count += 1.0;
            }
        }
        if count > 0.0 {
            psi[j] /= count;
            dot[j] /= count;
        } else {
            psi[j] = last.psi[j];
            dot[j] = last.psidot[j];
        }
    }
    let radiation_state = FieldState::new(grid.clone(), psi, dot, last.class, t_last)?;

    let mut cutoff_series = Vec::new();
    let mut mismatch_series = Vec::new();
    for &i in &window {
        let snap = &traj.snapshots[i];
        let rho = t_hat - snap.time;
        if rho >= grid.r_max() {
            continue;
        }
        let psi: Vec<f64> = snap
            .psi
            .iter()
            .zip(&radiation_state.psi)
            .map(|(a, b)| a - b)
            .collect();
        let dot: Vec<f64> = snap
            .psidot
            .iter()
            .zip(&radiation_state.psidot)
            .map(|(a, b)| a - b)
            .collect();
        let phi = FieldState::new(grid.clone(), psi, dot, (0, 0), snap.time)?;
        let sq = local_e_norm(&phi, rho.max(0.0), grid.r_max(), 0.0)?;
        cutoff_series.push((snap.time, rho.max(0.0)));
        mismatch_series.push((snap.time, sq.max(0.0).sqrt()));
    }

    Ok(RadiationFit {
        kind: RadiationKind::StaticProfile,
        radiation_state,
        cutoff_series,
        mismatch_series,
        t_plus: Some((t_hat, band)),
    })
}

/// One fitted snapshot in a tracked-scale series.
#[derive(Debug, Clone, Copy)]
pub struct ScaleSample {
    pub time: f64,
    pub fit: BubbleFit,
}

/// Two-bubble scales along a trajectory, fitted with a single sign.
#[derive(Debug, Clone)]
pub struct ScaleSeries {
    pub iota: i32,
    pub samples: Vec<ScaleSample>,
}

/// The field the fits apply to: the raw snapshots, or the snapshots with
/// the radiation component removed.
fn subtract_radiation(
    traj: &Trajectory,
    radiation: Option<&RadiationFit>,
) -> Result<Vec<FieldState>> {
    let snaps = &traj.snapshots;
    let Some(rf) = radiation else {
        return Ok(snaps.to_vec());
    };
    let rad0 = &rf.radiation_state;
    if !snaps[0].grid.same_discretization(&rad0.grid) {
        return param_err("radiation state lives on a different grid than the trajectory");
    }
    match rf.kind {
        RadiationKind::StaticProfile => Ok(snaps
            .iter()
            .map(|s| {
                let psi = s.psi.iter().zip(&rad0.psi).map(|(a, b)| a - b).collect();
                let dot = s
                    .psidot
                    .iter()
                    .zip(&rad0.psidot)
                    .map(|(a, b)| a - b)
                    .collect();
                FieldState {
                    grid: s.grid.clone(),
                    psi,
                    psidot: dot,
                    class: (s.class.0 - rad0.class.0, s.class.1 - rad0.class.1),
                    time: s.time,
                }
            })
            .collect()),
        RadiationKind::GlobalLinear => {
            // Replay the linear field to every snapshot time, backward via
            // time reversal where needed.
            let control = StepControl::default();
            let t_ref = rad0.time;
            let fuzz = time_fuzz(t_ref);
            let mut rad_at: Vec<Option<FieldState>> = vec![None; snaps.len()];

            let forward: Vec<f64> = snaps
                .iter()
                .map(|s| s.time)
                .filter(|&t| t > t_ref + fuzz)
                .collect();
            let backward: Vec<f64> = snaps
                .iter()
                .map(|s| t_ref - s.time)
                .filter(|&d| d > fuzz)
                .collect();
            let mut backward_sorted = backward.clone();
            backward_sorted.sort_by(f64::total_cmp);
            backward_sorted.dedup();

            let fwd_traj = if forward.is_empty() {
                None
            } else {
                Some(evolve_at_times(rad0, &control, Flow::Linear, &forward)?)
            };
            let bwd_traj = if backward_sorted.is_empty() {
                None
            } else {
                let mut rev = rad0.clone();
                rev.time = 0.0;
                for v in rev.psidot.iter_mut() {
                    *v = -*v;
                }
                Some(evolve_at_times(&rev, &control, Flow::Linear, &backward_sorted)?)
            };

            for (i, s) in snaps.iter().enumerate() {
                if (s.time - t_ref).abs() <= fuzz {
                    rad_at[i] = Some(rad0.clone());
                    continue;
                }
                let (traj_ref, want) = if s.time > t_ref {
                    (fwd_traj.as_ref(), s.time)
                } else {
                    (bwd_traj.as_ref(), t_ref - s.time)
                };
                let replay = traj_ref.expect("replay covers every off-reference time");
                let nearest = replay
                    .snapshots
                    .iter()
                    .min_by(|a, b| (a.time - want).abs().total_cmp(&(b.time - want).abs()))
                    .expect("replay holds at least the initial state");
                if (nearest.time - want).abs() > time_fuzz(want) {
                    return Err(CoreError::Numeric {
                        what: format!("radiation replay missed the sample time {}", s.time),
                        index: None,
                    });
                }
                let mut r = nearest.clone();
                if s.time < t_ref {
                    for v in r.psidot.iter_mut() {
                        *v = -*v;
                    }
                }
                r.time = s.time;
                rad_at[i] = Some(r);
            }

            Ok(snaps
                .iter()
                .zip(rad_at)
                .map(|(s, r)| {
                    let r = r.expect("every snapshot has a replayed radiation field");
                    let psi = s.psi.iter().zip(&r.psi).map(|(a, b)| a - b).collect();
                    let dot = s
                        .psidot
                        .iter()
                        .zip(&r.psidot)
                        .map(|(a, b)| a - b)
                        .collect();
                    FieldState {
                        grid: s.grid.clone(),
                        psi,
                        psidot: dot,
                        class: (s.class.0, s.class.1),
                        time: s.time,
                    }
                })
                .collect())
        }
    }
}

/// Track two-bubble scales along a trajectory.
///
/// The first snapshot is fitted from scratch over both signs; every later
/// snapshot is fitted with the same sign, seeded at the previous scales so
/// the series stays on one continuous branch. Reported scales come from a
/// residual-only polish at each sample: the separation penalty pulls the
/// d-optimal λ/μ systematically below the best-matching scales, and the
/// polish removes that bias. A sample that fails to converge is flagged
/// and the series continues.
pub fn track_scales(traj: &Trajectory, radiation: Option<&RadiationFit>) -> Result<ScaleSeries> {
    if traj.snapshots.len() < 2 {
        return Err(CoreError::InsufficientData(format!(
            "scale tracking needs at least 2 snapshots, found {}",
            traj.snapshots.len()
        )));
    }
    let phis = subtract_radiation(traj, radiation)?;
    for phi in &phis {
        if phi.class != (0, 0) {
            return param_err(format!(
                "scale tracking fits class (0, 0) fields, got ({}, {}); remove the radiation component first",
                phi.class.0, phi.class.1
            ));
        }
    }

    let mut samples = Vec::with_capacity(phis.len());
    let mut iota = 0;
    let mut prev: Option<(f64, f64)> = None;
    for phi in &phis {
        let coarse = match prev {
            None => {
                let f = proximity_min(phi)?;
                iota = f.sign;
                f
            }
            Some((l, m)) => proximity_seeded(phi, iota, l, m, 0.1)?,
        };
        let polished = residual_fit(phi, iota, coarse.lambda, coarse.mu)?;
        let fit = BubbleFit {
            converged: coarse.converged && polished.converged,
            ..polished
        };
        prev = Some((fit.lambda, fit.mu));
        samples.push(ScaleSample {
            time: phi.time,
            fit,
        });
    }
    Ok(ScaleSeries { iota, samples })
}

/// Energy bookkeeping of a two-bubble decomposition.
#[derive(Debug, Clone, Copy)]
pub struct EnergyBudget {
    /// E(state).
    pub total: f64,
    /// Energy of a decoupled bubble pair, 2·(4πk) = 8kπ.
    pub bubble_pair: f64,
    /// E(radiation) when a radiation state is supplied; otherwise the local
    /// energy beyond sqrt(μ·R_max), the scale-balanced exterior remainder.
    pub radiation_energy: f64,
    /// total − bubble_pair − radiation_energy, as written.
    pub deficit: f64,
    /// True when radiation_energy is the exterior fallback.
    pub radiation_is_exterior: bool,
}

pub fn energy_budget(
    state: &FieldState,
    fit: &BubbleFit,
    radiation: Option<&FieldState>,
) -> Result<EnergyBudget> {
    let total = energy(state)?.total;
    let bubble_pair = 8.0 * state.grid.k() as f64 * PI;
    let (radiation_energy, radiation_is_exterior) = match radiation {
        Some(rad) => (energy(rad)?.total, false),
        None => {
            let cut = (fit.mu * state.grid.r_max()).sqrt();
            let e = if cut < state.grid.r_max() {
                local_energy(state, cut, state.grid.r_max())?
            } else {
                0.0
            };
            (e, true)
        }
    };
    let deficit = total - bubble_pair - radiation_energy;
    Ok(EnergyBudget {
        total,
        bubble_pair,
        radiation_energy,
        deficit,
        radiation_is_exterior,
    })
}

/// Outcome labels, ordered from dispersal to concentration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Scattering,
    OneBubbleBlowup,
    TwoBubbleBlowup,
    GlobalTwoBubble,
    Undetermined,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Scattering => "scattering",
            Verdict::OneBubbleBlowup => "one_bubble_blowup",
            Verdict::TwoBubbleBlowup => "two_bubble_blowup",
            Verdict::GlobalTwoBubble => "global_two_bubble",
            Verdict::Undetermined => "undetermined",
        }
    }
}

/// One evidence gate: the measured value, the threshold it was held to,
/// and whether it passed.
#[derive(Debug, Clone)]
pub struct GateCheck {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Classifier thresholds. The defaults are conventions, not derived
/// constants; runs that sit near a boundary should be judged by the gate
/// values, not the verdict label.
#[derive(Debug, Clone, Copy)]
pub struct ClassifierThresholds {
    /// d(t) must end below this to certify a two-bubble configuration.
    pub d_certify: f64,
    /// d(t) must stay above this for a scattering verdict.
    pub d_stay_away: f64,
    /// Bound on λ/μ and on λ/(T₊ − t) rate gates.
    pub rate_ratio: f64,
    /// Bound on μ/t (global) or μ/(T₊ − t) (blow-up): the outer scale must
    /// sit well inside the horizon.
    pub horizon_ratio: f64,
    /// Final interior energy fraction allowed for scattering.
    pub interior_fraction: f64,
    /// Final single-bubble distance allowed for one-bubble blow-up.
    pub single_fit_distance: f64,
}

impl Default for ClassifierThresholds {
    fn default() -> Self {
        ClassifierThresholds {
            d_certify: 0.01,
            d_stay_away: 0.1,
            rate_ratio: 0.1,
            horizon_ratio: 0.25,
            interior_fraction: 0.01,
            single_fit_distance: 0.1,
        }
    }
}

/// Series evidence the classifier judged.
#[derive(Debug, Clone, Default)]
pub struct ClassifierEvidence {
    pub d_series: Vec<(f64, f64)>,
    pub lambda_series: Vec<(f64, f64)>,
    pub mu_series: Vec<(f64, f64)>,
    /// λ(t)/μ(t).
    pub ratio_series: Vec<(f64, f64)>,
    /// μ(t)/t (global) or μ(t)/(T₊ − t) (blow-up).
    pub horizon_series: Vec<(f64, f64)>,
    /// ‖ψ(t)‖_{ℰ(r ≤ 1)}.
    pub interior_series: Vec<(f64, f64)>,
    pub t_plus: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct RunVerdict {
    pub verdict: Verdict,
    pub iota: i32,
    pub gates: Vec<GateCheck>,
    pub notes: Vec<String>,
    pub evidence: ClassifierEvidence,
}

fn push_gate(gates: &mut Vec<GateCheck>, name: &str, value: f64, threshold: f64, pass: bool) -> bool {
    gates.push(GateCheck {
        name: name.to_string(),
        value,
        threshold,
        pass,
    });
    pass
}

/// Final value below the threshold, and not rising over the last half.
fn gate_decreasing_below(
    gates: &mut Vec<GateCheck>,
    name: &str,
    series: &[(f64, f64)],
    threshold: f64,
) -> bool {
    let final_v = series.last().map(|p| p.1).unwrap_or(f64::NAN);
    let slope = series_slope(last_half(series));
    let a = push_gate(gates, &format!("{name}_final"), final_v, threshold, final_v < threshold);
    let b = push_gate(gates, &format!("{name}_trend"), slope, 0.0, slope <= 0.0);
    a && b
}

/// Classify the outcome of a run from its tracked fits and radiation
/// diagnostics.
///
/// Gate sets, tried in order of specificity for the run's termination:
/// runs that reached the final time are tested as global two-bubble then
/// as scattering; runs that ended bubble-underresolved are tested as
/// two-bubble then one-bubble blow-up. Any other termination, or a failed
/// gate in every candidate set, yields `Undetermined` with every gate
/// listed.
pub fn classify_outcome(
    traj: &Trajectory,
    fits: &ScaleSeries,
    radiation: Option<&RadiationFit>,
    thresholds: &ClassifierThresholds,
) -> Result<RunVerdict> {
    let mut notes = Vec::new();
    let unconverged = fits.samples.iter().filter(|s| !s.fit.converged).count();
    if unconverged > 0 {
        notes.push(format!(
            "{unconverged} of {} scale fits did not converge",
            fits.samples.len()
        ));
    }

    let t_plus = radiation
        .and_then(|r| r.t_plus)
        .or_else(|| estimate_t_plus(traj));

    let mut evidence = ClassifierEvidence {
        t_plus,
        ..Default::default()
    };
    for s in &fits.samples {
        evidence.d_series.push((s.time, s.fit.d_value));
        evidence.lambda_series.push((s.time, s.fit.lambda));
        evidence.mu_series.push((s.time, s.fit.mu));
        evidence.ratio_series.push((s.time, s.fit.lambda / s.fit.mu));
    }
    match traj.termination {
        Termination::ReachedTFinal => {
            for s in &fits.samples {
                if s.time > 0.0 {
                    evidence.horizon_series.push((s.time, s.fit.mu / s.time));
                }
            }
        }
        Termination::BlowupUnderresolved => {
            if let Some((t_hat, _)) = t_plus {
                for s in &fits.samples {
                    if s.time < t_hat {
                        evidence.horizon_series.push((s.time, s.fit.mu / (t_hat - s.time)));
                    }
                }
            }
        }
        _ => {}
    }
    for snap in &traj.snapshots {
        let hi = 1.0f64.min(snap.grid.r_max());
        let sq = local_e_norm(snap, 0.0, hi, snap.origin_value())?;
        evidence.interior_series.push((snap.time, sq.max(0.0).sqrt()));
    }

    let reached = traj.termination == Termination::ReachedTFinal;
    let blowup = traj.termination == Termination::BlowupUnderresolved;

    let mut verdict = Verdict::Undetermined;
    let mut gates: Vec<GateCheck> = Vec::new();

    if reached {
        // Global two-bubble gates.
        let mut g = Vec::new();
        let mut ok = push_gate(&mut g, "global.reached_t_final", 1.0, 0.5, true);
        ok &= gate_decreasing_below(&mut g, "global.d", &evidence.d_series, thresholds.d_certify);
        ok &= gate_decreasing_below(
            &mut g,
            "global.scale_ratio",
            &evidence.ratio_series,
            thresholds.rate_ratio,
        );
        ok &= gate_decreasing_below(
            &mut g,
            "global.horizon_ratio",
            &evidence.horizon_series,
            thresholds.horizon_ratio,
        );
        if ok {
            verdict = Verdict::GlobalTwoBubble;
            gates = g;
        } else {
            gates.extend(g);
        }

        if verdict == Verdict::Undetermined {
            // Scattering gates.
            let mut g = Vec::new();
            let mut ok = push_gate(&mut g, "scattering.reached_t_final", 1.0, 0.5, true);
            let max_int = evidence
                .interior_series
                .iter()
                .map(|p| p.1)
                .fold(0.0f64, f64::max);
            let final_int = evidence.interior_series.last().map(|p| p.1).unwrap_or(f64::NAN);
            let fraction = if max_int <= 1e-300 { 0.0 } else { final_int / max_int };
            ok &= push_gate(
                &mut g,
                "scattering.interior_final_fraction",
                fraction,
                thresholds.interior_fraction,
                fraction <= thresholds.interior_fraction,
            );
            let d_min = evidence
                .d_series
                .iter()
                .map(|p| p.1)
                .fold(f64::INFINITY, f64::min);
            ok &= push_gate(
                &mut g,
                "scattering.d_min",
                d_min,
                thresholds.d_stay_away,
                d_min >= thresholds.d_stay_away,
            );
            if ok {
                verdict = Verdict::Scattering;
                gates = g;
            } else {
                gates.extend(g);
            }
        }
    } else if blowup {
        let t_hat_ok = t_plus.map(|(t, _)| t).unwrap_or(f64::NAN);

        // Two-bubble blow-up gates.
        let mut g = Vec::new();
        let mut ok = push_gate(&mut g, "two_bubble.blowup_termination", 1.0, 0.5, true);
        ok &= push_gate(
            &mut g,
            "two_bubble.t_plus_estimated",
            t_hat_ok,
            0.0,
            t_plus.is_some(),
        );
        ok &= gate_decreasing_below(&mut g, "two_bubble.d", &evidence.d_series, thresholds.d_certify);
        ok &= gate_decreasing_below(
            &mut g,
            "two_bubble.scale_ratio",
            &evidence.ratio_series,
            thresholds.rate_ratio,
        );
        ok &= gate_decreasing_below(
            &mut g,
            "two_bubble.horizon_ratio",
            &evidence.horizon_series,
            thresholds.horizon_ratio,
        );
        if ok {
            verdict = Verdict::TwoBubbleBlowup;
            gates = g;
        } else {
            gates.extend(g);
        }

        if verdict == Verdict::Undetermined {
            let mut g = Vec::new();
            let mut ok = push_gate(&mut g, "one_bubble.blowup_termination", 1.0, 0.5, true);
            ok &= push_gate(
                &mut g,
                "one_bubble.t_plus_estimated",
                t_hat_ok,
                0.0,
                t_plus.is_some(),
            );
            match single_fit_series(traj, radiation) {
                Ok((dist_series, lambda_series)) => {
                    ok &= gate_decreasing_below(
                        &mut g,
                        "one_bubble.fit_distance",
                        &dist_series,
                        thresholds.single_fit_distance,
                    );
                    let rate: Vec<(f64, f64)> = match t_plus {
                        Some((t_hat, _)) => lambda_series
                            .iter()
                            .filter(|p| p.0 < t_hat)
                            .map(|&(t, l)| (t, l / (t_hat - t)))
                            .collect(),
                        None => Vec::new(),
                    };
                    ok &= gate_decreasing_below(&mut g, "one_bubble.rate", &rate, thresholds.rate_ratio);
                }
                Err(e) => {
                    notes.push(format!("single-bubble fitting unavailable: {e}"));
                    ok = false;
                }
            }
            if ok {
                verdict = Verdict::OneBubbleBlowup;
                gates = g;
            } else {
                gates.extend(g);
            }
        }
    } else {
        notes.push(format!(
            "run terminated with {}; no outcome gates apply",
            traj.termination.as_str()
        ));
    }

    if verdict == Verdict::Undetermined {
        let failing: Vec<&str> = gates
            .iter()
            .filter(|g| !g.pass)
            .map(|g| g.name.as_str())
            .collect();
        if !failing.is_empty() {
            notes.push(format!("failing gates: {}", failing.join(", ")));
        }
    }

    Ok(RunVerdict {
        verdict,
        iota: fits.iota,
        gates,
        notes,
        evidence,
    })
}

/// Single-bubble fit distances of the late radiation-subtracted field,
/// for the one-bubble gates. The field's class is read off the data: a
/// (0, ±1) shape is fitted (negated when −1); anything else is an error.
fn single_fit_series(
    traj: &Trajectory,
    radiation: Option<&RadiationFit>,
) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    let phis = subtract_radiation(traj, radiation)?;
    let window = late_window(traj);
    let mut dist = Vec::new();
    let mut lambda = Vec::new();
    for &i in &window {
        let phi = &phis[i];
        let n = phi.len();
        let m_hat = (phi.psi[n - 1] / PI).round() as i32;
        let sign = match m_hat {
            1 => 1.0,
            -1 => -1.0,
            _ => {
                return param_err(format!(
                    "late field settles at {:.3}π, not a single-bubble shape",
                    phi.psi[n - 1] / PI
                ))
            }
        };
        let mut cand = phi.clone();
        if sign < 0.0 {
            for v in cand.psi.iter_mut() {
                *v = -*v;
            }
            for v in cand.psidot.iter_mut() {
                *v = -*v;
            }
        }
        cand.class = (0, 1);
        let fit = single_bubble_fit(&cand)?;
        dist.push((phi.time, fit.distance));
        lambda.push((phi.time, fit.lambda));
    }
    Ok((dist, lambda))
}
