use std::f64::consts::PI;
use std::sync::Arc;

use wavemap_core::analysis::{
    classify_outcome, energy_budget, estimate_t_plus, extract_blowup_profile,
    extract_radiation_global, track_scales, ClassifierThresholds, RadiationFit, RadiationKind,
    ScaleSample, ScaleSeries, Verdict,
};
use wavemap_core::bubbles::{q_eval, BubbleFit};
use wavemap_core::evolve::{evolve, linear_evolve, StepControl, Termination, Trajectory};
use wavemap_core::functionals::{e_norm, energy};
use wavemap_core::{make_grid, FieldState, Grading, RadialGrid};

fn geo_grid(r1: f64, r_max: f64, n: usize, k: u32) -> Arc<RadialGrid> {
    let ratio = (r1 / r_max).powf(1.0 / (n as f64 - 1.0));
    Arc::new(make_grid(r_max, n, Grading::Geometric { ratio }, k).unwrap())
}

fn gauss(r: f64, c: f64, w: f64) -> f64 {
    let x = (r - c) / w;
    (-x * x).exp()
}

fn traj_from(states: Vec<FieldState>, termination: Termination) -> Trajectory {
    Trajectory {
        snapshots: states,
        steps: vec![],
        termination,
    }
}

/// ι(Q_λ(t) − Q_1) snapshots with λ(t) = lam0·e^{−t}, class (0, 0).
fn pair_snapshots(grid: &Arc<RadialGrid>, iota: f64, lam0: f64, times: &[f64]) -> Vec<FieldState> {
    times
        .iter()
        .map(|&t| {
            let lam = lam0 * (-t).exp();
            let psi: Vec<f64> = grid
                .nodes()
                .iter()
                .map(|&r| iota * (q_eval(lam, grid.k(), r) - q_eval(1.0, grid.k(), r)))
                .collect();
            FieldState::new(grid.clone(), psi, vec![0.0; grid.len()], (0, 0), t).unwrap()
        })
        .collect()
}

#[test]
fn linear_runs_reproduce_their_own_radiation() {
    // For data evolved under the linear flow the late field IS the
    // radiation: back-propagating, averaging, and replaying must agree with
    // the run to time-stepping accuracy on the matched exteriors.
    let g = Arc::new(make_grid(20.0, 512, Grading::Uniform, 1).unwrap());
    let psi: Vec<f64> = g.nodes().iter().map(|&r| 0.4 * gauss(r, 3.0, 1.0)).collect();
    let s = FieldState::new(g.clone(), psi, vec![0.0; g.len()], (0, 0), 0.0).unwrap();
    // Replay self-consistency is limited by RK4 round-trip error ~ dt^5;
    // a small Courant factor puts it well under the tolerance.
    let control = StepControl {
        cfl: 0.05,
        ..StepControl::default()
    };
    let traj = linear_evolve(&s, 8.0, &control, 0.5).unwrap();
    assert_eq!(traj.termination, Termination::ReachedTFinal);

    let rf = extract_radiation_global(&traj, |_| 6.0, &control).unwrap();
    assert_eq!(rf.kind, RadiationKind::GlobalLinear);
    assert!(rf.t_plus.is_none());
    for &(t, rho) in &rf.cutoff_series {
        assert!(rho >= 0.0 && rho < g.r_max());
        assert!((rho - (t - 6.0).max(0.0)).abs() <= 1e-12);
    }
    for &(t, mm) in &rf.mismatch_series {
        assert!(mm <= 1e-6, "t={t}: mismatch {mm}");
    }

    let t_ref = rf.radiation_state.time;
    let snap = traj
        .snapshots
        .iter()
        .find(|s| (s.time - t_ref).abs() < 1e-9)
        .unwrap();
    let diff = snap.axpy(-1.0, &rf.radiation_state).unwrap();
    assert!(e_norm(&diff).unwrap() <= 1e-6);
}

#[test]
fn radiation_extraction_checks_its_preconditions() {
    let g = Arc::new(make_grid(20.0, 256, Grading::Uniform, 1).unwrap());
    let zero = FieldState::zero(g.clone());
    let control = StepControl::default();
    let mk = |class: (i32, i32), termination: Termination| {
        let states: Vec<FieldState> = (0..6)
            .map(|j| {
                let mut s = zero.clone();
                s.class = class;
                s.time = j as f64;
                s
            })
            .collect();
        traj_from(states, termination)
    };
    // Needs a completed run.
    let early = mk((0, 0), Termination::EnergyCapHit);
    assert!(extract_radiation_global(&early, |_| 1.0, &control).is_err());
    // Needs class (0, m).
    let wound = mk((1, 1), Termination::ReachedTFinal);
    assert!(extract_radiation_global(&wound, |_| 1.0, &control).is_err());
    // The matching radius must stay on the grid.
    let ok = mk((0, 0), Termination::ReachedTFinal);
    assert!(extract_radiation_global(&ok, |_| -50.0, &control).is_err());
}

#[test]
fn settled_exteriors_average_into_an_exact_static_profile() {
    // Snapshots are a fixed background plus a shrinking interior piece
    // supported inside r < 0.5·(2 − t); everything the averaging cone sees
    // is the background, so the profile and the exterior mismatches are
    // exact, and the concentration-time estimate brackets the collapse.
    let g = geo_grid(1e-3, 10.0, 512, 1);
    let h: Vec<f64> = g.nodes().iter().map(|&r| 0.3 * gauss(r, 4.0, 1.5)).collect();
    let times: Vec<f64> = (0..15).map(|j| j as f64 * 0.125).collect();
    let snaps: Vec<FieldState> = times
        .iter()
        .map(|&t| {
            let rho = 0.5 * (2.0 - t);
            let psi: Vec<f64> = g
                .nodes()
                .iter()
                .zip(&h)
                .map(|(&r, &hv)| {
                    let x = r / rho;
                    let p = if x < 1.0 {
                        2.0 * (4.0 * x * (1.0 - x)).powi(3)
                    } else {
                        0.0
                    };
                    hv + p
                })
                .collect();
            FieldState::new(g.clone(), psi, vec![0.0; g.len()], (0, 0), t).unwrap()
        })
        .collect();
    let traj = traj_from(snaps, Termination::BlowupUnderresolved);

    let (t_hat, band) = estimate_t_plus(&traj).unwrap();
    assert!((2.0..2.6).contains(&t_hat), "{t_hat}");
    assert!(band > 0.0 && band < 0.5);

    let rf = extract_blowup_profile(&traj, 2.0).unwrap();
    assert_eq!(rf.kind, RadiationKind::StaticProfile);
    assert_eq!(rf.t_plus.unwrap(), (t_hat, band));
    for (j, &r) in g.nodes().iter().enumerate() {
        if r >= 0.13 {
            assert!(
                (rf.radiation_state.psi[j] - h[j]).abs() <= 1e-12,
                "r={r}"
            );
        }
    }
    assert!(rf.mismatch_series.len() >= 5);
    for &(t, mm) in &rf.mismatch_series {
        assert!(mm <= 1e-12, "t={t}: {mm}");
    }

    assert!(extract_blowup_profile(&traj, 1.0).is_err(), "cone factor must exceed 1");
    let short = traj_from(traj.snapshots[..4].to_vec(), Termination::BlowupUnderresolved);
    assert!(extract_blowup_profile(&short, 2.0).is_err(), "needs 5 late snapshots");
}

#[test]
fn concentration_time_is_estimated_only_from_shrinking_scales() {
    let g = geo_grid(1e-3, 20.0, 512, 1);
    let mk = |times: &[f64], lam: &dyn Fn(f64) -> f64| {
        let snaps: Vec<FieldState> = times
            .iter()
            .map(|&t| {
                let psi: Vec<f64> = g.nodes().iter().map(|&r| q_eval(lam(t), 1, r)).collect();
                FieldState::new(g.clone(), psi, vec![0.0; g.len()], (0, 1), t).unwrap()
            })
            .collect();
        traj_from(snaps, Termination::ReachedTFinal)
    };
    let times: Vec<f64> = (0..16).map(|j| j as f64 * 0.1).collect();

    // Exponential shrinking: lnλ slope is exactly -2, so the estimate is
    // t_last + 1/2 with the band floored at half the sample gap.
    let shrinking = mk(&times, &|t| 0.5 * (-2.0 * t).exp());
    let (t_hat, band) = estimate_t_plus(&shrinking).unwrap();
    assert!((t_hat - 2.0).abs() <= 1e-4, "{t_hat}");
    assert!((band - 0.05).abs() <= 1e-9, "{band}");

    // Growing scales, too few samples, and never-crossing fields give None.
    assert!(estimate_t_plus(&mk(&times, &|t| 0.5 * (1.0 + t))).is_none());
    assert!(estimate_t_plus(&mk(&times[..1], &|_| 0.5)).is_none());
    let tiny: Vec<FieldState> = times
        .iter()
        .map(|&t| {
            let psi = vec![0.1; g.len()];
            FieldState::new(g.clone(), psi, vec![0.0; g.len()], (0, 0), t).unwrap()
        })
        .collect();
    assert!(estimate_t_plus(&traj_from(tiny, Termination::ReachedTFinal)).is_none());
}

#[test]
fn tracked_scales_follow_a_shrinking_pair() {
    let g = geo_grid(1e-3, 50.0, 1024, 1);
    let times: Vec<f64> = (0..5).map(|j| j as f64 * 0.25).collect();
    let traj = traj_from(pair_snapshots(&g, 1.0, 0.2, &times), Termination::ReachedTFinal);
    let series = track_scales(&traj, None).unwrap();
    assert_eq!(series.iota, 1);
    assert_eq!(series.samples.len(), times.len());
    for s in &series.samples {
        let want = 0.2 * (-s.time).exp();
        assert!(s.fit.converged);
        assert!(
            (s.fit.lambda - want).abs() <= 1e-6 * want,
            "t={}: {} vs {want}",
            s.time,
            s.fit.lambda
        );
        assert!((s.fit.mu - 1.0).abs() <= 1e-6);
    }

    // The mirrored family is tracked with the opposite sign, same scales.
    let neg = traj_from(pair_snapshots(&g, -1.0, 0.2, &times), Termination::ReachedTFinal);
    let series_n = track_scales(&neg, None).unwrap();
    assert_eq!(series_n.iota, -1);
    for (a, b) in series.samples.iter().zip(&series_n.samples) {
        assert_eq!(a.fit.lambda, b.fit.lambda);
        assert_eq!(a.fit.mu, b.fit.mu);
    }
}

#[test]
fn identical_snapshots_track_to_identical_scales() {
    let g = geo_grid(1e-3, 50.0, 1024, 1);
    let base = &pair_snapshots(&g, 1.0, 0.2, &[0.0])[0];
    let snaps: Vec<FieldState> = (0..3)
        .map(|j| {
            let mut s = base.clone();
            s.time = j as f64;
            s
        })
        .collect();
    let series = track_scales(&traj_from(snaps, Termination::ReachedTFinal), None).unwrap();
    let lams: Vec<f64> = series.samples.iter().map(|s| s.fit.lambda).collect();
    let spread = lams.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - lams.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(spread <= 1e-6 * lams[0], "{lams:?}");
}

#[test]
fn tracking_requires_enough_trivial_class_snapshots() {
    let g = geo_grid(1e-3, 50.0, 256, 1);
    let one = traj_from(pair_snapshots(&g, 1.0, 0.2, &[0.0]), Termination::ReachedTFinal);
    assert!(track_scales(&one, None).is_err());

    let psi: Vec<f64> = g.nodes().iter().map(|&r| q_eval(1.0, 1, r)).collect();
    let bubble = FieldState::new(g.clone(), psi, vec![0.0; g.len()], (0, 1), 0.0).unwrap();
    let mut later = bubble.clone();
    later.time = 1.0;
    let wound = traj_from(vec![bubble, later], Termination::ReachedTFinal);
    assert!(track_scales(&wound, None).is_err());
}

#[test]
fn static_radiation_is_subtracted_before_fitting() {
    let g = geo_grid(1e-3, 50.0, 1024, 1);
    let times: Vec<f64> = (0..4).map(|j| j as f64 * 0.25).collect();
    let h: Vec<f64> = g.nodes().iter().map(|&r| 0.2 * gauss(r, 10.0, 2.0)).collect();
    let snaps: Vec<FieldState> = pair_snapshots(&g, 1.0, 0.2, &times)
        .into_iter()
        .map(|mut s| {
            for (v, b) in s.psi.iter_mut().zip(&h) {
                *v += b;
            }
            s
        })
        .collect();
    let traj = traj_from(snaps, Termination::ReachedTFinal);
    let rad = RadiationFit {
        kind: RadiationKind::StaticProfile,
        radiation_state: FieldState::new(g.clone(), h, vec![0.0; g.len()], (0, 0), 0.0).unwrap(),
        cutoff_series: vec![],
        mismatch_series: vec![],
        t_plus: None,
    };
    let series = track_scales(&traj, Some(&rad)).unwrap();
    for s in &series.samples {
        let want = 0.2 * (-s.time).exp();
        assert!(
            (s.fit.lambda - want).abs() <= 1e-6 * want,
            "t={}: {} vs {want}",
            s.time,
            s.fit.lambda
        );
        assert!(s.fit.residual_sq <= 1e-12);
    }
}

#[test]
fn energy_budget_balances_an_exact_pair() {
    let g = geo_grid(1e-4, 1e4, 16384, 2);
    let psi: Vec<f64> = g
        .nodes()
        .iter()
        .map(|&r| q_eval(0.01, 2, r) - q_eval(1.0, 2, r))
        .collect();
    let s = FieldState::new(g.clone(), psi, vec![0.0; g.len()], (0, 0), 0.0).unwrap();
    let fit = BubbleFit {
        sign: 1,
        lambda: 0.01,
        mu: 1.0,
        residual_sq: 0.0,
        separation_term: 1e-4,
        d_value: 1e-4,
        converged: true,
    };
    let b = energy_budget(&s, &fit, None).unwrap();
    assert_eq!(b.bubble_pair, 16.0 * PI);
    assert!(b.radiation_is_exterior);
    assert!(b.radiation_energy >= 0.0 && b.radiation_energy <= 1e-4);
    assert!(
        b.deficit.abs() <= 0.01 * b.bubble_pair,
        "deficit {} of {}",
        b.deficit,
        b.bubble_pair
    );
    assert_eq!(b.deficit, b.total - b.bubble_pair - b.radiation_energy);

    // Empty field: the whole pair energy is missing, exactly.
    let zero = FieldState::zero(g.clone());
    let bz = energy_budget(&zero, &fit, None).unwrap();
    assert_eq!(bz.deficit, -16.0 * PI);

    // An explicit radiation state is scored by its own energy.
    let rad_psi: Vec<f64> = g.nodes().iter().map(|&r| 0.1 * gauss(r, 50.0, 10.0)).collect();
    let rad = FieldState::new(g.clone(), rad_psi, vec![0.0; g.len()], (0, 0), 0.0).unwrap();
    let br = energy_budget(&s, &fit, Some(&rad)).unwrap();
    assert!(!br.radiation_is_exterior);
    assert_eq!(br.radiation_energy, energy(&rad).unwrap().total);
}

#[test]
fn classifier_certifies_a_global_two_bubble_run() {
    let g = geo_grid(1e-6, 50.0, 1024, 1);
    let times: Vec<f64> = (0..13).map(|j| j as f64 * 0.5).collect();
    let traj = traj_from(pair_snapshots(&g, 1.0, 0.05, &times), Termination::ReachedTFinal);
    let series = track_scales(&traj, None).unwrap();
    let rv = classify_outcome(&traj, &series, None, &ClassifierThresholds::default()).unwrap();
    assert_eq!(rv.verdict, Verdict::GlobalTwoBubble);
    assert_eq!(rv.verdict.as_str(), "global_two_bubble");
    assert_eq!(rv.iota, 1);
    assert!(rv.gates.iter().all(|g| g.pass), "{:?}", rv.gates);
    assert!(rv.gates.iter().any(|g| g.name == "global.d_final"));
    let d_final = rv.evidence.d_series.last().unwrap().1;
    assert!(d_final <= 0.01, "{d_final}");
}

#[test]
fn classifier_reports_scattering_for_a_dispersing_run() {
    let g = Arc::new(make_grid(30.0, 512, Grading::Uniform, 1).unwrap());
    let psi: Vec<f64> = g.nodes().iter().map(|&r| 0.3 * gauss(r, 3.0, 1.0)).collect();
    let s = FieldState::new(g.clone(), psi, vec![0.0; g.len()], (0, 0), 0.0).unwrap();
    let traj = evolve(&s, 12.0, &StepControl::default(), 1.0).unwrap();
    assert_eq!(traj.termination, Termination::ReachedTFinal);

    let series = track_scales(&traj, None).unwrap();
    let rv = classify_outcome(&traj, &series, None, &ClassifierThresholds::default()).unwrap();
    assert_eq!(rv.verdict, Verdict::Scattering);
    assert!(rv.gates.iter().all(|g| g.pass), "{:?}", rv.gates);

    // The wave leaves the unit disc and never resembles a bubble pair.
    let d_min = rv
        .evidence
        .d_series
        .iter()
        .map(|p| p.1)
        .fold(f64::INFINITY, f64::min);
    assert!(d_min >= 0.5, "{d_min}");
    let max_int = rv.evidence.interior_series.iter().map(|p| p.1).fold(0.0f64, f64::max);
    let last_int = rv.evidence.interior_series.last().unwrap().1;
    assert!(last_int <= 0.01 * max_int, "{last_int} vs {max_int}");
}

#[test]
fn classifier_reads_one_bubble_collapse_from_the_late_fits() {
    let g = geo_grid(1e-3, 50.0, 1024, 1);
    let times: Vec<f64> = (0..16).map(|j| j as f64 * 0.1).collect();
    let snaps: Vec<FieldState> = times
        .iter()
        .map(|&t| {
            let lam = 0.5 * (-2.0 * t).exp();
            let psi: Vec<f64> = g
                .nodes()
                .iter()
                .map(|&r| q_eval(lam, 1, r) + 0.05 * (-t).exp() * gauss(r, 2.0, 0.5))
                .collect();
            FieldState::new(g.clone(), psi, vec![0.0; g.len()], (0, 1), t).unwrap()
        })
        .collect();
    let traj = traj_from(snaps, Termination::BlowupUnderresolved);

    // Two-scale fits that certify nothing, so the two-bubble gates fail and
    // the classifier falls through to the single-bubble evidence.
    let dummy: Vec<ScaleSample> = times
        .iter()
        .map(|&t| ScaleSample {
            time: t,
            fit: BubbleFit {
                sign: 1,
                lambda: 0.5,
                mu: 1.0,
                residual_sq: 0.25,
                separation_term: 0.25,
                d_value: 0.5,
                converged: true,
            },
        })
        .collect();
    let fits = ScaleSeries { iota: 1, samples: dummy };
    let rv = classify_outcome(&traj, &fits, None, &ClassifierThresholds::default()).unwrap();
    assert_eq!(rv.verdict, Verdict::OneBubbleBlowup);
    assert!(rv.gates.iter().all(|g| g.pass), "{:?}", rv.gates);
    let (t_hat, _) = rv.evidence.t_plus.unwrap();
    assert!((t_hat - 2.0).abs() <= 0.1, "{t_hat}");
    assert!(rv
        .gates
        .iter()
        .any(|g| g.name == "one_bubble.fit_distance_final" && g.value <= 0.1));
}

#[test]
fn classifier_withholds_judgement_when_no_gate_set_passes() {
    let g = Arc::new(make_grid(30.0, 256, Grading::Uniform, 1).unwrap());
    // A static half-amplitude pair: interior energy never leaves (not
    // scattering) and the distance never certifies (not two-bubble).
    let psi: Vec<f64> = g
        .nodes()
        .iter()
        .map(|&r| 0.5 * (q_eval(0.3, 1, r) - q_eval(1.0, 1, r)))
        .collect();
    let base = FieldState::new(g.clone(), psi, vec![0.0; g.len()], (0, 0), 0.0).unwrap();
    let snaps: Vec<FieldState> = (0..4)
        .map(|j| {
            let mut s = base.clone();
            s.time = j as f64;
            s
        })
        .collect();
    let traj = traj_from(snaps, Termination::ReachedTFinal);
    let series = track_scales(&traj, None).unwrap();
    let rv = classify_outcome(&traj, &series, None, &ClassifierThresholds::default()).unwrap();
    assert_eq!(rv.verdict, Verdict::Undetermined);
    assert!(!rv.gates.is_empty() && rv.gates.iter().any(|g| !g.pass));
    assert!(rv.notes.iter().any(|n| n.contains("failing gates")), "{:?}", rv.notes);

    // Terminations outside the taxonomy carry a note and no gates.
    let stalled = traj_from(traj.snapshots.clone(), Termination::StepFloorHit);
    let rv = classify_outcome(&stalled, &series, None, &ClassifierThresholds::default()).unwrap();
    assert_eq!(rv.verdict, Verdict::Undetermined);
    assert!(rv.gates.is_empty());
    assert!(rv.notes.iter().any(|n| n.contains("no outcome gates")), "{:?}", rv.notes);
}
