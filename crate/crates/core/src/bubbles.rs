//! The stationary bubble family Q_λ(r) = 2 arctan((r/λ)^k), two-bubble
//! ansatz states, and proximity functionals measuring the distance to the
//! bubble and anti-bubble cones.
//!
//! Scale optimization runs in (log λ, log μ): the energy norm and the
//! separation penalty are both scale-invariant, so the landscape is only
//! well conditioned in multiplicative coordinates. Residuals are measured
//! with the same finite-difference derivative and quadrature as `e_norm`,
//! so an exact ansatz member reaches residual 0 on any grid and fit values
//! are directly comparable with norm evaluations.

use std::sync::Arc;

use crate::error::{param_err, Result};
use crate::grid::RadialGrid;
use crate::state::FieldState;

/// Q_λ(r) = 2 arctan((r/λ)^k). Monotone 0 → π, equal to π/2 at r = λ.
pub fn q_eval(lambda: f64, k: u32, r: f64) -> f64 {
    2.0 * (r / lambda).powi(k as i32).atan()
}

/// dQ_λ/dr. Evaluated from the side with |r/λ| ≤ 1 so large powers never
/// overflow; the r → 0 limit is 2/λ for k = 1 and 0 for k ≥ 2.
pub fn q_prime(lambda: f64, k: u32, r: f64) -> f64 {
    let kk = k as i32;
    let x = r / lambda;
    if x <= 1.0 {
        2.0 * k as f64 / lambda * x.powi(kk - 1) / (1.0 + x.powi(2 * kk))
    } else {
        let t = 1.0 / x;
        2.0 * k as f64 / lambda * t.powi(kk + 1) / (1.0 + t.powi(2 * kk))
    }
}

/// Static bubble (Q_λ, 0) as a class (0, 1) state at time 0.
pub fn bubble_state(grid: &Arc<RadialGrid>, lambda: f64) -> Result<FieldState> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return param_err(format!("bubble scale must be positive, got {lambda}"));
    }
    let k = grid.k();
    let psi = grid.nodes().iter().map(|&r| q_eval(lambda, k, r)).collect();
    FieldState::new(grid.clone(), psi, vec![0.0; grid.len()], (0, 1), 0.0)
}

/// Two-bubble ansatz ι(Q_λ − Q_μ) + background, with ψ̇ taken from the
/// background. Q_λ − Q_μ vanishes at both ends, so the class is the
/// background's (or (0, 0) without one).
pub fn two_bubble_state(
    grid: &Arc<RadialGrid>,
    iota: i32,
    lambda: f64,
    mu: f64,
    background: Option<&FieldState>,
) -> Result<FieldState> {
    if iota != 1 && iota != -1 {
        return param_err(format!("iota must be +1 or -1, got {iota}"));
    }
    if !(lambda > 0.0 && lambda.is_finite() && mu.is_finite()) {
        return param_err(format!("scales must be positive, got ({lambda}, {mu})"));
    }
    if lambda >= mu {
        return param_err(format!(
            "inner scale must be strictly below the outer scale, got lambda = {lambda} >= mu = {mu}"
        ));
    }
    if let Some(bg) = background {
        if !grid.same_discretization(&bg.grid) {
            return param_err("background state lives on a different grid");
        }
    }
    let k = grid.k();
    let s = iota as f64;
    let mut psi: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&r| s * (q_eval(lambda, k, r) - q_eval(mu, k, r)))
        .collect();
    let (psidot, class, time) = match background {
        Some(bg) => {
            for (v, b) in psi.iter_mut().zip(&bg.psi) {
                *v += b;
            }
            (bg.psidot.clone(), bg.class, bg.time)
        }
        None => (vec![0.0; grid.len()], (0, 0), 0.0),
    };
    FieldState::new(grid.clone(), psi, psidot, class, time)
}

/// Result of a one-parameter bubble fit: argmin of ‖ψ − Q_λ‖_ℋ.
#[derive(Debug, Clone, Copy)]
pub struct SingleFit {
    pub lambda: f64,
    /// ‖ψ − Q_λ‖_ℋ at the optimum (not squared).
    pub distance: f64,
    /// False when the scan minimum sat at the domain edge and the result is
    /// only a low-confidence bound.
    pub converged: bool,
}

/// Result of a two-scale fit against ι(Q_λ − Q_μ).
#[derive(Debug, Clone, Copy)]
pub struct BubbleFit {
    pub sign: i32,
    pub lambda: f64,
    pub mu: f64,
    /// ‖𝛙 − ι(Q_λ − Q_μ, 0)‖²_ℰ at the reported scales.
    pub residual_sq: f64,
    /// (λ/μ)^k at the reported scales.
    pub separation_term: f64,
    /// residual_sq + separation_term, summed once so the identity is exact.
    pub d_value: f64,
    pub converged: bool,
}

fn check_sign(sign: i32) -> Result<f64> {
    if sign != 1 && sign != -1 {
        return param_err(format!("sign must be +1 or -1, got {sign}"));
    }
    Ok(sign as f64)
}

fn check_trivial_class(state: &FieldState, what: &str) -> Result<()> {
    if state.class != (0, 0) {
        return param_err(format!(
            "{what} is defined on class (0, 0) states, got ({}, {})",
            state.class.0, state.class.1
        ));
    }
    Ok(())
}

/// ‖ψ − Q_λ‖²_ℋ with the difference sampled on faces and cells, exactly as
/// h_norm would see it.
fn single_objective(state: &FieldState, lambda: f64, diff: &mut [f64]) -> Result<f64> {
    let g = &state.grid;
    let r = g.nodes();
    for i in 0..r.len() {
        diff[i] = state.psi[i] - q_eval(lambda, g.k(), r[i]);
    }
    Ok(crate::functionals::h_sq_raw(g, diff))
}

/// Golden-section minimization on [a, b]; f is assumed unimodal there.
fn golden_min<F: FnMut(f64) -> Result<f64>>(f: &mut F, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..200 {
        if b - a < tol {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Best single-bubble approximation of a class (0, 1) field.
///
/// Seeds at the radius where ψ first crosses π/2 (that radius is λ for an
/// exact bubble), brackets with a coarse log scan, and polishes with
/// golden-section search on log λ. A field that never crosses π/2 falls
/// back to a full-domain scan; a scan minimum pinned to the domain edge is
/// returned flagged unconverged.
pub fn single_bubble_fit(state: &FieldState) -> Result<SingleFit> {
    if state.class != (0, 1) {
        return param_err(format!(
            "single-bubble fit is defined on class (0, 1) fields, got ({}, {})",
            state.class.0, state.class.1
        ));
    }
    let g = &state.grid;
    let r = g.nodes();
    let n = r.len();
    let mut diff = vec![0.0; n];

    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut seed = None;
    for i in 0..n {
        if state.psi[i] >= half_pi {
            seed = Some(if i == 0 {
                r[0]
            } else {
                // Linear interpolation of the crossing radius.
                let t = (half_pi - state.psi[i - 1]) / (state.psi[i] - state.psi[i - 1]);
                r[i - 1] + t * (r[i] - r[i - 1])
            });
            break;
        }
    }

    let full_bracket = (r[0].ln(), g.r_max().ln(), 200usize);
    let mut bracket = match seed {
        Some(s) => (s.ln() - 16f64.ln(), s.ln() + 16f64.ln(), 33usize),
        None => full_bracket,
    };
    let mut scanned_full = seed.is_none();
    let (center, step, edge) = loop {
        let (lo, hi, count) = bracket;
        let step = (hi - lo) / (count - 1) as f64;
        let mut best = (f64::INFINITY, 0usize);
        for j in 0..count {
            let v = single_objective(state, (lo + j as f64 * step).exp(), &mut diff)?;
            if v < best.0 {
                best = (v, j);
            }
        }
        let edge = best.1 == 0 || best.1 == count - 1;
        if edge && !scanned_full {
            // The heuristic bracket missed; rescan the whole domain.
            bracket = full_bracket;
            scanned_full = true;
            continue;
        }
        break (lo + best.1 as f64 * step, step, edge);
    };

    let ln_lambda = if edge {
        center
    } else {
        golden_min(
            &mut |x| single_objective(state, x.exp(), &mut diff),
            center - step,
            center + step,
            1e-10,
        )?
    };
    let lambda = ln_lambda.exp();
    let distance = single_objective(state, lambda, &mut diff)?.max(0.0).sqrt();
    Ok(SingleFit {
        lambda,
        distance,
        converged: !edge,
    })
}

/// Shared evaluation state for the two-scale objective.
struct TwoScaleEval<'a> {
    state: &'a FieldState,
    sign: f64,
    /// ∫ ψ̇² r dr, the scale-independent part of the squared ℰ-distance.
    kin: f64,
    /// Log-scale search box [ln r₁, ln R_max]. Scales pushed past R_max make
    /// the candidate vanish on the grid while (λ/μ)^k can still tend to 0,
    /// a spurious off-grid minimum; candidates are clamped to the box and
    /// the optimizer is steered back by a linear exterior penalty.
    box_lo: f64,
    box_hi: f64,
    diff: Vec<f64>,
}

impl<'a> TwoScaleEval<'a> {
    fn new(state: &'a FieldState, sign: f64) -> Result<Self> {
        let kin = crate::functionals::kin_sq_raw(&state.grid, &state.psidot);
        Ok(TwoScaleEval {
            state,
            sign,
            kin,
            box_lo: state.grid.nodes()[0].ln(),
            box_hi: state.grid.r_max().ln(),
            diff: vec![0.0; state.len()],
        })
    }

    /// Clamps ordered log-scales into the box; returns the clamped pair and
    /// the total log-distance the raw point sat outside.
    fn clamp_logs(&self, a: f64, b: f64) -> (f64, f64, f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let lo_c = lo.clamp(self.box_lo, self.box_hi);
        let hi_c = hi.clamp(self.box_lo, self.box_hi);
        ((lo_c), (hi_c), (lo_c - lo).abs() + (hi_c - hi).abs())
    }

    /// Squared ℰ-distance to ι(Q_λ − Q_μ, 0), the assembled difference
    /// sampled so the value matches e_norm of that difference.
    fn residual_sq(&mut self, lambda: f64, mu: f64) -> Result<f64> {
        let g = &self.state.grid;
        let r = g.nodes();
        let k = g.k();
        for i in 0..r.len() {
            self.diff[i] =
                self.state.psi[i] - self.sign * (q_eval(lambda, k, r[i]) - q_eval(mu, k, r[i]));
        }
        Ok(self.kin + crate::functionals::h_sq_raw(g, &self.diff))
    }

    /// Same residual, with the candidate columns supplied from a table.
    fn residual_sq_tabulated(&mut self, qa: &[f64], qb: &[f64]) -> Result<f64> {
        let g = &self.state.grid;
        let r = g.nodes();
        for i in 0..r.len() {
            self.diff[i] = self.state.psi[i] - self.sign * (qa[i] - qb[i]);
        }
        Ok(self.kin + crate::functionals::h_sq_raw(g, &self.diff))
    }
}

/// Running minimum over every objective evaluation, so the returned fit is
/// never above any point the optimizer visited.
struct BestPoint {
    d: f64,
    residual_sq: f64,
    separation: f64,
    lambda: f64,
    mu: f64,
}

impl BestPoint {
    fn new() -> Self {
        BestPoint {
            d: f64::INFINITY,
            residual_sq: f64::INFINITY,
            separation: f64::INFINITY,
            lambda: f64::NAN,
            mu: f64::NAN,
        }
    }

    fn offer(&mut self, d: f64, residual_sq: f64, separation: f64, lambda: f64, mu: f64) {
        if d < self.d {
            self.d = d;
            self.residual_sq = residual_sq;
            self.separation = separation;
            self.lambda = lambda;
            self.mu = mu;
        }
    }

    fn into_fit(self, sign: i32, converged: bool) -> BubbleFit {
        BubbleFit {
            sign,
            lambda: self.lambda,
            mu: self.mu,
            residual_sq: self.residual_sq,
            separation_term: self.separation,
            d_value: self.d,
            converged,
        }
    }
}

/// Full objective at unordered log-scales: orders the pair, clamps it into
/// the search box, adds the separation penalty, and records the point. The
/// recorded candidate is always the clamped, in-box one; the optimizer sees
/// the penalized value.
fn d_at(eval: &mut TwoScaleEval, best: &mut BestPoint, a: f64, b: f64) -> Result<f64> {
    let (lo, hi, excess) = eval.clamp_logs(a, b);
    let lambda = lo.exp();
    let mu = hi.exp();
    let residual_sq = eval.residual_sq(lambda, mu)?;
    let separation = (lambda / mu).powi(eval.state.grid.k() as i32);
    let d = residual_sq + separation;
    best.offer(d, residual_sq, separation, lambda, mu);
    Ok(d + excess)
}

const NM_TOL: f64 = 1e-6;
const NM_MAX_ITER: usize = 400;

/// Nelder–Mead on two log-scale parameters. Returns whether the simplex
/// diameter dropped below tol within the iteration cap.
fn nelder_mead<F: FnMut(f64, f64) -> Result<f64>>(
    f: &mut F,
    x0: [f64; 2],
    step: f64,
    tol: f64,
    max_iter: usize,
) -> Result<bool> {
    let mut xs = [x0, [x0[0] + step, x0[1]], [x0[0], x0[1] + step]];
    let mut fs = [
        f(xs[0][0], xs[0][1])?,
        f(xs[1][0], xs[1][1])?,
        f(xs[2][0], xs[2][1])?,
    ];
    for _ in 0..max_iter {
        // Order best → worst.
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&i, &j| fs[i].total_cmp(&fs[j]));
        let (b, m, wst) = (idx[0], idx[1], idx[2]);

        let diameter = (0..2)
            .map(|c| {
                let lo = xs.iter().map(|x| x[c]).fold(f64::INFINITY, f64::min);
                let hi = xs.iter().map(|x| x[c]).fold(f64::NEG_INFINITY, f64::max);
                hi - lo
            })
            .fold(0.0, f64::max);
        if diameter < tol {
            return Ok(true);
        }

        let cen = [
            0.5 * (xs[b][0] + xs[m][0]),
            0.5 * (xs[b][1] + xs[m][1]),
        ];
        let refl = [2.0 * cen[0] - xs[wst][0], 2.0 * cen[1] - xs[wst][1]];
        let fr = f(refl[0], refl[1])?;
        if fr < fs[b] {
            let exp = [2.0 * refl[0] - cen[0], 2.0 * refl[1] - cen[1]];
            let fe = f(exp[0], exp[1])?;
            if fe < fr {
                xs[wst] = exp;
                fs[wst] = fe;
            } else {
                xs[wst] = refl;
                fs[wst] = fr;
            }
        } else if fr < fs[m] {
            xs[wst] = refl;
            fs[wst] = fr;
        } else {
            let con = [
                cen[0] + 0.5 * (xs[wst][0] - cen[0]),
                cen[1] + 0.5 * (xs[wst][1] - cen[1]),
            ];
            let fc = f(con[0], con[1])?;
            if fc < fs[wst] {
                xs[wst] = con;
                fs[wst] = fc;
            } else {
                for i in [m, wst] {
                    xs[i] = [
                        xs[b][0] + 0.5 * (xs[i][0] - xs[b][0]),
                        xs[b][1] + 0.5 * (xs[i][1] - xs[b][1]),
                    ];
                    fs[i] = f(xs[i][0], xs[i][1])?;
                }
            }
        }
    }
    Ok(false)
}

const COARSE_POINTS: usize = 48;
const NM_RESTARTS: usize = 3;

/// Two-bubble proximity: approximate inf over λ ≤ μ of
/// ‖𝛙 − ι(Q_λ − Q_μ, 0)‖²_ℰ + (λ/μ)^k.
///
/// Stage 1 scans a 48 × 48 grid over log scales spanning [r₁, R_max];
/// stage 2 polishes with Nelder–Mead restarted from the best few separated
/// cells. Every evaluated point feeds a running minimum, so the returned
/// d_value never exceeds the coarse-grid minimum and always upper-bounds
/// the true infimum.
pub fn proximity(state: &FieldState, sign: i32) -> Result<BubbleFit> {
    check_trivial_class(state, "the proximity functional")?;
    let s = check_sign(sign)?;
    let g = state.grid.clone();
    let mut eval = TwoScaleEval::new(state, s)?;
    let mut best = BestPoint::new();

    let lo = g.nodes()[0].ln();
    let hi = g.r_max().ln();
    let step = (hi - lo) / (COARSE_POINTS - 1) as f64;
    let logs: Vec<f64> = (0..COARSE_POINTS).map(|j| lo + j as f64 * step).collect();
    let cols: Vec<Vec<f64>> = logs
        .iter()
        .map(|&a| {
            let lam = a.exp();
            g.nodes().iter().map(|&r| q_eval(lam, g.k(), r)).collect()
        })
        .collect();

    let mut cells: Vec<(f64, usize, usize)> = Vec::with_capacity(COARSE_POINTS * (COARSE_POINTS + 1) / 2);
    for ja in 0..COARSE_POINTS {
        for jb in ja..COARSE_POINTS {
            let residual_sq = eval.residual_sq_tabulated(&cols[ja], &cols[jb])?;
            let lambda = logs[ja].exp();
            let mu = logs[jb].exp();
            let separation = (lambda / mu).powi(g.k() as i32);
            let d = residual_sq + separation;
            best.offer(d, residual_sq, separation, lambda, mu);
            cells.push((d, ja, jb));
        }
    }
    cells.sort_by(|x, y| x.0.total_cmp(&y.0));

    // Restart from the best cells that are mutually well separated, so a
    // secondary basin is not missed when the coarse minimum is shallow.
    let mut starts: Vec<(usize, usize)> = Vec::new();
    for &(_, ja, jb) in &cells {
        if starts
            .iter()
            .all(|&(pa, pb)| ja.abs_diff(pa).max(jb.abs_diff(pb)) >= 4)
        {
            starts.push((ja, jb));
            if starts.len() == NM_RESTARTS {
                break;
            }
        }
    }

    let mut converged = true;
    for &(ja, jb) in &starts {
        let x0 = [logs[ja], logs[jb]];
        let ok = nelder_mead(
            &mut |a, b| d_at(&mut eval, &mut best, a, b),
            x0,
            0.5 * step,
            NM_TOL,
            NM_MAX_ITER,
        )?;
        converged &= ok;
    }

    // Coordinate polish around the running minimum. A minimum pinned to a
    // box face sits on the clamp kink, where the simplex contracts early;
    // the along-face direction is still smooth and one-dimensional.
    let mut polish_step = step;
    for _ in 0..2 {
        let (la, lb) = (best.lambda.ln(), best.mu.ln());
        golden_min(
            &mut |x| d_at(&mut eval, &mut best, x, lb),
            la - polish_step,
            la + polish_step,
            1e-9,
        )?;
        let (la, lb) = (best.lambda.ln(), best.mu.ln());
        golden_min(
            &mut |x| d_at(&mut eval, &mut best, la, x),
            lb - polish_step,
            lb + polish_step,
            1e-9,
        )?;
        polish_step *= 0.25;
    }
    Ok(best.into_fit(sign, converged))
}

/// Proximity with both signs; the smaller d_value wins (ties go to +1).
pub fn proximity_min(state: &FieldState) -> Result<BubbleFit> {
    let plus = proximity(state, 1)?;
    let minus = proximity(state, -1)?;
    Ok(if plus.d_value <= minus.d_value { plus } else { minus })
}

/// Proximity polish from a known nearby optimum, skipping the coarse scan.
/// The returned d_value never exceeds the objective at the seed.
pub fn proximity_seeded(
    state: &FieldState,
    sign: i32,
    lambda0: f64,
    mu0: f64,
    spread: f64,
) -> Result<BubbleFit> {
    check_trivial_class(state, "the proximity functional")?;
    let s = check_sign(sign)?;
    if !(lambda0 > 0.0 && mu0 > 0.0 && lambda0.is_finite() && mu0.is_finite()) {
        return param_err(format!("seed scales must be positive, got ({lambda0}, {mu0})"));
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return param_err(format!("seed spread must be positive, got {spread}"));
    }
    let mut eval = TwoScaleEval::new(state, s)?;
    let mut best = BestPoint::new();
    let x0 = [lambda0.ln(), mu0.ln()];
    d_at(&mut eval, &mut best, x0[0], x0[1])?;
    let converged = nelder_mead(
        &mut |a, b| d_at(&mut eval, &mut best, a, b),
        x0,
        spread,
        NM_TOL,
        NM_MAX_ITER,
    )?;
    Ok(best.into_fit(sign, converged))
}

/// Minimize the residual alone from a seed, reporting the full fit record
/// at the residual minimizer.
///
/// The separation penalty biases the d-optimal scales toward smaller λ/μ
/// by an amount proportional to (λ/μ)^k; reading scales off the residual
/// minimizer removes that bias, which matters whenever λ(t)/μ(t) has not
/// yet decayed far below the fit tolerance.
pub fn residual_fit(state: &FieldState, sign: i32, lambda0: f64, mu0: f64) -> Result<BubbleFit> {
    check_trivial_class(state, "the proximity functional")?;
    let s = check_sign(sign)?;
    if !(lambda0 > 0.0 && mu0 > 0.0 && lambda0.is_finite() && mu0.is_finite()) {
        return param_err(format!("seed scales must be positive, got ({lambda0}, {mu0})"));
    }
    let mut eval = TwoScaleEval::new(state, s)?;
    let mut best = BestPoint::new();
    let mut res_only = |a: f64, b: f64| -> Result<f64> {
        let (lo, hi, excess) = eval.clamp_logs(a, b);
        let lambda = lo.exp();
        let mu = hi.exp();
        let residual_sq = eval.residual_sq(lambda, mu)?;
        let separation = (lambda / mu).powi(eval.state.grid.k() as i32);
        best.offer(residual_sq, residual_sq, separation, lambda, mu);
        Ok(residual_sq + excess)
    };
    let x0 = [lambda0.ln(), mu0.ln()];
    res_only(x0[0], x0[1])?;
    let converged = nelder_mead(&mut res_only, x0, 0.05, 1e-8, 600)?;
    let residual_sq = best.residual_sq;
    let separation = best.separation;
    Ok(BubbleFit {
        sign,
        lambda: best.lambda,
        mu: best.mu,
        residual_sq,
        separation_term: separation,
        d_value: residual_sq + separation,
        converged,
    })
}

/// Dense reference evaluation of the proximity objective: a resolution ×
/// resolution log-grid over [r₁, R_max] followed by zoomed rescans around
/// the best cell. Slow and allocation-heavy, but built from the public
/// state/norm operations rather than the optimizer's incremental path, so
/// it independently cross-checks `proximity`.
pub fn proximity_scan(
    state: &FieldState,
    sign: i32,
    resolution: usize,
    refine_rounds: usize,
) -> Result<BubbleFit> {
    check_trivial_class(state, "the proximity functional")?;
    let s = check_sign(sign)?;
    if resolution < 2 {
        return param_err(format!("scan resolution must be at least 2, got {resolution}"));
    }
    let g = state.grid.clone();
    let k = g.k();
    let zeros = vec![0.0; g.len()];

    let probe = |la: f64, lb: f64, best: &mut BestPoint| -> Result<()> {
        let (lo, hi) = if la <= lb { (la, lb) } else { (lb, la) };
        let lambda = lo.exp();
        let mu = hi.exp();
        let cand: Vec<f64> = g
            .nodes()
            .iter()
            .map(|&r| s * (q_eval(lambda, k, r) - q_eval(mu, k, r)))
            .collect();
        let cand = FieldState::new(g.clone(), cand, zeros.clone(), (0, 0), state.time)?;
        let diff = state.axpy(-1.0, &cand)?;
        let residual_sq = crate::functionals::e_norm(&diff)?.powi(2);
        let separation = (lambda / mu).powi(k as i32);
        best.offer(residual_sq + separation, residual_sq, separation, lambda, mu);
        Ok(())
    };

    let lo = g.nodes()[0].ln();
    let hi = g.r_max().ln();
    let mut step = (hi - lo) / (resolution - 1) as f64;
    let mut best = BestPoint::new();
    for ja in 0..resolution {
        for jb in ja..resolution {
            probe(lo + ja as f64 * step, lo + jb as f64 * step, &mut best)?;
        }
    }

    for _ in 0..refine_rounds {
        let (ca, cb) = (best.lambda.ln(), best.mu.ln());
        let next_step = step / 4.0;
        for ia in 0..9 {
            for ib in 0..9 {
                // Same scale box as the coarse pass: beyond R_max the
                // candidates vanish off-grid and the objective degenerates.
                probe(
                    (ca + (ia as f64 - 4.0) * next_step).clamp(lo, hi),
                    (cb + (ib as f64 - 4.0) * next_step).clamp(lo, hi),
                    &mut best,
                )?;
            }
        }
        step = next_step;
    }
    Ok(best.into_fit(sign, true))
}
