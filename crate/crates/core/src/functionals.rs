//! Scalar functionals of field states.
//!
//! Convention: energies carry the 2π factor of the planar area element, so a
//! single bubble has E(Q_lambda) = 4*pi*k. Norms carry no 2π. The squared
//! Sobolev norm ||psi||_H^2 = integral((d_r psi)^2 + k^2 psi^2/r^2) r dr is
//! finite only for fields decaying at both ends, i.e. class (0,0); other
//! classes must pass the constant to subtract.
//!
//! All quadratic functionals sample the gradient on cell faces and the
//! pointwise terms on cells (lumped volumes), the inner product under which
//! the flux-form Laplacian is self-adjoint. The flows therefore conserve
//! these exact sums, not merely their continuum limits: measured drift is
//! pure time-stepping error. Windowed variants assign each face and cell to
//! the window containing it, so complementary windows add up exactly.

use crate::error::{param_err, Result};
use crate::grid::RadialGrid;
use crate::state::FieldState;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Squared H-seminorm of raw samples: Σ_faces m (Δf)²/h + Σ_cells V k²f²/r².
/// The sampling every quadratic functional in this module shares.
pub(crate) fn h_sq_raw(g: &RadialGrid, f: &[f64]) -> f64 {
    let x = g.nodes();
    let m = g.faces();
    let vol = g.cell_volumes();
    let k2 = (g.k() as f64).powi(2);
    let mut acc = 0.0;
    for i in 0..x.len() {
        acc += k2 * vol[i] * f[i] * f[i] / (x[i] * x[i]);
    }
    for i in 0..m.len() {
        let d = f[i + 1] - f[i];
        acc += m[i] * d * d / (x[i + 1] - x[i]);
    }
    acc
}

/// Σ_cells V v², the kinetic part of the squared ℰ-norm.
pub(crate) fn kin_sq_raw(g: &RadialGrid, v: &[f64]) -> f64 {
    g.cell_volumes()
        .iter()
        .zip(v)
        .map(|(vol, u)| vol * u * u)
        .sum()
}

#[derive(Debug, Clone, Copy)]
pub struct EnergyReport {
    pub total: f64,
    pub kinetic: f64,
    pub potential: f64,
}

/// Face/cell sums of the energy components over the window (lo, hi], without
/// the 2π or the one-half: (psidot^2, gradient^2, k^2(psi-c)^2/r^2,
/// k^2 sin^2(psi)/r^2).
fn component_sums(state: &FieldState, lo: f64, hi: f64, c: f64) -> (f64, f64, f64, f64) {
    let g = &state.grid;
    let x = g.nodes();
    let m = g.faces();
    let vol = g.cell_volumes();
    let k2 = (g.k() as f64).powi(2);

    let ca = x.partition_point(|&v| v <= lo);
    let cb = x.partition_point(|&v| v <= hi);
    let (mut kin, mut hardy_lin, mut hardy_sin) = (0.0, 0.0, 0.0);
    for i in ca..cb {
        let v = vol[i];
        kin += v * state.psidot[i] * state.psidot[i];
        let u = state.psi[i] - c;
        let s = state.psi[i].sin();
        let w = k2 * v / (x[i] * x[i]);
        hardy_lin += w * u * u;
        hardy_sin += w * s * s;
    }

    let fa = m.partition_point(|&v| v <= lo);
    let fb = m.partition_point(|&v| v <= hi);
    let mut grad = 0.0;
    for i in fa..fb {
        let d = state.psi[i + 1] - state.psi[i];
        grad += m[i] * d * d / (x[i + 1] - x[i]);
    }

    (kin, grad, hardy_lin, hardy_sin)
}

/// Conserved energy 2π ∫ (ψ̇² + ψ_r² + k² sin²ψ / r²) / 2 · r dr.
pub fn energy(state: &FieldState) -> Result<EnergyReport> {
    let (kin, grad, _, hardy_sin) = component_sums(state, 0.0, f64::INFINITY, 0.0);
    let kinetic = TWO_PI * 0.5 * kin;
    let potential = TWO_PI * 0.5 * (grad + hardy_sin);
    Ok(EnergyReport {
        total: kinetic + potential,
        kinetic,
        potential,
    })
}

/// Energy in the window (lo, hi] (same integrand as `energy`).
pub fn local_energy(state: &FieldState, lo: f64, hi: f64) -> Result<f64> {
    if lo >= hi {
        return if lo == hi {
            Ok(0.0)
        } else {
            param_err(format!("energy window [{lo}, {hi}] is empty"))
        };
    }
    let (kin, grad, _, hardy_sin) = component_sums(state, lo, hi, 0.0);
    Ok(TWO_PI * 0.5 * (kin + grad + hardy_sin))
}

fn require_trivial_class(state: &FieldState, what: &str) -> Result<()> {
    if state.class != (0, 0) {
        return param_err(format!(
            "{what} is defined on class (0,0) fields; got class ({}, {}) — subtract the class \
             constant via the offset variant",
            state.class.0, state.class.1
        ));
    }
    Ok(())
}

/// ||psi||_H for a class (0,0) field.
pub fn h_norm(state: &FieldState) -> Result<f64> {
    require_trivial_class(state, "h_norm")?;
    h_norm_offset(state, 0.0)
}

/// ||psi - c||_H; the caller asserts psi - c decays at both ends.
pub fn h_norm_offset(state: &FieldState, c: f64) -> Result<f64> {
    let (_, grad, hardy, _) = component_sums(state, 0.0, f64::INFINITY, c);
    Ok((grad + hardy).max(0.0).sqrt())
}

/// ||(psi, psidot)||_E for a class (0,0) state.
pub fn e_norm(state: &FieldState) -> Result<f64> {
    require_trivial_class(state, "e_norm")?;
    e_norm_offset(state, 0.0)
}

pub fn e_norm_offset(state: &FieldState, c: f64) -> Result<f64> {
    let (kin, grad, hardy, _) = component_sums(state, 0.0, f64::INFINITY, c);
    Ok((kin + grad + hardy).max(0.0).sqrt())
}

/// Squared localized norm ∫_(lo,hi] (ψ̇² + ψ_r² + k²(ψ−offset)²/r²) r dr.
///
/// Degenerate windows [a, a] evaluate to 0; inverted windows are an error.
/// Complementary windows add up to the full-range value because each face
/// and cell belongs to exactly one of them.
pub fn local_e_norm(state: &FieldState, rho_lo: f64, rho_hi: f64, offset: f64) -> Result<f64> {
    if rho_lo == rho_hi {
        return Ok(0.0);
    }
    if rho_lo > rho_hi {
        return param_err(format!("window [{rho_lo}, {rho_hi}] is empty"));
    }
    let (kin, grad, hardy, _) = component_sums(state, rho_lo, rho_hi, offset);
    Ok(kin + grad + hardy)
}

/// Scale-invariant Strichartz diagnostic
/// ( ∫_[t_lo,t_hi] ( ∫ ψ⁶ r⁻³ dr )^{1/2} dt )^{1/3}
/// over a sequence of snapshots; trapezoid in r and in t, with the endpoint
/// contributions interpolated linearly between bracketing snapshots.
pub fn strichartz_norm(snapshots: &[FieldState], t_lo: f64, t_hi: f64) -> Result<f64> {
    if snapshots.len() < 2 {
        return param_err("Strichartz norm needs at least two snapshots");
    }
    if !(t_lo < t_hi) {
        return param_err(format!("time window [{t_lo}, {t_hi}] is empty"));
    }
    let t0 = snapshots[0].time;
    let t1 = snapshots[snapshots.len() - 1].time;
    let fuzz = 1e-12 * (1.0 + t1.abs());
    if t_lo < t0 - fuzz || t_hi > t1 + fuzz {
        return param_err(format!(
            "window [{t_lo}, {t_hi}] not covered by snapshots spanning [{t0}, {t1}]"
        ));
    }
    for s in snapshots {
        require_trivial_class(s, "strichartz_norm")?;
    }

    // g(t) = sqrt( ∫ ψ⁶ / r³ dr ) at each snapshot time.
    let mut times = Vec::with_capacity(snapshots.len());
    let mut gvals = Vec::with_capacity(snapshots.len());
    for s in snapshots {
        times.push(s.time);
        gvals.push(inner_s_integral(s)?.max(0.0).sqrt());
    }

    let at = |t: f64| -> f64 {
        // linear interpolation of g between snapshot times
        let j = times.partition_point(|&u| u < t).clamp(1, times.len() - 1);
        let (ta, tb) = (times[j - 1], times[j]);
        let w = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        gvals[j - 1] * (1.0 - w) + gvals[j] * w
    };

    let mut total = 0.0;
    let mut prev_t = t_lo;
    let mut prev_g = at(t_lo);
    for j in 0..times.len() {
        if times[j] <= t_lo || times[j] >= t_hi {
            continue;
        }
        total += 0.5 * (times[j] - prev_t) * (gvals[j] + prev_g);
        prev_t = times[j];
        prev_g = gvals[j];
    }
    total += 0.5 * (t_hi - prev_t) * (at(t_hi) + prev_g);
    Ok(total.max(0.0).cbrt())
}

/// ∫ ψ⁶ / r³ dr by plain trapezoid against dr, with the (0, r_1] segment
/// closed using the limit value 0 at the origin (integrand ~ r^{6k−3}).
fn inner_s_integral(state: &FieldState) -> Result<f64> {
    let r = state.grid.nodes();
    let n = r.len();
    let f: Vec<f64> = (0..n)
        .map(|i| state.psi[i].powi(6) / r[i].powi(3))
        .collect();
    if let Some(i) = f.iter().position(|v| !v.is_finite()) {
        return Err(crate::error::CoreError::Numeric {
            what: format!("non-finite Strichartz integrand {}", f[i]),
            index: Some(i),
        });
    }
    let mut total = 0.5 * r[0] * f[0];
    for i in 0..n - 1 {
        total += 0.5 * (r[i + 1] - r[i]) * (f[i] + f[i + 1]);
    }
    Ok(total)
}
