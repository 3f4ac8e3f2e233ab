//! Field states: sampled (psi, psidot) pairs tied to a grid and a topological
//! class.
//!
//! A class (l, m) field connects psi(0) = l*pi to psi(infinity) = m*pi. The
//! class is carried as metadata and checked against the samples on demand;
//! violating it is a validation failure, not a construction failure, because
//! intermediate algebra (differences, masked fields) routinely leaves the
//! class attached while the samples are reinterpreted.

use std::sync::Arc;

use crate::error::{param_err, Result};
use crate::grid::RadialGrid;

pub const PI: f64 = std::f64::consts::PI;

/// Default tolerance for how far psi may sit from its class value at the
/// ends of the grid.
pub const CLASS_TOL: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct FieldState {
    pub grid: Arc<RadialGrid>,
    pub psi: Vec<f64>,
    pub psidot: Vec<f64>,
    /// (l, m): boundary homotopy data, psi(0) = l*pi and psi(R_max) = m*pi.
    pub class: (i32, i32),
    pub time: f64,
}

impl FieldState {
    pub fn new(
        grid: Arc<RadialGrid>,
        psi: Vec<f64>,
        psidot: Vec<f64>,
        class: (i32, i32),
        time: f64,
    ) -> Result<Self> {
        if psi.len() != grid.len() || psidot.len() != grid.len() {
            return param_err(format!(
                "field length ({}, {}) does not match grid size {}",
                psi.len(),
                psidot.len(),
                grid.len()
            ));
        }
        Ok(FieldState {
            grid,
            psi,
            psidot,
            class,
            time,
        })
    }

    pub fn zero(grid: Arc<RadialGrid>) -> Self {
        let n = grid.len();
        FieldState {
            grid,
            psi: vec![0.0; n],
            psidot: vec![0.0; n],
            class: (0, 0),
            time: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn ell(&self) -> i32 {
        self.class.0
    }

    pub fn m(&self) -> i32 {
        self.class.1
    }

    /// Value psi approaches at the origin.
    pub fn origin_value(&self) -> f64 {
        self.class.0 as f64 * PI
    }

    /// Value psi approaches at the outer boundary.
    pub fn boundary_value(&self) -> f64 {
        self.class.1 as f64 * PI
    }

    /// Checks the samples against the declared class: psi extrapolated to
    /// r = 0 must sit within `tol` of l*pi and psi(r_N) within `tol` of m*pi.
    pub fn validate_class(&self, tol: f64) -> Result<()> {
        let r = self.grid.nodes();
        let n = r.len();
        // Linear extrapolation to the origin from the first two nodes; for
        // k >= 2 the field is flat there and this is exact to O(r^2).
        let slope = (self.psi[1] - self.psi[0]) / (r[1] - r[0]);
        let at_zero = self.psi[0] - slope * r[0];
        let want0 = self.origin_value();
        if (at_zero - want0).abs() > tol {
            return param_err(format!(
                "class ({}, {}): psi extrapolates to {at_zero:.6} at r=0, expected {want0:.6}",
                self.class.0, self.class.1
            ));
        }
        let want1 = self.boundary_value();
        if (self.psi[n - 1] - want1).abs() > tol {
            return param_err(format!(
                "class ({}, {}): psi(R_max) = {:.6}, expected {want1:.6}",
                self.class.0,
                self.class.1,
                self.psi[n - 1]
            ));
        }
        Ok(())
    }

    /// Nodewise linear combination self + scale * other (same grid).
    pub fn axpy(&self, scale: f64, other: &FieldState) -> Result<FieldState> {
        if !self.grid.same_discretization(&other.grid) {
            return param_err("states live on different grids");
        }
        let psi = self
            .psi
            .iter()
            .zip(&other.psi)
            .map(|(a, b)| a + scale * b)
            .collect();
        let psidot = self
            .psidot
            .iter()
            .zip(&other.psidot)
            .map(|(a, b)| a + scale * b)
            .collect();
        Ok(FieldState {
            grid: self.grid.clone(),
            psi,
            psidot,
            class: self.class,
            time: self.time,
        })
    }
}
