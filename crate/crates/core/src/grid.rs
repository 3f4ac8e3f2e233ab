//! Radial grids on (0, R_max] with quadrature against the measure r dr and
//! second-order derivative stencils.
//!
//! Nodes are strictly increasing with r_1 > 0 and r_N = R_max; the origin is
//! never a node. Fields with equivariance degree k behave like l*pi + c r^k
//! near r = 0, so stencils at the first node use a ghost node at -r_1 whose
//! value comes from the parity extension of (f - offset): odd for k odd, even
//! for k even.
//!
//! Quadrature weights are interpolatory: local parabolas through node triples
//! are integrated exactly against r dr (adjacent parabolas averaged on
//! interior segments), so the rule is exact for quadratics over [r_1, R_max].
//! The sliver (0, r_1] assigns its exact r dr mass to the first node, which
//! keeps every weight positive on graded grids and constants exact on the
//! whole domain: sum(w) = R_max^2/2 to rounding.

use crate::error::{param_err, CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Grading {
    Uniform,
    /// Consecutive node ratio r_i / r_{i+1}; must lie in (0, 1).
    Geometric { ratio: f64 },
}

#[derive(Debug, Clone)]
pub struct RadialGrid {
    k: u32,
    r_max: f64,
    grading: Grading,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    min_spacing: f64,
    /// Cell faces between consecutive nodes (midpoints), length n - 1. The
    /// origin and r = R_max close the first and last cell.
    faces: Vec<f64>,
    /// Lumped cell volumes r_i * (cell width) for the measure r dr. Lumping
    /// (rather than the exact integral) makes the flux-form Laplacian exact
    /// on linear profiles at the first node.
    cell_volumes: Vec<f64>,
}

/// Smallest first node allowed relative to R_max. Below this, fourth powers
/// of nodes (used by the weight moments) lose all precision.
const MIN_RELATIVE_NODE: f64 = 1e-70;

pub fn make_grid(r_max: f64, n: usize, grading: Grading, k: u32) -> Result<RadialGrid> {
    if !(r_max.is_finite() && r_max > 0.0) {
        return param_err(format!("R_max must be positive and finite, got {r_max}"));
    }
    if n < 16 {
        return param_err(format!("grid needs at least 16 nodes, got {n}"));
    }
    if k < 1 {
        return param_err("equivariance degree k must be at least 1");
    }

    let nodes = match grading {
        Grading::Uniform => {
            let h = r_max / n as f64;
            let mut v: Vec<f64> = (1..=n).map(|i| i as f64 * h).collect();
            v[n - 1] = r_max;
            v
        }
        Grading::Geometric { ratio } => {
            if !(ratio.is_finite() && ratio > 0.0 && ratio < 1.0) {
                return param_err(format!("geometric ratio must lie in (0, 1), got {ratio}"));
            }
            let mut v = vec![0.0; n];
            v[n - 1] = r_max;
            for i in (0..n - 1).rev() {
                v[i] = v[i + 1] * ratio;
            }
            if v[0] < r_max * MIN_RELATIVE_NODE {
                return param_err(format!(
                    "geometric grading underflows: r_1 = {} is below {} * R_max",
                    v[0], MIN_RELATIVE_NODE
                ));
            }
            v
        }
    };

    let min_spacing = nodes
        .windows(2)
        .map(|p| p[1] - p[0])
        .fold(2.0 * nodes[0], f64::min);

    let faces: Vec<f64> = nodes.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect();
    let mut cell_volumes = Vec::with_capacity(n);
    cell_volumes.push(nodes[0] * faces[0]);
    for i in 1..n - 1 {
        cell_volumes.push(nodes[i] * (faces[i] - faces[i - 1]));
    }
    cell_volumes.push(nodes[n - 1] * (r_max - faces[n - 2]));

    let mut grid = RadialGrid {
        k,
        r_max,
        grading,
        nodes,
        weights: Vec::new(),
        min_spacing,
        faces,
        cell_volumes,
    };
    grid.weights = grid.window_weights(0.0, r_max)?;
    debug_assert!(grid.weights.iter().all(|&w| w > 0.0));
    Ok(grid)
}

impl RadialGrid {
    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn grading(&self) -> Grading {
        self.grading
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Smallest scale the stencils resolve: min of node spacings and 2 r_1
    /// (the first node's stencil reaches its ghost at -r_1).
    pub fn min_spacing(&self) -> f64 {
        self.min_spacing
    }

    /// Node spacing around index i (distance to the nearer neighbour).
    pub fn spacing_at(&self, i: usize) -> f64 {
        let n = self.nodes.len();
        if i == 0 {
            self.nodes[1] - self.nodes[0]
        } else if i == n - 1 {
            self.nodes[n - 1] - self.nodes[n - 2]
        } else {
            (self.nodes[i] - self.nodes[i - 1]).min(self.nodes[i + 1] - self.nodes[i])
        }
    }

    /// True when the other grid has identical nodes and degree, bit for bit.
    pub fn same_discretization(&self, other: &RadialGrid) -> bool {
        self.k == other.k && self.nodes == other.nodes
    }

    /// integral of f against r dr over (0, R_max].
    ///
    /// Non-finite samples are a numeric error carrying the first bad index.
    pub fn integrate(&self, f: &[f64]) -> Result<f64> {
        self.check_samples(f)?;
        Ok(self.weights.iter().zip(f).map(|(w, v)| w * v).sum())
    }

    /// Integral of f against r dr over [lo, hi] subset of [0, R_max].
    ///
    /// Windows clip the same segment rule used by `integrate`, so
    /// window integrals over complementary intervals sum to the full one.
    pub fn integrate_window(&self, f: &[f64], lo: f64, hi: f64) -> Result<f64> {
        self.check_samples(f)?;
        let w = self.window_weights(lo, hi)?;
        Ok(w.iter().zip(f).map(|(w, v)| w * v).sum())
    }

    fn check_samples(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.nodes.len() {
            return param_err(format!(
                "sample count {} does not match grid size {}",
                f.len(),
                self.nodes.len()
            ));
        }
        if let Some(i) = f.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::Numeric {
                what: format!("non-finite sample {}", f[i]),
                index: Some(i),
            });
        }
        Ok(())
    }

    /// Per-node weights for integration against r dr restricted to [lo, hi].
    pub fn window_weights(&self, lo: f64, hi: f64) -> Result<Vec<f64>> {
        if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi > self.r_max || lo >= hi {
            return param_err(format!(
                "window [{lo}, {hi}] must satisfy 0 <= lo < hi <= R_max = {}",
                self.r_max
            ));
        }
        let x = &self.nodes;
        let n = x.len();
        let mut w = vec![0.0; n];

        // The sliver (0, r_1] carries its exact r dr mass on the first node.
        // On graded grids r_1 spans many local spacings, so a parabola fitted
        // at the first three nodes extrapolates wildly there and can drive
        // weights negative; the one-node rule is positive, exact for
        // constants, and its O(r_1^3) defect is far below stencil error.
        {
            let u = lo.max(0.0);
            let v = hi.min(x[0]);
            if v > u {
                w[0] += 0.5 * (v * v - u * u);
            }
        }

        let mut clip_add = |seg_lo: f64, seg_hi: f64, idx: [usize; 3], factor: f64| {
            let u = seg_lo.max(lo);
            let v = seg_hi.min(hi);
            if v > u {
                add_parabola(&mut w, x, idx, u, v, factor);
            }
        };

        clip_add(x[0], x[1], [0, 1, 2], 1.0);
        for j in 1..n - 2 {
            clip_add(x[j], x[j + 1], [j - 1, j, j + 1], 0.5);
            clip_add(x[j], x[j + 1], [j, j + 1, j + 2], 0.5);
        }
        clip_add(x[n - 2], x[n - 1], [n - 3, n - 2, n - 1], 1.0);
        Ok(w)
    }

    /// First radial derivative, second order in the interior, one-sided at
    /// r_N. `origin_offset` is the value f tends to at r = 0 (l*pi for fields
    /// in class l); f - origin_offset is extended with parity (-1)^k.
    pub fn d_r(&self, f: &[f64], origin_offset: f64) -> Result<Vec<f64>> {
        self.check_samples(f)?;
        let x = &self.nodes;
        let n = x.len();
        let mut out = vec![0.0; n];

        let ghost = self.ghost_value(f, origin_offset);
        out[0] = deriv1(2.0 * x[0], x[1] - x[0], ghost, f[0], f[1]);
        for i in 1..n - 1 {
            out[i] = deriv1(x[i] - x[i - 1], x[i + 1] - x[i], f[i - 1], f[i], f[i + 1]);
        }
        let (g1, g2) = (x[n - 2] - x[n - 3], x[n - 1] - x[n - 2]);
        out[n - 1] = deriv1_onesided(g1, g2, f[n - 3], f[n - 2], f[n - 1]);
        Ok(out)
    }

    /// f'' + f'/r, the radial part of the planar Laplacian on k-equivariant
    /// fields (the angular k^2/r^2 term is left to the caller).
    pub fn radial_laplacian(&self, f: &[f64], origin_offset: f64) -> Result<Vec<f64>> {
        self.check_samples(f)?;
        let x = &self.nodes;
        let n = x.len();
        let mut out = vec![0.0; n];

        let ghost = self.ghost_value(f, origin_offset);
        out[0] = lap_at(2.0 * x[0], x[1] - x[0], ghost, f[0], f[1], x[0]);
        for i in 1..n - 1 {
            out[i] = lap_at(
                x[i] - x[i - 1],
                x[i + 1] - x[i],
                f[i - 1],
                f[i],
                f[i + 1],
                x[i],
            );
        }
        let (g1, g2) = (x[n - 2] - x[n - 3], x[n - 1] - x[n - 2]);
        let d1 = deriv1_onesided(g1, g2, f[n - 3], f[n - 2], f[n - 1]);
        let d2 = deriv2(g1, g2, f[n - 3], f[n - 2], f[n - 1]);
        out[n - 1] = d2 + d1 / x[n - 1];
        Ok(out)
    }

    fn ghost_value(&self, f: &[f64], origin_offset: f64) -> f64 {
        if self.k % 2 == 0 {
            f[0]
        } else {
            2.0 * origin_offset - f[0]
        }
    }

    /// Cell faces (midpoints between consecutive nodes), length n - 1.
    pub fn faces(&self) -> &[f64] {
        &self.faces
    }

    /// Lumped cell volumes r_i * (cell width), length n. They sum to about
    /// R_max^2/2 but are not the interpolatory quadrature weights; they are
    /// the masses under which the flux-form Laplacian is self-adjoint.
    pub fn cell_volumes(&self) -> &[f64] {
        &self.cell_volumes
    }

    /// Conservative flux-form radial Laplacian
    ///     (m_i g_i - m_{i-1} g_{i-1}) / V_i,   g_i = (f_{i+1} - f_i) / h_i,
    /// with zero flux through the origin (the r factor vanishes there) and
    /// through r = R_max. Self-adjoint under the cell-volume inner product,
    /// so flows built from it conserve the face-sampled energies exactly;
    /// second-order pointwise away from the two closure nodes. Needs no
    /// ghost: constants are in its kernel for either parity.
    pub fn laplacian_flux_form(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_samples(f)?;
        let x = &self.nodes;
        let n = x.len();
        let mut out = vec![0.0; n];
        let mut prev = 0.0;
        for i in 0..n - 1 {
            let flux = self.faces[i] * (f[i + 1] - f[i]) / (x[i + 1] - x[i]);
            out[i] = (flux - prev) / self.cell_volumes[i];
            prev = flux;
        }
        out[n - 1] = -prev / self.cell_volumes[n - 1];
        Ok(out)
    }
}

/// integral of (r - x1)(r - x2) r dr over [u, v], evaluated in the centered
/// variable so nearby nodes produce products of small offsets instead of
/// differences of large moments.
fn basis_moment(u: f64, v: f64, x1: f64, x2: f64) -> f64 {
    let c = 0.5 * (u + v);
    let d = 0.5 * (v - u);
    let a1 = c - x1;
    let a2 = c - x2;
    (2.0 / 3.0) * d * d * d * (a1 + a2 + c) + 2.0 * d * a1 * a2 * c
}

fn add_parabola(w: &mut [f64], x: &[f64], idx: [usize; 3], u: f64, v: f64, factor: f64) {
    let [i0, i1, i2] = idx;
    let (x0, x1, x2) = (x[i0], x[i1], x[i2]);
    w[i0] += factor * basis_moment(u, v, x1, x2) / ((x0 - x1) * (x0 - x2));
    w[i1] += factor * basis_moment(u, v, x0, x2) / ((x1 - x0) * (x1 - x2));
    w[i2] += factor * basis_moment(u, v, x0, x1) / ((x2 - x0) * (x2 - x1));
}

/// f' at the middle node of a 3-point stencil with spacings h1, h2.
fn deriv1(h1: f64, h2: f64, f0: f64, f1: f64, f2: f64) -> f64 {
    (h1 / h2 * (f2 - f1) + h2 / h1 * (f1 - f0)) / (h1 + h2)
}

/// f' at the last node of a 3-point stencil (derivative of the interpolating
/// parabola at its right end). Difference form keeps constants exactly flat.
fn deriv1_onesided(g1: f64, g2: f64, f0: f64, f1: f64, f2: f64) -> f64 {
    let s = g1 + g2;
    g2 / (g1 * s) * (f0 - f2) - s / (g1 * g2) * (f1 - f2)
}

/// f'' of the parabola through a 3-point stencil (constant along it).
/// Difference form keeps constants exactly flat even where 1/h² is huge.
fn deriv2(h1: f64, h2: f64, f0: f64, f1: f64, f2: f64) -> f64 {
    let s = h1 + h2;
    2.0 * ((f0 - f1) / (h1 * s) + (f2 - f1) / (h2 * s))
}

fn lap_at(h1: f64, h2: f64, f0: f64, f1: f64, f2: f64, r: f64) -> f64 {
    deriv2(h1, h2, f0, f1, f2) + deriv1(h1, h2, f0, f1, f2) / r
}
