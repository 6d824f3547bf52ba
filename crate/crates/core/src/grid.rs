//! Truncated space-time lattice and the explicit-scheme stability bound.
//!
//! Node coordinates are always computed by index (`x_min + j * dx`), never by
//! repeated addition, so they are bit-identical across calls. The time step
//! must satisfy the monotonicity (CFL) bound
//!
//! ```text
//! dt <= 1 / sum_i [ (sigma sigma^T)_ii,max / dx_i^2 + |b_i|_max / dx_i ]
//! ```
//!
//! with the maxima taken over grid nodes and sampled times.

use crate::error::GridError;
use crate::model::ProblemSpec;

/// How the scheme treats the artificial domain boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryPolicy {
    /// Zero second difference at the edge; the advection term keeps only the
    /// one-sided difference whose neighbor exists and is upwind.
    NeumannZeroSecond,
    /// Boundary nodes hold their terminal values for all time.
    DirichletFrozen,
}

/// Requested discretization, before stability vetting.
#[derive(Debug, Clone)]
pub struct GridRequest {
    pub bounds: Vec<(f64, f64)>,
    pub nodes_per_dim: Vec<usize>,
    /// `None` derives the step count from the CFL bound.
    pub time_steps: Option<usize>,
    pub boundary: BoundaryPolicy,
}

/// Immutable space-time lattice.
#[derive(Debug, Clone)]
pub struct Grid {
    bounds: Vec<(f64, f64)>,
    nodes_per_dim: Vec<usize>,
    dx: Vec<f64>,
    strides: Vec<usize>,
    node_count: usize,
    time_steps: usize,
    dt: f64,
    horizon: f64,
    boundary: BoundaryPolicy,
    /// Largest action magnitude declared by the spec, for margin diagnostics.
    max_action_magnitude: f64,
    /// Number of (interior node, action) pairs whose target leaves the domain.
    action_exit_pairs: u64,
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn nodes_per_dim(&self) -> &[usize] {
        &self.nodes_per_dim
    }

    pub fn dx(&self) -> &[f64] {
        &self.dx
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn time_steps(&self) -> usize {
        self.time_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn boundary(&self) -> BoundaryPolicy {
        self.boundary
    }

    pub fn max_action_magnitude(&self) -> f64 {
        self.max_action_magnitude
    }

    pub fn action_exit_pairs(&self) -> u64 {
        self.action_exit_pairs
    }

    /// Coordinate of node index `j` along dimension `i`.
    pub fn coord(&self, i: usize, j: usize) -> f64 {
        self.bounds[i].0 + j as f64 * self.dx[i]
    }

    /// Slice time of time index `n`; `time(time_steps) == horizon` exactly.
    pub fn time(&self, n: usize) -> f64 {
        self.horizon * (n as f64 / self.time_steps as f64)
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn decode(&self, flat: usize, idx: &mut [usize]) {
        let mut rem = flat;
        for i in 0..self.dim() {
            idx[i] = rem / self.strides[i];
            rem %= self.strides[i];
        }
    }

    pub fn encode(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.strides)
            .map(|(j, s)| j * s)
            .sum::<usize>()
    }

    /// Writes the coordinates of a flat node index.
    pub fn node_coords(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for i in 0..self.dim() {
            let j = rem / self.strides[i];
            rem %= self.strides[i];
            out[i] = self.coord(i, j);
        }
    }

    pub fn is_boundary(&self, flat: usize) -> bool {
        let mut rem = flat;
        for i in 0..self.dim() {
            let j = rem / self.strides[i];
            rem %= self.strides[i];
            if j == 0 || j == self.nodes_per_dim[i] - 1 {
                return true;
            }
        }
        false
    }

    /// Flat index of the grid node nearest to `x` (componentwise rounding,
    /// clamped into the domain).
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let mut flat = 0;
        for i in 0..self.dim() {
            let s = (x[i] - self.bounds[i].0) / self.dx[i];
            let j = s.round().max(0.0).min((self.nodes_per_dim[i] - 1) as f64) as usize;
            flat += j * self.strides[i];
        }
        flat
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.bounds)
            .all(|(xi, (lo, hi))| *xi >= *lo && *xi <= *hi)
    }
}

/// Evaluates the stability bound for the explicit scheme. Returns whether the
/// grid's `dt` satisfies it together with the bound itself. A degenerate
/// problem (`b = 0`, `sigma = 0`) has an infinite bound.
pub fn check_cfl(spec: &ProblemSpec, grid: &Grid) -> (bool, f64) {
    let dt_max = cfl_dt_max(
        spec,
        &grid.bounds,
        &grid.nodes_per_dim,
        &grid.dx,
        grid.horizon,
    );
    (grid.dt <= dt_max, dt_max)
}

/// Number of time samples used when scanning time-dependent coefficients.
/// The supported families are affine in space and constant in time, so a
/// modest deterministic sweep is exact for them.
const CFL_TIME_SAMPLES: usize = 17;

fn cfl_dt_max(
    spec: &ProblemSpec,
    bounds: &[(f64, f64)],
    nodes_per_dim: &[usize],
    dx: &[f64],
    horizon: f64,
) -> f64 {
    let n = spec.dim;
    let mut x = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut sigma = vec![0.0; n * n];
    let mut a = vec![0.0; n * n];
    let node_count: usize = nodes_per_dim.iter().product();
    let mut denom_max: f64 = 0.0;
    for ts in 0..CFL_TIME_SAMPLES {
        let t = horizon * ts as f64 / (CFL_TIME_SAMPLES - 1) as f64;
        for flat in 0..node_count {
            let mut rem = flat;
            for i in 0..n {
                let stride: usize = nodes_per_dim[i + 1..].iter().product();
                let j = rem / stride;
                rem %= stride;
                x[i] = bounds[i].0 + j as f64 * dx[i];
            }
            spec.drift_at(t, &x, &mut b);
            spec.diffusion_squared_at(t, &x, &mut sigma, &mut a);
            let mut denom = 0.0;
            for i in 0..n {
                denom += a[i * n + i] / (dx[i] * dx[i]) + b[i].abs() / dx[i];
            }
            denom_max = denom_max.max(denom);
        }
    }
    if denom_max > 0.0 {
        1.0 / denom_max
    } else {
        f64::INFINITY
    }
}

/// Builds the lattice, derives `dt` from the CFL bound when no step count is
/// requested, and rejects requested steps that violate it. Also records the
/// action-overflow diagnostics: how many (interior node, action) pairs jump
/// outside the domain and would be clamped by the operators.
pub fn build_grid(spec: &ProblemSpec, request: &GridRequest) -> Result<Grid, GridError> {
    let n = spec.dim;
    if request.bounds.len() != n || request.nodes_per_dim.len() != n {
        return Err(GridError::Request(format!(
            "bounds and nodes_per_dim must have length {n}"
        )));
    }
    for (i, &(lo, hi)) in request.bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(GridError::Request(format!(
                "bounds for dimension {i} must be a nondegenerate finite interval"
            )));
        }
    }
    for (i, &m) in request.nodes_per_dim.iter().enumerate() {
        if m < 3 {
            return Err(GridError::Request(format!(
                "dimension {i} needs at least 3 nodes, got {m}"
            )));
        }
    }
    let dx: Vec<f64> = request
        .bounds
        .iter()
        .zip(&request.nodes_per_dim)
        .map(|(&(lo, hi), &m)| (hi - lo) / (m - 1) as f64)
        .collect();
    let dt_max = cfl_dt_max(
        spec,
        &request.bounds,
        &request.nodes_per_dim,
        &dx,
        spec.horizon,
    );
    let time_steps = match request.time_steps {
        Some(nt) => {
            if nt == 0 {
                return Err(GridError::Request("time_steps must be positive".into()));
            }
            let dt = spec.horizon / nt as f64;
            if dt > dt_max {
                return Err(GridError::CflViolation { dt, dt_max });
            }
            nt
        }
        None => {
            if dt_max.is_finite() {
                (spec.horizon / dt_max).ceil().max(1.0) as usize
            } else {
                1
            }
        }
    };
    let dt = spec.horizon / time_steps as f64;

    let mut strides = vec![0usize; n];
    let mut acc = 1usize;
    for i in (0..n).rev() {
        strides[i] = acc;
        acc *= request.nodes_per_dim[i];
    }
    let node_count = acc;

    let mut grid = Grid {
        bounds: request.bounds.clone(),
        nodes_per_dim: request.nodes_per_dim.clone(),
        dx,
        strides,
        node_count,
        time_steps,
        dt,
        horizon: spec.horizon,
        boundary: request.boundary,
        max_action_magnitude: spec.max_action_magnitude(),
        action_exit_pairs: 0,
    };
    grid.action_exit_pairs = count_action_exits(spec, &grid);
    Ok(grid)
}

fn count_action_exits(spec: &ProblemSpec, grid: &Grid) -> u64 {
    let n = grid.dim();
    let mut x = vec![0.0; n];
    let mut exits = 0u64;
    for flat in 0..grid.node_count() {
        if grid.is_boundary(flat) {
            continue;
        }
        grid.node_coords(flat, &mut x);
        for a in spec.actions_i.iter().chain(spec.actions_ii.iter()) {
            let inside = (0..n).all(|i| {
                let target = x[i] + a[i];
                target >= grid.bounds[i].0 && target <= grid.bounds[i].1
            });
            if !inside {
                exits += 1;
            }
        }
    }
    exits
}
