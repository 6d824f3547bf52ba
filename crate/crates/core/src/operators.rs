//! Intervention operators and the discretized local operator.
//!
//! The two nonlocal operators act on a value slice `V(t, .)`:
//!
//! ```text
//! sup-op V(x) = max over player-I actions  of  V(x + a) - c(t, a)
//! inf-op V(x) = min over player-II actions of  V(x + a) + chi(t, a)
//! ```
//!
//! Off-node targets are resolved by multilinear interpolation, which keeps
//! both operators monotone; targets outside the domain are clamped to it and
//! the clamping is counted. The local operator
//! `L V = <b, grad V> + 1/2 tr[sigma sigma^T hess V]` uses central second
//! differences and upwind first differences.

use crate::grid::{BoundaryPolicy, Grid};
use crate::model::{CostFamily, ProblemSpec};

/// Value-function samples on one time slice, flat-indexed by grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    pub t: f64,
    pub values: Vec<f64>,
}

impl ValueField {
    pub fn constant(t: f64, value: f64, node_count: usize) -> Self {
        ValueField {
            t,
            values: vec![value; node_count],
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Relative tolerance (in units of dx) below which an out-of-domain target is
/// treated as boundary rounding rather than a genuine clamp.
const CLAMP_EPS: f64 = 1e-9;

/// Multilinear interpolation of node samples at an arbitrary point. Points
/// outside the domain are clamped componentwise; returns whether a genuine
/// clamp (beyond rounding noise) occurred.
pub fn interpolate(grid: &Grid, values: &[f64], point: &[f64]) -> (f64, bool) {
    let dim = grid.dim();
    debug_assert_eq!(point.len(), dim);
    let mut base = 0usize;
    let mut weights = [0.0f64; 8];
    let mut clamped = false;
    let mut frac = [0.0f64; 8];
    debug_assert!(dim <= 8);
    for i in 0..dim {
        let (lo, hi) = grid.bounds()[i];
        let dx = grid.dx()[i];
        let eps = CLAMP_EPS * dx;
        let p = point[i];
        if p < lo - eps || p > hi + eps {
            clamped = true;
        }
        let s = ((p.max(lo).min(hi)) - lo) / dx;
        let max_cell = (grid.nodes_per_dim()[i] - 2) as f64;
        let cell = s.floor().max(0.0).min(max_cell);
        base += (cell as usize) * grid.strides()[i];
        frac[i] = (s - cell).max(0.0).min(1.0);
    }
    // Accumulate over the 2^dim cell corners.
    let corners = 1usize << dim;
    let mut acc = 0.0;
    for c in 0..corners {
        let mut w = 1.0;
        let mut offset = 0usize;
        for i in 0..dim {
            if c & (1 << i) != 0 {
                w *= frac[i];
                offset += grid.strides()[i];
            } else {
                w *= 1.0 - frac[i];
            }
        }
        weights[c] = w;
        acc += w * values[base + offset];
    }
    let _ = weights;
    (acc, clamped)
}

/// Precomputed interpolation stencil for one fixed displacement applied at
/// every node: flat corner bases, corner weights, and clamp flags. The
/// stencil is time-independent, so solver iterations reuse it.
#[derive(Debug, Clone)]
pub(crate) struct DisplacementPlan {
    /// Flat index of the lower cell corner per node.
    base: Vec<usize>,
    /// `2^dim` weights per node, flattened.
    weights: Vec<f64>,
    /// Flat offsets of the `2^dim` cell corners.
    corner_offsets: Vec<usize>,
    /// Whether the displaced target left the domain at this node.
    clamped: Vec<bool>,
}

impl DisplacementPlan {
    pub(crate) fn build(grid: &Grid, displacement: &[f64]) -> Self {
        let dim = grid.dim();
        let nodes = grid.node_count();
        let corners = 1usize << dim;
        let mut corner_offsets = vec![0usize; corners];
        for (c, off) in corner_offsets.iter_mut().enumerate() {
            *off = (0..dim)
                .filter(|i| c & (1 << i) != 0)
                .map(|i| grid.strides()[i])
                .sum();
        }
        let mut base = vec![0usize; nodes];
        let mut weights = vec![0.0f64; nodes * corners];
        let mut clamped = vec![false; nodes];
        let mut coords = vec![0.0f64; dim];
        let mut frac = vec![0.0f64; dim];
        for flat in 0..nodes {
            grid.node_coords(flat, &mut coords);
            let mut b = 0usize;
            let mut cl = false;
            for i in 0..dim {
                let (lo, hi) = grid.bounds()[i];
                let dx = grid.dx()[i];
                let eps = CLAMP_EPS * dx;
                let p = coords[i] + displacement[i];
                if p < lo - eps || p > hi + eps {
                    cl = true;
                }
                let s = ((p.max(lo).min(hi)) - lo) / dx;
                let max_cell = (grid.nodes_per_dim()[i] - 2) as f64;
                let cell = s.floor().max(0.0).min(max_cell);
                b += (cell as usize) * grid.strides()[i];
                frac[i] = (s - cell).max(0.0).min(1.0);
            }
            base[flat] = b;
            clamped[flat] = cl;
            for c in 0..corners {
                let mut w = 1.0;
                for i in 0..dim {
                    w *= if c & (1 << i) != 0 {
                        frac[i]
                    } else {
                        1.0 - frac[i]
                    };
                }
                weights[flat * corners + c] = w;
            }
        }
        DisplacementPlan {
            base,
            weights,
            corner_offsets,
            clamped,
        }
    }

    #[inline]
    fn eval(&self, values: &[f64], flat: usize) -> f64 {
        let corners = self.corner_offsets.len();
        let b = self.base[flat];
        let ws = &self.weights[flat * corners..(flat + 1) * corners];
        let mut acc = 0.0;
        for (c, &w) in ws.iter().enumerate() {
            acc += w * values[b + self.corner_offsets[c]];
        }
        acc
    }

    #[inline]
    fn is_clamped(&self, flat: usize) -> bool {
        self.clamped[flat]
    }
}

/// One player's intervention machinery: the action stencils plus the cost
/// family and optimization sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Sense {
    /// Maximize `V(x + a) - cost`.
    SupMinusCost,
    /// Minimize `V(x + a) + cost`.
    InfPlusCost,
}

#[derive(Debug, Clone)]
pub(crate) struct InterventionPlan {
    plans: Vec<DisplacementPlan>,
    /// Actions in evaluation order (sorted by magnitude then lexicographic,
    /// so the first optimum wins ties).
    actions: Vec<Vec<f64>>,
    /// Maps evaluation order back to the spec's action list order.
    spec_index: Vec<usize>,
    sense: Sense,
}

fn action_sort_key(a: &[f64]) -> (f64, Vec<f64>) {
    let mag = a.iter().map(|x| x * x).sum::<f64>();
    (mag, a.to_vec())
}

impl InterventionPlan {
    pub(crate) fn build(grid: &Grid, actions: &[Vec<f64>], sense: Sense) -> Self {
        let mut order: Vec<usize> = (0..actions.len()).collect();
        order.sort_by(|&i, &j| {
            let (mi, ki) = action_sort_key(&actions[i]);
            let (mj, kj) = action_sort_key(&actions[j]);
            mi.partial_cmp(&mj)
                .unwrap()
                .then_with(|| ki.partial_cmp(&kj).unwrap())
        });
        let sorted: Vec<Vec<f64>> = order.iter().map(|&i| actions[i].clone()).collect();
        let plans = sorted
            .iter()
            .map(|a| DisplacementPlan::build(grid, a))
            .collect();
        InterventionPlan {
            plans,
            actions: sorted,
            spec_index: order,
            sense,
        }
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub(crate) fn spec_index(&self, eval_idx: usize) -> usize {
        self.spec_index[eval_idx]
    }

    /// Evaluates the operator on `values` at slice time `t`. Costs are scaled
    /// by `cost_scale` (1 for the direct equation, `exp(t)` for the
    /// transformed one). Fills `out` and, when given, the per-node optimal
    /// action index (in evaluation order); adds clamp events to `clamps`.
    ///
    /// An empty action list yields the neutral element (`-inf` for the sup
    /// operator, `+inf` for the inf operator): the obstacle never binds.
    pub(crate) fn apply(
        &self,
        values: &[f64],
        t: f64,
        cost: &CostFamily,
        cost_scale: f64,
        out: &mut [f64],
        mut best: Option<&mut [usize]>,
        clamps: &mut u64,
    ) {
        let neutral = match self.sense {
            Sense::SupMinusCost => f64::NEG_INFINITY,
            Sense::InfPlusCost => f64::INFINITY,
        };
        out.fill(neutral);
        if let Some(b) = best.as_deref_mut() {
            b.fill(usize::MAX);
        }
        for (k, plan) in self.plans.iter().enumerate() {
            let signed_cost = match self.sense {
                Sense::SupMinusCost => -cost_scale * cost.eval(t, &self.actions[k]),
                Sense::InfPlusCost => cost_scale * cost.eval(t, &self.actions[k]),
            };
            for flat in 0..out.len() {
                let candidate = plan.eval(values, flat) + signed_cost;
                if plan.is_clamped(flat) {
                    *clamps += 1;
                }
                let better = match self.sense {
                    Sense::SupMinusCost => candidate > out[flat],
                    Sense::InfPlusCost => candidate < out[flat],
                };
                if better {
                    out[flat] = candidate;
                    if let Some(b) = best.as_deref_mut() {
                        b[flat] = k;
                    }
                }
            }
        }
    }
}

/// `sup-op`: best post-impulse value for player I net of cost. Returns the
/// field and the number of clamped target evaluations.
pub fn intervention_sup(field: &ValueField, spec: &ProblemSpec, grid: &Grid) -> (ValueField, u64) {
    let plan = InterventionPlan::build(grid, &spec.actions_i, Sense::SupMinusCost);
    let mut out = vec![0.0; grid.node_count()];
    let mut clamps = 0;
    plan.apply(
        &field.values,
        field.t,
        &spec.cost_i,
        1.0,
        &mut out,
        None,
        &mut clamps,
    );
    (
        ValueField {
            t: field.t,
            values: out,
        },
        clamps,
    )
}

/// `inf-op`: cheapest post-impulse value for player II including the cost
/// paid to player I.
pub fn intervention_inf(field: &ValueField, spec: &ProblemSpec, grid: &Grid) -> (ValueField, u64) {
    let plan = InterventionPlan::build(grid, &spec.actions_ii, Sense::InfPlusCost);
    let mut out = vec![0.0; grid.node_count()];
    let mut clamps = 0;
    plan.apply(
        &field.values,
        field.t,
        &spec.cost_ii,
        1.0,
        &mut out,
        None,
        &mut clamps,
    );
    (
        ValueField {
            t: field.t,
            values: out,
        },
        clamps,
    )
}

/// Discretized `L V` at the slice's own time. Interior nodes use central
/// second differences (with the four-point cross stencil for off-diagonal
/// `sigma sigma^T` entries) and upwind first differences. Boundary handling
/// follows the grid policy: under `NeumannZeroSecond` the second difference
/// is zeroed at the edge and the advection term keeps only an existing upwind
/// neighbor; under `DirichletFrozen` boundary nodes return zero (the solver
/// holds them fixed).
pub fn apply_local_operator(field: &ValueField, spec: &ProblemSpec, grid: &Grid) -> ValueField {
    let dim = grid.dim();
    let n = grid.node_count();
    let t = field.t;
    let v = &field.values;
    let mut out = vec![0.0; n];
    let mut x = vec![0.0; dim];
    let mut idx = vec![0usize; dim];
    let mut b = vec![0.0; dim];
    let mut scratch = vec![0.0; dim * dim];
    let mut a = vec![0.0; dim * dim];
    for flat in 0..n {
        let boundary = grid.is_boundary(flat);
        if boundary && grid.boundary() == BoundaryPolicy::DirichletFrozen {
            continue;
        }
        grid.node_coords(flat, &mut x);
        grid.decode(flat, &mut idx);
        spec.drift_at(t, &x, &mut b);
        spec.diffusion_squared_at(t, &x, &mut scratch, &mut a);
        let mut acc = 0.0;
        for i in 0..dim {
            let dx = grid.dx()[i];
            let stride = grid.strides()[i];
            let at_low = idx[i] == 0;
            let at_high = idx[i] == grid.nodes_per_dim()[i] - 1;
            // Second difference, zeroed at the edge.
            if !at_low && !at_high {
                let second = (v[flat + stride] - 2.0 * v[flat] + v[flat - stride]) / (dx * dx);
                acc += 0.5 * a[i * dim + i] * second;
            }
            // Upwind first difference; only one-sided differences whose
            // neighbor exists and lies upwind contribute at the edges.
            let bi = b[i];
            if bi > 0.0 && !at_high {
                acc += bi * (v[flat + stride] - v[flat]) / dx;
            } else if bi < 0.0 && !at_low {
                acc += bi * (v[flat] - v[flat - stride]) / dx;
            }
            // Cross terms for correlated diffusion, interior only.
            if !at_low && !at_high {
                for j in (i + 1)..dim {
                    let aij = a[i * dim + j];
                    if aij == 0.0 {
                        continue;
                    }
                    if idx[j] == 0 || idx[j] == grid.nodes_per_dim()[j] - 1 {
                        continue;
                    }
                    let sj = grid.strides()[j];
                    let dyj = grid.dx()[j];
                    let cross = (v[flat + stride + sj] + v[flat - stride - sj]
                        - v[flat + stride - sj]
                        - v[flat - stride + sj])
                        / (4.0 * dx * dyj);
                    // a is symmetric: the (i,j) and (j,i) halves together.
                    acc += aij * cross;
                }
            }
        }
        out[flat] = acc;
    }
    ValueField { t, values: out }
}
