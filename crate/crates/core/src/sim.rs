//! Monte Carlo verification of a solved game.
//!
//! Paths follow the controlled diffusion by Euler-Maruyama between PDE time
//! slices; at each slice the extracted policy is looked up at the nearest
//! node and at most one impulse is applied (player II's when the node is in
//! both regions, by the extraction rule). The running gain integrates by the
//! left-endpoint rule, impulse costs enter with the payoff's signs (player I
//! pays `c`, receives `chi`), and the terminal payoff closes the account.
//!
//! Paths are independent work units; the reduction runs over fixed-size path
//! chunks combined in index order, so results are bit-identical for any
//! worker count.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::SimError;
use crate::grid::Grid;
use crate::model::ProblemSpec;
use crate::operators::interpolate;
use crate::policy::{PolicyMap, Regime};
use crate::rng::keyed_normal;
use crate::solver::SolveResult;

/// Simulation request.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub paths: u64,
    pub seed: u64,
    /// Euler sub-steps per PDE time step.
    pub substeps: u32,
    pub t0: f64,
    pub x0: Vec<f64>,
}

/// Signed payoff contributions, averaged over paths.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Breakdown {
    pub running_gain: f64,
    /// Player I's impulse costs as they enter the payoff: nonpositive.
    pub player_i_costs: f64,
    /// Player II's impulse costs received by player I: nonnegative.
    pub player_ii_costs: f64,
    pub terminal_gain: f64,
}

/// Monte Carlo estimate of the payoff with diagnostics.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SimReport {
    pub paths: u64,
    pub seed: u64,
    pub j_mean: f64,
    pub j_stderr: f64,
    pub breakdown: Breakdown,
    /// Impulse-count histograms indexed by count.
    pub histogram_i: Vec<u64>,
    pub histogram_ii: Vec<u64>,
    /// Empirical tail frequencies `P[N >= n]` for `n = 1..`, per player.
    pub tail_i: Vec<f64>,
    pub tail_ii: Vec<f64>,
    /// Paths clamped back into the domain at least once, plus total clamps.
    pub escaped_paths: u64,
    pub clamp_events: u64,
}

/// Tail-bound fit: the smallest constant with `tail(n) <= c / n` over all
/// observed counts.
#[derive(Debug, Clone, Serialize)]
pub struct TailFit {
    pub c: f64,
    pub nonincreasing: bool,
    pub rows: Vec<TailRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailRow {
    pub n: usize,
    /// `P[N_I >= n] + P[N_II >= n]`.
    pub tail_sum: f64,
    /// Slack `c/n - tail_sum` under the fitted constant.
    pub margin: f64,
}

/// Monte Carlo estimate of the one-sided dynamic-programming identity.
#[derive(Debug, Clone, Serialize)]
pub struct DppReport {
    pub s: f64,
    pub residual: f64,
    pub stderr: f64,
    /// Mean of gains up to `s` plus the interpolated value there.
    pub mc_mean: f64,
    /// Interpolated `V(t0, x0)`.
    pub v_ref: f64,
    pub paths: u64,
}

struct PathOutcome {
    total: f64,
    running: f64,
    cost_i: f64,
    cost_ii: f64,
    terminal: f64,
    impulses_i: u32,
    impulses_ii: u32,
    escaped: bool,
    clamps: u64,
}

struct ChunkAccum {
    sum: f64,
    sum_sq: f64,
    running: f64,
    cost_i: f64,
    cost_ii: f64,
    terminal: f64,
    hist_i: Vec<u64>,
    hist_ii: Vec<u64>,
    escaped: u64,
    clamps: u64,
    err: Option<SimError>,
}

impl ChunkAccum {
    fn new() -> Self {
        ChunkAccum {
            sum: 0.0,
            sum_sq: 0.0,
            running: 0.0,
            cost_i: 0.0,
            cost_ii: 0.0,
            terminal: 0.0,
            hist_i: Vec::new(),
            hist_ii: Vec::new(),
            escaped: 0,
            clamps: 0,
            err: None,
        }
    }

    fn push(&mut self, p: &PathOutcome) {
        self.sum += p.total;
        self.sum_sq += p.total * p.total;
        self.running += p.running;
        self.cost_i += p.cost_i;
        self.cost_ii += p.cost_ii;
        self.terminal += p.terminal;
        bump(&mut self.hist_i, p.impulses_i as usize);
        bump(&mut self.hist_ii, p.impulses_ii as usize);
        if p.escaped {
            self.escaped += 1;
        }
        self.clamps += p.clamps;
    }

    fn merge(&mut self, other: &ChunkAccum) {
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.running += other.running;
        self.cost_i += other.cost_i;
        self.cost_ii += other.cost_ii;
        self.terminal += other.terminal;
        merge_hist(&mut self.hist_i, &other.hist_i);
        merge_hist(&mut self.hist_ii, &other.hist_ii);
        self.escaped += other.escaped;
        self.clamps += other.clamps;
        if self.err.is_none() {
            self.err = other.err.clone();
        }
    }
}

fn bump(hist: &mut Vec<u64>, count: usize) {
    if hist.len() <= count {
        hist.resize(count + 1, 0);
    }
    hist[count] += 1;
}

fn merge_hist(into: &mut Vec<u64>, from: &[u64]) {
    if into.len() < from.len() {
        into.resize(from.len(), 0);
    }
    for (a, b) in into.iter_mut().zip(from) {
        *a += b;
    }
}

fn tails(hist: &[u64], paths: u64) -> Vec<f64> {
    // tail[k] = P[N >= k+1].
    let max = hist.len();
    let mut out = Vec::new();
    if max <= 1 {
        return out;
    }
    let mut above = 0u64;
    let mut cum = vec![0u64; max];
    for k in (1..max).rev() {
        above += hist[k];
        cum[k] = above;
    }
    for k in 1..max {
        out.push(cum[k] as f64 / paths as f64);
    }
    out
}

/// Snaps `t` to its slice index, requiring it to sit on the time lattice.
fn slice_index_of(grid: &Grid, t: f64, what: &str) -> Result<usize, SimError> {
    let dt = grid.dt();
    let n = (t / dt).round();
    let idx = n.max(0.0).min(grid.time_steps() as f64) as usize;
    if (grid.time(idx) - t).abs() > 1e-9 * grid.horizon().max(1.0) {
        return Err(SimError::Config(format!(
            "{what} = {t} does not lie on the time lattice (dt = {dt})"
        )));
    }
    Ok(idx)
}

fn check_config(
    spec: &ProblemSpec,
    grid: &Grid,
    result: &SolveResult,
    policy: &PolicyMap,
    cfg: &SimConfig,
) -> Result<usize, SimError> {
    if cfg.paths == 0 {
        return Err(SimError::Config("paths must be >= 1".into()));
    }
    if cfg.substeps == 0 {
        return Err(SimError::Config("substeps must be >= 1".into()));
    }
    if cfg.x0.len() != spec.dim {
        return Err(SimError::Config("x0 has the wrong dimension".into()));
    }
    if !grid.contains(&cfg.x0) {
        return Err(SimError::Config("x0 lies outside the grid".into()));
    }
    if result.stack.len() != grid.time_steps() + 1 {
        return Err(SimError::Config(
            "solve result does not match the grid".into(),
        ));
    }
    if policy.slices.len() != result.stack.len() {
        return Err(SimError::Config("policy does not match the stack".into()));
    }
    let n0 = slice_index_of(grid, cfg.t0, "t0")?;
    Ok(n0)
}

/// Walks one path from slice `n0` to slice `n_end`, applying policy impulses
/// at slices `n0 .. n_end-1`, and returns the accumulated gains.
#[allow(clippy::too_many_arguments)]
fn walk_path(
    spec: &ProblemSpec,
    grid: &Grid,
    policy: &PolicyMap,
    cfg: &SimConfig,
    path: u64,
    n0: usize,
    n_end: usize,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<(PathOutcome, Vec<f64>), SimError> {
    let dim = spec.dim;
    let dt = grid.dt();
    let substeps = cfg.substeps as u64;
    let ddt = dt / cfg.substeps as f64;
    let sqrt_ddt = ddt.sqrt();
    let mut x = cfg.x0.clone();
    let mut b = vec![0.0; dim];
    let mut sigma = vec![0.0; dim * dim];
    let mut out = PathOutcome {
        total: 0.0,
        running: 0.0,
        cost_i: 0.0,
        cost_ii: 0.0,
        terminal: 0.0,
        impulses_i: 0,
        impulses_ii: 0,
        escaped: false,
        clamps: 0,
    };
    for n in n0..n_end {
        let t_slice = grid.time(n);
        // Policy lookup at the nearest node; one impulse per slice at most.
        let node = grid.nearest_node(&x);
        let slice = &policy.slices[n];
        let regime = slice.regimes[node];
        match regime {
            Regime::Continue => {}
            Regime::ImpulseI => {
                let a = &spec.actions_i[slice.action_index[node]];
                for i in 0..dim {
                    x[i] += a[i];
                }
                out.cost_i -= spec.cost_i.eval(t_slice, a);
                out.impulses_i += 1;
            }
            Regime::ImpulseII => {
                let a = &spec.actions_ii[slice.action_index[node]];
                for i in 0..dim {
                    x[i] += a[i];
                }
                out.cost_ii += spec.cost_ii.eval(t_slice, a);
                out.impulses_ii += 1;
            }
        }
        clamp_state(grid, &mut x, &mut out);
        if let Some(rows) = trace.as_deref_mut() {
            rows.push(TraceRow {
                t: t_slice,
                state: x.clone(),
                regime: regime.code(),
                action: policy
                    .action_at(spec, n, node)
                    .map(|a| a.to_vec())
                    .unwrap_or_else(|| vec![0.0; dim]),
            });
        }
        for ss in 0..substeps {
            let t_sub = t_slice + ss as f64 * ddt;
            out.running += spec.running_gain_at(t_sub, &x) * ddt;
            spec.drift_at(t_sub, &x, &mut b);
            spec.diffusion_at(t_sub, &x, &mut sigma);
            let step = n as u64 * substeps + ss;
            for i in 0..dim {
                let mut noise = 0.0;
                for k in 0..dim {
                    let z = keyed_normal(cfg.seed, path, step, k as u64);
                    noise += sigma[i * dim + k] * z;
                }
                x[i] += b[i] * ddt + sqrt_ddt * noise;
            }
            if !x.iter().all(|v| v.is_finite()) {
                return Err(SimError::NonFiniteState { path, slice: n });
            }
            clamp_state(grid, &mut x, &mut out);
        }
    }
    Ok((out, x))
}

fn clamp_state(grid: &Grid, x: &mut [f64], out: &mut PathOutcome) {
    for (xi, &(lo, hi)) in x.iter_mut().zip(grid.bounds()) {
        if *xi < lo {
            *xi = lo;
            out.escaped = true;
            out.clamps += 1;
        } else if *xi > hi {
            *xi = hi;
            out.escaped = true;
            out.clamps += 1;
        }
    }
}

const CHUNK: u64 = 4096;

fn run_paths<F>(cfg: &SimConfig, per_path: F) -> Result<ChunkAccum, SimError>
where
    F: Fn(u64) -> Result<PathOutcome, SimError> + Sync,
{
    let chunks = cfg.paths.div_ceil(CHUNK);
    let partials: Vec<ChunkAccum> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = ChunkAccum::new();
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(cfg.paths);
            for path in lo..hi {
                match per_path(path) {
                    Ok(out) => acc.push(&out),
                    Err(e) => {
                        acc.err = Some(e);
                        break;
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = ChunkAccum::new();
    for p in &partials {
        total.merge(p);
    }
    if let Some(e) = total.err {
        return Err(e);
    }
    Ok(total)
}

fn finish_report(cfg: &SimConfig, acc: ChunkAccum) -> SimReport {
    let n = cfg.paths as f64;
    let mean = acc.sum / n;
    let var = if cfg.paths > 1 {
        ((acc.sum_sq - acc.sum * acc.sum / n) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    let stderr = (var / n).sqrt();
    let tail_i = tails(&acc.hist_i, cfg.paths);
    let tail_ii = tails(&acc.hist_ii, cfg.paths);
    SimReport {
        paths: cfg.paths,
        seed: cfg.seed,
        j_mean: mean,
        j_stderr: stderr,
        breakdown: Breakdown {
            running_gain: acc.running / n,
            player_i_costs: acc.cost_i / n,
            player_ii_costs: acc.cost_ii / n,
            terminal_gain: acc.terminal / n,
        },
        histogram_i: acc.hist_i,
        histogram_ii: acc.hist_ii,
        tail_i,
        tail_ii,
        escaped_paths: acc.escaped,
        clamp_events: acc.clamps,
    }
}

/// Estimates the payoff functional under the extracted feedback policies.
pub fn simulate(
    spec: &ProblemSpec,
    grid: &Grid,
    result: &SolveResult,
    policy: &PolicyMap,
    cfg: &SimConfig,
) -> Result<SimReport, SimError> {
    let n0 = check_config(spec, grid, result, policy, cfg)?;
    let n_end = grid.time_steps();
    let acc = run_paths(cfg, |path| {
        let (mut out, x) = walk_path(spec, grid, policy, cfg, path, n0, n_end, None)?;
        out.terminal = spec.terminal_gain_at(&x);
        out.total = out.running + out.cost_i + out.cost_ii + out.terminal;
        Ok(out)
    })?;
    Ok(finish_report(cfg, acc))
}

/// Verifies the tail structure of the impulse counters: empirical tails must
/// be nonincreasing, and the report's smallest `c` with
/// `P[N_I >= n] + P[N_II >= n] <= c / n` is returned with per-`n` margins.
pub fn check_impulse_tail(report: &SimReport) -> TailFit {
    let len = report.tail_i.len().max(report.tail_ii.len());
    let mut rows = Vec::with_capacity(len);
    let mut c: f64 = 0.0;
    let mut nonincreasing = true;
    let mut prev = f64::INFINITY;
    for k in 0..len {
        let t_i = report.tail_i.get(k).copied().unwrap_or(0.0);
        let t_ii = report.tail_ii.get(k).copied().unwrap_or(0.0);
        let sum = t_i + t_ii;
        if sum > prev + 1e-15 {
            nonincreasing = false;
        }
        prev = sum;
        let n = k + 1;
        c = c.max(sum * n as f64);
        rows.push(TailRow {
            n,
            tail_sum: sum,
            margin: 0.0,
        });
    }
    for row in rows.iter_mut() {
        row.margin = c / row.n as f64 - row.tail_sum;
    }
    TailFit {
        c,
        nonincreasing,
        rows,
    }
}

/// Monte Carlo check of the dynamic programming identity at an intermediate
/// slice time `s`: gains accumulated on `[t0, s)` plus `V(s, X_s)` should
/// average to `V(t0, x0)`.
pub fn check_dpp(
    spec: &ProblemSpec,
    grid: &Grid,
    result: &SolveResult,
    policy: &PolicyMap,
    cfg: &SimConfig,
    s: f64,
) -> Result<DppReport, SimError> {
    let n0 = check_config(spec, grid, result, policy, cfg)?;
    let n_s = slice_index_of(grid, s, "s")?;
    if n_s <= n0 {
        return Err(SimError::Config(format!(
            "s = {s} must be a slice time strictly after t0 = {}",
            cfg.t0
        )));
    }
    let stop_slice = &result.stack[n_s];
    let acc = run_paths(cfg, |path| {
        let (mut out, x) = walk_path(spec, grid, policy, cfg, path, n0, n_s, None)?;
        let (v_s, _) = interpolate(grid, &stop_slice.values, &x);
        out.terminal = v_s;
        out.total = out.running + out.cost_i + out.cost_ii + out.terminal;
        Ok(out)
    })?;
    let report = finish_report(cfg, acc);
    let (v_ref, _) = interpolate(grid, &result.stack[n0].values, &cfg.x0);
    Ok(DppReport {
        s,
        residual: report.j_mean - v_ref,
        stderr: report.j_stderr,
        mc_mean: report.j_mean,
        v_ref,
        paths: cfg.paths,
    })
}

/// One row of a per-path trace.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub state: Vec<f64>,
    pub regime: u8,
    pub action: Vec<f64>,
}

/// Re-walks a single path deterministically and returns its slice-by-slice
/// trace; the counter-based generator reproduces exactly the noise the path
/// saw inside [`simulate`].
pub fn trace_path(
    spec: &ProblemSpec,
    grid: &Grid,
    result: &SolveResult,
    policy: &PolicyMap,
    cfg: &SimConfig,
    path: u64,
) -> Result<Vec<TraceRow>, SimError> {
    let n0 = check_config(spec, grid, result, policy, cfg)?;
    let mut rows = Vec::new();
    let _ = walk_path(
        spec,
        grid,
        policy,
        cfg,
        path,
        n0,
        grid.time_steps(),
        Some(&mut rows),
    )?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, BoundaryPolicy, GridRequest};
    use crate::model::{
        Cone, ConeAxis, CostFamily, DiffusionFamily, DriftFamily, Priority, ProblemSpec,
        RunningGain, TerminalGain,
    };
    use crate::policy::extract_policy;
    use crate::solver::{solve_backward, SolveOpts};

    fn quiet_spec() -> ProblemSpec {
        ProblemSpec {
            dim: 1,
            horizon: 0.5,
            drift: DriftFamily::Affine {
                matrix: vec![0.0],
                offset: vec![0.0],
            },
            diffusion: DiffusionFamily::Constant { matrix: vec![0.5] },
            running_gain: RunningGain::Zero,
            terminal_gain: TerminalGain::Hat {
                amplitude: 1.0,
                center: vec![0.0],
                halfwidth: 1.0,
            },
            cost_i: CostFamily::constant(10.0, 0.0),
            cost_ii: CostFamily::constant(10.0, 0.0),
            cone_i: Cone::new(vec![ConeAxis::NonNeg]),
            cone_ii: Cone::new(vec![ConeAxis::NonPos]),
            actions_i: vec![vec![0.25], vec![0.5]],
            actions_ii: vec![vec![-0.25], vec![-0.5]],
            priority: Priority::PlayerII,
        }
    }

    fn solved(
        spec: &ProblemSpec,
    ) -> (crate::grid::Grid, crate::solver::SolveResult, PolicyMap) {
        let grid = build_grid(
            spec,
            &GridRequest {
                bounds: vec![(-2.0, 2.0)],
                nodes_per_dim: vec![81],
                time_steps: None,
                boundary: BoundaryPolicy::NeumannZeroSecond,
            },
        )
        .unwrap();
        let result = solve_backward(spec, &grid, &SolveOpts::default()).unwrap();
        let policy = extract_policy(&result, spec, &grid, 1e-8);
        (grid, result, policy)
    }

    #[test]
    fn start_at_terminal_time_gives_g_exactly() {
        let spec = quiet_spec();
        let (grid, result, policy) = solved(&spec);
        let cfg = SimConfig {
            paths: 100,
            seed: 7,
            substeps: 1,
            t0: spec.horizon,
            x0: vec![0.5],
        };
        let report = simulate(&spec, &grid, &result, &policy, &cfg).unwrap();
        assert_eq!(report.j_mean, spec.terminal_gain_at(&[0.5]));
        assert_eq!(report.j_stderr, 0.0);
        assert!(report.histogram_i[0] == 100);
    }

    #[test]
    fn identical_seeds_give_bit_identical_reports() {
        let spec = quiet_spec();
        let (grid, result, policy) = solved(&spec);
        let cfg = SimConfig {
            paths: 2000,
            seed: 99,
            substeps: 1,
            t0: 0.0,
            x0: vec![0.0],
        };
        let a = simulate(&spec, &grid, &result, &policy, &cfg).unwrap();
        let b = simulate(&spec, &grid, &result, &policy, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn disjoint_seeds_agree_within_monte_carlo_error() {
        let spec = quiet_spec();
        let (grid, result, policy) = solved(&spec);
        let mk = |seed| SimConfig {
            paths: 20_000,
            seed,
            substeps: 1,
            t0: 0.0,
            x0: vec![0.0],
        };
        let a = simulate(&spec, &grid, &result, &policy, &mk(1)).unwrap();
        let b = simulate(&spec, &grid, &result, &policy, &mk(2)).unwrap();
        let spread = (a.j_mean - b.j_mean).abs();
        let combined = (a.j_stderr.powi(2) + b.j_stderr.powi(2)).sqrt();
        assert!(spread <= 3.0 * combined, "spread {spread}, combined {combined}");
    }

    #[test]
    fn breakdown_sums_to_the_mean_and_signs_are_right() {
        let mut spec = quiet_spec();
        // Cheap player II so impulses actually occur.
        spec.cost_ii = CostFamily::constant(0.01, 0.0);
        let (grid, result, policy) = solved(&spec);
        let cfg = SimConfig {
            paths: 5000,
            seed: 5,
            substeps: 1,
            t0: 0.0,
            x0: vec![0.0],
        };
        let report = simulate(&spec, &grid, &result, &policy, &cfg).unwrap();
        let sum = report.breakdown.running_gain
            + report.breakdown.player_i_costs
            + report.breakdown.player_ii_costs
            + report.breakdown.terminal_gain;
        assert!((sum - report.j_mean).abs() < 1e-12);
        assert!(report.breakdown.player_i_costs <= 0.0);
        assert!(report.breakdown.player_ii_costs >= 0.0);
        let total: u64 = report.histogram_i.iter().sum();
        assert_eq!(total, cfg.paths);
    }

    #[test]
    fn doubling_substeps_moves_the_mean_within_noise() {
        let spec = quiet_spec();
        let (grid, result, policy) = solved(&spec);
        let mk = |substeps| SimConfig {
            paths: 20_000,
            seed: 31,
            substeps,
            t0: 0.0,
            x0: vec![0.0],
        };
        let a = simulate(&spec, &grid, &result, &policy, &mk(1)).unwrap();
        let b = simulate(&spec, &grid, &result, &policy, &mk(2)).unwrap();
        let spread = (a.j_mean - b.j_mean).abs();
        let combined = (a.j_stderr.powi(2) + b.j_stderr.powi(2)).sqrt();
        assert!(spread <= 3.0 * combined + 0.01);
    }

    #[test]
    fn all_continue_tails_are_empty_and_c_zero() {
        let spec = quiet_spec();
        let (grid, result, policy) = solved(&spec);
        let cfg = SimConfig {
            paths: 1000,
            seed: 3,
            substeps: 1,
            t0: 0.0,
            x0: vec![0.0],
        };
        let report = simulate(&spec, &grid, &result, &policy, &cfg).unwrap();
        let fit = check_impulse_tail(&report);
        assert!(fit.nonincreasing);
        assert_eq!(fit.c, 0.0);
    }

    #[test]
    fn dpp_at_terminal_time_coincides_with_simulate() {
        let spec = quiet_spec();
        let (grid, result, policy) = solved(&spec);
        let cfg = SimConfig {
            paths: 2000,
            seed: 11,
            substeps: 1,
            t0: 0.0,
            x0: vec![0.0],
        };
        let report = simulate(&spec, &grid, &result, &policy, &cfg).unwrap();
        let dpp = check_dpp(&spec, &grid, &result, &policy, &cfg, spec.horizon).unwrap();
        // The hat payoff is grid-linear, so the interpolated terminal slice
        // evaluates g exactly and the two runs coincide.
        let (v_ref, _) = interpolate(&grid, &result.stack[0].values, &[0.0]);
        assert!((dpp.mc_mean - report.j_mean).abs() < 1e-12);
        assert!((dpp.residual - (report.j_mean - v_ref)).abs() < 1e-12);
    }

    #[test]
    fn single_step_dpp_is_one_step_consistent() {
        let spec = quiet_spec();
        let (grid, result, policy) = solved(&spec);
        let cfg = SimConfig {
            paths: 50_000,
            seed: 17,
            substeps: 1,
            t0: 0.0,
            x0: vec![0.0],
        };
        let s = grid.time(1);
        let dpp = check_dpp(&spec, &grid, &result, &policy, &cfg, s).unwrap();
        // One explicit step of truncation plus the piecewise-linear
        // interpolation of V(s, .) under the one-step noise (O(dx^2 |V''|)
        // at dx = 0.05), plus Monte Carlo error.
        assert!(
            dpp.residual.abs() <= 3.0 * dpp.stderr + 5e-3,
            "residual {} stderr {}",
            dpp.residual,
            dpp.stderr
        );
    }

    #[test]
    fn rejects_bad_configs() {
        let spec = quiet_spec();
        let (grid, result, policy) = solved(&spec);
        let bad_x0 = SimConfig {
            paths: 10,
            seed: 0,
            substeps: 1,
            t0: 0.0,
            x0: vec![5.0],
        };
        assert!(simulate(&spec, &grid, &result, &policy, &bad_x0).is_err());
        let bad_t0 = SimConfig {
            paths: 10,
            seed: 0,
            substeps: 1,
            t0: 0.1234567,
            x0: vec![0.0],
        };
        assert!(simulate(&spec, &grid, &result, &policy, &bad_t0).is_err());
    }

    #[test]
    fn trace_reproduces_the_aggregate_path() {
        let spec = quiet_spec();
        let (grid, result, policy) = solved(&spec);
        let cfg = SimConfig {
            paths: 4,
            seed: 21,
            substeps: 1,
            t0: 0.0,
            x0: vec![0.0],
        };
        let rows = trace_path(&spec, &grid, &result, &policy, &cfg, 2).unwrap();
        assert_eq!(rows.len(), grid.time_steps());
        assert!(rows.iter().all(|r| r.state[0].is_finite()));
    }
}
