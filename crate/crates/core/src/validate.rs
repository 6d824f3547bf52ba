//! Standing-assumption checks on a problem instance.
//!
//! Failures are reported, never thrown: each check returns its worst-case
//! margin (nonnegative means pass) and a concrete witness point where the
//! inequality is tightest or violated. Only a structurally malformed spec is
//! rejected up front. Everything runs over deterministic sample lattices, so
//! identical inputs give identical reports.

use serde::Serialize;

use crate::error::ModelError;
use crate::model::ProblemSpec;

/// Lattice densities and thresholds for the checks.
#[derive(Debug, Clone)]
pub struct SamplingParams {
    /// State-box to sample; ordinarily the solver's truncated domain.
    pub state_bounds: Vec<(f64, f64)>,
    pub time_samples: usize,
    pub states_per_dim: usize,
    /// Cap on the observed Lipschitz/growth ratios of the dynamics.
    pub lipschitz_cap: f64,
    /// Required cost floor `k`.
    pub cost_floor: f64,
    /// Required strict-subadditivity margin `h`.
    pub strict_margin: f64,
}

impl SamplingParams {
    pub fn new(state_bounds: Vec<(f64, f64)>, cost_floor: f64, strict_margin: f64) -> Self {
        SamplingParams {
            state_bounds,
            time_samples: 9,
            states_per_dim: 33,
            lipschitz_cap: 1e3,
            cost_floor,
            strict_margin,
        }
    }
}

/// Point at which a check is tightest or violated, with both sides of the
/// inequality so the violation can be reproduced standalone.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Witness {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x2: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub actions: Vec<Vec<f64>>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst-case slack of the inequality; nonnegative on pass.
    pub margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ValidationReport {
    pub overall: bool,
    pub checks: Vec<CheckResult>,
}

/// Slack below which floating-point noise at exact equality still passes.
const EQ_SLACK: f64 = 1e-12;

struct WorstCase {
    margin: f64,
    witness: Option<Witness>,
}

impl WorstCase {
    fn new() -> Self {
        WorstCase {
            margin: f64::INFINITY,
            witness: None,
        }
    }

    /// Records `lhs <= rhs` with slack `rhs - lhs`.
    fn observe(&mut self, slack: f64, witness: Witness) {
        if slack < self.margin {
            self.margin = slack;
            self.witness = Some(witness);
        }
    }

    fn into_check(self, name: &str) -> CheckResult {
        let scale = self
            .witness
            .as_ref()
            .map(|w| w.lhs.abs().max(w.rhs.abs()).max(1.0))
            .unwrap_or(1.0);
        CheckResult {
            name: name.to_string(),
            passed: self.margin >= -EQ_SLACK * scale,
            margin: self.margin,
            witness: self.witness,
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

/// Cartesian product lattice over the state box.
fn state_lattice(bounds: &[(f64, f64)], per_dim: usize) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = bounds
        .iter()
        .map(|&(lo, hi)| linspace(lo, hi, per_dim))
        .collect();
    let mut points = vec![vec![]];
    for axis in &axes {
        let mut next = Vec::with_capacity(points.len() * axis.len());
        for p in &points {
            for &v in axis {
                let mut q = p.clone();
                q.push(v);
                next.push(q);
            }
        }
        points = next;
    }
    points
}

fn vec_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn frobenius(v: &[f64]) -> f64 {
    norm(v)
}

/// Runs every assumption check over deterministic lattices. A structurally
/// malformed spec is rejected; assumption failures are reported.
pub fn validate_assumptions(
    spec: &ProblemSpec,
    params: &SamplingParams,
) -> Result<ValidationReport, ModelError> {
    spec.check_shape()?;
    if params.state_bounds.len() != spec.dim {
        return Err(ModelError::Shape(
            "sampling bounds must match the spec dimension".into(),
        ));
    }
    let times = linspace(0.0, spec.horizon, params.time_samples.max(2));
    let states = state_lattice(&params.state_bounds, params.states_per_dim.max(2));
    let mut checks = Vec::new();

    checks.push(check_actions_wellformed(spec));
    let (lip, growth) = check_h1(spec, params, &times, &states);
    checks.push(lip);
    checks.push(growth);
    checks.push(check_h2(spec, &times, &states));
    checks.push(check_cost_floor(spec, params, &times));
    checks.push(check_subadditivity(spec, &times));
    checks.push(check_no_terminal_impulse(spec, &states));
    checks.push(check_strict_subadditivity(spec, params, &times));

    let overall = checks.iter().all(|c| c.passed);
    Ok(ValidationReport { overall, checks })
}

/// Nonempty, zero-free action lists whose members lie in the declared cones.
fn check_actions_wellformed(spec: &ProblemSpec) -> CheckResult {
    let mut worst = WorstCase::new();
    for (who, actions, cone) in [
        ("player I", &spec.actions_i, &spec.cone_i),
        ("player II", &spec.actions_ii, &spec.cone_ii),
    ] {
        if actions.is_empty() {
            worst.observe(
                -1.0,
                Witness {
                    t: None,
                    x: None,
                    x2: None,
                    actions: vec![],
                    lhs: 0.0,
                    rhs: 1.0,
                },
            );
            continue;
        }
        let _ = who;
        for a in actions {
            let mag = norm(a);
            // Zero-free: magnitude must be strictly positive.
            worst.observe(
                if mag > 0.0 { mag } else { -1.0 },
                Witness {
                    t: None,
                    x: None,
                    x2: None,
                    actions: vec![a.clone()],
                    lhs: 0.0,
                    rhs: mag,
                },
            );
            if !cone.contains(a) {
                worst.observe(
                    -1.0,
                    Witness {
                        t: None,
                        x: None,
                        x2: None,
                        actions: vec![a.clone()],
                        lhs: 1.0,
                        rhs: 0.0,
                    },
                );
            }
        }
    }
    worst.into_check("actions-wellformed")
}

fn check_h1(
    spec: &ProblemSpec,
    params: &SamplingParams,
    times: &[f64],
    states: &[Vec<f64>],
) -> (CheckResult, CheckResult) {
    let n = spec.dim;
    let mut b1 = vec![0.0; n];
    let mut b2 = vec![0.0; n];
    let mut s1 = vec![0.0; n * n];
    let mut s2 = vec![0.0; n * n];
    let mut lip = WorstCase::new();
    let mut growth = WorstCase::new();
    // Pair each lattice point with a strided partner to keep the pair count
    // linear in the lattice size while still spanning the box.
    for &t in times {
        for (i, x) in states.iter().enumerate() {
            spec.drift_at(t, x, &mut b1);
            spec.diffusion_at(t, x, &mut s1);
            let growth_ratio = (frobenius(&s1) + norm(&b1)) / (1.0 + norm(x));
            growth.observe(
                params.lipschitz_cap - growth_ratio,
                Witness {
                    t: Some(t),
                    x: Some(x.clone()),
                    x2: None,
                    actions: vec![],
                    lhs: growth_ratio,
                    rhs: params.lipschitz_cap,
                },
            );
            for stride in [1usize, 7, states.len() / 2 + 1] {
                let j = (i + stride) % states.len();
                if j == i {
                    continue;
                }
                let y = &states[j];
                let dist: f64 = x
                    .iter()
                    .zip(y)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if dist == 0.0 {
                    continue;
                }
                spec.drift_at(t, y, &mut b2);
                spec.diffusion_at(t, y, &mut s2);
                let db: f64 = b1
                    .iter()
                    .zip(&b2)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let ds: f64 = s1
                    .iter()
                    .zip(&s2)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let ratio = (db + ds) / dist;
                lip.observe(
                    params.lipschitz_cap - ratio,
                    Witness {
                        t: Some(t),
                        x: Some(x.clone()),
                        x2: Some(y.clone()),
                        actions: vec![],
                        lhs: ratio,
                        rhs: params.lipschitz_cap,
                    },
                );
            }
        }
    }
    (lip.into_check("h1-lipschitz"), growth.into_check("h1-growth"))
}

/// Boundedness of `f` and `g`: observed samples must be finite and under the
/// family's analytic sup norm.
fn check_h2(spec: &ProblemSpec, times: &[f64], states: &[Vec<f64>]) -> CheckResult {
    let f_sup = spec.running_gain_sup();
    let g_sup = spec.terminal_gain_sup();
    let mut worst = WorstCase::new();
    for x in states {
        let g = spec.terminal_gain_at(x);
        let slack = if g.is_finite() { g_sup - g.abs() } else { -1.0 };
        worst.observe(
            slack,
            Witness {
                t: None,
                x: Some(x.clone()),
                x2: None,
                actions: vec![],
                lhs: g.abs(),
                rhs: g_sup,
            },
        );
        for &t in times {
            let f = spec.running_gain_at(t, x);
            let slack = if f.is_finite() { f_sup - f.abs() } else { -1.0 };
            worst.observe(
                slack,
                Witness {
                    t: Some(t),
                    x: Some(x.clone()),
                    x2: None,
                    actions: vec![],
                    lhs: f.abs(),
                    rhs: f_sup,
                },
            );
        }
    }
    worst.into_check("h2-bounded")
}

/// Cost floor `inf c >= k`, `inf chi >= k`, using the affine family's
/// analytic infimum over the whole cone (approached at vanishing magnitude)
/// plus a sweep over the listed actions.
fn check_cost_floor(spec: &ProblemSpec, params: &SamplingParams, times: &[f64]) -> CheckResult {
    let k = params.cost_floor;
    let mut worst = WorstCase::new();
    for (cost, actions) in [
        (&spec.cost_i, &spec.actions_i),
        (&spec.cost_ii, &spec.actions_ii),
    ] {
        let inf = cost.cone_infimum(spec.horizon);
        worst.observe(
            inf - k,
            Witness {
                t: None,
                x: None,
                x2: None,
                actions: vec![],
                lhs: k,
                rhs: inf,
            },
        );
        for &t in times {
            for a in actions.iter() {
                let v = cost.eval(t, a);
                worst.observe(
                    v - k,
                    Witness {
                        t: Some(t),
                        x: None,
                        x2: None,
                        actions: vec![a.clone()],
                        lhs: k,
                        rhs: v,
                    },
                );
            }
        }
    }
    worst.into_check("h3-cost-floor")
}

/// Subadditivity over all listed action pairs (sums stay in the orthant
/// cones, so no pair is skipped).
fn check_subadditivity(spec: &ProblemSpec, times: &[f64]) -> CheckResult {
    let mut worst = WorstCase::new();
    for (cost, actions, cone) in [
        (&spec.cost_i, &spec.actions_i, &spec.cone_i),
        (&spec.cost_ii, &spec.actions_ii, &spec.cone_ii),
    ] {
        for a1 in actions.iter() {
            for a2 in actions.iter() {
                let sum = vec_add(a1, a2);
                if !cone.contains(&sum) {
                    continue;
                }
                for &t in times {
                    let lhs = cost.eval(t, &sum);
                    let rhs = cost.eval(t, a1) + cost.eval(t, a2);
                    worst.observe(
                        rhs - lhs,
                        Witness {
                            t: Some(t),
                            x: None,
                            x2: None,
                            actions: vec![a1.clone(), a2.clone()],
                            lhs,
                            rhs,
                        },
                    );
                }
            }
        }
    }
    worst.into_check("h3-subadditive")
}

/// No profitable impulse against the terminal payoff:
/// `sup[g(x+a) - c(T,a)] <= g(x) <= inf[g(x+a) + chi(T,a)]`.
fn check_no_terminal_impulse(spec: &ProblemSpec, states: &[Vec<f64>]) -> CheckResult {
    let horizon = spec.horizon;
    let mut worst = WorstCase::new();
    for x in states {
        let g = spec.terminal_gain_at(x);
        for a in &spec.actions_i {
            let lhs = spec.terminal_gain_at(&vec_add(x, a)) - spec.cost_i.eval(horizon, a);
            worst.observe(
                g - lhs,
                Witness {
                    t: Some(horizon),
                    x: Some(x.clone()),
                    x2: None,
                    actions: vec![a.clone()],
                    lhs,
                    rhs: g,
                },
            );
        }
        for a in &spec.actions_ii {
            let rhs = spec.terminal_gain_at(&vec_add(x, a)) + spec.cost_ii.eval(horizon, a);
            worst.observe(
                rhs - g,
                Witness {
                    t: Some(horizon),
                    x: Some(x.clone()),
                    x2: None,
                    actions: vec![a.clone()],
                    lhs: g,
                    rhs,
                },
            );
        }
    }
    worst.into_check("h4-no-terminal-impulse")
}

/// Strict subadditivity with margin `h`:
/// `chi(a1 + a2) <= chi(a1) + chi(a2) - h` over player-II pairs and
/// `c(a1 + e + a2) <= c(a1) - chi(e) + c(a2) - h` over mixed triples whose
/// combination stays in player I's cone (combinations outside it are
/// skipped, the cost being undefined there).
fn check_strict_subadditivity(
    spec: &ProblemSpec,
    params: &SamplingParams,
    times: &[f64],
) -> CheckResult {
    let h = params.strict_margin;
    let mut worst = WorstCase::new();
    for a1 in &spec.actions_ii {
        for a2 in &spec.actions_ii {
            let sum = vec_add(a1, a2);
            if !spec.cone_ii.contains(&sum) {
                continue;
            }
            for &t in times {
                let lhs = spec.cost_ii.eval(t, &sum);
                let rhs = spec.cost_ii.eval(t, a1) + spec.cost_ii.eval(t, a2) - h;
                worst.observe(
                    rhs - lhs,
                    Witness {
                        t: Some(t),
                        x: None,
                        x2: None,
                        actions: vec![a1.clone(), a2.clone()],
                        lhs,
                        rhs,
                    },
                );
            }
        }
    }
    for a1 in &spec.actions_i {
        for e in &spec.actions_ii {
            for a2 in &spec.actions_i {
                let combo = vec_add(&vec_add(a1, e), a2);
                if !spec.cone_i.contains(&combo) {
                    continue;
                }
                for &t in times {
                    let lhs = spec.cost_i.eval(t, &combo);
                    let rhs = spec.cost_i.eval(t, a1) - spec.cost_ii.eval(t, e)
                        + spec.cost_i.eval(t, a2)
                        - h;
                    worst.observe(
                        rhs - lhs,
                        Witness {
                            t: Some(t),
                            x: None,
                            x2: None,
                            actions: vec![a1.clone(), e.clone(), a2.clone()],
                            lhs,
                            rhs,
                        },
                    );
                }
            }
        }
    }
    worst.into_check("h6-strict-subadditive")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        Cone, ConeAxis, CostFamily, DiffusionFamily, DriftFamily, Priority, ProblemSpec,
        RunningGain, TerminalGain,
    };

    fn reference_like() -> ProblemSpec {
        ProblemSpec {
            dim: 1,
            horizon: 1.0,
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
            cost_i: CostFamily::constant(0.3, 1.2),
            cost_ii: CostFamily::constant(0.15, 1.1),
            cone_i: Cone::new(vec![ConeAxis::NonNeg]),
            cone_ii: Cone::new(vec![ConeAxis::NonPos]),
            actions_i: vec![vec![0.25], vec![0.5]],
            actions_ii: vec![vec![-0.25], vec![-0.5]],
            priority: Priority::PlayerII,
        }
    }

    fn params() -> SamplingParams {
        SamplingParams::new(vec![(-2.0, 2.0)], 0.1, 0.05)
    }

    fn check<'r>(report: &'r ValidationReport, name: &str) -> &'r CheckResult {
        report
            .checks
            .iter()
            .find(|c| c.name == name)
            .unwrap_or_else(|| panic!("missing check {name}"))
    }

    #[test]
    fn reference_problem_passes_everything() {
        let report = validate_assumptions(&reference_like(), &params()).unwrap();
        assert!(report.overall, "failing checks: {:?}", report);
        for c in &report.checks {
            assert!(c.passed, "{} failed with margin {}", c.name, c.margin);
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let a = validate_assumptions(&reference_like(), &params()).unwrap();
        let b = validate_assumptions(&reference_like(), &params()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shallow_slope_breaks_no_terminal_impulse_at_minus_one() {
        let mut spec = reference_like();
        spec.cost_i = CostFamily::constant(0.3, 0.5);
        spec.actions_i = vec![vec![0.25], vec![0.5], vec![1.0]];
        let report = validate_assumptions(&spec, &params()).unwrap();
        assert!(!report.overall);
        let c = check(&report, "h4-no-terminal-impulse");
        assert!(!c.passed);
        // Witness: shifting +1 from x = -1 gains g(0) - c(T,1) = 1 - 0.8
        // against g(-1) = 0.
        let w = c.witness.as_ref().unwrap();
        assert!((c.margin + 0.2).abs() < 1e-12, "margin {}", c.margin);
        assert!((w.x.as_ref().unwrap()[0] + 1.0).abs() < 1e-12);
        assert!((w.actions[0][0] - 1.0).abs() < 1e-12);
        // The witness reproduces the violation to machine precision.
        let g_shift = spec.terminal_gain_at(&[w.x.as_ref().unwrap()[0] + w.actions[0][0]]);
        let lhs = g_shift - spec.cost_i.eval(spec.horizon, &w.actions[0]);
        assert_eq!(lhs, w.lhs);
        assert_eq!(spec.terminal_gain_at(w.x.as_ref().unwrap()), w.rhs);
    }

    #[test]
    fn zero_fixed_cost_breaks_the_floor() {
        let mut spec = reference_like();
        spec.cost_ii = CostFamily::constant(0.0, 1.1);
        let report = validate_assumptions(&spec, &params()).unwrap();
        let c = check(&report, "h3-cost-floor");
        assert!(!c.passed);
        assert!((c.margin + 0.1).abs() < 1e-12);
    }

    #[test]
    fn subadditivity_passes_exactly_when_fixed_cost_nonnegative() {
        for (kappa0, expect) in [
            (-0.1, false),
            (-1e-9, false),
            (0.0, true),
            (1e-9, true),
            (0.1, true),
        ] {
            let mut spec = reference_like();
            spec.cost_i = CostFamily::constant(kappa0, 1.2);
            let report = validate_assumptions(&spec, &params()).unwrap();
            let c = check(&report, "h3-subadditive");
            assert_eq!(
                c.passed, expect,
                "kappa0 = {kappa0}: margin {}",
                c.margin
            );
        }
    }

    #[test]
    fn strict_subadditivity_margin_is_checked() {
        let spec = reference_like();
        let report = validate_assumptions(&spec, &params()).unwrap();
        let c = check(&report, "h6-strict-subadditive");
        assert!(c.passed);
        // chi pair bound: 0.15 <= 0.30 - 0.05 with slack 0.10.
        assert!(c.margin <= 0.10 + 1e-12);
        // Demanding a larger margin than the fixed costs allow must fail.
        let mut p = params();
        p.strict_margin = 0.2;
        let report = validate_assumptions(&spec, &p).unwrap();
        assert!(!check(&report, "h6-strict-subadditive").passed);
    }

    #[test]
    fn empty_actions_reported_not_thrown() {
        let mut spec = reference_like();
        spec.actions_ii = vec![];
        let report = validate_assumptions(&spec, &params()).unwrap();
        assert!(!report.overall);
        assert!(!check(&report, "actions-wellformed").passed);
    }

    #[test]
    fn malformed_spec_is_rejected_before_checking() {
        let mut spec = reference_like();
        spec.actions_i = vec![vec![0.25, 0.75]];
        assert!(validate_assumptions(&spec, &params()).is_err());
    }
}
