//! Problem config files.
//!
//! A config is structured text with the sections `[problem]`, `[dynamics]`,
//! `[payoffs]`, `[costs]`, `[actions]`, `[solver]`, and `[simulation]`. All
//! numeric fields are decimal, family names come from closed lists, and any
//! unknown key is an error with a field diagnostic.

use serde::Deserialize;

use crate::error::ConfigError;
use crate::grid::{BoundaryPolicy, GridRequest};
use crate::model::{
    Cone, ConeAxis, CostFamily, DiffusionFamily, DriftFamily, Priority, ProblemSpec, RunningGain,
    TerminalGain, TimeModulation,
};
use crate::solver::SolveOpts;
use crate::validate::SamplingParams;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RootConfig {
    problem: ProblemSection,
    dynamics: DynamicsSection,
    payoffs: PayoffsSection,
    costs: CostsSection,
    actions: ActionsSection,
    solver: SolverSection,
    simulation: SimulationSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemSection {
    dim: usize,
    horizon: f64,
    priority: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilySpec {
    family: String,
    matrix: Option<Vec<f64>>,
    offset: Option<Vec<f64>>,
    slope: Option<Vec<f64>>,
    amplitude: Option<f64>,
    center: Option<Vec<f64>>,
    width: Option<f64>,
    halfwidth: Option<f64>,
    omega: Option<f64>,
    wavenumber: Option<Vec<f64>>,
    value: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DynamicsSection {
    drift: FamilySpec,
    diffusion: FamilySpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PayoffsSection {
    running: FamilySpec,
    terminal: FamilySpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostSpec {
    fixed: f64,
    slope: f64,
    modulation: Option<ModulationSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModulationSpec {
    amplitude: f64,
    omega: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostsSection {
    player_i: CostSpec,
    player_ii: CostSpec,
    /// Cost floor `k` the validator enforces.
    floor: f64,
    /// Strict-subadditivity margin `h`.
    margin: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionsSection {
    cone_i: Vec<String>,
    cone_ii: Vec<String>,
    player_i: Vec<Vec<f64>>,
    player_ii: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    bounds_min: Vec<f64>,
    bounds_max: Vec<f64>,
    nodes: Vec<usize>,
    time_steps: Option<usize>,
    boundary: Option<String>,
    fp_tol: Option<f64>,
    fp_max_iter: Option<usize>,
    transform_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulationSection {
    paths: u64,
    seed: u64,
    substeps: Option<u32>,
    t0: f64,
    x0: Vec<f64>,
    /// Extra allowance on top of 3 stderr for the value/simulation check.
    allowance: Option<f64>,
}

/// Simulation defaults carried by the config.
#[derive(Debug, Clone)]
pub struct SimDefaults {
    pub paths: u64,
    pub seed: u64,
    pub substeps: u32,
    pub t0: f64,
    pub x0: Vec<f64>,
    pub allowance: f64,
}

/// Everything a run needs, decoded and cross-checked.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub spec: ProblemSpec,
    pub grid_request: GridRequest,
    pub solve_opts: SolveOpts,
    pub sim: SimDefaults,
    pub sampling: SamplingParams,
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

fn require<T>(value: Option<T>, family: &str, field: &str, ctx: &str) -> Result<T, ConfigError> {
    value.ok_or_else(|| invalid(format!("[{ctx}] family \"{family}\" requires key `{field}`")))
}

fn decode_drift(spec: &FamilySpec) -> Result<DriftFamily, ConfigError> {
    match spec.family.as_str() {
        "affine" => Ok(DriftFamily::Affine {
            matrix: require(spec.matrix.clone(), "affine", "matrix", "dynamics.drift")?,
            offset: require(spec.offset.clone(), "affine", "offset", "dynamics.drift")?,
        }),
        other => Err(invalid(format!(
            "[dynamics.drift] unknown family \"{other}\"; supported: affine"
        ))),
    }
}

fn decode_diffusion(spec: &FamilySpec) -> Result<DiffusionFamily, ConfigError> {
    match spec.family.as_str() {
        "constant" => Ok(DiffusionFamily::Constant {
            matrix: require(
                spec.matrix.clone(),
                "constant",
                "matrix",
                "dynamics.diffusion",
            )?,
        }),
        "diagonal-affine" => Ok(DiffusionFamily::DiagonalAffine {
            slope: require(
                spec.slope.clone(),
                "diagonal-affine",
                "slope",
                "dynamics.diffusion",
            )?,
            offset: require(
                spec.offset.clone(),
                "diagonal-affine",
                "offset",
                "dynamics.diffusion",
            )?,
        }),
        other => Err(invalid(format!(
            "[dynamics.diffusion] unknown family \"{other}\"; supported: constant, diagonal-affine"
        ))),
    }
}

fn decode_running(spec: &FamilySpec) -> Result<RunningGain, ConfigError> {
    match spec.family.as_str() {
        "zero" => Ok(RunningGain::Zero),
        "bump" => Ok(RunningGain::Bump {
            amplitude: require(spec.amplitude, "bump", "amplitude", "payoffs.running")?,
            center: require(spec.center.clone(), "bump", "center", "payoffs.running")?,
            width: require(spec.width, "bump", "width", "payoffs.running")?,
        }),
        "trig" => Ok(RunningGain::Trig {
            amplitude: require(spec.amplitude, "trig", "amplitude", "payoffs.running")?,
            omega: require(spec.omega, "trig", "omega", "payoffs.running")?,
            wavenumber: require(
                spec.wavenumber.clone(),
                "trig",
                "wavenumber",
                "payoffs.running",
            )?,
        }),
        other => Err(invalid(format!(
            "[payoffs.running] unknown family \"{other}\"; supported: zero, bump, trig"
        ))),
    }
}

fn decode_terminal(spec: &FamilySpec) -> Result<TerminalGain, ConfigError> {
    match spec.family.as_str() {
        "hat" => Ok(TerminalGain::Hat {
            amplitude: require(spec.amplitude, "hat", "amplitude", "payoffs.terminal")?,
            center: require(spec.center.clone(), "hat", "center", "payoffs.terminal")?,
            halfwidth: require(spec.halfwidth, "hat", "halfwidth", "payoffs.terminal")?,
        }),
        "gauss" => Ok(TerminalGain::Gauss {
            amplitude: require(spec.amplitude, "gauss", "amplitude", "payoffs.terminal")?,
            center: require(spec.center.clone(), "gauss", "center", "payoffs.terminal")?,
            width: require(spec.width, "gauss", "width", "payoffs.terminal")?,
        }),
        "constant" => Ok(TerminalGain::Constant {
            value: require(spec.value, "constant", "value", "payoffs.terminal")?,
        }),
        other => Err(invalid(format!(
            "[payoffs.terminal] unknown family \"{other}\"; supported: hat, gauss, constant"
        ))),
    }
}

fn decode_cost(spec: &CostSpec) -> CostFamily {
    CostFamily {
        fixed: spec.fixed,
        slope: spec.slope,
        modulation: match &spec.modulation {
            None => TimeModulation::None,
            Some(m) => TimeModulation::Sinusoid {
                amplitude: m.amplitude,
                omega: m.omega,
            },
        },
    }
}

fn decode_cone(axes: &[String], ctx: &str) -> Result<Cone, ConfigError> {
    let decoded = axes
        .iter()
        .map(|s| match s.as_str() {
            "nonneg" => Ok(ConeAxis::NonNeg),
            "nonpos" => Ok(ConeAxis::NonPos),
            "free" => Ok(ConeAxis::Free),
            other => Err(invalid(format!(
                "[actions.{ctx}] unknown axis \"{other}\"; supported: nonneg, nonpos, free"
            ))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Cone::new(decoded))
}

fn decode_priority(s: Option<&str>) -> Result<Priority, ConfigError> {
    match s {
        None | Some("player-ii") => Ok(Priority::PlayerII),
        Some("player-i") => Ok(Priority::PlayerI),
        Some(other) => Err(invalid(format!(
            "[problem] unknown priority \"{other}\"; supported: player-ii, player-i"
        ))),
    }
}

fn decode_boundary(s: Option<&str>) -> Result<BoundaryPolicy, ConfigError> {
    match s {
        None | Some("neumann-zero-second") => Ok(BoundaryPolicy::NeumannZeroSecond),
        Some("dirichlet-frozen") => Ok(BoundaryPolicy::DirichletFrozen),
        Some(other) => Err(invalid(format!(
            "[solver] unknown boundary \"{other}\"; supported: neumann-zero-second, dirichlet-frozen"
        ))),
    }
}

/// Parses config text into the run inputs.
pub fn parse_config(text: &str) -> Result<LoadedConfig, ConfigError> {
    let root: RootConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let spec = ProblemSpec {
        dim: root.problem.dim,
        horizon: root.problem.horizon,
        drift: decode_drift(&root.dynamics.drift)?,
        diffusion: decode_diffusion(&root.dynamics.diffusion)?,
        running_gain: decode_running(&root.payoffs.running)?,
        terminal_gain: decode_terminal(&root.payoffs.terminal)?,
        cost_i: decode_cost(&root.costs.player_i),
        cost_ii: decode_cost(&root.costs.player_ii),
        cone_i: decode_cone(&root.actions.cone_i, "cone_i")?,
        cone_ii: decode_cone(&root.actions.cone_ii, "cone_ii")?,
        actions_i: root.actions.player_i.clone(),
        actions_ii: root.actions.player_ii.clone(),
        priority: decode_priority(root.problem.priority.as_deref())?,
    };
    spec.check_shape()
        .map_err(|e| invalid(format!("problem spec: {e}")))?;

    let s = &root.solver;
    if s.bounds_min.len() != spec.dim || s.bounds_max.len() != spec.dim || s.nodes.len() != spec.dim
    {
        return Err(invalid(format!(
            "[solver] bounds_min, bounds_max, nodes must each have {} entries",
            spec.dim
        )));
    }
    let bounds: Vec<(f64, f64)> = s
        .bounds_min
        .iter()
        .zip(&s.bounds_max)
        .map(|(&lo, &hi)| (lo, hi))
        .collect();
    let grid_request = GridRequest {
        bounds: bounds.clone(),
        nodes_per_dim: s.nodes.clone(),
        time_steps: s.time_steps,
        boundary: decode_boundary(s.boundary.as_deref())?,
    };
    let defaults = SolveOpts::default();
    let solve_opts = SolveOpts {
        fp_tol: s.fp_tol.unwrap_or(defaults.fp_tol),
        fp_max_iter: s.fp_max_iter.unwrap_or(defaults.fp_max_iter),
        transform_tol: s.transform_tol.unwrap_or(defaults.transform_tol),
    };
    if !(solve_opts.fp_tol > 0.0) || solve_opts.fp_max_iter == 0 {
        return Err(invalid(
            "[solver] fp_tol must be positive and fp_max_iter nonzero",
        ));
    }

    let sim = SimDefaults {
        paths: root.simulation.paths,
        seed: root.simulation.seed,
        substeps: root.simulation.substeps.unwrap_or(1),
        t0: root.simulation.t0,
        x0: root.simulation.x0.clone(),
        allowance: root.simulation.allowance.unwrap_or(0.05),
    };
    if sim.x0.len() != spec.dim {
        return Err(invalid(format!(
            "[simulation] x0 must have {} entries",
            spec.dim
        )));
    }

    if !(root.costs.floor > 0.0) {
        return Err(invalid("[costs] floor must be positive"));
    }
    if !(root.costs.margin > 0.0) {
        return Err(invalid("[costs] margin must be positive"));
    }
    let sampling = SamplingParams::new(bounds, root.costs.floor, root.costs.margin);

    Ok(LoadedConfig {
        spec,
        grid_request,
        solve_opts,
        sim,
        sampling,
    })
}

/// Reads and parses a config file.
pub fn load_config(path: &std::path::Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> String {
        r#"
[problem]
dim = 1
horizon = 1.0
priority = "player-ii"

[dynamics]
drift = { family = "affine", matrix = [0.0], offset = [0.0] }
diffusion = { family = "constant", matrix = [0.5] }

[payoffs]
running = { family = "zero" }
terminal = { family = "hat", amplitude = 1.0, center = [0.0], halfwidth = 1.0 }

[costs]
player_i = { fixed = 0.3, slope = 1.2 }
player_ii = { fixed = 0.15, slope = 1.1 }
floor = 0.1
margin = 0.05

[actions]
cone_i = ["nonneg"]
cone_ii = ["nonpos"]
player_i = [[0.25], [0.5]]
player_ii = [[-0.25], [-0.5]]

[solver]
bounds_min = [-2.0]
bounds_max = [2.0]
nodes = [401]

[simulation]
paths = 1000
seed = 42
t0 = 0.0
x0 = [0.0]
"#
        .to_string()
    }

    #[test]
    fn parses_the_minimal_config() {
        let cfg = parse_config(&minimal()).unwrap();
        assert_eq!(cfg.spec.dim, 1);
        assert_eq!(cfg.spec.priority, Priority::PlayerII);
        assert_eq!(cfg.grid_request.nodes_per_dim, vec![401]);
        assert!(cfg.grid_request.time_steps.is_none());
        assert_eq!(cfg.sim.paths, 1000);
        assert!((cfg.sampling.cost_floor - 0.1).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let text = minimal().replace("seed = 42", "seed = 42\nbogus = 1.0");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn missing_costs_section_is_a_parse_error() {
        let text = minimal().replace("[costs]", "[costsx]");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn unknown_family_is_an_error_with_the_closed_list() {
        let text = minimal().replace("family = \"hat\"", "family = \"sigmoid\"");
        let err = parse_config(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sigmoid") && msg.contains("hat"), "{msg}");
    }

    #[test]
    fn missing_family_parameter_is_diagnosed() {
        let text = minimal().replace(
            "terminal = { family = \"hat\", amplitude = 1.0, center = [0.0], halfwidth = 1.0 }",
            "terminal = { family = \"hat\", amplitude = 1.0, center = [0.0] }",
        );
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("halfwidth"), "{err}");
    }

    #[test]
    fn dimension_mismatches_are_diagnosed() {
        let text = minimal().replace("x0 = [0.0]", "x0 = [0.0, 0.0]");
        assert!(parse_config(&text).is_err());
    }
}
