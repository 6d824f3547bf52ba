//! Game instance definition.
//!
//! A [`ProblemSpec`] holds everything that defines one zero-sum impulse game:
//! the diffusion dynamics (drift `b`, diffusion `sigma`), the running gain `f`
//! and terminal payoff `g`, both players' impulse cost functions, and the two
//! discretized action sets with their cones. Coefficients come from closed
//! named families so that Lipschitz constants, supremum norms, and cost
//! infima are available in closed form.
//!
//! Sign conventions follow the payoff functional: player I maximizes, pays
//! `c` per impulse, and receives `chi` whenever player II acts.

use crate::error::ModelError;

/// Drift coefficient family, `b(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftFamily {
    /// `b(t, x) = A x + beta`, `A` row-major `dim x dim`.
    Affine { matrix: Vec<f64>, offset: Vec<f64> },
}

/// Diffusion coefficient family, `sigma(t, x)` as a `dim x dim` matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum DiffusionFamily {
    /// Constant matrix, row-major `dim x dim`.
    Constant { matrix: Vec<f64> },
    /// Diagonal matrix with affine-in-state entries:
    /// `sigma_ii(t, x) = offset_i + slope_i * x_i`, zero off the diagonal.
    DiagonalAffine { slope: Vec<f64>, offset: Vec<f64> },
}

/// Running gain family, `f(t, x)`. All members are bounded.
#[derive(Debug, Clone, PartialEq)]
pub enum RunningGain {
    Zero,
    /// `amplitude * exp(-|x - center|^2 / width^2)`.
    Bump {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
    /// `amplitude * cos(omega * t + <wavenumber, x>)`.
    Trig {
        amplitude: f64,
        omega: f64,
        wavenumber: Vec<f64>,
    },
}

/// Terminal payoff family, `g(x)`. All members are bounded.
#[derive(Debug, Clone, PartialEq)]
pub enum TerminalGain {
    /// `amplitude * max(0, 1 - |x - center| / halfwidth)`; Lipschitz constant
    /// `amplitude / halfwidth`.
    Hat {
        amplitude: f64,
        center: Vec<f64>,
        halfwidth: f64,
    },
    /// `amplitude * exp(-|x - center|^2 / width^2)`.
    Gauss {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
    Constant { value: f64 },
}

/// Continuous positive time factor multiplying an impulse cost.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeModulation {
    /// `m(t) = 1`.
    None,
    /// `m(t) = 1 + amplitude * sin(omega * t)`; requires `|amplitude| < 1`
    /// so the factor stays positive.
    Sinusoid { amplitude: f64, omega: f64 },
}

impl TimeModulation {
    pub fn factor(&self, t: f64) -> f64 {
        match self {
            TimeModulation::None => 1.0,
            TimeModulation::Sinusoid { amplitude, omega } => 1.0 + amplitude * (omega * t).sin(),
        }
    }

    /// Exact minimum of `m` over `[0, horizon]`, evaluated on the family.
    fn min_factor(&self, horizon: f64) -> f64 {
        match self {
            TimeModulation::None => 1.0,
            TimeModulation::Sinusoid { amplitude, .. } => {
                // sin sweeps an interval of [-1, 1]; bounding below by the
                // global extremum is exact enough for the floor check and
                // never overestimates the infimum.
                let _ = horizon;
                1.0 - amplitude.abs()
            }
        }
    }
}

/// Impulse cost, affine in the action magnitude:
/// `cost(t, a) = m(t) * (fixed + slope * |a|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostFamily {
    pub fixed: f64,
    pub slope: f64,
    pub modulation: TimeModulation,
}

impl CostFamily {
    pub fn constant(fixed: f64, slope: f64) -> Self {
        CostFamily {
            fixed,
            slope,
            modulation: TimeModulation::None,
        }
    }

    pub fn eval(&self, t: f64, action: &[f64]) -> f64 {
        let mag = norm(action);
        self.modulation.factor(t) * (self.fixed + self.slope * mag)
    }

    /// Infimum of the cost over the whole cone and `[0, horizon]`. The cone
    /// contains actions of arbitrarily small magnitude, so the infimum is
    /// attained in the limit `|a| -> 0` when the slope is nonnegative and is
    /// unbounded below otherwise.
    pub fn cone_infimum(&self, horizon: f64) -> f64 {
        if self.slope < 0.0 {
            f64::NEG_INFINITY
        } else {
            self.fixed * self.modulation.min_factor(horizon)
        }
    }
}

/// Per-axis sign constraint; a cone is a product of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeAxis {
    NonNeg,
    NonPos,
    Free,
}

/// Closed convex cone of the orthant family: each coordinate independently
/// constrained to be nonnegative, nonpositive, or free. Closed under
/// addition, which keeps the subadditivity checks total over action pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cone {
    pub axes: Vec<ConeAxis>,
}

impl Cone {
    pub fn new(axes: Vec<ConeAxis>) -> Self {
        Cone { axes }
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.axes.len()
            && v.iter().zip(&self.axes).all(|(&vi, axis)| match axis {
                ConeAxis::NonNeg => vi >= 0.0,
                ConeAxis::NonPos => vi <= 0.0,
                ConeAxis::Free => true,
            })
    }
}

/// Which player's impulse counts when both act at the same instant.
/// `PlayerII` is the default convention; `PlayerI` swaps the min/max nesting
/// of the obstacle equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Priority {
    PlayerII,
    PlayerI,
}

/// One game instance.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub dim: usize,
    pub horizon: f64,
    pub drift: DriftFamily,
    pub diffusion: DiffusionFamily,
    pub running_gain: RunningGain,
    pub terminal_gain: TerminalGain,
    pub cost_i: CostFamily,
    pub cost_ii: CostFamily,
    pub cone_i: Cone,
    pub cone_ii: Cone,
    pub actions_i: Vec<Vec<f64>>,
    pub actions_ii: Vec<Vec<f64>>,
    pub priority: Priority,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl ProblemSpec {
    /// Structural sanity: dimensions line up, every numeric parameter is
    /// finite, the horizon is positive, and cost modulations stay positive.
    /// Semantic assumptions (cost floors, subadditivity, ...) are the
    /// validator's job, not a construction error.
    pub fn check_shape(&self) -> Result<(), ModelError> {
        let n = self.dim;
        if n == 0 {
            return Err(ModelError::Shape("dim must be >= 1".into()));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(ModelError::Shape("horizon must be a positive real".into()));
        }
        match &self.drift {
            DriftFamily::Affine { matrix, offset } => {
                if matrix.len() != n * n || offset.len() != n {
                    return Err(ModelError::Shape(format!(
                        "affine drift needs a {n}x{n} matrix and an offset of length {n}"
                    )));
                }
                if !all_finite(matrix) || !all_finite(offset) {
                    return Err(ModelError::Shape("drift parameters must be finite".into()));
                }
            }
        }
        match &self.diffusion {
            DiffusionFamily::Constant { matrix } => {
                if matrix.len() != n * n {
                    return Err(ModelError::Shape(format!(
                        "constant diffusion needs a {n}x{n} matrix"
                    )));
                }
                if !all_finite(matrix) {
                    return Err(ModelError::Shape(
                        "diffusion parameters must be finite".into(),
                    ));
                }
            }
            DiffusionFamily::DiagonalAffine { slope, offset } => {
                if slope.len() != n || offset.len() != n {
                    return Err(ModelError::Shape(format!(
                        "diagonal-affine diffusion needs slope and offset of length {n}"
                    )));
                }
                if !all_finite(slope) || !all_finite(offset) {
                    return Err(ModelError::Shape(
                        "diffusion parameters must be finite".into(),
                    ));
                }
            }
        }
        match &self.running_gain {
            RunningGain::Zero => {}
            RunningGain::Bump {
                amplitude,
                center,
                width,
            } => {
                if center.len() != n {
                    return Err(ModelError::Shape("bump center has wrong dimension".into()));
                }
                if !amplitude.is_finite() || !all_finite(center) || !(*width > 0.0) {
                    return Err(ModelError::Shape(
                        "bump parameters must be finite with positive width".into(),
                    ));
                }
            }
            RunningGain::Trig {
                amplitude,
                omega,
                wavenumber,
            } => {
                if wavenumber.len() != n {
                    return Err(ModelError::Shape(
                        "trig wavenumber has wrong dimension".into(),
                    ));
                }
                if !amplitude.is_finite() || !omega.is_finite() || !all_finite(wavenumber) {
                    return Err(ModelError::Shape("trig parameters must be finite".into()));
                }
            }
        }
        match &self.terminal_gain {
            TerminalGain::Hat {
                amplitude,
                center,
                halfwidth,
            } => {
                if center.len() != n {
                    return Err(ModelError::Shape("hat center has wrong dimension".into()));
                }
                if !amplitude.is_finite() || !all_finite(center) || !(*halfwidth > 0.0) {
                    return Err(ModelError::Shape(
                        "hat parameters must be finite with positive halfwidth".into(),
                    ));
                }
            }
            TerminalGain::Gauss {
                amplitude,
                center,
                width,
            } => {
                if center.len() != n {
                    return Err(ModelError::Shape("gauss center has wrong dimension".into()));
                }
                if !amplitude.is_finite() || !all_finite(center) || !(*width > 0.0) {
                    return Err(ModelError::Shape(
                        "gauss parameters must be finite with positive width".into(),
                    ));
                }
            }
            TerminalGain::Constant { value } => {
                if !value.is_finite() {
                    return Err(ModelError::Shape("constant payoff must be finite".into()));
                }
            }
        }
        for cost in [&self.cost_i, &self.cost_ii] {
            if !cost.fixed.is_finite() || !cost.slope.is_finite() {
                return Err(ModelError::Shape("cost parameters must be finite".into()));
            }
            if let TimeModulation::Sinusoid { amplitude, omega } = cost.modulation {
                if !(amplitude.abs() < 1.0) || !omega.is_finite() {
                    return Err(ModelError::Shape(
                        "cost modulation needs |amplitude| < 1 and finite omega".into(),
                    ));
                }
            }
        }
        if self.cone_i.axes.len() != n || self.cone_ii.axes.len() != n {
            return Err(ModelError::Shape("cone axis count must equal dim".into()));
        }
        for (who, actions) in [("player I", &self.actions_i), ("player II", &self.actions_ii)] {
            for a in actions {
                if a.len() != n {
                    return Err(ModelError::Shape(format!(
                        "{who} action has wrong dimension"
                    )));
                }
                if !all_finite(a) {
                    return Err(ModelError::Shape(format!("{who} action must be finite")));
                }
            }
        }
        Ok(())
    }

    pub fn drift_at(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        match &self.drift {
            DriftFamily::Affine { matrix, offset } => {
                let n = self.dim;
                for i in 0..n {
                    let mut acc = offset[i];
                    for (j, xj) in x.iter().enumerate() {
                        acc += matrix[i * n + j] * xj;
                    }
                    out[i] = acc;
                }
            }
        }
    }

    /// Writes `sigma(t, x)` row-major into `out` (length `dim * dim`).
    pub fn diffusion_at(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let n = self.dim;
        match &self.diffusion {
            DiffusionFamily::Constant { matrix } => out.copy_from_slice(matrix),
            DiffusionFamily::DiagonalAffine { slope, offset } => {
                out.fill(0.0);
                for i in 0..n {
                    out[i * n + i] = offset[i] + slope[i] * x[i];
                }
            }
        }
    }

    /// `(sigma sigma^T)(t, x)` row-major into `out`.
    pub fn diffusion_squared_at(&self, t: f64, x: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        let n = self.dim;
        self.diffusion_at(t, x, scratch);
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += scratch[i * n + k] * scratch[j * n + k];
                }
                out[i * n + j] = acc;
            }
        }
    }

    pub fn running_gain_at(&self, t: f64, x: &[f64]) -> f64 {
        match &self.running_gain {
            RunningGain::Zero => 0.0,
            RunningGain::Bump {
                amplitude,
                center,
                width,
            } => {
                let d2: f64 = x
                    .iter()
                    .zip(center)
                    .map(|(xi, ci)| (xi - ci) * (xi - ci))
                    .sum();
                amplitude * (-d2 / (width * width)).exp()
            }
            RunningGain::Trig {
                amplitude,
                omega,
                wavenumber,
            } => {
                let phase: f64 = x.iter().zip(wavenumber).map(|(xi, ki)| xi * ki).sum();
                amplitude * (omega * t + phase).cos()
            }
        }
    }

    pub fn terminal_gain_at(&self, x: &[f64]) -> f64 {
        match &self.terminal_gain {
            TerminalGain::Hat {
                amplitude,
                center,
                halfwidth,
            } => {
                let d: f64 = x
                    .iter()
                    .zip(center)
                    .map(|(xi, ci)| (xi - ci) * (xi - ci))
                    .sum::<f64>()
                    .sqrt();
                amplitude * (1.0 - d / halfwidth).max(0.0)
            }
            TerminalGain::Gauss {
                amplitude,
                center,
                width,
            } => {
                let d2: f64 = x
                    .iter()
                    .zip(center)
                    .map(|(xi, ci)| (xi - ci) * (xi - ci))
                    .sum();
                amplitude * (-d2 / (width * width)).exp()
            }
            TerminalGain::Constant { value } => *value,
        }
    }

    /// Exact sup norm of `f` over all of time-space, from the family.
    pub fn running_gain_sup(&self) -> f64 {
        match &self.running_gain {
            RunningGain::Zero => 0.0,
            RunningGain::Bump { amplitude, .. } => amplitude.abs(),
            RunningGain::Trig { amplitude, .. } => amplitude.abs(),
        }
    }

    /// Exact sup norm of `g` over all of space, from the family.
    pub fn terminal_gain_sup(&self) -> f64 {
        match &self.terminal_gain {
            TerminalGain::Hat { amplitude, .. } => amplitude.abs(),
            TerminalGain::Gauss { amplitude, .. } => amplitude.abs(),
            TerminalGain::Constant { value } => value.abs(),
        }
    }

    /// Largest action magnitude (sup over both players, Euclidean norm).
    pub fn max_action_magnitude(&self) -> f64 {
        self.actions_i
            .iter()
            .chain(self.actions_ii.iter())
            .map(|a| norm(a))
            .fold(0.0, f64::max)
    }
}

/// Evaluates `(b, sigma, f)` at one space-time point. Rejects non-finite
/// inputs; total elsewhere.
pub fn evaluate_coefficients(
    spec: &ProblemSpec,
    t: f64,
    x: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, f64), ModelError> {
    if !t.is_finite() {
        return Err(ModelError::NonFiniteInput {
            context: format!("t = {t}"),
        });
    }
    if x.len() != spec.dim || !all_finite(x) {
        return Err(ModelError::NonFiniteInput {
            context: format!("x = {x:?}"),
        });
    }
    let mut b = vec![0.0; spec.dim];
    let mut sigma = vec![0.0; spec.dim * spec.dim];
    spec.drift_at(t, x, &mut b);
    spec.diffusion_at(t, x, &mut sigma);
    let f = spec.running_gain_at(t, x);
    Ok((b, sigma, f))
}
