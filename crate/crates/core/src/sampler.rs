//! Reverse-time Euler sampling of the probability-flow ODE.
//!
//! Every path family shares the same recurrence
//!
//! ```text
//! x_{t_{n-1}} = a_n x_{t_n} + b_n F(x_{t_n}, y, t_n) + c_n y,     x_{t_N} = y
//! ```
//!
//! and only differs in the coefficient triple `(a_n, b_n, c_n)`. The bridge
//! families use the closed-form bridge coefficients; ICFM uses constant
//! coefficients that assume a uniform grid.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{PathFamily, PathSpec};

/// What the predictor network regresses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Data prediction: `F ~ x0`.
    #[default]
    Dp,
    /// Flow matching: `F ~ x0 - y`.
    Fm,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Dp => "dp",
            LossKind::Fm => "fm",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dp" => Ok(LossKind::Dp),
            "fm" => Ok(LossKind::Fm),
            other => Err(Error::invalid(format!("unknown loss kind `{other}`"))),
        }
    }
}

/// Anything that maps `(x_t, y, t)` to a prediction, row-wise over a batch.
///
/// Rows of `x_t` and `y` are independent items sharing the same time `t`.
pub trait Predictor {
    fn loss_kind(&self) -> LossKind;

    /// Data dimension of `x_t`, `y` and the output.
    fn dim(&self) -> usize;

    fn predict(&self, x_t: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, t: f64) -> Result<Array2<f64>>;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn loss_kind(&self) -> LossKind {
        (**self).loss_kind()
    }

    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn predict(&self, x_t: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, t: f64) -> Result<Array2<f64>> {
        (**self).predict(x_t, y, t)
    }
}

/// A strictly decreasing time grid `t_N > ... > t_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    times: Vec<f64>,
}

impl Schedule {
    /// Validates an explicit grid; it must start at exactly 1 and end at exactly 0.
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.first() != Some(&1.0) {
            return Err(Error::invalid("schedule must start at t = 1"));
        }
        Self::from_times(times)
    }

    pub fn uniform(n_steps: usize) -> Result<Self> {
        Self::truncated(n_steps, 1.0)
    }

    /// A uniform grid on `[0, t_max]`. With `t_max < 1` the first Euler step
    /// starts strictly inside the path instead of at its boundary.
    pub fn truncated(n_steps: usize, t_max: f64) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if !(t_max > 0.0 && t_max <= 1.0) {
            return Err(Error::invalid(format!("t_max must lie in (0, 1], got {t_max}")));
        }
        let n = n_steps as f64;
        let times = (0..=n_steps)
            .map(|i| match i {
                0 => t_max,
                i if i == n_steps => 0.0,
                i => t_max * (n_steps - i) as f64 / n,
            })
            .collect();
        Self::from_times(times)
    }

    fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if times.last() != Some(&0.0) {
            return Err(Error::invalid("schedule must end at t = 0"));
        }
        if times[0] > 1.0 || times.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::invalid(
                "schedule times must be strictly decreasing within [0, 1]",
            ));
        }
        Ok(Schedule { times })
    }

    /// Number of Euler steps `N`.
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Grid points from `t_N` down to `t_0`.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    /// `(t_n, t_{n-1})` for step index `n` (`N >= n >= 1`).
    pub fn step(&self, n: usize) -> (f64, f64) {
        let i = self.n_steps() - n;
        (self.times[i], self.times[i + 1])
    }

    pub fn is_uniform(&self) -> bool {
        let h = self.times[0] / self.n_steps() as f64;
        self.times
            .windows(2)
            .all(|w| ((w[0] - w[1]) - h).abs() <= 1e-12 * self.times[0].max(1.0))
    }
}

/// Coefficients of one Euler step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoefficients {
    /// Weight on the current state.
    pub a: f64,
    /// Weight on the predictor output.
    pub b: f64,
    /// Weight on the conditioning input `y`.
    pub c: f64,
}

impl StepCoefficients {
    pub fn sum(&self) -> f64 {
        self.a + self.b + self.c
    }
}

/// Definition of the complementary bridge standard deviation `sbar_t` used by
/// the bridge coefficients.
///
/// Both choices give affine interior steps (`a + b + c = 1`) that carry the
/// path mean forward exactly under an exact data predictor. They differ in the
/// first step out of `t = 1`: only `Complement` lands on the path mean there;
/// `Difference` lands on `beta y + (sbar^2 / s2(1)) x0` with weights summing
/// to less than one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BridgeStd {
    /// `sbar_t = s(1) - s(t)`.
    #[default]
    Difference,
    /// `sbar_t = sqrt(s2(1) - s2(t))`.
    Complement,
}

fn bridge_std(spec: &PathSpec, variant: BridgeStd, t: f64) -> Result<(f64, f64)> {
    let s2 = spec.sigma_sq(t)?;
    let s2_1 = spec.sigma1_sq()?;
    let sbar = match variant {
        BridgeStd::Complement => (s2_1 - s2).max(0.0).sqrt(),
        BridgeStd::Difference => s2_1.sqrt() - s2.sqrt(),
    };
    Ok((s2.sqrt(), sbar))
}

/// Bridge coefficients for a step `t_n -> t_prev`.
///
/// The generic formula divides by `s(t_n) sbar(t_n)`, which vanishes at both
/// ends of the path. The step into `t = 0` is returned as `(0, 1, 0)` and the
/// step out of `t = 1` uses the limit in which the two singular terms
/// multiplying `x_{t_N} = y` cancel:
/// `x' = (s2(t_prev) / s2(1)) y + (sbar(t_prev)^2 / s2(1)) F`.
pub fn sb_step_coeffs(spec: &PathSpec, variant: BridgeStd, t_n: f64, t_prev: f64) -> Result<StepCoefficients> {
    if !spec.family().is_bridge() {
        return Err(Error::invalid("bridge coefficients requested for a non-bridge path"));
    }
    if !(t_prev < t_n) || t_prev < 0.0 || t_n > 1.0 {
        return Err(Error::invalid(format!(
            "bridge step needs 0 <= t_prev < t_n <= 1, got t_n = {t_n}, t_prev = {t_prev}"
        )));
    }
    if t_prev == 0.0 {
        return Ok(StepCoefficients { a: 0.0, b: 1.0, c: 0.0 });
    }
    let s2_1 = spec.sigma1_sq()?;
    let (s_p, sbar_p) = bridge_std(spec, variant, t_prev)?;
    if t_n == 1.0 {
        return Ok(StepCoefficients {
            a: 0.0,
            b: sbar_p * sbar_p / s2_1,
            c: s_p * s_p / s2_1,
        });
    }
    let (s_n, sbar_n) = bridge_std(spec, variant, t_n)?;
    Ok(StepCoefficients {
        a: (s_p * sbar_p) / (s_n * sbar_n),
        b: (sbar_p * sbar_p - sbar_n * s_p * sbar_p / s_n) / s2_1,
        c: (s_p * s_p - s_n * s_p * sbar_p / sbar_n) / s2_1,
    })
}

/// Constant ICFM coefficients for an `N`-step uniform grid.
pub fn icfm_step_coeffs(loss_kind: LossKind, n_steps: usize) -> Result<StepCoefficients> {
    if n_steps == 0 {
        return Err(Error::invalid("ICFM sampling needs at least one step"));
    }
    let h = 1.0 / n_steps as f64;
    Ok(match loss_kind {
        LossKind::Dp => StepCoefficients { a: 1.0, b: h, c: -h },
        LossKind::Fm => StepCoefficients { a: 1.0, b: h, c: 0.0 },
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InferenceMode {
    /// Multi-step Euler integration of the ODE.
    #[default]
    Ode,
    /// Direct data prediction: one evaluation at `(y, y, 1)`.
    Ddp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub path: PathSpec,
    pub loss_kind: LossKind,
    pub n_steps: usize,
    pub mode: InferenceMode,
    #[serde(default)]
    pub bridge_std: BridgeStd,
    /// Start the grid below `t = 1` (bridge families only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
}

impl InferenceConfig {
    pub fn ode(path: PathSpec, loss_kind: LossKind, n_steps: usize) -> Self {
        InferenceConfig {
            path,
            loss_kind,
            n_steps,
            mode: InferenceMode::Ode,
            bridge_std: BridgeStd::default(),
            t_max: None,
        }
    }

    pub fn ddp(path: PathSpec, loss_kind: LossKind) -> Self {
        InferenceConfig {
            mode: InferenceMode::Ddp,
            ..Self::ode(path, loss_kind, 1)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.loss_kind == LossKind::Fm && self.path.family() != PathFamily::Icfm {
            return Err(Error::invalid("the flow-matching loss is only defined for ICFM paths"));
        }
        if self.mode == InferenceMode::Ode && self.n_steps == 0 {
            return Err(Error::invalid("ODE inference needs n_steps >= 1"));
        }
        if let Some(t_max) = self.t_max {
            if !self.path.family().is_bridge() {
                return Err(Error::invalid("t_max is only supported for bridge paths"));
            }
            if !(t_max > 0.0 && t_max <= 1.0) {
                return Err(Error::invalid(format!("t_max must lie in (0, 1], got {t_max}")));
            }
        }
        Ok(())
    }

    /// The default grid for this configuration.
    pub fn schedule(&self) -> Result<Schedule> {
        Schedule::truncated(self.n_steps, self.t_max.unwrap_or(1.0))
    }
}

/// Runs the Euler recurrence with caller-supplied coefficients.
///
/// `coeffs(n, t_n, t_prev)` is queried once per step, for `n = N, ..., 1`.
/// The state is initialised to `y`; each row of `y` is an independent item.
pub fn integrate<P, C>(model: &P, y: ArrayView2<'_, f64>, schedule: &Schedule, mut coeffs: C) -> Result<Array2<f64>>
where
    P: Predictor + ?Sized,
    C: FnMut(usize, f64, f64) -> Result<StepCoefficients>,
{
    if y.ncols() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: y.ncols(),
        });
    }
    let mut x = y.to_owned();
    for n in (1..=schedule.n_steps()).rev() {
        let (t_n, t_prev) = schedule.step(n);
        let k = coeffs(n, t_n, t_prev)?;
        let f = model.predict(x.view(), y, t_n)?;
        if f.dim() != x.dim() {
            return Err(Error::DimensionMismatch {
                expected: x.ncols(),
                actual: f.ncols(),
            });
        }
        ndarray::Zip::from(&mut x).and(&f).and(&y).for_each(|x, &f, &y| {
            *x = (k.a * *x + k.c * y) + k.b * f;
        });
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: n });
        }
    }
    Ok(x)
}

fn check_model(model: &(impl Predictor + ?Sized), cfg: &InferenceConfig) -> Result<()> {
    cfg.validate()?;
    if model.loss_kind() != cfg.loss_kind {
        return Err(Error::invalid(format!(
            "model was trained with the {} loss but inference is configured for {}",
            model.loss_kind(),
            cfg.loss_kind
        )));
    }
    Ok(())
}

/// Integrates the ODE from `x_{t_N} = y` down to `t = 0` for a batch of rows.
pub fn solve_ode_batch<P: Predictor + ?Sized>(
    model: &P,
    y: ArrayView2<'_, f64>,
    cfg: &InferenceConfig,
    schedule: &Schedule,
) -> Result<Array2<f64>> {
    check_model(model, cfg)?;
    if schedule.n_steps() != cfg.n_steps {
        return Err(Error::invalid(format!(
            "schedule has {} steps but the config asks for {}",
            schedule.n_steps(),
            cfg.n_steps
        )));
    }
    let path = cfg.path;
    match path.family() {
        PathFamily::Icfm => {
            if schedule.start() != 1.0 || !schedule.is_uniform() {
                return Err(Error::invalid("ICFM sampling requires the uniform grid on [0, 1]"));
            }
            let k = icfm_step_coeffs(cfg.loss_kind, cfg.n_steps)?;
            integrate(model, y, schedule, |_, _, _| Ok(k))
        }
        PathFamily::SbVe | PathFamily::SbSv => integrate(model, y, schedule, |_, t_n, t_prev| {
            sb_step_coeffs(&path, cfg.bridge_std, t_n, t_prev)
        }),
    }
}

/// Single-vector convenience wrapper around [`solve_ode_batch`].
pub fn solve_ode<P: Predictor + ?Sized>(
    model: &P,
    y: &[f64],
    cfg: &InferenceConfig,
    schedule: &Schedule,
) -> Result<Vec<f64>> {
    let y = ArrayView2::from_shape((1, y.len()), y).expect("row view");
    Ok(solve_ode_batch(model, y, cfg, schedule)?.into_raw_vec_and_offset().0)
}

/// One-step direct data prediction: `F(y, y, 1)`, plus `y` for flow-matching
/// models.
pub fn ddp_infer_batch<P: Predictor + ?Sized>(model: &P, y: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let mut out = model.predict(y, y, 1.0)?;
    if model.loss_kind() == LossKind::Fm {
        out += &y;
    }
    Ok(out)
}

pub fn ddp_infer<P: Predictor + ?Sized>(model: &P, y: &[f64]) -> Result<Vec<f64>> {
    let y = ArrayView2::from_shape((1, y.len()), y).expect("row view");
    Ok(ddp_infer_batch(model, y)?.into_raw_vec_and_offset().0)
}

/// Runs whichever inference mode `cfg` selects on the grid it implies.
pub fn infer_batch<P: Predictor + ?Sized>(
    model: &P,
    y: ArrayView2<'_, f64>,
    cfg: &InferenceConfig,
) -> Result<Array2<f64>> {
    match cfg.mode {
        InferenceMode::Ddp => {
            check_model(model, cfg)?;
            ddp_infer_batch(model, y)
        }
        InferenceMode::Ode => solve_ode_batch(model, y, cfg, &cfg.schedule()?),
    }
}
