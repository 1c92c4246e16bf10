//! Single-weight CUSUM monitor: boundary function, trimming and the stopping rule.
//!
//! The detector is the running sum `Q(m;k)` of post-training prediction residuals. At
//! step `k` it is compared against the boundary
//!
//! ```text
//! g_eta(m, k) = sigma * sqrt(m) * (1 + k/m) * (k / (m + k))^eta
//! ```
//!
//! through the normalized statistic `r^{eta - 1/2} |Q(m;k)| / g_eta(m, k)`, where
//! `r = a_m / (a_m + m)` for Renyi weights (`eta > 1/2`) and `r = 1` for light weights.
//! Renyi monitors are silent for `k < a_m`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::{residual, MonitoringModel};
use crate::scalar::Scalar;

/// Trimming sequence `a_m`: the number of steps a Renyi monitor waits before it may reject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimRule {
    /// `ceil(ln ln m)`
    LogLog,
    /// `ceil(ln m)`
    Log,
    /// `ceil(ln^2 m)`
    LogSquared,
    Fixed(usize),
    /// `a_m = 1`; only valid for light weights.
    None,
}

impl TrimRule {
    pub fn label(&self) -> String {
        match self {
            TrimRule::LogLog => "lnln_m".into(),
            TrimRule::Log => "ln_m".into(),
            TrimRule::LogSquared => "ln2_m".into(),
            TrimRule::Fixed(n) => format!("fixed_{n}"),
            TrimRule::None => "none".into(),
        }
    }
}

impl std::str::FromStr for TrimRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loglog" | "lnln" | "lnln_m" => Ok(TrimRule::LogLog),
            "log" | "ln" | "ln_m" => Ok(TrimRule::Log),
            "logsquared" | "log2" | "ln2" | "ln2_m" => Ok(TrimRule::LogSquared),
            "none" => Ok(TrimRule::None),
            other => other
                .strip_prefix("fixed_")
                .or(Some(other))
                .and_then(|n| n.parse::<usize>().ok())
                .map(TrimRule::Fixed)
                .ok_or_else(|| Error::config(format!("unknown trimming rule `{s}`"))),
        }
    }
}

pub fn trim_value(rule: TrimRule, m: usize) -> Result<usize> {
    let lm = (m as f64).ln();
    let a = match rule {
        TrimRule::LogLog => {
            if m < 3 {
                return Err(Error::Domain(format!("ln ln m needs m >= 3, got {m}")));
            }
            lm.ln().ceil() as usize
        }
        TrimRule::Log => lm.ceil() as usize,
        TrimRule::LogSquared => (lm * lm).ceil() as usize,
        TrimRule::Fixed(0) => return Err(Error::Domain("fixed trimming must be >= 1".into())),
        TrimRule::Fixed(n) => n,
        TrimRule::None => 1,
    };
    Ok(a.max(1))
}

/// Whether `eta` is a Renyi (heavy) weight. Rejects `eta = 1/2` and invalid values.
pub fn classify_eta<F: Scalar>(eta: F) -> Result<bool> {
    if !eta.is_finite() || eta < F::zero() {
        return Err(Error::config(format!(
            "eta must be finite and >= 0, got {eta}"
        )));
    }
    let half = F::of(0.5);
    if eta == half {
        return Err(Error::UnsupportedEta);
    }
    Ok(eta > half)
}

/// `sigma * sqrt(m) * (1 + k/m) * (k/(m+k))^eta`
pub fn boundary<F: Scalar>(m: usize, k: usize, eta: F, sigma: F) -> F {
    let mf = F::of_usize(m);
    let kf = F::of_usize(k);
    sigma * mf.sqrt() * (F::one() + kf / mf) * (kf / (mf + kf)).powf(eta)
}

/// `r^{eta-1/2} |Q| / g_eta(m, k)`; `r_tilde` is `r_m` for heavy weights and 1 otherwise.
pub(crate) fn normalized_statistic<F: Scalar>(
    cusum: F,
    m: usize,
    k: usize,
    eta: F,
    sigma: F,
    r_tilde: F,
) -> F {
    let norming = if r_tilde == F::one() {
        F::one()
    } else {
        r_tilde.powf(eta - F::of(0.5))
    };
    norming * cusum.abs() / boundary(m, k, eta, sigma)
}

pub(crate) fn norming_ratio<F: Scalar>(a_m: usize, m: usize) -> F {
    F::of_usize(a_m) / F::of_usize(a_m + m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorConfig<F> {
    pub eta: F,
    pub alpha: F,
    pub trim: TrimRule,
    /// Monitoring horizon `T_m`.
    pub horizon: usize,
    pub critical_value: F,
}

impl<F: Scalar> MonitorConfig<F> {
    /// Validates against a training length `m` and returns the effective `a_m`
    /// (1 for light weights).
    pub fn validate(&self, m: usize) -> Result<usize> {
        let heavy = classify_eta(self.eta)?;
        validate_common(self.alpha, self.horizon)?;
        if self.critical_value.is_nan() || self.critical_value < F::zero() {
            return Err(Error::config("critical value must be >= 0"));
        }
        if !heavy {
            return Ok(1);
        }
        if self.trim == TrimRule::None {
            return Err(Error::config(
                "Renyi weights (eta > 1/2) require a trimming rule",
            ));
        }
        let a_m = trim_value(self.trim, m)?;
        if a_m > self.horizon {
            return Err(Error::config(format!(
                "trimming a_m = {a_m} exceeds the horizon {}",
                self.horizon
            )));
        }
        Ok(a_m)
    }
}

pub(crate) fn validate_common<F: Scalar>(alpha: F, horizon: usize) -> Result<()> {
    if !(alpha > F::zero() && alpha < F::one()) {
        return Err(Error::config(format!(
            "alpha must be in (0,1), got {alpha}"
        )));
    }
    if horizon == 0 {
        return Err(Error::config("horizon must be >= 1"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Warmup,
    Active,
    Rejected { at: usize },
    Terminated,
}

impl Status {
    pub fn is_finished(&self) -> bool {
        matches!(self, Status::Rejected { .. } | Status::Terminated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Continue,
    Reject,
    Terminate,
}

/// Statistic reported while the Renyi monitor is still inside its trimming window.
pub const WARMUP_SENTINEL: f64 = -1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct StepEvent<F> {
    pub k: usize,
    pub cusum: F,
    pub statistic: F,
    pub threshold: F,
    pub decision: Decision,
    /// Index of the veto member with the tightest boundary, on rejection.
    pub active_member: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorState<F> {
    pub k: usize,
    pub cusum: F,
    pub status: Status,
    /// `a_m / (a_m + m)`
    pub r_m: F,
    pub a_m: usize,
}

impl<F: Scalar> MonitorState<F> {
    pub fn new(model: &MonitoringModel<F>, cfg: &MonitorConfig<F>) -> Result<Self> {
        let a_m = cfg.validate(model.m)?;
        let heavy = classify_eta(cfg.eta)?;
        Ok(Self {
            k: 0,
            cusum: F::zero(),
            status: if heavy {
                Status::Warmup
            } else {
                Status::Active
            },
            r_m: norming_ratio(a_m, model.m),
            a_m,
        })
    }
}

pub fn renyi_statistic<F: Scalar>(
    state: &MonitorState<F>,
    model: &MonitoringModel<F>,
    cfg: &MonitorConfig<F>,
) -> F {
    let r_tilde = if cfg.eta > F::of(0.5) {
        state.r_m
    } else {
        F::one()
    };
    normalized_statistic(
        state.cusum,
        model.m,
        state.k,
        cfg.eta,
        model.sigma_hat,
        r_tilde,
    )
}

/// Consumes one observation. After a rejection or termination the state is frozen.
pub fn step<F: Scalar>(
    state: &mut MonitorState<F>,
    model: &MonitoringModel<F>,
    cfg: &MonitorConfig<F>,
    y: F,
    x: &[F],
) -> Result<StepEvent<F>> {
    if state.status.is_finished() {
        return Err(Error::MonitorFinished);
    }
    let e = residual(model, y, x)?;
    state.cusum += e;
    state.k += 1;
    let k = state.k;
    let heavy = cfg.eta > F::of(0.5);

    if heavy && k < state.a_m {
        state.status = Status::Warmup;
        return Ok(StepEvent {
            k,
            cusum: state.cusum,
            statistic: F::of(WARMUP_SENTINEL),
            threshold: cfg.critical_value,
            decision: Decision::Continue,
            active_member: None,
        });
    }

    let statistic = renyi_statistic(state, model, cfg);
    let decision = if statistic >= cfg.critical_value {
        state.status = Status::Rejected { at: k };
        Decision::Reject
    } else if k >= cfg.horizon {
        state.status = Status::Terminated;
        Decision::Terminate
    } else {
        state.status = Status::Active;
        Decision::Continue
    };
    Ok(StepEvent {
        k,
        cusum: state.cusum,
        statistic,
        threshold: cfg.critical_value,
        decision,
        active_member: None,
    })
}

/// Anything that consumes a stream one observation at a time and may stop it.
pub trait SequentialMonitor<F> {
    fn step(&mut self, y: F, x: &[F]) -> Result<StepEvent<F>>;
    fn status(&self) -> Status;
    fn steps(&self) -> usize;
    fn cusum(&self) -> F;
}

/// A single-weight monitor bound to a fitted model.
#[derive(Debug, Clone)]
pub struct Monitor<'a, F> {
    model: &'a MonitoringModel<F>,
    cfg: MonitorConfig<F>,
    state: MonitorState<F>,
}

impl<'a, F: Scalar> Monitor<'a, F> {
    pub fn new(model: &'a MonitoringModel<F>, cfg: MonitorConfig<F>) -> Result<Self> {
        let state = MonitorState::new(model, &cfg)?;
        Ok(Self { model, cfg, state })
    }

    pub fn state(&self) -> &MonitorState<F> {
        &self.state
    }

    pub fn config(&self) -> &MonitorConfig<F> {
        &self.cfg
    }
}

impl<F: Scalar> SequentialMonitor<F> for Monitor<'_, F> {
    fn step(&mut self, y: F, x: &[F]) -> Result<StepEvent<F>> {
        step(&mut self.state, self.model, &self.cfg, y, x)
    }

    fn status(&self) -> Status {
        self.state.status
    }

    fn steps(&self) -> usize {
        self.state.k
    }

    fn cusum(&self) -> F {
        self.state.cusum
    }
}

/// Runs a monitor over `(y, x)` pairs until it stops or the input ends. Returns every event.
pub fn run_stream<F: Scalar, M: SequentialMonitor<F>>(
    monitor: &mut M,
    stream: impl IntoIterator<Item = (F, Vec<F>)>,
) -> Result<Vec<StepEvent<F>>> {
    let mut events = Vec::new();
    for (y, x) in stream {
        let ev = monitor.step(y, &x)?;
        let done = ev.decision != Decision::Continue;
        events.push(ev);
        if done {
            break;
        }
    }
    Ok(events)
}
