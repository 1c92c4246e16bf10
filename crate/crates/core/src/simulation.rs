//! Data-generating process and replication harness for size and detection-delay experiments.
//!
//! The DGP is `y_t = x_t' beta_t + rho y_{t-1} + eps_t` with `x_{1,t} = 1` and AR(1)
//! regressors `x_{j,t} = phi x_{j,t-1} + e_{j,t}`. With `rho = 0` the errors follow
//! `eps_t = theta eps_{t-1} + w_t`; otherwise they are i.i.d. N(0,1) and the fitted design
//! carries one lag of `y`.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critval::{CriticalValueTable, WienerSimSettings, GENERATOR};
use crate::detector::{trim_value, Decision, Monitor, MonitorConfig, SequentialMonitor, TrimRule};
use crate::error::{Error, Result};
use crate::format::sig17;
use crate::regression::{fit_training, Dataset, LagSpec, Observation};
use crate::veto::{standard_combo, VetoConfig, VetoMonitor};

/// Discarded initial steps of the dynamic `y` recursion (started at `y_0 = 0`).
pub const DYNAMIC_BURN_IN: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub m: usize,
    pub horizon: usize,
    /// Regressor count including the intercept (lags of `y` excluded).
    pub d: usize,
    pub rho: f64,
    pub phi: f64,
    pub theta: f64,
    pub sigma_beta: f64,
    pub seed: u64,
}

impl DgpConfig {
    /// Dynamic design: `rho = phi = sigma_beta = 0.5`, `d = 2`, `T_m = m`.
    pub fn dynamic(m: usize, seed: u64) -> Self {
        Self {
            m,
            horizon: m,
            d: 2,
            rho: 0.5,
            phi: 0.5,
            theta: 0.5,
            sigma_beta: 0.5,
            seed,
        }
    }

    /// Static design with AR(1) errors, `theta = 0.5`.
    pub fn static_model(m: usize, seed: u64) -> Self {
        Self {
            rho: 0.0,
            ..Self::dynamic(m, seed)
        }
    }

    pub fn is_dynamic(&self) -> bool {
        self.rho != 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let stationary = |name: &str, v: f64| {
            if v.is_finite() && v.abs() < 1.0 {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "|{name}| must be < 1 (root outside the unit circle), got {v}"
                )))
            }
        };
        stationary("rho", self.rho)?;
        stationary("phi", self.phi)?;
        stationary("theta", self.theta)?;
        if self.rho.abs() >= 0.99 {
            warn!("rho = {} is close to a unit root", self.rho);
        }
        if self.d == 0 || self.m == 0 || self.horizon == 0 {
            return Err(Error::config("m, horizon and d must be positive"));
        }
        if !(self.sigma_beta >= 0.0) {
            return Err(Error::config("sigma_beta must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakKind {
    NoBreak,
    /// Break applies from monitoring step `k*` (observation `m + k*`) onward.
    At(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakSpec {
    pub kind: BreakKind,
    /// `beta_A - beta_0`, length `d`.
    pub delta: Vec<f64>,
}

impl BreakSpec {
    pub fn none(d: usize) -> Self {
        Self {
            kind: BreakKind::NoBreak,
            delta: vec![0.0; d],
        }
    }

    /// Shift of `delta` in every coefficient, intercept included, from step `k_star`.
    pub fn uniform(k_star: usize, d: usize, delta: f64) -> Self {
        Self {
            kind: BreakKind::At(k_star),
            delta: vec![delta; d],
        }
    }

    pub fn validate(&self, cfg: &DgpConfig) -> Result<()> {
        if self.delta.len() != cfg.d {
            return Err(Error::DimensionMismatch {
                expected: cfg.d,
                got: self.delta.len(),
            });
        }
        if let BreakKind::At(k) = self.kind {
            if k == 0 || k > cfg.horizon {
                return Err(Error::config(format!(
                    "break location k* = {k} outside 1..={}",
                    cfg.horizon
                )));
            }
        }
        Ok(())
    }

    fn first_broken_row(&self, m: usize) -> usize {
        match self.kind {
            BreakKind::NoBreak => usize::MAX,
            BreakKind::At(k) => m + k - 1,
        }
    }
}

/// One simulated sample: `m + horizon` rows plus the ingredients that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSeries {
    /// Exogenous design (intercept first); lags of `y` are not embedded.
    pub data: Dataset<f64>,
    /// `p = 1` seeded by the last burn-in response for dynamic designs, `p = 0` otherwise.
    pub lag: LagSpec<f64>,
    pub beta0: Vec<f64>,
    /// Regression errors `eps_t`.
    pub noise: Vec<f64>,
}

pub fn generate(cfg: &DgpConfig, brk: &BreakSpec) -> Result<SimulatedSeries> {
    cfg.validate()?;
    brk.validate(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

    let beta0: Vec<f64> = (0..cfg.d)
        .map(|_| 1.0 + cfg.sigma_beta * normal())
        .collect();
    let beta_a: Vec<f64> = beta0.iter().zip(&brk.delta).map(|(b, d)| b + d).collect();
    let exog = cfg.d - 1;
    let x_sd = (1.0 / (1.0 - cfg.phi * cfg.phi)).sqrt();
    let mut x_state: Vec<f64> = (0..exog).map(|_| x_sd * normal()).collect();
    let e_sd = (1.0 / (1.0 - cfg.theta * cfg.theta)).sqrt();
    let mut eps_prev = if cfg.is_dynamic() {
        0.0
    } else {
        e_sd * normal()
    };

    let burn = if cfg.is_dynamic() { DYNAMIC_BURN_IN } else { 0 };
    let n = cfg.m + cfg.horizon;
    let first_broken = brk.first_broken_row(cfg.m);
    let mut y_prev = 0.0;
    let mut presample = 0.0;
    let mut rows = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);

    for t in 0..burn + n {
        let mut x = Vec::with_capacity(cfg.d);
        x.push(1.0);
        for xs in x_state.iter_mut() {
            *xs = cfg.phi * *xs + normal();
            x.push(*xs);
        }
        let eps = if cfg.is_dynamic() {
            normal()
        } else {
            eps_prev = cfg.theta * eps_prev + normal();
            eps_prev
        };
        let beta = if t >= burn && t - burn >= first_broken {
            &beta_a
        } else {
            &beta0
        };
        let mean: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
        let y = mean + cfg.rho * y_prev + eps;
        if t >= burn {
            rows.push(Observation { y, x });
            noise.push(eps);
        }
        if t + 1 == burn {
            presample = y;
        }
        y_prev = y;
    }
    let lag = if cfg.is_dynamic() {
        LagSpec::seeded(vec![presample])
    } else {
        LagSpec::none()
    };
    Ok(SimulatedSeries {
        data: Dataset::new(rows, None)?,
        lag,
        beta0,
        noise,
    })
}

/// Monitor as named in an experiment: one weight, a standard veto set, or an explicit set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MonitorSpec {
    Single {
        eta: f64,
    },
    Named {
        veto: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c_alpha: Option<f64>,
    },
    Veto {
        etas: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c_alpha: Option<f64>,
    },
}

/// Monitor with every critical value filled in.
#[derive(Debug, Clone, PartialEq)]
pub enum ResolvedMonitor {
    Single {
        label: String,
        eta: f64,
        critical_value: f64,
    },
    Veto {
        label: String,
        etas: Vec<f64>,
        criticals: Vec<f64>,
        c_alpha: f64,
    },
}

impl ResolvedMonitor {
    pub fn single(eta: f64, critical_value: f64) -> Self {
        ResolvedMonitor::Single {
            label: eta_label(eta),
            eta,
            critical_value,
        }
    }

    pub fn label(&self) -> &str {
        match self {
            ResolvedMonitor::Single { label, .. } | ResolvedMonitor::Veto { label, .. } => label,
        }
    }

    /// Instantiates the monitor over a fitted model.
    pub fn build<'a>(
        &self,
        model: &'a crate::regression::MonitoringModel<f64>,
        trim: TrimRule,
        alpha: f64,
        horizon: usize,
    ) -> Result<Box<dyn SequentialMonitor<f64> + 'a>> {
        Ok(match self {
            ResolvedMonitor::Single {
                eta,
                critical_value,
                ..
            } => Box::new(Monitor::new(
                model,
                MonitorConfig {
                    eta: *eta,
                    alpha,
                    trim,
                    horizon,
                    critical_value: *critical_value,
                },
            )?),
            ResolvedMonitor::Veto {
                etas,
                criticals,
                c_alpha,
                ..
            } => Box::new(VetoMonitor::new(
                model,
                VetoConfig {
                    etas: etas.clone(),
                    per_eta_criticals: criticals.clone(),
                    c_alpha: *c_alpha,
                    trim,
                    alpha,
                    horizon,
                },
            )?),
        })
    }
}

fn eta_label(eta: f64) -> String {
    format!("{eta}")
}

pub fn resolve_monitor(
    spec: &MonitorSpec,
    alpha: f64,
    settings: &WienerSimSettings,
    table: &mut CriticalValueTable,
) -> Result<ResolvedMonitor> {
    let veto =
        |label: String, etas: &[f64], c_override: Option<f64>, table: &mut CriticalValueTable| {
            let (criticals, c) = match c_override {
                Some(c) => (
                    etas.iter()
                        .map(|&e| table.single_quantile(e, alpha, settings))
                        .collect::<Result<Vec<_>>>()?,
                    c,
                ),
                None => table.veto_criticals(etas, alpha, settings)?,
            };
            Ok(ResolvedMonitor::Veto {
                label,
                etas: etas.to_vec(),
                criticals,
                c_alpha: c,
            })
        };
    match spec {
        MonitorSpec::Single { eta } => Ok(ResolvedMonitor::single(
            *eta,
            table.single_quantile(*eta, alpha, settings)?,
        )),
        MonitorSpec::Named {
            veto: name,
            c_alpha,
        } => {
            let t = standard_combo(name)
                .ok_or_else(|| Error::config(format!("unknown veto set `{name}`")))?;
            veto(t.name.to_string(), &t.etas, *c_alpha, table)
        }
        MonitorSpec::Veto { etas, c_alpha } => {
            let label = format!(
                "veto({})",
                etas.iter()
                    .map(|e| eta_label(*e))
                    .collect::<Vec<_>>()
                    .join(";")
            );
            veto(label, etas, *c_alpha, table)
        }
    }
}

/// Stopping step of one replication, `None` when the horizon passes without rejection.
pub fn run_replication(
    cfg: &DgpConfig,
    brk: &BreakSpec,
    monitor: &ResolvedMonitor,
    trim: TrimRule,
    alpha: f64,
) -> Result<Option<usize>> {
    let series = generate(cfg, brk)?;
    let train = series.data.slice(0..cfg.m)?;
    let model = fit_training(&train, &series.lag)?;
    let mut lags = model.params.lag_state();
    let mut mon = monitor.build(&model.params, trim, alpha, cfg.horizon)?;
    for row in &series.data.rows()[cfg.m..] {
        let x = lags.augment(&row.x);
        let ev = mon.step(row.y, &x)?;
        lags.push(row.y);
        match ev.decision {
            Decision::Reject => return Ok(Some(ev.k)),
            Decision::Terminate => return Ok(None),
            Decision::Continue => {}
        }
    }
    Ok(None)
}

/// Replication `i` uses DGP seed `seed ^ i`.
fn replicate(
    cfg: &DgpConfig,
    brk: &BreakSpec,
    monitor: &ResolvedMonitor,
    trim: TrimRule,
    alpha: f64,
    replications: usize,
    seed: u64,
) -> Result<Vec<Option<usize>>> {
    (0..replications)
        .into_par_iter()
        .map(|i| {
            let rep_cfg = DgpConfig {
                seed: seed ^ i as u64,
                ..cfg.clone()
            };
            run_replication(&rep_cfg, brk, monitor, trim, alpha)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayMeasure {
    /// `tau`, counted from the start of monitoring.
    FromStart,
    /// `tau - k*`; rejections before the break count as false alarms.
    FromBreak,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub replications: usize,
    pub rejections: usize,
    /// Replications with no rejection by the horizon.
    pub censored: usize,
    /// Rejections before the break (only under `DelayMeasure::FromBreak`).
    pub false_alarms: usize,
    pub delays: Vec<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelaySummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    /// Average run length (mean delay).
    pub arl: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted data (so even-sized medians average the middle pair).
fn interpolated_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl ExperimentResult {
    pub fn rejection_frequency(&self) -> f64 {
        self.rejections as f64 / self.replications as f64
    }

    /// More than half of the replications never detected the break.
    pub fn mostly_censored(&self) -> bool {
        2 * self.censored > self.replications
    }

    pub fn summary(&self) -> Option<DelaySummary> {
        if self.delays.is_empty() {
            return None;
        }
        let mut v: Vec<f64> = self.delays.iter().map(|&d| d as f64).collect();
        v.sort_by(f64::total_cmp);
        Some(DelaySummary {
            min: v[0],
            q1: interpolated_quantile(&v, 0.25),
            median: interpolated_quantile(&v, 0.5),
            arl: v.iter().sum::<f64>() / v.len() as f64,
            q3: interpolated_quantile(&v, 0.75),
            max: v[v.len() - 1],
        })
    }

    pub fn median_delay(&self) -> Option<f64> {
        if self.mostly_censored() {
            return None;
        }
        self.summary().map(|s| s.median)
    }
}

/// Empirical size: the fraction of break-free replications that reject.
pub fn run_size_experiment(
    cfg: &DgpConfig,
    monitor: &ResolvedMonitor,
    trim: TrimRule,
    alpha: f64,
    replications: usize,
    seed: u64,
) -> Result<ExperimentResult> {
    let brk = BreakSpec::none(cfg.d);
    let stops = replicate(cfg, &brk, monitor, trim, alpha, replications, seed)?;
    let rejections = stops.iter().filter(|s| s.is_some()).count();
    Ok(ExperimentResult {
        replications,
        rejections,
        censored: replications - rejections,
        false_alarms: 0,
        delays: Vec::new(),
    })
}

#[allow(clippy::too_many_arguments)]
pub fn run_delay_experiment(
    cfg: &DgpConfig,
    brk: &BreakSpec,
    monitor: &ResolvedMonitor,
    trim: TrimRule,
    alpha: f64,
    replications: usize,
    seed: u64,
    measure: DelayMeasure,
) -> Result<ExperimentResult> {
    let k_star = match brk.kind {
        BreakKind::At(k) => k,
        BreakKind::NoBreak => return Err(Error::config("delay experiments need a break location")),
    };
    let stops = replicate(cfg, brk, monitor, trim, alpha, replications, seed)?;
    let mut out = ExperimentResult {
        replications,
        ..Default::default()
    };
    for stop in stops {
        match stop {
            None => out.censored += 1,
            Some(tau) => {
                out.rejections += 1;
                match measure {
                    DelayMeasure::FromStart => out.delays.push(tau as i64),
                    DelayMeasure::FromBreak if tau < k_star => out.false_alarms += 1,
                    DelayMeasure::FromBreak => out.delays.push(tau as i64 - k_star as i64),
                }
            }
        }
    }
    Ok(out)
}

/// Where the break falls, relative to the monitoring start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakLocation {
    /// `k* = a_m`; delays reported as `tau`.
    Early,
    /// `k* = floor(T_m / 5)`; delays reported as `tau - k*`.
    Late,
    /// Explicit `k*`; delays reported as `tau - k*`.
    At(usize),
}

impl BreakLocation {
    pub fn resolve(
        &self,
        m: usize,
        horizon: usize,
        trim: TrimRule,
    ) -> Result<(usize, DelayMeasure)> {
        Ok(match *self {
            BreakLocation::Early => (trim_value(trim, m)?, DelayMeasure::FromStart),
            BreakLocation::Late => ((horizon / 5).max(1), DelayMeasure::FromBreak),
            BreakLocation::At(k) => (k, DelayMeasure::FromBreak),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableLayout {
    /// Monitors as rows, `(a_m, m)` as columns, rejection frequencies.
    SizeTable,
    /// `(m, a_m)` as rows, monitors as columns, median delays.
    DelayTable,
    /// Per `(m, a_m)`: Min/Q1/MED/ARL/Q3/Max rows, monitors as columns.
    SummaryTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub monitor: String,
    pub trim: TrimRule,
    pub m: usize,
    pub result: ExperimentResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    /// 17 significant digits.
    Full,
    /// Three decimals.
    Display,
}

fn fmt_value(v: f64, p: Precision) -> String {
    match p {
        Precision::Full => sig17(v),
        Precision::Display => format!("{v:.3}"),
    }
}

fn unique<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for it in items {
        if !out.contains(&it) {
            out.push(it);
        }
    }
    out
}

/// Renders a results grid as CSV. Cells are looked up by `(monitor, trim, m)`.
pub fn emit_table(cells: &[GridCell], layout: TableLayout, precision: Precision) -> String {
    let monitors = unique(cells.iter().map(|c| c.monitor.clone()));
    let cols = unique(cells.iter().map(|c| (c.trim, c.m)));
    let find = |mon: &str, trim: TrimRule, m: usize| {
        cells
            .iter()
            .find(|c| c.monitor == mon && c.trim == trim && c.m == m)
            .map(|c| &c.result)
    };
    let na = || "NA".to_string();
    let mut out = String::new();
    match layout {
        TableLayout::SizeTable => {
            out.push_str("monitor");
            for (trim, m) in &cols {
                out.push_str(&format!(",{}/{m}", trim.label()));
            }
            out.push('\n');
            for mon in &monitors {
                out.push_str(mon);
                for (trim, m) in &cols {
                    let v = find(mon, *trim, *m)
                        .map(|r| fmt_value(r.rejection_frequency(), precision))
                        .unwrap_or_else(na);
                    out.push_str(&format!(",{v}"));
                }
                out.push('\n');
            }
        }
        TableLayout::DelayTable => {
            out.push_str("m,a_m");
            for mon in &monitors {
                out.push_str(&format!(",{mon}"));
            }
            out.push('\n');
            for (trim, m) in &cols {
                out.push_str(&format!("{m},{}", trim.label()));
                for mon in &monitors {
                    let v = find(mon, *trim, *m)
                        .and_then(ExperimentResult::median_delay)
                        .map(|d| fmt_value(d, precision))
                        .unwrap_or_else(na);
                    out.push_str(&format!(",{v}"));
                }
                out.push('\n');
            }
        }
        TableLayout::SummaryTable => {
            out.push_str("m,a_m,stat");
            for mon in &monitors {
                out.push_str(&format!(",{mon}"));
            }
            out.push('\n');
            type Pick = fn(&DelaySummary) -> f64;
            let stats: [(&str, Pick); 6] = [
                ("Min", |s| s.min),
                ("Q1", |s| s.q1),
                ("MED", |s| s.median),
                ("ARL", |s| s.arl),
                ("Q3", |s| s.q3),
                ("Max", |s| s.max),
            ];
            for (trim, m) in &cols {
                for (name, pick) in stats {
                    out.push_str(&format!("{m},{},{name}", trim.label()));
                    for mon in &monitors {
                        let v = find(mon, *trim, *m)
                            .filter(|r| !r.mostly_censored())
                            .and_then(ExperimentResult::summary)
                            .map(|s| fmt_value(pick(&s), precision))
                            .unwrap_or_else(na);
                        out.push_str(&format!(",{v}"));
                    }
                    out.push('\n');
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Size,
    Delay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaSpec {
    /// The same shift in every coefficient, intercept included.
    Uniform(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakConfig {
    pub location: BreakLocation,
    pub delta: DeltaSpec,
}

impl BreakConfig {
    pub fn to_spec(&self, k_star: usize, d: usize) -> Result<BreakSpec> {
        let delta = match &self.delta {
            DeltaSpec::Uniform(v) => vec![*v; d],
            DeltaSpec::Vector(v) => v.clone(),
        };
        Ok(BreakSpec {
            kind: BreakKind::At(k_star),
            delta,
        })
    }
}

/// Experiment file accepted by the `simulate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub dgp: DgpConfig,
    /// Training lengths to sweep; each uses `T_m = m`. Defaults to `dgp.m` with `dgp.horizon`.
    #[serde(default)]
    pub ms: Option<Vec<usize>>,
    pub monitors: Vec<MonitorSpec>,
    pub trims: Vec<TrimRule>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub replications: usize,
    pub seed: u64,
    #[serde(default, rename = "break")]
    pub brk: Option<BreakConfig>,
    /// Wiener simulation settings for critical values; test scale with `seed` if absent.
    #[serde(default)]
    pub critval: Option<WienerSimSettings>,
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub cells: Vec<GridCell>,
    /// `(file name, CSV text)` pairs.
    pub tables: Vec<(String, String)>,
    pub manifest: String,
}

impl ExperimentConfig {
    pub fn critval_settings(&self) -> WienerSimSettings {
        self.critval
            .unwrap_or_else(|| WienerSimSettings::test_scale(self.seed))
    }

    fn grid(&self) -> Vec<DgpConfig> {
        match &self.ms {
            Some(ms) => ms
                .iter()
                .map(|&m| DgpConfig {
                    m,
                    horizon: m,
                    ..self.dgp.clone()
                })
                .collect(),
            None => vec![self.dgp.clone()],
        }
    }
}

/// Runs every `(monitor, trim, m)` cell and renders tables plus a reproducibility manifest.
pub fn run_experiment(
    exp: &ExperimentConfig,
    table: &mut CriticalValueTable,
) -> Result<ExperimentOutput> {
    if exp.monitors.is_empty() || exp.trims.is_empty() || exp.replications == 0 {
        return Err(Error::config(
            "experiment needs monitors, trimming rules and replications > 0",
        ));
    }
    let settings = exp.critval_settings();
    let monitors = exp
        .monitors
        .iter()
        .map(|s| resolve_monitor(s, exp.alpha, &settings, table))
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::new();
    for mon in &monitors {
        for &trim in &exp.trims {
            for dgp in exp.grid() {
                let result = match exp.kind {
                    ExperimentKind::Size => {
                        run_size_experiment(&dgp, mon, trim, exp.alpha, exp.replications, exp.seed)?
                    }
                    ExperimentKind::Delay => {
                        let bc = exp.brk.as_ref().ok_or_else(|| {
                            Error::config("delay experiments need a `break` section")
                        })?;
                        let (k_star, measure) = bc.location.resolve(dgp.m, dgp.horizon, trim)?;
                        let brk = bc.to_spec(k_star, dgp.d)?;
                        run_delay_experiment(
                            &dgp,
                            &brk,
                            mon,
                            trim,
                            exp.alpha,
                            exp.replications,
                            exp.seed,
                            measure,
                        )?
                    }
                };
                cells.push(GridCell {
                    monitor: mon.label().to_string(),
                    trim,
                    m: dgp.m,
                    result,
                });
            }
        }
    }

    let layouts: &[(&str, TableLayout)] = match exp.kind {
        ExperimentKind::Size => &[("size", TableLayout::SizeTable)],
        ExperimentKind::Delay => &[
            ("delay", TableLayout::DelayTable),
            ("summary", TableLayout::SummaryTable),
        ],
    };
    let mut tables = Vec::new();
    for (name, layout) in layouts {
        tables.push((
            format!("{name}.csv"),
            emit_table(&cells, *layout, Precision::Full),
        ));
        tables.push((
            format!("{name}_display.csv"),
            emit_table(&cells, *layout, Precision::Display),
        ));
    }

    let manifest = manifest_json(exp, &settings, &monitors, &cells);
    Ok(ExperimentOutput {
        cells,
        tables,
        manifest,
    })
}

fn manifest_json(
    exp: &ExperimentConfig,
    settings: &WienerSimSettings,
    monitors: &[ResolvedMonitor],
    cells: &[GridCell],
) -> String {
    use serde_json::{json, Value};
    let resolved: Vec<Value> = monitors
        .iter()
        .map(|m| match m {
            ResolvedMonitor::Single {
                label,
                eta,
                critical_value,
            } => json!({"label": label, "eta": eta, "critical_value": critical_value}),
            ResolvedMonitor::Veto {
                label,
                etas,
                criticals,
                c_alpha,
            } => json!({"label": label, "etas": etas, "criticals": criticals, "c_alpha": c_alpha}),
        })
        .collect();
    let cell_rows: Vec<Value> = cells
        .iter()
        .map(|c| {
            json!({
                "monitor": c.monitor,
                "a_m": c.trim.label(),
                "m": c.m,
                "replications": c.result.replications,
                "rejections": c.result.rejections,
                "censored": c.result.censored,
                "false_alarms": c.result.false_alarms,
            })
        })
        .collect();
    let v = json!({
        "config": exp,
        "replication_seeds": format!("dgp seed = {} xor replication index", exp.seed),
        "critval_settings": settings,
        "critval_generator": GENERATOR,
        "dgp_generator": GENERATOR,
        "monitors": resolved,
        "cells": cell_rows,
        "version": env!("CARGO_PKG_VERSION"),
    });
    serde_json::to_string_pretty(&v).expect("manifest serializes")
}
