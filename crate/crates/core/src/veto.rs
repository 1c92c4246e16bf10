//! Composite monitor: several weights share one CUSUM and the stream stops at the first
//! step where any member's boundary is crossed.
//!
//! Member `j` crosses when `r_j^{eta_j - 1/2} |Q| / g_{eta_j} >= C_alpha * c_j`, which is the
//! same event as `|Q| >= C_alpha c_j r_j^{1/2 - eta_j} g_{eta_j}`. Heavy members
//! (`eta_j > 1/2`) have an infinite threshold before `a_m`.

use crate::detector::{
    boundary, classify_eta, normalized_statistic, norming_ratio, trim_value, validate_common,
    Decision, SequentialMonitor, Status, StepEvent, TrimRule, WARMUP_SENTINEL,
};
use crate::error::{Error, Result};
use crate::regression::{residual, MonitoringModel};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct VetoConfig<F> {
    pub etas: Vec<F>,
    pub per_eta_criticals: Vec<F>,
    /// Procedure-wise scaling `C_alpha`.
    pub c_alpha: F,
    pub trim: TrimRule,
    pub alpha: F,
    pub horizon: usize,
}

impl<F: Scalar> VetoConfig<F> {
    /// Validates and returns `a_m` for the heavy members (1 if there are none).
    pub fn validate(&self, m: usize) -> Result<usize> {
        if self.etas.is_empty() {
            return Err(Error::config("veto needs at least one weight"));
        }
        if self.etas.len() != self.per_eta_criticals.len() {
            return Err(Error::config(format!(
                "{} weights but {} critical values",
                self.etas.len(),
                self.per_eta_criticals.len()
            )));
        }
        validate_common(self.alpha, self.horizon)?;
        if self.c_alpha.is_nan() || self.c_alpha < F::zero() {
            return Err(Error::config("C_alpha must be >= 0"));
        }
        if self
            .per_eta_criticals
            .iter()
            .any(|c| c.is_nan() || *c < F::zero())
        {
            return Err(Error::config("critical values must be >= 0"));
        }
        let mut any_heavy = false;
        for &eta in &self.etas {
            any_heavy |= classify_eta(eta)?;
        }
        if !any_heavy {
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

/// `|Q|`-scale threshold of member `j` at step `k`; `+inf` inside a heavy member's trimming window.
pub fn veto_threshold<F: Scalar>(
    m: usize,
    k: usize,
    j: usize,
    cfg: &VetoConfig<F>,
    sigma: F,
) -> Result<F> {
    let eta = cfg.etas[j];
    let heavy = classify_eta(eta)?;
    let c = cfg.c_alpha * cfg.per_eta_criticals[j];
    if !heavy {
        return Ok(c * boundary(m, k, eta, sigma));
    }
    let a_m = trim_value(cfg.trim, m)?;
    if k < a_m {
        return Ok(F::infinity());
    }
    let r_m: F = norming_ratio(a_m, m);
    Ok(c * r_m.powf(F::of(0.5) - eta) * boundary(m, k, eta, sigma))
}

#[derive(Debug, Clone, PartialEq)]
struct Member<F> {
    eta: F,
    heavy: bool,
    /// `C_alpha * c_j`, the threshold on the normalized-statistic scale.
    threshold: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VetoState<F> {
    pub k: usize,
    pub cusum: F,
    pub status: Status,
    pub a_m: usize,
    pub r_m: F,
    members: Vec<Member<F>>,
}

impl<F: Scalar> VetoState<F> {
    pub fn new(model: &MonitoringModel<F>, cfg: &VetoConfig<F>) -> Result<Self> {
        let a_m = cfg.validate(model.m)?;
        let members: Vec<Member<F>> = cfg
            .etas
            .iter()
            .zip(&cfg.per_eta_criticals)
            .map(|(&eta, &c)| Member {
                eta,
                heavy: eta > F::of(0.5),
                threshold: cfg.c_alpha * c,
            })
            .collect();
        let all_heavy = members.iter().all(|mb| mb.heavy);
        Ok(Self {
            k: 0,
            cusum: F::zero(),
            status: if all_heavy {
                Status::Warmup
            } else {
                Status::Active
            },
            a_m,
            r_m: norming_ratio(a_m, model.m),
            members,
        })
    }

    /// Normalized-scale thresholds `C_alpha * c_j`, in member order.
    pub fn member_thresholds(&self) -> Vec<F> {
        self.members.iter().map(|mb| mb.threshold).collect()
    }
}

pub fn veto_step<F: Scalar>(
    state: &mut VetoState<F>,
    model: &MonitoringModel<F>,
    cfg: &VetoConfig<F>,
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

    // (member, statistic) for members whose boundary is finite at k.
    let active: Vec<(usize, F)> = state
        .members
        .iter()
        .enumerate()
        .filter(|(_, mb)| !mb.heavy || k >= state.a_m)
        .map(|(j, mb)| {
            let r_tilde = if mb.heavy { state.r_m } else { F::one() };
            let stat =
                normalized_statistic(state.cusum, model.m, k, mb.eta, model.sigma_hat, r_tilde);
            (j, stat)
        })
        .collect();

    if active.is_empty() {
        state.status = Status::Warmup;
        return Ok(StepEvent {
            k,
            cusum: state.cusum,
            statistic: F::of(WARMUP_SENTINEL),
            threshold: state.members[0].threshold,
            decision: Decision::Continue,
            active_member: None,
        });
    }

    let crossed = |&(j, s): &(usize, F)| s >= state.members[j].threshold;
    let reject = active.iter().any(crossed);
    // Tightest member: largest statistic-to-threshold ratio, first on ties.
    let ratio = |&(j, s): &(usize, F)| {
        let t = state.members[j].threshold;
        if t > F::zero() {
            s / t
        } else {
            F::infinity()
        }
    };
    let (best_j, best_stat) = active
        .iter()
        .filter(|p| !reject || crossed(p))
        .fold(None::<(usize, F)>, |acc, p| match acc {
            Some(a) if ratio(&a) >= ratio(p) => Some(a),
            _ => Some(*p),
        })
        .expect("at least one active member");

    let decision = if reject {
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
        statistic: best_stat,
        threshold: state.members[best_j].threshold,
        decision,
        active_member: reject.then_some(best_j),
    })
}

#[derive(Debug, Clone)]
pub struct VetoMonitor<'a, F> {
    model: &'a MonitoringModel<F>,
    cfg: VetoConfig<F>,
    state: VetoState<F>,
}

impl<'a, F: Scalar> VetoMonitor<'a, F> {
    pub fn new(model: &'a MonitoringModel<F>, cfg: VetoConfig<F>) -> Result<Self> {
        let state = VetoState::new(model, &cfg)?;
        Ok(Self { model, cfg, state })
    }

    pub fn state(&self) -> &VetoState<F> {
        &self.state
    }

    pub fn config(&self) -> &VetoConfig<F> {
        &self.cfg
    }
}

impl<F: Scalar> SequentialMonitor<F> for VetoMonitor<'_, F> {
    fn step(&mut self, y: F, x: &[F]) -> Result<StepEvent<F>> {
        veto_step(&mut self.state, self.model, &self.cfg, y, x)
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

/// Named weight sets; critical values are resolved separately.
#[derive(Debug, Clone, PartialEq)]
pub struct VetoTemplate {
    pub name: &'static str,
    pub etas: Vec<f64>,
}

pub fn standard_combos() -> Vec<VetoTemplate> {
    vec![
        VetoTemplate {
            name: "V2",
            etas: vec![0.2, 0.85],
        },
        VetoTemplate {
            name: "V3",
            etas: vec![0.2, 0.3, 0.85],
        },
        VetoTemplate {
            name: "V5",
            etas: vec![0.2, 0.45, 0.65, 0.85, 0.9],
        },
    ]
}

pub fn standard_combo(name: &str) -> Option<VetoTemplate> {
    standard_combos()
        .into_iter()
        .find(|t| t.name.eq_ignore_ascii_case(name))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{run_stream, Monitor, MonitorConfig};
    use approx::assert_relative_eq;

    fn model(m: usize) -> MonitoringModel<f64> {
        MonitoringModel {
            beta_hat: vec![0.0],
            m,
            d: 1,
            sigma_hat: 1.0,
            bandwidth: 0,
            lag_p: 0,
            lag_tail: vec![],
        }
    }

    fn veto(etas: Vec<f64>, cs: Vec<f64>, trim: TrimRule, horizon: usize) -> VetoConfig<f64> {
        VetoConfig {
            etas,
            per_eta_criticals: cs,
            c_alpha: 1.0,
            trim,
            alpha: 0.05,
            horizon,
        }
    }

    #[test]
    fn threshold_branches() {
        let cfg = veto(vec![0.25, 0.85], vec![2.0, 3.0], TrimRule::Fixed(4), 100);
        assert_relative_eq!(
            veto_threshold(100, 1, 0, &cfg, 1.0).unwrap(),
            2.0 * boundary(100, 1, 0.25, 1.0)
        );
        assert_eq!(veto_threshold(100, 3, 1, &cfg, 1.0).unwrap(), f64::INFINITY);
        assert!(veto_threshold(100, 4, 1, &cfg, 1.0).unwrap().is_finite());
    }

    #[test]
    fn threshold_matches_statistic_example() {
        let cfg = veto(vec![1.0], vec![1.0], TrimRule::Fixed(4), 100);
        let t = veto_threshold(100, 4, 0, &cfg, 1.0).unwrap();
        assert_relative_eq!(t, 2.039_607_805_437_114, max_relative = 1e-14);
        assert_relative_eq!(2.0 / t, 0.980_580_675_690_920_2, max_relative = 1e-14);
    }

    #[test]
    fn standard_sets() {
        let combos = standard_combos();
        assert_eq!(combos[0].etas, vec![0.2, 0.85]);
        assert_eq!(combos[1].etas, vec![0.2, 0.3, 0.85]);
        assert_eq!(combos[2].etas, vec![0.2, 0.45, 0.65, 0.85, 0.9]);
        assert_eq!(standard_combo("v3").unwrap().name, "V3");
    }

    #[test]
    fn heavy_member_masked_during_warmup() {
        let mdl = model(500);
        // Light member can never fire; heavy member always fires once active.
        let cfg = veto(
            vec![0.2, 0.85],
            vec![f64::INFINITY, 0.0],
            TrimRule::Fixed(5),
            100,
        );
        let mut mon = VetoMonitor::new(&mdl, cfg).unwrap();
        assert_eq!(mon.status(), Status::Active);
        let events = run_stream(&mut mon, (0..100).map(|_| (1.0, vec![1.0]))).unwrap();
        assert_eq!(events.len(), 5);
        assert!(events[..4].iter().all(|e| e.decision == Decision::Continue));
        assert_eq!(events[4].active_member, Some(1));
    }

    #[test]
    fn single_member_matches_detector() {
        let mdl = model(200);
        let stream: Vec<(f64, Vec<f64>)> = (0..200)
            .map(|t| (((t * 7919) % 13) as f64 / 6.0 - 0.9, vec![1.0]))
            .collect();
        for eta in [0.25, 0.75, 1.2] {
            let c = 1.7;
            let mut single = Monitor::new(
                &mdl,
                MonitorConfig {
                    eta,
                    alpha: 0.05,
                    trim: TrimRule::Log,
                    horizon: 150,
                    critical_value: c,
                },
            )
            .unwrap();
            let mut v =
                VetoMonitor::new(&mdl, veto(vec![eta], vec![c], TrimRule::Log, 150)).unwrap();
            let a = run_stream(&mut single, stream.clone()).unwrap();
            let mut b = run_stream(&mut v, stream.clone()).unwrap();
            for e in &mut b {
                e.active_member = None;
            }
            assert_eq!(a, b);
        }
    }

    #[test]
    fn validation() {
        let mdl = model(100);
        assert!(VetoMonitor::new(&mdl, veto(vec![], vec![], TrimRule::Log, 100)).is_err());
        assert!(
            VetoMonitor::new(&mdl, veto(vec![0.2], vec![1.0, 2.0], TrimRule::Log, 100)).is_err()
        );
        assert!(VetoMonitor::new(
            &mdl,
            veto(vec![0.2, 0.5], vec![1.0, 2.0], TrimRule::Log, 100)
        )
        .is_err());
        assert!(VetoMonitor::new(
            &mdl,
            veto(vec![0.2, 0.8], vec![1.0, 2.0], TrimRule::None, 100)
        )
        .is_err());
        assert!(VetoMonitor::new(
            &mdl,
            veto(vec![0.2, 0.3], vec![1.0, 2.0], TrimRule::None, 100)
        )
        .is_ok());
    }
}
