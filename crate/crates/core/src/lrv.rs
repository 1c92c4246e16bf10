//! Bartlett-kernel long-run variance of the training residuals.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Below this lag-0 autocovariance the residuals are treated as identically zero.
pub const DEGENERACY_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct LrvEstimate<F> {
    pub sigma2_hat: F,
    pub bandwidth: usize,
    /// `gamma_0 ..= gamma_H`, each with divisor `m`.
    pub autocovariances: Vec<F>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BandwidthRule {
    /// `floor(m^{2/5})`.
    #[default]
    SimulationRule,
    /// `max(1, floor(d^{-1/2} m^{1/4}))`, balancing the bias and variance orders.
    TheoryRule,
}

pub fn default_bandwidth(m: usize, d: usize, rule: BandwidthRule) -> Result<usize> {
    if m < 2 {
        return Err(Error::Domain(format!("bandwidth needs m >= 2, got {m}")));
    }
    if d < 1 {
        return Err(Error::Domain("bandwidth needs d >= 1".into()));
    }
    let m = m as f64;
    let h = match rule {
        BandwidthRule::SimulationRule => floor_tol(m.powf(0.4)),
        BandwidthRule::TheoryRule => floor_tol(m.powf(0.25) / (d as f64).sqrt()).max(1),
    };
    Ok(h)
}

// floor that does not lose exact integers to pow rounding (16^{1/4} = 1.9999999999999998).
fn floor_tol(v: f64) -> usize {
    (v + 1e-9).floor() as usize
}

/// `sigma^2 = gamma_0 + 2 sum_{j=1}^H (1 - j/(H+1)) gamma_j`.
pub fn estimate_lrv<F: Scalar>(
    residuals: &[F],
    bandwidth: Option<usize>,
) -> Result<LrvEstimate<F>> {
    let m = residuals.len();
    if m < 2 {
        return Err(Error::Domain(format!(
            "long-run variance needs at least 2 residuals, got {m}"
        )));
    }
    let h = match bandwidth {
        Some(h) if h >= m => {
            return Err(Error::Domain(format!(
                "bandwidth {h} must be below m = {m}"
            )))
        }
        Some(h) => h,
        None => default_bandwidth(m, 1, BandwidthRule::SimulationRule)?,
    };
    let mf = F::of_usize(m);
    let autocovariances: Vec<F> = (0..=h)
        .map(|j| {
            residuals[j..]
                .iter()
                .zip(residuals)
                .map(|(a, b)| *a * *b)
                .sum::<F>()
                / mf
        })
        .collect();
    let gamma0 = autocovariances[0];
    if !(gamma0.to_f64_lossy() >= DEGENERACY_THRESHOLD) {
        return Err(Error::DegenerateResiduals {
            gamma0: gamma0.to_f64_lossy(),
        });
    }
    let hp1 = F::of_usize(h + 1);
    let two = F::of(2.0);
    let tail: F = autocovariances[1..]
        .iter()
        .enumerate()
        .map(|(i, g)| (F::one() - F::of_usize(i + 1) / hp1) * *g)
        .sum();
    let sigma2_hat = gamma0 + two * tail;
    if !(sigma2_hat > F::zero()) {
        return Err(Error::DegenerateResiduals {
            gamma0: gamma0.to_f64_lossy(),
        });
    }
    Ok(LrvEstimate {
        sigma2_hat,
        bandwidth: h,
        autocovariances,
    })
}
