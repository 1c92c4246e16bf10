//! JSON model files and NDJSON monitoring events.

use serde::{Deserialize, Serialize};

use crate::detector::{Decision, StepEvent};
use crate::error::{Error, Result};
use crate::format::{json_number, ser_sig17, ser_sig17_vec};
use crate::regression::MonitoringModel;
use crate::scalar::Scalar;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    #[serde(serialize_with = "ser_sig17_vec")]
    beta_hat: Vec<f64>,
    m: usize,
    d: usize,
    #[serde(serialize_with = "ser_sig17")]
    sigma_hat: f64,
    bandwidth: usize,
    lag_p: usize,
    #[serde(default, serialize_with = "ser_sig17_vec")]
    lag_tail: Vec<f64>,
}

pub fn model_to_json<F: Scalar>(model: &MonitoringModel<F>) -> String {
    let file = ModelFile {
        beta_hat: model.beta_hat.iter().map(|b| b.to_f64_lossy()).collect(),
        m: model.m,
        d: model.d,
        sigma_hat: model.sigma_hat.to_f64_lossy(),
        bandwidth: model.bandwidth,
        lag_p: model.lag_p,
        lag_tail: model.lag_tail.iter().map(|b| b.to_f64_lossy()).collect(),
    };
    serde_json::to_string_pretty(&file).expect("model serializes")
}

pub fn model_from_json<F: Scalar>(text: &str) -> Result<MonitoringModel<F>> {
    let f: ModelFile =
        serde_json::from_str(text).map_err(|e| Error::InvalidData(format!("model file: {e}")))?;
    if f.beta_hat.len() != f.d {
        return Err(Error::DimensionMismatch {
            expected: f.d,
            got: f.beta_hat.len(),
        });
    }
    if f.lag_tail.len() != f.lag_p {
        return Err(Error::InvalidData(format!(
            "model file: lag_tail has {} values, lag_p is {}",
            f.lag_tail.len(),
            f.lag_p
        )));
    }
    if !(f.sigma_hat.is_finite() && f.sigma_hat > 0.0) || f.beta_hat.iter().any(|b| !b.is_finite())
    {
        return Err(Error::InvalidData(
            "model file: non-finite or non-positive parameters".into(),
        ));
    }
    Ok(MonitoringModel {
        beta_hat: f.beta_hat.into_iter().map(F::of).collect(),
        m: f.m,
        d: f.d,
        sigma_hat: F::of(f.sigma_hat),
        bandwidth: f.bandwidth,
        lag_p: f.lag_p,
        lag_tail: f.lag_tail.into_iter().map(F::of).collect(),
    })
}

/// One NDJSON line (no trailing newline). Non-finite numbers become `null`.
pub fn event_to_ndjson<F: Scalar>(ev: &StepEvent<F>) -> String {
    let decision = match ev.decision {
        Decision::Continue => "continue",
        Decision::Reject => "reject",
        Decision::Terminate => "terminate",
    };
    let mut line = format!(
        "{{\"k\":{},\"cusum\":{},\"statistic\":{},\"threshold\":{},\"decision\":\"{}\"",
        ev.k,
        json_number(ev.cusum.to_f64_lossy()),
        json_number(ev.statistic.to_f64_lossy()),
        json_number(ev.threshold.to_f64_lossy()),
        decision
    );
    if let Some(j) = ev.active_member {
        line.push_str(&format!(",\"active_member\":{j}"));
    }
    line.push('}');
    line
}
