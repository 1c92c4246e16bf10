//! Monte-Carlo quantiles of weighted Wiener suprema.
//!
//! Every weight `eta != 1/2` reduces to a functional of a standard Wiener process on the
//! unit interval. Light weights give `sup |W(s)| / s^eta`; Renyi weights, after time
//! inversion `sup_{u>=1} |W(u)|/u^eta = sup_{0<s<=1} |W(s)|/s^{1-eta}`, give exponent
//! `1 - eta`, which turns negative (a multiplicative weight) for `eta > 1`.
//!
//! Paths are discretized as `W(i/n) = n^{-1/2} sum_{l<=i} Z_l`. Replication `r` draws its
//! normals from ChaCha8 seeded with `seed ^ r`, so a sample does not depend on scheduling.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::classify_eta;
use crate::error::{Error, Result};
use crate::format::{ser_sig17, ser_sig17_vec};

/// Name recorded in cache fingerprints.
pub const GENERATOR: &str = "chacha8";

/// Relative quantile change between `n` and `2n` grid points above which a run is flagged.
pub const CONVERGENCE_FLAG: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WienerSimSettings {
    pub n_steps: usize,
    pub n_reps: usize,
    pub seed: u64,
}

impl WienerSimSettings {
    pub const MIN_STEPS: usize = 1000;
    pub const MIN_REPS: usize = 1000;

    /// 10^4 grid points, 2 * 10^4 paths.
    pub fn test_scale(seed: u64) -> Self {
        Self {
            n_steps: 10_000,
            n_reps: 20_000,
            seed,
        }
    }

    /// 10^5 grid points, 2 * 10^5 paths.
    pub fn publication(seed: u64) -> Self {
        Self {
            n_steps: 100_000,
            n_reps: 200_000,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps < Self::MIN_STEPS || self.n_reps < Self::MIN_REPS {
            return Err(Error::config(format!(
                "Wiener simulation needs n_steps >= {} and n_reps >= {}, got {} and {}",
                Self::MIN_STEPS,
                Self::MIN_REPS,
                self.n_steps,
                self.n_reps
            )));
        }
        Ok(())
    }
}

/// Exponent of the unit-interval functional for a given weight.
///
/// `gamma_tilde` lies in `[0, 1/2)`. For `eta <= 1` the functional is
/// `sup |W(s)| / s^gamma_tilde`; for `eta > 1` (`beyond_one`) it is
/// `sup |W(s)| * s^gamma_tilde` with `gamma_tilde = eta - 1`, which may exceed 1/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedExponent {
    pub gamma_tilde: f64,
    pub beyond_one: bool,
}

impl ReducedExponent {
    /// `e` such that the path is divided by `s^e`; negative when `beyond_one`.
    pub fn signed(&self) -> f64 {
        if self.beyond_one {
            -self.gamma_tilde
        } else {
            self.gamma_tilde
        }
    }

    pub fn from_signed(e: f64) -> Result<Self> {
        if !(e < 0.5) || !e.is_finite() {
            return Err(Error::Domain(format!(
                "functional exponent must be finite and below 1/2, got {e}"
            )));
        }
        Ok(Self {
            gamma_tilde: e.abs(),
            beyond_one: e < 0.0,
        })
    }
}

pub fn reduce_exponent(eta: f64) -> Result<ReducedExponent> {
    let heavy = classify_eta(eta)?;
    Ok(if !heavy {
        ReducedExponent {
            gamma_tilde: eta,
            beyond_one: false,
        }
    } else if eta <= 1.0 {
        ReducedExponent {
            gamma_tilde: 1.0 - eta,
            beyond_one: false,
        }
    } else {
        ReducedExponent {
            gamma_tilde: eta - 1.0,
            beyond_one: true,
        }
    })
}

/// Grid `u_i = i/n`, `i = 1..=n`.
fn grid(n: usize) -> impl Iterator<Item = f64> {
    let nf = n as f64;
    (1..=n).map(move |i| i as f64 / nf)
}

/// Weights `u_i^{-e}` of the single-weight functional.
pub fn single_weights(exponent: ReducedExponent, n: usize) -> Vec<f64> {
    let e = exponent.signed();
    grid(n).map(|u| u.powf(-e)).collect()
}

/// Weights `1 / min_j c_j u_i^{e_j}` of the veto functional.
pub fn veto_weights(exponents: &[ReducedExponent], criticals: &[f64], n: usize) -> Vec<f64> {
    grid(n)
        .map(|u| {
            let lo = exponents
                .iter()
                .zip(criticals)
                .map(|(e, c)| c * u.powf(e.signed()))
                .fold(f64::INFINITY, f64::min);
            1.0 / lo
        })
        .collect()
}

fn replication_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ rep as u64)
}

/// Discretized path `W(i/n)`, `i = 1..=n`, of replication `rep`.
pub fn wiener_path(seed: u64, rep: usize, n_steps: usize) -> Vec<f64> {
    let mut rng = replication_rng(seed, rep);
    let scale = 1.0 / (n_steps as f64).sqrt();
    let mut acc = 0.0f64;
    (0..n_steps)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            acc += z;
            acc * scale
        })
        .collect()
}

/// `max_i |path_i| * weights_i`.
pub fn weighted_sup(path: &[f64], weights: &[f64]) -> f64 {
    path.iter()
        .zip(weights)
        .map(|(w, g)| w.abs() * g)
        .fold(0.0, f64::max)
}

/// Draws `n_reps` independent values of `max_i |W(u_i)| * weights_i`, in replication order.
pub fn sup_sample(weights: &[f64], settings: &WienerSimSettings) -> Vec<f64> {
    let n = weights.len();
    let scale = 1.0 / (n as f64).sqrt();
    let scaled: Vec<f64> = weights.iter().map(|w| w * scale).collect();
    (0..settings.n_reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(settings.seed, rep);
            let mut acc = 0.0f64;
            let mut best = 0.0f64;
            for g in &scaled {
                let z: f64 = StandardNormal.sample(&mut rng);
                acc += z;
                let v = acc.abs() * g;
                if v > best {
                    best = v;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileEstimate {
    pub value: f64,
    /// Order-statistic (sparsity) estimate of the Monte-Carlo standard error.
    pub std_error: f64,
}

/// Type-1 empirical quantile: the order statistic at `ceil(p n)`.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    sorted[order_index(sorted.len(), p)]
}

fn order_index(n: usize, p: f64) -> usize {
    let pos = (p * n as f64 - 1e-9).ceil().max(1.0) as usize;
    pos.min(n) - 1
}

/// Upper-`alpha` quantile with its standard error, from an unsorted sample.
pub fn upper_quantile(mut sample: Vec<f64>, alpha: f64) -> QuantileEstimate {
    sample.sort_by(f64::total_cmp);
    let n = sample.len();
    let p = 1.0 - alpha;
    let j = order_index(n, p);
    let h = ((n as f64).sqrt().ceil() as usize).max(1);
    let lo = j.saturating_sub(h);
    let hi = (j + h).min(n - 1);
    let spread = sample[hi] - sample[lo];
    let width = (hi - lo).max(1) as f64;
    // sd(q_hat) = sqrt(p(1-p)/n) / f(q), with 1/f(q) ~ n * spread / width.
    let std_error = (p * (1.0 - p) / n as f64).sqrt() * n as f64 * spread / width;
    QuantileEstimate {
        value: sample[j],
        std_error,
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!(
            "alpha must be in (0,1), got {alpha}"
        )));
    }
    Ok(())
}

pub fn simulate_single_estimate(
    exponent: ReducedExponent,
    alpha: f64,
    settings: &WienerSimSettings,
) -> Result<QuantileEstimate> {
    check_alpha(alpha)?;
    settings.validate()?;
    ReducedExponent::from_signed(exponent.signed())?;
    let weights = single_weights(exponent, settings.n_steps);
    Ok(upper_quantile(sup_sample(&weights, settings), alpha))
}

/// `(1 - alpha)`-quantile of `sup_{0<s<=1} |W(s)| / s^gamma` (signed `gamma < 1/2`).
pub fn simulate_single_quantile(
    gamma_tilde: f64,
    alpha: f64,
    settings: &WienerSimSettings,
) -> Result<f64> {
    let e = ReducedExponent::from_signed(gamma_tilde)?;
    simulate_single_estimate(e, alpha, settings).map(|q| q.value)
}

pub fn simulate_veto_estimate(
    exponents: &[ReducedExponent],
    criticals: &[f64],
    alpha: f64,
    settings: &WienerSimSettings,
) -> Result<QuantileEstimate> {
    check_alpha(alpha)?;
    settings.validate()?;
    if exponents.is_empty() || exponents.len() != criticals.len() {
        return Err(Error::config(
            "veto functional needs matching, non-empty exponent and critical-value lists",
        ));
    }
    if criticals.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
        return Err(Error::config(
            "veto member critical values must be finite and > 0",
        ));
    }
    for e in exponents {
        ReducedExponent::from_signed(e.signed())?;
    }
    let weights = veto_weights(exponents, criticals, settings.n_steps);
    Ok(upper_quantile(sup_sample(&weights, settings), alpha))
}

/// `C_alpha`: the `(1 - alpha)`-quantile of `sup |W(u)| / min_j c_j u^{eta_tilde_j}`.
pub fn simulate_veto_c(
    eta_tildes: &[f64],
    criticals: &[f64],
    alpha: f64,
    settings: &WienerSimSettings,
) -> Result<f64> {
    let exps = eta_tildes
        .iter()
        .map(|&e| ReducedExponent::from_signed(e))
        .collect::<Result<Vec<_>>>()?;
    simulate_veto_estimate(&exps, criticals, alpha, settings).map(|q| q.value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub coarse: QuantileEstimate,
    pub fine: QuantileEstimate,
    pub coarse_settings: WienerSimSettings,
    pub fine_settings: WienerSimSettings,
    pub relative_difference: f64,
    pub flagged: bool,
}

/// Re-estimates the quantile on a grid twice as fine, with an independent seed.
pub fn convergence_check(
    gamma_tilde: f64,
    alpha: f64,
    settings: &WienerSimSettings,
) -> Result<ConvergenceReport> {
    let e = ReducedExponent::from_signed(gamma_tilde)?;
    let fine_settings = WienerSimSettings {
        n_steps: settings.n_steps * 2,
        seed: settings.seed ^ 0x9E37_79B9_7F4A_7C15,
        ..*settings
    };
    let coarse = simulate_single_estimate(e, alpha, settings)?;
    let fine = simulate_single_estimate(e, alpha, &fine_settings)?;
    let relative_difference = (fine.value - coarse.value).abs() / coarse.value;
    Ok(ConvergenceReport {
        coarse,
        fine,
        coarse_settings: *settings,
        fine_settings,
        relative_difference,
        flagged: relative_difference > CONVERGENCE_FLAG,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleEntry {
    #[serde(serialize_with = "ser_sig17")]
    pub gamma_tilde: f64,
    #[serde(serialize_with = "ser_sig17")]
    pub alpha: f64,
    #[serde(serialize_with = "ser_sig17")]
    pub quantile: f64,
    pub n_steps: usize,
    pub n_reps: usize,
    pub seed: u64,
    pub generator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VetoEntry {
    #[serde(serialize_with = "ser_sig17_vec")]
    pub eta_tildes: Vec<f64>,
    #[serde(serialize_with = "ser_sig17_vec")]
    pub criticals: Vec<f64>,
    #[serde(serialize_with = "ser_sig17")]
    pub alpha: f64,
    #[serde(serialize_with = "ser_sig17")]
    pub c_alpha: f64,
    pub n_steps: usize,
    pub n_reps: usize,
    pub seed: u64,
    pub generator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TableEntry {
    Single(SingleEntry),
    Veto(VetoEntry),
}

fn same_fingerprint(
    n_steps: usize,
    n_reps: usize,
    seed: u64,
    generator: &str,
    s: &WienerSimSettings,
) -> bool {
    n_steps == s.n_steps && n_reps == s.n_reps && seed == s.seed && generator == GENERATOR
}

/// Exponents closer than this share a cache entry (`1 - 0.85` vs `0.15`).
const EXPONENT_MATCH: f64 = 1e-12;

fn same_exponents(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= EXPONENT_MATCH)
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Simulated critical values keyed by exponent, level and simulation fingerprint.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CriticalValueTable {
    entries: Vec<TableEntry>,
}

impl CriticalValueTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[TableEntry] {
        &self.entries
    }

    pub fn from_json(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Ok(Self::new());
        }
        let entries = serde_json::from_str(text)
            .map_err(|e| Error::InvalidData(format!("critical value table: {e}")))?;
        Ok(Self { entries })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("table entries serialize")
    }

    /// Loads a table file; a missing file is an empty table.
    pub fn load(path: &Path) -> Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => Self::from_json(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::new()),
            Err(e) => Err(Error::InvalidData(format!("{}: {e}", path.display()))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")
            .map_err(|e| Error::InvalidData(format!("{}: {e}", path.display())))
    }

    pub fn lookup_single(
        &self,
        exponent: ReducedExponent,
        alpha: f64,
        s: &WienerSimSettings,
    ) -> Option<f64> {
        let g = exponent.signed();
        self.entries.iter().find_map(|e| match e {
            TableEntry::Single(x)
                if (x.gamma_tilde - g).abs() <= EXPONENT_MATCH
                    && x.alpha.to_bits() == alpha.to_bits()
                    && same_fingerprint(x.n_steps, x.n_reps, x.seed, &x.generator, s) =>
            {
                Some(x.quantile)
            }
            _ => None,
        })
    }

    pub fn lookup_veto(
        &self,
        exponents: &[ReducedExponent],
        criticals: &[f64],
        alpha: f64,
        s: &WienerSimSettings,
    ) -> Option<f64> {
        let signed: Vec<f64> = exponents.iter().map(ReducedExponent::signed).collect();
        self.entries.iter().find_map(|e| match e {
            TableEntry::Veto(x)
                if same_exponents(&x.eta_tildes, &signed)
                    && same_bits(&x.criticals, criticals)
                    && x.alpha.to_bits() == alpha.to_bits()
                    && same_fingerprint(x.n_steps, x.n_reps, x.seed, &x.generator, s) =>
            {
                Some(x.c_alpha)
            }
            _ => None,
        })
    }

    /// `c_{alpha, eta}` from the table, simulating and recording it on a miss.
    pub fn single_quantile(&mut self, eta: f64, alpha: f64, s: &WienerSimSettings) -> Result<f64> {
        let e = reduce_exponent(eta)?;
        if let Some(q) = self.lookup_single(e, alpha, s) {
            return Ok(q);
        }
        let q = simulate_single_estimate(e, alpha, s)?.value;
        self.entries.push(TableEntry::Single(SingleEntry {
            gamma_tilde: e.signed(),
            alpha,
            quantile: q,
            n_steps: s.n_steps,
            n_reps: s.n_reps,
            seed: s.seed,
            generator: GENERATOR.into(),
        }));
        Ok(q)
    }

    /// Member critical values and `C_alpha` for a weight set.
    pub fn veto_criticals(
        &mut self,
        etas: &[f64],
        alpha: f64,
        s: &WienerSimSettings,
    ) -> Result<(Vec<f64>, f64)> {
        let criticals = etas
            .iter()
            .map(|&eta| self.single_quantile(eta, alpha, s))
            .collect::<Result<Vec<_>>>()?;
        let exps = etas
            .iter()
            .map(|&eta| reduce_exponent(eta))
            .collect::<Result<Vec<_>>>()?;
        if let Some(c) = self.lookup_veto(&exps, &criticals, alpha, s) {
            return Ok((criticals, c));
        }
        let c = simulate_veto_estimate(&exps, &criticals, alpha, s)?.value;
        self.entries.push(TableEntry::Veto(VetoEntry {
            eta_tildes: exps.iter().map(ReducedExponent::signed).collect(),
            criticals: criticals.clone(),
            alpha,
            c_alpha: c,
            n_steps: s.n_steps,
            n_reps: s.n_reps,
            seed: s.seed,
            generator: GENERATOR.into(),
        }));
        Ok((criticals, c))
    }
}
