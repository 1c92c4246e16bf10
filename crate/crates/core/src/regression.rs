//! Training-window least squares, monitoring residuals and lag embedding for dynamic models.

use std::collections::VecDeque;

use log::warn;

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigenvalues, Cholesky, SquareMatrix};
use crate::lrv::{default_bandwidth, estimate_lrv, BandwidthRule, LrvEstimate};
use crate::scalar::Scalar;

/// Smallest-to-largest Gram eigenvalue ratio below which the design counts as collinear.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Observation<F> {
    pub y: F,
    pub x: Vec<F>,
}

/// Ordered observations `(y_t, x_t)`; the first regressor is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    rows: Vec<Observation<F>>,
    d: usize,
    labels: Option<Vec<String>>,
}

impl<F: Scalar> Dataset<F> {
    pub fn new(rows: Vec<Observation<F>>, labels: Option<Vec<String>>) -> Result<Self> {
        let d = rows
            .first()
            .map(|r| r.x.len())
            .ok_or_else(|| Error::InvalidData("dataset has no rows".into()))?;
        if d == 0 {
            return Err(Error::InvalidData(
                "rows need at least the intercept column".into(),
            ));
        }
        for (t, row) in rows.iter().enumerate() {
            if row.x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.x.len(),
                });
            }
            if row.x[0] != F::one() {
                return Err(Error::InvalidData(format!(
                    "row {t}: first regressor must be the intercept (1), got {}",
                    row.x[0]
                )));
            }
            if !row.y.is_finite() || row.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!("row {t}: non-finite value")));
            }
        }
        if let Some(l) = &labels {
            if l.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: l.len(),
                });
            }
        }
        Ok(Self { rows, d, labels })
    }

    /// Builds a dataset prepending the intercept to each regressor row.
    pub fn with_intercept(ys: &[F], regressors: &[Vec<F>]) -> Result<Self> {
        if ys.len() != regressors.len() {
            return Err(Error::DimensionMismatch {
                expected: ys.len(),
                got: regressors.len(),
            });
        }
        let rows = ys
            .iter()
            .zip(regressors)
            .map(|(&y, z)| {
                let mut x = Vec::with_capacity(z.len() + 1);
                x.push(F::one());
                x.extend_from_slice(z);
                Observation { y, x }
            })
            .collect();
        Self::new(rows, None)
    }

    pub fn rows(&self) -> &[Observation<F>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Rows `range` as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        Self::new(self.rows[range].to_vec(), self.labels.clone())
    }
}

/// Autoregressive order of the dynamic model and optional pre-sample values `(y_0, y_-1, ...)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LagSpec<F> {
    pub p: usize,
    pub initial_values: Option<Vec<F>>,
}

impl<F: Scalar> LagSpec<F> {
    pub fn none() -> Self {
        Self {
            p: 0,
            initial_values: None,
        }
    }

    /// `p` lags seeded by the first `p` observations (consumed as burn-in).
    pub fn burn_in(p: usize) -> Self {
        Self {
            p,
            initial_values: None,
        }
    }

    pub fn seeded(initial_values: Vec<F>) -> Self {
        Self {
            p: initial_values.len(),
            initial_values: Some(initial_values),
        }
    }
}

/// Appends `y_{t-1}, ..., y_{t-p}` to every regressor row.
pub fn embed_lags<F: Scalar>(data: &Dataset<F>, lag: &LagSpec<F>) -> Result<Dataset<F>> {
    let p = lag.p;
    if p == 0 {
        return Ok(data.clone());
    }
    let ys: Vec<F> = data.rows.iter().map(|r| r.y).collect();
    let (start, init): (usize, &[F]) = match &lag.initial_values {
        Some(iv) if iv.len() == p => (0, iv.as_slice()),
        Some(iv) => {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: iv.len(),
            })
        }
        None if data.len() > p => (p, &[]),
        None => {
            return Err(Error::MissingInitialValues {
                p,
                rows: data.len(),
                needed: p + 1,
            })
        }
    };
    let rows = (start..data.len())
        .map(|t| {
            let mut x = data.rows[t].x.clone();
            x.extend((1..=p).map(|j| if t >= j { ys[t - j] } else { init[j - t - 1] }));
            Observation { y: ys[t], x }
        })
        .collect();
    let labels = data.labels.as_ref().map(|l| {
        let mut l = l.clone();
        l.extend((1..=p).map(|j| format!("y_lag{j}")));
        l
    });
    Dataset::new(rows, labels)
}

/// Rolling lag buffer used to build regressor rows while streaming.
#[derive(Debug, Clone, PartialEq)]
pub struct LagState<F> {
    p: usize,
    recent: VecDeque<F>,
}

impl<F: Scalar> LagState<F> {
    /// `recent` holds the last `p` responses, most recent first.
    pub fn new(recent: &[F]) -> Self {
        Self {
            p: recent.len(),
            recent: recent.iter().copied().collect(),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Exogenous row `z` extended with the current lags.
    pub fn augment(&self, z: &[F]) -> Vec<F> {
        let mut x = Vec::with_capacity(z.len() + self.p);
        x.extend_from_slice(z);
        x.extend(self.recent.iter().copied());
        x
    }

    pub fn push(&mut self, y: F) {
        if self.p == 0 {
            return;
        }
        self.recent.pop_back();
        self.recent.push_front(y);
    }
}

/// What the detector needs from a fitted model; this is also the serialized model.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitoringModel<F> {
    pub beta_hat: Vec<F>,
    pub m: usize,
    pub d: usize,
    pub sigma_hat: F,
    pub bandwidth: usize,
    pub lag_p: usize,
    /// Last `lag_p` training responses, most recent first.
    pub lag_tail: Vec<F>,
}

impl<F: Scalar> MonitoringModel<F> {
    pub fn lag_state(&self) -> LagState<F> {
        LagState::new(&self.lag_tail)
    }
}

/// Raw least-squares fit, before the long-run variance is attached.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit<F> {
    pub beta_hat: Vec<F>,
    pub gram_inverse: SquareMatrix<F>,
    pub residuals: Vec<F>,
}

/// Least-squares fit of a break-free training window.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel<F> {
    pub params: MonitoringModel<F>,
    pub gram_inverse: SquareMatrix<F>,
    pub training_residuals: Vec<F>,
    pub lrv: LrvEstimate<F>,
}

impl<F: Scalar> TrainedModel<F> {
    pub fn beta_hat(&self) -> &[F] {
        &self.params.beta_hat
    }

    pub fn m(&self) -> usize {
        self.params.m
    }

    pub fn d(&self) -> usize {
        self.params.d
    }

    pub fn sigma_hat(&self) -> F {
        self.params.sigma_hat
    }
}

impl<F> AsRef<MonitoringModel<F>> for TrainedModel<F> {
    fn as_ref(&self) -> &MonitoringModel<F> {
        &self.params
    }
}

/// Solves the normal equations of an already lag-embedded design.
pub fn fit_ols<F: Scalar>(design: &Dataset<F>) -> Result<OlsFit<F>> {
    let m = design.len();
    let d = design.d();
    if m <= d {
        return Err(Error::InsufficientData {
            effective: m,
            columns: d,
            needed: d + 1,
        });
    }
    if d.pow(4) > m {
        warn!("d = {d} is large relative to m = {m} (d^4 > m); null approximation may be poor");
    }

    let mut gram = SquareMatrix::zeros(d);
    let mut xty = vec![F::zero(); d];
    for row in design.rows() {
        gram.add_outer(&row.x);
        for (acc, xj) in xty.iter_mut().zip(&row.x) {
            *acc += *xj * row.y;
        }
    }

    let eig = symmetric_eigenvalues(&gram);
    let (lo, hi) = (eig[0], eig[d - 1]);
    let ratio = if hi > F::zero() { lo / hi } else { F::zero() };
    if !(ratio >= F::of(RANK_TOLERANCE)) {
        return Err(Error::RankDeficient {
            ratio: ratio.to_f64_lossy(),
        });
    }
    let chol = Cholesky::factor(&gram).ok_or(Error::RankDeficient {
        ratio: ratio.to_f64_lossy(),
    })?;

    let mut beta = chol.solve(&xty);
    // One step of iterative refinement on the normal equations.
    let g_beta = gram.mul_vec(&beta);
    let r: Vec<F> = xty.iter().zip(&g_beta).map(|(a, b)| *a - *b).collect();
    for (b, c) in beta.iter_mut().zip(chol.solve(&r)) {
        *b += c;
    }

    let residuals = design
        .rows()
        .iter()
        .map(|row| row.y - dot(&row.x, &beta))
        .collect();
    Ok(OlsFit {
        beta_hat: beta,
        gram_inverse: chol.inverse(),
        residuals,
    })
}

/// Fits the training window with the default (`floor(m^{2/5})`) bandwidth.
pub fn fit_training<F: Scalar>(data: &Dataset<F>, lag: &LagSpec<F>) -> Result<TrainedModel<F>> {
    fit_training_with(data, lag, None)
}

pub fn fit_training_with<F: Scalar>(
    data: &Dataset<F>,
    lag: &LagSpec<F>,
    bandwidth: Option<usize>,
) -> Result<TrainedModel<F>> {
    let design = embed_lags(data, lag)?;
    let ols = fit_ols(&design)?;
    let m = design.len();
    let d = design.d();
    let h = match bandwidth {
        Some(h) => h,
        None => default_bandwidth(m, d, BandwidthRule::SimulationRule)?,
    };
    let lrv = estimate_lrv(&ols.residuals, Some(h))?;
    let lag_tail = data.rows().iter().rev().take(lag.p).map(|r| r.y).collect();
    Ok(TrainedModel {
        params: MonitoringModel {
            beta_hat: ols.beta_hat,
            m,
            d,
            sigma_hat: lrv.sigma2_hat.sqrt(),
            bandwidth: lrv.bandwidth,
            lag_p: lag.p,
            lag_tail,
        },
        gram_inverse: ols.gram_inverse,
        training_residuals: ols.residuals,
        lrv,
    })
}

/// Prediction residual `y - x' beta_hat`.
pub fn residual<F: Scalar>(model: &MonitoringModel<F>, y: F, x: &[F]) -> Result<F> {
    if x.len() != model.d {
        return Err(Error::DimensionMismatch {
            expected: model.d,
            got: x.len(),
        });
    }
    Ok(y - dot(x, &model.beta_hat))
}

#[inline]
pub(crate) fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn intercept_only(ys: &[f64]) -> Dataset<f64> {
        Dataset::with_intercept(ys, &vec![vec![]; ys.len()]).unwrap()
    }

    #[test]
    fn intercept_only_fit_is_the_mean() {
        let data = intercept_only(&[3.0, 5.0]);
        let fit = fit_training(&data, &LagSpec::none()).unwrap();
        assert_relative_eq!(fit.beta_hat()[0], 4.0, epsilon = 1e-15);
        assert_eq!(fit.training_residuals, vec![-1.0, 1.0]);
    }

    #[test]
    fn noiseless_fit_is_exact_and_not_rank_deficient() {
        let xs: Vec<Vec<f64>> = (0..50)
            .map(|t| vec![(t as f64 * 0.37).sin() * 3.0])
            .collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x[0]).collect();
        let data = Dataset::with_intercept(&ys, &xs).unwrap();
        let ols = fit_ols(&data).unwrap();
        assert!(ols.beta_hat[0].abs() < 1e-12);
        assert_relative_eq!(ols.beta_hat[1], 2.0, epsilon = 1e-12);
        assert!(ols.residuals.iter().all(|e| e.abs() < 1e-12));
        // A perfect fit leaves nothing to scale the boundary with.
        assert!(matches!(
            fit_training(&data, &LagSpec::none()),
            Err(Error::DegenerateResiduals { .. })
        ));
    }

    #[test]
    fn collinear_design_is_rank_deficient() {
        let xs: Vec<Vec<f64>> = (0..30).map(|t| vec![t as f64, 2.0 * t as f64]).collect();
        let ys: Vec<f64> = (0..30).map(|t| (t as f64).cos()).collect();
        let data = Dataset::with_intercept(&ys, &xs).unwrap();
        assert!(matches!(fit_ols(&data), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn too_few_rows() {
        let xs = vec![vec![1.0], vec![2.0]];
        let data = Dataset::with_intercept(&[1.0, 2.0], &xs).unwrap();
        assert!(matches!(
            fit_ols(&data),
            Err(Error::InsufficientData {
                effective: 2,
                columns: 2,
                needed: 3
            })
        ));
    }

    #[test]
    fn embed_lags_examples() {
        let data = intercept_only(&[1.0, 2.0, 3.0]);
        assert_eq!(embed_lags(&data, &LagSpec::none()).unwrap(), data);

        let one = embed_lags(&data, &LagSpec::seeded(vec![0.0])).unwrap();
        let xs: Vec<_> = one.rows().iter().map(|r| r.x.clone()).collect();
        assert_eq!(xs, vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]);

        let data = intercept_only(&[1.0, 2.0, 3.0, 4.0]);
        let two = embed_lags(&data, &LagSpec::seeded(vec![0.0, 0.0])).unwrap();
        let lags: Vec<_> = two.rows().iter().map(|r| r.x[1..].to_vec()).collect();
        assert_eq!(
            lags,
            vec![
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![2.0, 1.0],
                vec![3.0, 2.0]
            ]
        );
    }

    #[test]
    fn embed_lags_burn_in_and_missing_seed() {
        let data = intercept_only(&[1.0, 2.0, 3.0]);
        let burned = embed_lags(&data, &LagSpec::burn_in(1)).unwrap();
        assert_eq!(burned.len(), 2);
        assert_eq!(burned.rows()[0].x, vec![1.0, 1.0]);
        assert_eq!(burned.rows()[0].y, 2.0);

        let short = intercept_only(&[1.0, 2.0]);
        assert!(matches!(
            embed_lags(&short, &LagSpec::burn_in(2)),
            Err(Error::MissingInitialValues { p: 2, .. })
        ));
    }

    #[test]
    fn lag_state_matches_batch_embedding() {
        let ys = [0.3, -1.2, 2.0, 0.7, 1.1];
        let data = intercept_only(&ys);
        let batch = embed_lags(&data, &LagSpec::seeded(vec![0.5, -0.5])).unwrap();
        let mut state = LagState::new(&[0.5, -0.5]);
        for (row, &y) in batch.rows().iter().zip(&ys) {
            assert_eq!(state.augment(&[1.0]), row.x);
            state.push(y);
        }
    }

    #[test]
    fn residual_examples() {
        let model = MonitoringModel {
            beta_hat: vec![4.0],
            m: 2,
            d: 1,
            sigma_hat: 1.0,
            bandwidth: 0,
            lag_p: 0,
            lag_tail: vec![],
        };
        assert_eq!(residual(&model, 5.0, &[1.0]).unwrap(), 1.0);
        let model = MonitoringModel {
            beta_hat: vec![0.0, 2.0],
            d: 2,
            ..model
        };
        assert_eq!(residual(&model, 7.0, &[1.0, 3.0]).unwrap(), 1.0);
        assert!(matches!(
            residual(&model, 7.0, &[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn rejects_missing_intercept() {
        let rows = vec![Observation {
            y: 1.0,
            x: vec![2.0],
        }];
        assert!(Dataset::new(rows, None).is_err());
    }

    #[test]
    fn works_in_f32() {
        let data: Dataset<f32> = Dataset::with_intercept(
            &[1.0, 2.5, 2.9, 4.2, 5.1, 5.8],
            &[
                vec![0.0],
                vec![1.0],
                vec![2.0],
                vec![3.0],
                vec![4.0],
                vec![5.0],
            ],
        )
        .unwrap();
        let fit = fit_training(&data, &LagSpec::none()).unwrap();
        assert!((fit.beta_hat()[1] - 0.945_714).abs() < 1e-4);
    }
}
