//! Uplink sum-rate of the reference cell with an MMSE receiver operating on
//! estimated channels, and its Monte Carlo ergodic average.

use nalgebra::{Cholesky, Dyn};
use rayon::prelude::*;

use crate::channel::CorrelationSet;
use crate::error::{Error, Result};
use crate::estimation::{Covariances, EstimateSet};
use crate::linalg::{cholesky, log2_det_from_cholesky, log2_det_hpd, try_cholesky, CMatrix, C64};
use crate::rng::{stream, Purpose};
use crate::scenario::{LargeScaleMap, Scenario};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSample {
    pub value: f64,
    pub trial_index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErgodicRate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
}

impl ErgodicRate {
    /// Sample mean and standard error of the mean. Summation runs in slice
    /// order, so the result is independent of how samples were produced.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        assert!(n > 0, "at least one sample is required");
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        ErgodicRate {
            mean,
            std_error,
            trials: n,
        }
    }
}

fn add_gram(acc: &mut CMatrix, g: &CMatrix) {
    acc.gemm(C64::new(1.0, 0.0), g, &g.adjoint(), C64::new(1.0, 0.0));
}

/// `log2 det(sum_{l} G_l G_l^H + Sigma) - log2 det(sum_{l>=2} G_l G_l^H + Sigma)`
/// where `g_hat[0]` belongs to the reference cell.
pub fn instantaneous_sumrate(g_hat: &[CMatrix], sigma: &CMatrix) -> Result<f64> {
    let dim = sigma.nrows();
    if g_hat.is_empty() || g_hat.iter().any(|g| g.nrows() != dim) {
        return Err(Error::Dimension(
            "estimated channels must have MN rows".into(),
        ));
    }
    cholesky(sigma, "interference-plus-noise covariance")?;
    let mut interference = sigma.clone();
    for g in &g_hat[1..] {
        add_gram(&mut interference, g);
    }
    let mut total = interference.clone();
    add_gram(&mut total, &g_hat[0]);
    let rate = log2_det_hpd(&total)? - log2_det_hpd(&interference)?;
    // Adding a PSD term cannot lower the log-det; clip rounding noise.
    Ok(rate.max(0.0))
}

/// Evaluates the sum-rate for many channel draws sharing one `Sigma`.
///
/// With `Sigma = L L^H` and `W_l = L^{-1} G_l`, the determinant lemma turns
/// the two `MN x MN` log-dets into log-dets of `LK x LK` and
/// `(L-1)K x (L-1)K` Gram matrices.
pub struct SumRateEvaluator {
    sigma_chol: Cholesky<C64, Dyn>,
}

impl SumRateEvaluator {
    pub fn new(sigma: &CMatrix) -> Result<Self> {
        Ok(SumRateEvaluator {
            sigma_chol: cholesky(sigma, "interference-plus-noise covariance")?,
        })
    }

    pub fn from_cholesky(sigma_chol: Cholesky<C64, Dyn>) -> Self {
        SumRateEvaluator { sigma_chol }
    }

    pub fn evaluate(&self, g_hat: &[CMatrix]) -> Result<f64> {
        let l = self.sigma_chol.l_dirty();
        let dim = l.nrows();
        if g_hat.is_empty() || g_hat.iter().any(|g| g.nrows() != dim) {
            return Err(Error::Dimension(
                "estimated channels must have MN rows".into(),
            ));
        }
        let users = g_hat[0].ncols();
        let cells = g_hat.len();
        let mut stacked = CMatrix::zeros(dim, users * cells);
        for (i, g) in g_hat.iter().enumerate() {
            stacked.columns_mut(i * users, users).copy_from(g);
        }
        let lower = self.sigma_chol.l();
        if !lower.solve_lower_triangular_mut(&mut stacked) {
            return Err(Error::Singular {
                what: "interference-plus-noise covariance",
            });
        }
        let gram = stacked.adjoint() * &stacked;
        let n = gram.nrows();
        let full = CMatrix::identity(n, n) + &gram;
        let rest = CMatrix::identity(n - users, n - users)
            + gram.view((users, users), (n - users, n - users));
        let with_signal = log2_det_gram(&full)?;
        let without = if n > users {
            log2_det_gram(&rest)?
        } else {
            0.0
        };
        Ok((with_signal - without).max(0.0))
    }
}

fn log2_det_gram(m: &CMatrix) -> Result<f64> {
    match try_cholesky(m.clone()) {
        Some(c) => Ok(log2_det_from_cholesky(&c)),
        None => log2_det_hpd(m),
    }
}

/// Per-trial sum-rates over the equivalent estimated-channel model with the
/// large-scale state held fixed. Trial `t` draws from stream
/// `(seed, Trial, t)`.
pub fn sumrate_samples(cov: &Covariances, seed: u64, trials: usize) -> Result<Vec<RateSample>> {
    if trials == 0 {
        return Err(Error::Precondition("at least one trial is required".into()));
    }
    let factors = cov.equivalent_factors()?;
    let evaluator = SumRateEvaluator::from_cholesky(cov.sigma_cholesky().clone());
    (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, Purpose::Trial, t);
            let est = EstimateSet::equivalent(&factors, &mut rng);
            Ok(RateSample {
                value: evaluator.evaluate(&est.g_hat)?,
                trial_index: t,
            })
        })
        .collect()
}

/// Ergodic uplink sum-rate of the reference cell for one large-scale state.
pub fn ergodic_sumrate_mc(
    s: &Scenario,
    largescale: &LargeScaleMap,
    corr: &CorrelationSet,
    trials: usize,
) -> Result<ErgodicRate> {
    let cov = Covariances::new(largescale, corr, s.gamma_p, s.gamma_ul)?;
    ergodic_sumrate_from_covariances(&cov, s.rng_seed, trials)
}

pub fn ergodic_sumrate_from_covariances(
    cov: &Covariances,
    seed: u64,
    trials: usize,
) -> Result<ErgodicRate> {
    let samples: Vec<f64> = sumrate_samples(cov, seed, trials)?
        .into_iter()
        .map(|s| s.value)
        .collect();
    Ok(ErgodicRate::from_samples(&samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gen_smallscale, CorrelationModel};
    use crate::linalg::real_diagonal;
    use approx::assert_relative_eq;

    fn random_matrix(rows: usize, cols: usize, seed: u64, scale: f64) -> CMatrix {
        let v = gen_smallscale(&mut stream(seed, Purpose::Trial, 0), rows * cols);
        CMatrix::from_iterator(rows, cols, v.iter().map(|z| z * scale))
    }

    #[test]
    fn scalar_identity_case() {
        let g = vec![real_diagonal(&[1.0]), CMatrix::zeros(1, 1)];
        let rate = instantaneous_sumrate(&g, &CMatrix::identity(1, 1)).unwrap();
        assert_relative_eq!(rate, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn empty_signal_gives_zero() {
        let sigma = CMatrix::identity(3, 3);
        let g = vec![CMatrix::zeros(3, 2), random_matrix(3, 2, 1, 1.0)];
        assert_eq!(instantaneous_sumrate(&g, &sigma).unwrap(), 0.0);
    }

    #[test]
    fn non_pd_sigma_is_rejected() {
        let g = vec![CMatrix::zeros(2, 1)];
        assert!(instantaneous_sumrate(&g, &real_diagonal(&[1.0, -1.0])).is_err());
    }

    /// Per-user MMSE-SIC decomposition computed by explicit inversion: user
    /// `k` of the reference cell sees the remaining reference users `j > k`,
    /// all other cells and `Sigma` as colored noise.
    fn sic_oracle(g_hat: &[CMatrix], sigma: &CMatrix) -> f64 {
        let users = g_hat[0].ncols();
        let mut total = 0.0;
        for k in 0..users {
            let mut noise = sigma.clone();
            for g in &g_hat[1..] {
                noise += g * g.adjoint();
            }
            for j in k + 1..users {
                let c = g_hat[0].column(j);
                noise += c * c.adjoint();
            }
            let inv = noise.try_inverse().unwrap();
            let c = g_hat[0].column(k);
            let sinr = (c.adjoint() * inv * c)[(0, 0)].re;
            total += (1.0 + sinr).log2();
        }
        total
    }

    #[test]
    fn matches_per_user_mmse_decomposition() {
        let g: Vec<CMatrix> = (0..2).map(|l| random_matrix(4, 2, 10 + l, 0.8)).collect();
        let a = random_matrix(4, 4, 20, 0.5);
        let sigma = &a * a.adjoint() + CMatrix::identity(4, 4).scale(0.3);
        let rate = instantaneous_sumrate(&g, &sigma).unwrap();
        assert_relative_eq!(rate, sic_oracle(&g, &sigma), epsilon = 1e-10);
        let fast = SumRateEvaluator::new(&sigma).unwrap().evaluate(&g).unwrap();
        assert_relative_eq!(rate, fast, epsilon = 1e-10);
    }

    #[test]
    fn evaluator_matches_direct_route_single_cell() {
        let g = vec![random_matrix(6, 3, 30, 1.0)];
        let sigma = CMatrix::identity(6, 6).scale(0.2);
        let direct = instantaneous_sumrate(&g, &sigma).unwrap();
        let fast = SumRateEvaluator::new(&sigma).unwrap().evaluate(&g).unwrap();
        assert_relative_eq!(direct, fast, epsilon = 1e-10);
    }

    fn scenario(seed: u64) -> Scenario {
        Scenario {
            gamma_p: 0.1,
            gamma_ul: 0.1,
            rng_seed: seed,
            ..Scenario::default()
        }
    }

    fn small_map() -> LargeScaleMap {
        LargeScaleMap::from_values(2, 1, 2, vec![1.0, 0.7, 0.2, 0.3]).unwrap()
    }

    #[test]
    fn dead_channel_has_zero_rate() {
        let map = LargeScaleMap::from_values(2, 1, 2, vec![0.0; 4]).unwrap();
        let corr = CorrelationSet::for_map(CorrelationModel::uncorrelated(), &map, 4).unwrap();
        let r = ergodic_sumrate_mc(&scenario(1), &map, &corr, 50).unwrap();
        assert_eq!((r.mean, r.std_error, r.trials), (0.0, 0.0, 50));
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let map = small_map();
        let corr =
            CorrelationSet::for_map(CorrelationModel::exponential(0.3).unwrap(), &map, 8).unwrap();
        let a = ergodic_sumrate_mc(&scenario(9), &map, &corr, 200).unwrap();
        let b = ergodic_sumrate_mc(&scenario(9), &map, &corr, 200).unwrap();
        assert_eq!(a, b);
        let c = ergodic_sumrate_mc(&scenario(10), &map, &corr, 200).unwrap();
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn std_error_scales_with_inverse_root_trials() {
        let map = small_map();
        let corr = CorrelationSet::for_map(CorrelationModel::uncorrelated(), &map, 4).unwrap();
        let small = ergodic_sumrate_mc(&scenario(2), &map, &corr, 100).unwrap();
        let large = ergodic_sumrate_mc(&scenario(3), &map, &corr, 10_000).unwrap();
        let ratio = small.std_error / large.std_error;
        assert!((10.0 / 1.3..=10.0 * 1.3).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn extra_interfering_cell_lowers_ergodic_rate() {
        let base = LargeScaleMap::from_values(2, 1, 2, vec![1.0, 0.8, 0.3, 0.2]).unwrap();
        let more = LargeScaleMap::from_values(3, 1, 2, vec![1.0, 0.8, 0.3, 0.2, 0.4, 0.3]).unwrap();
        let s = scenario(4);
        let rate = |map: &LargeScaleMap| {
            let corr = CorrelationSet::for_map(CorrelationModel::uncorrelated(), map, 8).unwrap();
            ergodic_sumrate_mc(&s, map, &corr, 2000).unwrap()
        };
        let (a, b) = (rate(&base), rate(&more));
        let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!(a.mean - b.mean > 3.0 * se, "{a:?} vs {b:?}");
    }

    #[test]
    fn samples_are_nonnegative() {
        let map = small_map();
        let corr = CorrelationSet::for_map(CorrelationModel::uncorrelated(), &map, 4).unwrap();
        let cov = Covariances::new(&map, &corr, 0.1, 0.1).unwrap();
        let samples = sumrate_samples(&cov, 5, 300).unwrap();
        assert!(samples
            .iter()
            .all(|s| s.value >= 0.0 && s.value.is_finite()));
        assert!(samples
            .iter()
            .enumerate()
            .all(|(i, s)| s.trial_index == i as u64));
    }
}
