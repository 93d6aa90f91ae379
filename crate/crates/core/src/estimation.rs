//! Uplink pilot phase with full pilot reuse across cells and the MMSE
//! channel estimator.
//!
//! User `k` of every cell sends the same pilot, so the reference cell sees
//! `y_k = sum_l g_{l,k} + z` and can only estimate each `g_{l,k}` up to the
//! common observation. The resulting estimates of different cells' channels
//! are collinear: they share the same whitened Rayleigh component.

use nalgebra::{Cholesky, Dyn};
use rand::Rng;

use crate::channel::{gen_smallscale, ChannelSet, CorrelationSet};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, hermitian_part, pd_inv_sqrt, CMatrix, CVector, C64};
use crate::scenario::LargeScaleMap;

/// `Q_k = sum_l R_{l,k} Lambda_{l,k} + gamma_p I`.
pub fn pilot_covariance(weighted: &[CMatrix], gamma_p: f64) -> Result<CMatrix> {
    let dim = weighted
        .first()
        .map(|m| m.nrows())
        .ok_or_else(|| Error::Dimension("no cells".into()))?;
    let mut q = CMatrix::identity(dim, dim).scale(gamma_p);
    for m in weighted {
        if m.shape() != (dim, dim) {
            return Err(Error::Dimension(
                "channel covariances differ in size".into(),
            ));
        }
        q += m;
    }
    Ok(q)
}

/// Pilot observation of user `k`: the sum of its pilot-sharing channels in
/// all cells plus `CN(0, gamma_p I)` noise.
pub fn observe_pilot<R: Rng + ?Sized>(
    channels: &[CVector],
    gamma_p: f64,
    rng: &mut R,
) -> Result<CVector> {
    let dim = channels
        .first()
        .map(|c| c.len())
        .ok_or_else(|| Error::Dimension("no cells".into()))?;
    if !(gamma_p >= 0.0) {
        return Err(Error::Precondition(format!(
            "gamma_p must be >= 0 (got {gamma_p})"
        )));
    }
    let mut y = gen_smallscale(rng, dim) * C64::new(gamma_p.sqrt(), 0.0);
    for c in channels {
        if c.len() != dim {
            return Err(Error::Dimension("channel vectors differ in length".into()));
        }
        y += c;
    }
    Ok(y)
}

fn solve(chol: &Cholesky<C64, Dyn>, rhs: &CVector) -> CVector {
    chol.solve(rhs)
}

/// MMSE estimates `g_hat_{l,k} = R_{l,k} Lambda_{l,k} Q_k^{-1} y_k` for
/// every cell `l`, given the covariances `R_{l,k} Lambda_{l,k}`.
pub fn mmse_estimate(y: &CVector, weighted: &[CMatrix], gamma_p: f64) -> Result<Vec<CVector>> {
    let q = pilot_covariance(weighted, gamma_p)?;
    let chol = cholesky(&q, "pilot covariance Q")?;
    if y.len() != q.nrows() {
        return Err(Error::Dimension(
            "pilot observation has the wrong length".into(),
        ));
    }
    let whitened = solve(&chol, y);
    Ok(weighted.iter().map(|m| m * &whitened).collect())
}

/// Estimation error covariance `RL - RL Q^{-1} RL` with `RL = R Lambda`.
pub fn error_covariance(weighted: &CMatrix, q: &CMatrix) -> Result<CMatrix> {
    let chol = cholesky(q, "pilot covariance Q")?;
    Ok(error_covariance_with(weighted, &chol))
}

fn error_covariance_with(weighted: &CMatrix, q_chol: &Cholesky<C64, Dyn>) -> CMatrix {
    let projected = weighted * q_chol.solve(weighted);
    hermitian_part(&(weighted - projected))
}

/// Draws estimates from the equivalent model
/// `g_hat_{l,k} = R_{l,k} Lambda_{l,k} Q_k^{-1/2} h_hat_k`, with one
/// `h_hat_k ~ CN(0, I)` shared by all cells.
pub fn equivalent_channel_sample<R: Rng + ?Sized>(
    weighted: &[CMatrix],
    q: &CMatrix,
    rng: &mut R,
) -> Result<Vec<CVector>> {
    let inv_sqrt = pd_inv_sqrt(q, "pilot covariance Q")?;
    let h_hat = gen_smallscale(rng, q.nrows());
    let common = inv_sqrt * h_hat;
    Ok(weighted.iter().map(|m| m * &common).collect())
}

/// `Sigma = sum_{l,k} err_cov_{l,k} + gamma_ul I`, with `weighted[k][l]`
/// holding `R_{l,k} Lambda_{l,k}` and `q[k]` holding `Q_k`.
pub fn interference_noise_cov(
    weighted: &[Vec<CMatrix>],
    q: &[CMatrix],
    gamma_ul: f64,
) -> Result<CMatrix> {
    if weighted.len() != q.len() {
        return Err(Error::Dimension("one Q_k is needed per user".into()));
    }
    let dim = q
        .first()
        .map(|m| m.nrows())
        .ok_or_else(|| Error::Dimension("no users".into()))?;
    let mut sigma = CMatrix::identity(dim, dim).scale(gamma_ul);
    for (per_cell, qk) in weighted.iter().zip(q) {
        let chol = cholesky(qk, "pilot covariance Q")?;
        for m in per_cell {
            sigma += error_covariance_with(m, &chol);
        }
    }
    Ok(hermitian_part(&sigma))
}

/// Every second-order quantity of the estimation stage for one large-scale
/// state. Matrices are indexed `[k][l]`.
#[derive(Debug, Clone)]
pub struct Covariances {
    cells: usize,
    users: usize,
    dim: usize,
    gamma_p: f64,
    gamma_ul: f64,
    weighted: Vec<Vec<CMatrix>>,
    q: Vec<CMatrix>,
    q_chol: Vec<Cholesky<C64, Dyn>>,
    err_cov: Vec<Vec<CMatrix>>,
    sigma: CMatrix,
    sigma_chol: Cholesky<C64, Dyn>,
}

impl Covariances {
    pub fn new(
        map: &LargeScaleMap,
        corr: &CorrelationSet,
        gamma_p: f64,
        gamma_ul: f64,
    ) -> Result<Self> {
        corr.check_matches(map)?;
        let weighted = (0..map.users())
            .map(|k| (0..map.cells()).map(|l| corr.weighted(l, k, map)).collect())
            .collect();
        Self::from_weighted(weighted, gamma_p, gamma_ul)
    }

    /// Builds from explicit `R_{l,k} Lambda_{l,k}` matrices indexed `[k][l]`.
    pub fn from_weighted(weighted: Vec<Vec<CMatrix>>, gamma_p: f64, gamma_ul: f64) -> Result<Self> {
        if !(gamma_ul > 0.0) {
            return Err(Error::Precondition(format!(
                "gamma_ul must be > 0 (got {gamma_ul})"
            )));
        }
        let users = weighted.len();
        let cells = weighted.first().map(|w| w.len()).unwrap_or(0);
        if users == 0 || cells == 0 || weighted.iter().any(|w| w.len() != cells) {
            return Err(Error::Dimension(
                "need the same L >= 1 covariances for each user".into(),
            ));
        }
        let dim = weighted[0][0].nrows();
        let q = weighted
            .iter()
            .map(|w| pilot_covariance(w, gamma_p))
            .collect::<Result<Vec<_>>>()?;
        let q_chol = q
            .iter()
            .map(|m| cholesky(m, "pilot covariance Q"))
            .collect::<Result<Vec<_>>>()?;
        let err_cov: Vec<Vec<CMatrix>> = weighted
            .iter()
            .zip(&q_chol)
            .map(|(w, chol)| w.iter().map(|m| error_covariance_with(m, chol)).collect())
            .collect();
        let mut sigma = CMatrix::identity(dim, dim).scale(gamma_ul);
        for m in err_cov.iter().flatten() {
            sigma += m;
        }
        let sigma = hermitian_part(&sigma);
        let sigma_chol = cholesky(&sigma, "interference-plus-noise covariance")?;
        Ok(Covariances {
            cells,
            users,
            dim,
            gamma_p,
            gamma_ul,
            weighted,
            q,
            q_chol,
            err_cov,
            sigma,
            sigma_chol,
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gamma_p(&self) -> f64 {
        self.gamma_p
    }

    pub fn gamma_ul(&self) -> f64 {
        self.gamma_ul
    }

    /// `R_{l,k} Lambda_{l,k}`.
    pub fn weighted(&self, l: usize, k: usize) -> &CMatrix {
        &self.weighted[k][l]
    }

    pub fn weighted_for_user(&self, k: usize) -> &[CMatrix] {
        &self.weighted[k]
    }

    pub fn q(&self, k: usize) -> &CMatrix {
        &self.q[k]
    }

    pub fn q_cholesky(&self, k: usize) -> &Cholesky<C64, Dyn> {
        &self.q_chol[k]
    }

    pub fn err_cov(&self, l: usize, k: usize) -> &CMatrix {
        &self.err_cov[k][l]
    }

    pub fn sigma(&self) -> &CMatrix {
        &self.sigma
    }

    pub fn sigma_cholesky(&self) -> &Cholesky<C64, Dyn> {
        &self.sigma_chol
    }

    /// Covariance of the estimate `g_hat_{l,k}`: `RL Q^{-1} RL`.
    pub fn estimate_cov(&self, l: usize, k: usize) -> CMatrix {
        let w = self.weighted(l, k);
        hermitian_part(&(w * self.q_chol[k].solve(w)))
    }

    /// `R_{l,k} Lambda_{l,k} Q_k^{-1/2}`, indexed `[k][l]`: the
    /// deterministic factors of the equivalent estimated-channel model.
    pub fn equivalent_factors(&self) -> Result<Vec<Vec<CMatrix>>> {
        self.weighted
            .iter()
            .zip(&self.q)
            .map(|(w, q)| {
                let inv_sqrt = pd_inv_sqrt(q, "pilot covariance Q")?;
                Ok(w.iter().map(|m| m * &inv_sqrt).collect())
            })
            .collect()
    }
}

/// Estimated channel matrices `G_hat_l` (columns `g_hat_{l,k}`).
#[derive(Debug, Clone)]
pub struct EstimateSet {
    pub g_hat: Vec<CMatrix>,
}

impl EstimateSet {
    /// Runs the pilot phase on sampled true channels and estimates every
    /// `g_{l,k}`. Pilot noise is drawn per user in order `k = 0..K`.
    pub fn from_channels<R: Rng + ?Sized>(
        channels: &ChannelSet,
        cov: &Covariances,
        rng: &mut R,
    ) -> Result<Self> {
        let (cells, users, dim) = (cov.cells(), cov.users(), cov.dim());
        if channels.g.len() != cells || channels.g.iter().any(|g| g.shape() != (dim, users)) {
            return Err(Error::Dimension(
                "channel set does not match the covariances".into(),
            ));
        }
        let mut g_hat = vec![CMatrix::zeros(dim, users); cells];
        for k in 0..users {
            let columns: Vec<CVector> = (0..cells).map(|l| channels.column(l, k)).collect();
            let y = observe_pilot(&columns, cov.gamma_p(), rng)?;
            let whitened = solve(cov.q_cholesky(k), &y);
            for (l, g) in g_hat.iter_mut().enumerate() {
                g.set_column(k, &(cov.weighted(l, k) * &whitened));
            }
        }
        Ok(EstimateSet { g_hat })
    }

    /// Equivalent-model estimates sharing one `h_hat_k` across cells.
    /// `factors` comes from [`Covariances::equivalent_factors`].
    pub fn equivalent<R: Rng + ?Sized>(factors: &[Vec<CMatrix>], rng: &mut R) -> Self {
        let users = factors.len();
        let cells = factors[0].len();
        let dim = factors[0][0].nrows();
        let mut g_hat = vec![CMatrix::zeros(dim, users); cells];
        for (k, per_cell) in factors.iter().enumerate() {
            let h_hat = gen_smallscale(rng, dim);
            for (l, f) in per_cell.iter().enumerate() {
                g_hat[l].set_column(k, &(f * &h_hat));
            }
        }
        EstimateSet { g_hat }
    }

    /// Estimation errors `g_tilde_{l,k} = g_{l,k} - g_hat_{l,k}` as matrices
    /// per cell.
    pub fn errors(&self, channels: &ChannelSet) -> Vec<CMatrix> {
        channels
            .g
            .iter()
            .zip(&self.g_hat)
            .map(|(g, gh)| g - gh)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::CorrelationModel;
    use crate::linalg::{min_eigenvalue, real_diagonal};
    use crate::rng::{stream, Purpose};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn scalar(v: f64) -> CMatrix {
        real_diagonal(&[v])
    }

    fn small_system() -> (LargeScaleMap, CorrelationSet) {
        let map = LargeScaleMap::from_values(2, 2, 2, vec![1.0, 0.8, 0.6, 1.2, 0.3, 0.2, 0.1, 0.4])
            .unwrap();
        let corr =
            CorrelationSet::for_map(CorrelationModel::exponential(0.5).unwrap(), &map, 2).unwrap();
        (map, corr)
    }

    #[test]
    fn noiseless_single_cell_observation_is_the_channel() {
        let g = gen_smallscale(&mut stream(1, Purpose::Trial, 0), 4);
        let y = observe_pilot(std::slice::from_ref(&g), 0.0, &mut stream(1, Purpose::Trial, 1)).unwrap();
        assert_eq!(y, g);
    }

    #[test]
    fn pure_noise_observation_variance() {
        let zeros = vec![CVector::zeros(10); 3];
        let mut rng = stream(2, Purpose::Trial, 0);
        let (mut acc, mut n) = (0.0, 0.0);
        for _ in 0..20_000 {
            let y = observe_pilot(&zeros, 0.25, &mut rng).unwrap();
            acc += y.norm_squared();
            n += 10.0;
        }
        assert_relative_eq!(acc / n, 0.25, max_relative = 0.01);
    }

    #[test]
    fn observation_covariance() {
        let (map, corr) = small_system();
        let cov = Covariances::new(&map, &corr, 0.2, 1.0).unwrap();
        let mut rng = stream(3, Purpose::Trial, 0);
        let trials = 100_000;
        let mut acc = CMatrix::zeros(4, 4);
        for _ in 0..trials {
            let ch = ChannelSet::generate(&map, &corr, &mut rng).unwrap();
            let cols: Vec<CVector> = (0..2).map(|l| ch.column(l, 1)).collect();
            let y = observe_pilot(&cols, 0.2, &mut rng).unwrap();
            acc += &y * y.adjoint();
        }
        acc /= C64::new(trials as f64, 0.0);
        let q = cov.q(1);
        assert!((acc - q).norm() / q.norm() < 0.02);
    }

    #[test]
    fn noiseless_single_cell_estimate_is_perfect() {
        let y = CVector::from_element(1, C64::new(0.7, -0.2));
        let est = mmse_estimate(&y, &[scalar(2.5)], 0.0).unwrap();
        assert_relative_eq!((est[0][0] - y[0]).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn two_cell_scalar_estimate() {
        let y = CVector::from_element(1, C64::new(1.6, 0.0));
        let est = mmse_estimate(&y, &[scalar(1.0), scalar(0.5)], 0.1).unwrap();
        assert_relative_eq!(est[0][0].re, 1.0, epsilon = 1e-12);
        assert_relative_eq!(est[1][0].re, 0.5, epsilon = 1e-12);
        assert_relative_eq!(
            pilot_covariance(&[scalar(1.0), scalar(0.5)], 0.1).unwrap()[(0, 0)].re,
            1.6,
            epsilon = 1e-15
        );
    }

    #[test]
    fn error_covariance_scalar_and_limits() {
        let e = error_covariance(&scalar(1.0), &scalar(1.6)).unwrap();
        assert_relative_eq!(e[(0, 0)].re, 0.375, epsilon = 1e-12);
        // Pilot drowned in noise: the estimate carries no information.
        let w = real_diagonal(&[1.0, 0.3]);
        let q = pilot_covariance(std::slice::from_ref(&w), 1e12).unwrap();
        let e = error_covariance(&w, &q).unwrap();
        assert_relative_eq!((e - &w).norm(), 0.0, epsilon = 1e-11);
    }

    #[test]
    fn interference_noise_cov_scalar() {
        let w = vec![vec![scalar(1.0), scalar(0.5)]];
        let q = vec![pilot_covariance(&w[0], 0.1).unwrap()];
        let sigma = interference_noise_cov(&w, &q, 0.1).unwrap();
        // (1 - 1/1.6) + (0.5 - 0.25/1.6) + 0.1
        assert_relative_eq!(sigma[(0, 0)].re, 0.375 + 0.34375 + 0.1, epsilon = 1e-12);

        let w = vec![vec![real_diagonal(&[0.9, 0.4])]];
        let q = vec![pilot_covariance(&w[0], 1e-12).unwrap()];
        let sigma = interference_noise_cov(&w, &q, 0.3).unwrap();
        assert_relative_eq!(
            (sigma - CMatrix::identity(2, 2).scale(0.3)).norm(),
            0.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn covariances_agree_with_free_functions() {
        let (map, corr) = small_system();
        let cov = Covariances::new(&map, &corr, 0.2, 0.5).unwrap();
        let weighted: Vec<Vec<CMatrix>> = (0..2)
            .map(|k| (0..2).map(|l| cov.weighted(l, k).clone()).collect())
            .collect();
        let q: Vec<CMatrix> = (0..2).map(|k| cov.q(k).clone()).collect();
        let sigma = interference_noise_cov(&weighted, &q, 0.5).unwrap();
        assert_relative_eq!((sigma - cov.sigma()).norm(), 0.0, epsilon = 1e-12);
        assert!(min_eigenvalue(cov.sigma()) > 0.0);
        let e = error_covariance(cov.weighted(1, 0), cov.q(0)).unwrap();
        assert_relative_eq!((e - cov.err_cov(1, 0)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn empirical_mse_matches_error_covariance() {
        let (map, corr) = small_system();
        let cov = Covariances::new(&map, &corr, 0.2, 1.0).unwrap();
        let mut rng = stream(4, Purpose::Trial, 0);
        let trials = 10_000;
        let mut mse = 0.0;
        for _ in 0..trials {
            let ch = ChannelSet::generate(&map, &corr, &mut rng).unwrap();
            let est = EstimateSet::from_channels(&ch, &cov, &mut rng).unwrap();
            let err = est.errors(&ch);
            mse += err[0].column(0).norm_squared();
            // Decomposition g = g_hat + g_tilde.
            let back = &est.g_hat[1] + &err[1];
            assert_relative_eq!((back - &ch.g[1]).norm(), 0.0, epsilon = 1e-14);
        }
        let expected = cov.err_cov(0, 0).trace().re;
        assert_relative_eq!(mse / trials as f64, expected, max_relative = 0.02);
    }

    #[test]
    fn equivalent_model_covariance_and_collinearity() {
        let (map, corr) = small_system();
        let cov = Covariances::new(&map, &corr, 0.2, 1.0).unwrap();
        let mut rng = stream(5, Purpose::Trial, 0);
        let trials = 100_000;
        let mut acc = CMatrix::zeros(4, 4);
        for _ in 0..trials {
            let est =
                equivalent_channel_sample(cov.weighted_for_user(0), cov.q(0), &mut rng).unwrap();
            acc += &est[0] * est[0].adjoint();
        }
        acc /= C64::new(trials as f64, 0.0);
        let expected = cov.estimate_cov(0, 0);
        assert!((acc - &expected).norm() / expected.norm() < 0.02);

        // Shared h_hat: g_hat_1 = RL_1 Q^{-1/2} h and g_hat_2 = RL_2 Q^{-1/2} h.
        let mut a = stream(6, Purpose::Trial, 0);
        let est = equivalent_channel_sample(cov.weighted_for_user(0), cov.q(0), &mut a).unwrap();
        let h = gen_smallscale(&mut stream(6, Purpose::Trial, 0), 4);
        let inv_sqrt = pd_inv_sqrt(cov.q(0), "q").unwrap();
        for (l, e) in est.iter().enumerate() {
            let direct = cov.weighted(l, 0) * &inv_sqrt * &h;
            assert_relative_eq!((direct - e).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn perfect_csi_limit_of_equivalent_model() {
        let w = real_diagonal(&[0.7, 1.3]);
        let q = pilot_covariance(std::slice::from_ref(&w), 1e-13).unwrap();
        let inv_sqrt = pd_inv_sqrt(&q, "q").unwrap();
        let f = &w * inv_sqrt;
        assert_relative_eq!((&f * f.adjoint() - &w).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn estimator_and_equivalent_model_share_moments() {
        let (map, corr) = small_system();
        let cov = Covariances::new(&map, &corr, 0.3, 1.0).unwrap();
        let factors = cov.equivalent_factors().unwrap();
        let trials = 50_000;
        let mut rng_a = stream(7, Purpose::Trial, 0);
        let mut rng_b = stream(7, Purpose::Trial, 1);
        let (mut sa, mut sb) = (CMatrix::zeros(4, 4), CMatrix::zeros(4, 4));
        let (mut ma, mut mb) = (CVector::zeros(4), CVector::zeros(4));
        for _ in 0..trials {
            let ch = ChannelSet::generate(&map, &corr, &mut rng_a).unwrap();
            let a = EstimateSet::from_channels(&ch, &cov, &mut rng_a).unwrap();
            let b = EstimateSet::equivalent(&factors, &mut rng_b);
            // Cross-cell second moment exercises the shared Rayleigh part.
            let (a0, a1) = (a.g_hat[0].column(1), a.g_hat[1].column(1));
            let (b0, b1) = (b.g_hat[0].column(1), b.g_hat[1].column(1));
            sa += a0 * a1.adjoint();
            sb += b0 * b1.adjoint();
            ma += a0;
            mb += b0;
        }
        let n = C64::new(trials as f64, 0.0);
        sa /= n;
        sb /= n;
        assert!((&sa - &sb).norm() / sb.norm() < 0.02);
        let scale = cov.estimate_cov(0, 1).trace().re.sqrt();
        assert!((ma / n).norm() < 0.02 * scale);
        assert!((mb / n).norm() < 0.02 * scale);
    }

    fn random_weighted(lambdas: &[f64], r: f64, antennas: usize) -> Vec<CMatrix> {
        let block =
            crate::channel::build_correlation(CorrelationModel::exponential(r).unwrap(), antennas)
                .unwrap();
        lambdas.iter().map(|&l| block.scale(l)).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn error_covariance_is_bounded_psd(
            lambdas in proptest::collection::vec(1e-3f64..10.0, 1..4),
            r in 0.0f64..0.95,
            gamma_p in 1e-3f64..10.0,
        ) {
            let w = random_weighted(&lambdas, r, 4);
            let q = pilot_covariance(&w, gamma_p).unwrap();
            for m in &w {
                let e = error_covariance(m, &q).unwrap();
                let scale = m.norm().max(1e-300);
                prop_assert!(min_eigenvalue(&e) >= -1e-10 * scale);
                prop_assert!(min_eigenvalue(&(m - &e)) >= -1e-10 * scale);
            }
            let sigma = interference_noise_cov(&[w], &[q], 0.1).unwrap();
            prop_assert!(min_eigenvalue(&sigma) > 0.0);
        }
    }
}
