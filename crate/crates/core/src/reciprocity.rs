//! TDD reciprocity under RF mismatch.
//!
//! The propagation channel `H` (K x M) is reciprocal, but the transceiver
//! chains are not:
//!
//! ```text
//! G_UL = C_BS,r H^T C_UE,t      (M x K)
//! G_DL = C_UE,r H   C_BS,t      (K x M)
//! ```
//!
//! with diagonal RF gains whose log-amplitudes are Gaussian and whose phases
//! are uniform on `[-theta, theta]`. A zero-forcing precoder built from the
//! transposed uplink channel leaks inter-user interference unless the base
//! station applies the calibration matrix `C_BS,t^{-1} C_BS,r`.

use std::f64::consts::{LN_10, LOG2_E};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::channel::gen_smallscale;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, CMatrix, CVector, C64};
use crate::rate_mc::ErgodicRate;
use crate::rng::{stream, Purpose};

/// `sin(x) / x` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// How a variance quoted in dB maps onto the natural-log amplitude variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DbConvention {
    /// Gains in dB as `10 log10`: `delta^2 = v_dB (ln 10 / 10)^2`.
    #[default]
    Power,
    /// Amplitudes in dB as `20 log10`: `delta^2 = v_dB (ln 10 / 20)^2`.
    Amplitude,
}

impl DbConvention {
    pub fn to_natural(self, variance_db: f64) -> f64 {
        let per_db = match self {
            DbConvention::Power => LN_10 / 10.0,
            DbConvention::Amplitude => LN_10 / 20.0,
        };
        variance_db * per_db * per_db
    }

    pub fn from_natural(self, variance: f64) -> f64 {
        variance / self.to_natural(1.0)
    }
}

/// Phase half-ranges (radians) and log-amplitude variances (natural-log
/// units) of the four RF chains.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MismatchConfig {
    pub theta_bs_t: f64,
    pub theta_bs_r: f64,
    pub theta_ue_t: f64,
    pub theta_ue_r: f64,
    pub delta2_bs_t: f64,
    pub delta2_bs_r: f64,
    pub delta2_ue_t: f64,
    pub delta2_ue_r: f64,
}

impl MismatchConfig {
    /// Perfectly reciprocal hardware.
    pub fn perfect() -> Self {
        Self::default()
    }

    /// Phase mismatch of the same range on both base-station chains.
    pub fn bs_phase(theta: f64) -> Self {
        MismatchConfig {
            theta_bs_t: theta,
            theta_bs_r: theta,
            ..Self::default()
        }
    }

    pub fn ue_phase(theta: f64) -> Self {
        MismatchConfig {
            theta_ue_t: theta,
            theta_ue_r: theta,
            ..Self::default()
        }
    }

    /// Amplitude mismatch of the same dB variance on both base-station chains.
    pub fn bs_amplitude_db(variance_db: f64, convention: DbConvention) -> Self {
        let v = convention.to_natural(variance_db);
        MismatchConfig {
            delta2_bs_t: v,
            delta2_bs_r: v,
            ..Self::default()
        }
    }

    pub fn ue_amplitude_db(variance_db: f64, convention: DbConvention) -> Self {
        let v = convention.to_natural(variance_db);
        MismatchConfig {
            delta2_ue_t: v,
            delta2_ue_r: v,
            ..Self::default()
        }
    }

    /// Variances given in dB, in the order `[bs_t, bs_r, ue_t, ue_r]`.
    pub fn with_db_variances(mut self, variances_db: [f64; 4], convention: DbConvention) -> Self {
        let [a, b, c, d] = variances_db.map(|v| convention.to_natural(v));
        self.delta2_bs_t = a;
        self.delta2_bs_r = b;
        self.delta2_ue_t = c;
        self.delta2_ue_r = d;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let thetas = [
            ("theta_bs_t", self.theta_bs_t),
            ("theta_bs_r", self.theta_bs_r),
            ("theta_ue_t", self.theta_ue_t),
            ("theta_ue_r", self.theta_ue_r),
        ];
        for (field, v) in thetas {
            if !(0.0..=std::f64::consts::PI).contains(&v) {
                return Err(Error::InvalidMismatch {
                    field,
                    reason: format!("must lie in [0, pi] (got {v})"),
                });
            }
        }
        let deltas = [
            ("delta2_bs_t", self.delta2_bs_t),
            ("delta2_bs_r", self.delta2_bs_r),
            ("delta2_ue_t", self.delta2_ue_t),
            ("delta2_ue_r", self.delta2_ue_r),
        ];
        for (field, v) in deltas {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidMismatch {
                    field,
                    reason: format!("must be finite and >= 0 (got {v})"),
                });
            }
        }
        Ok(())
    }
}

/// Diagonals of the four RF gain matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct RfGains {
    pub c_bs_t: CVector,
    pub c_bs_r: CVector,
    pub c_ue_t: CVector,
    pub c_ue_r: CVector,
}

impl RfGains {
    pub fn identity(antennas: usize, users: usize) -> Self {
        let one = C64::new(1.0, 0.0);
        RfGains {
            c_bs_t: CVector::from_element(antennas, one),
            c_bs_r: CVector::from_element(antennas, one),
            c_ue_t: CVector::from_element(users, one),
            c_ue_r: CVector::from_element(users, one),
        }
    }
}

fn draw_gains<R: Rng + ?Sized>(rng: &mut R, len: usize, theta: f64, delta2: f64) -> CVector {
    let delta = delta2.sqrt();
    CVector::from_fn(len, |_, _| {
        let log_amp = delta * rng.sample::<f64, _>(StandardNormal);
        let phase = theta * (2.0 * rng.random::<f64>() - 1.0);
        C64::from_polar(log_amp.exp(), phase)
    })
}

/// Draws `c = exp(x) exp(j phi)`, `x ~ N(0, delta^2)`, `phi ~ U[-theta,
/// theta]`, independently per entry; chains are drawn in the order BS t,
/// BS r, UE t, UE r.
pub fn sample_rf_gains<R: Rng + ?Sized>(
    cfg: &MismatchConfig,
    antennas: usize,
    users: usize,
    rng: &mut R,
) -> Result<RfGains> {
    cfg.validate()?;
    Ok(RfGains {
        c_bs_t: draw_gains(rng, antennas, cfg.theta_bs_t, cfg.delta2_bs_t),
        c_bs_r: draw_gains(rng, antennas, cfg.theta_bs_r, cfg.delta2_bs_r),
        c_ue_t: draw_gains(rng, users, cfg.theta_ue_t, cfg.delta2_ue_t),
        c_ue_r: draw_gains(rng, users, cfg.theta_ue_r, cfg.delta2_ue_r),
    })
}

/// `(G_UL, G_DL)` for propagation channel `h` (K x M).
pub fn effective_channels(h: &CMatrix, gains: &RfGains) -> Result<(CMatrix, CMatrix)> {
    let (users, antennas) = h.shape();
    if gains.c_bs_t.len() != antennas
        || gains.c_bs_r.len() != antennas
        || gains.c_ue_t.len() != users
        || gains.c_ue_r.len() != users
    {
        return Err(Error::Dimension(format!(
            "RF gains do not match a {users}x{antennas} channel"
        )));
    }
    let g_ul = CMatrix::from_fn(antennas, users, |m, k| {
        gains.c_bs_r[m] * h[(k, m)] * gains.c_ue_t[k]
    });
    let g_dl = CMatrix::from_fn(users, antennas, |k, m| {
        gains.c_ue_r[k] * h[(k, m)] * gains.c_bs_t[m]
    });
    Ok((g_ul, g_dl))
}

/// Unscaled zero-forcing direction `G_UL^* (G_UL^T G_UL^*)^{-1}`.
pub fn zf_direction(g_ul: &CMatrix) -> Result<CMatrix> {
    let (antennas, users) = g_ul.shape();
    if antennas < users {
        return Err(Error::Singular {
            what: "uplink Gram matrix (fewer antennas than users)",
        });
    }
    let transposed = g_ul.transpose();
    let gram = &transposed * g_ul.conjugate();
    let chol = cholesky(&gram, "uplink Gram matrix")?;
    // The Gram matrix is Hermitian, so W^H = Gram^{-1} G_UL^T.
    Ok(chol.solve(&transposed).adjoint())
}

/// Scales `w` to unit total transmit power, `Tr(W W^H) = 1`.
pub fn unit_power(w: CMatrix) -> CMatrix {
    let norm = w.norm();
    if norm == 0.0 {
        return w;
    }
    w.unscale(norm)
}

/// Naive TDD zero-forcing precoder, scaled to unit total power.
pub fn zf_precoder(g_ul: &CMatrix) -> Result<CMatrix> {
    zf_direction(g_ul).map(unit_power)
}

/// Unscaled calibrated direction `C_BS,t^{-1} C_BS,r G_UL^* (G_UL^T G_UL^*)^{-1}`.
pub fn calibrated_zf_direction(
    g_ul: &CMatrix,
    c_bs_t: &CVector,
    c_bs_r: &CVector,
) -> Result<CMatrix> {
    let antennas = g_ul.nrows();
    if c_bs_t.len() != antennas || c_bs_r.len() != antennas {
        return Err(Error::Dimension(
            "calibration gains must have one entry per antenna".into(),
        ));
    }
    if let Some(m) = c_bs_t.iter().position(|c| c.norm() == 0.0) {
        return Err(Error::ZeroGain(m));
    }
    let mut w = zf_direction(g_ul)?;
    for (m, mut row) in w.row_iter_mut().enumerate() {
        let calibration = c_bs_r[m] / c_bs_t[m];
        row *= calibration;
    }
    Ok(w)
}

/// Calibrated zero-forcing precoder, scaled to unit total power.
pub fn calibrated_zf_precoder(
    g_ul: &CMatrix,
    c_bs_t: &CVector,
    c_bs_r: &CVector,
) -> Result<CMatrix> {
    calibrated_zf_direction(g_ul, c_bs_t, c_bs_r).map(unit_power)
}

/// Downlink sum-rate with unit noise per user and transmit SNR `rho`:
/// `sum_k log2(1 + rho |E_kk|^2 / (rho sum_{j != k} |E_kj|^2 + 1))`,
/// `E = G_DL W`.
pub fn downlink_sumrate(g_dl: &CMatrix, w: &CMatrix, rho: f64) -> Result<f64> {
    if g_dl.ncols() != w.nrows() || g_dl.nrows() != w.ncols() {
        return Err(Error::Dimension(
            "precoder does not match the downlink channel".into(),
        ));
    }
    let e = g_dl * w;
    Ok((0..e.nrows())
        .map(|k| {
            let row = e.row(k);
            let total: f64 = row.iter().map(|z| z.norm_sqr()).sum();
            let signal = row[k].norm_sqr();
            let interference = total - signal;
            (1.0 + rho * signal / (rho * interference + 1.0)).log2()
        })
        .sum())
}

/// Terms of the ergodic sum-rate lower bound under RF mismatch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MismatchBound {
    pub r_lb_perfect: f64,
    pub delta_r_bs: f64,
    pub delta_r_ue: f64,
    pub bound: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

/// `(lambda1, lambda2)` of the base-station mismatch penalty.
pub fn bound_lambdas(cfg: &MismatchConfig) -> (f64, f64) {
    let (sr, st) = (sinc(cfg.theta_bs_r), sinc(cfg.theta_bs_t));
    let lambda1 = sr * sr * st * st;
    let lambda2 = (2.0 * cfg.delta2_bs_t).exp() + (2.0 * cfg.delta2_bs_r).exp()
        - 2.0 * (0.5 * cfg.delta2_bs_t + 0.5 * cfg.delta2_bs_r).exp() * sr * st;
    (lambda1, lambda2)
}

/// Lower bound on the ergodic ZF sum-rate under mismatch, in bits/s/Hz,
/// for `M` base-station antennas, `K` users and transmit SNR `rho`
/// (linear).
///
/// The base-station penalty shrinks as `lambda1 / lambda2` falls, so the
/// expression is vacuous for mild mismatch and grows with severe mismatch;
/// at `theta_BS = pi/2` (M = 64, K = 8, 10 dB) it exceeds the simulated
/// rate. Treat it as meaningful only for moderate phase ranges.
pub fn mismatch_bound(
    antennas: usize,
    users: usize,
    rho: f64,
    cfg: &MismatchConfig,
) -> Result<MismatchBound> {
    cfg.validate()?;
    if !(users >= 2 && antennas > users) {
        return Err(Error::Precondition(format!(
            "bound needs M > K >= 2 (got M = {antennas}, K = {users})"
        )));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Precondition(format!("rho must be > 0 (got {rho})")));
    }
    let (lambda1, lambda2) = bound_lambdas(cfg);
    if lambda2 <= 0.0 {
        return Err(Error::DegenerateBound);
    }
    let (m, k) = (antennas as f64, users as f64);
    let r_lb_perfect = k * (rho.log2() + ((m - k) / k).log2());
    let delta_r_bs =
        k * (rho.log2() + (lambda1 / lambda2).log2() + (m * k / ((m - k) * (k - 1.0))).log2());
    let delta_r_ue = k * LOG2_E * 2.0 * cfg.delta2_ue_t;
    Ok(MismatchBound {
        r_lb_perfect,
        delta_r_bs,
        delta_r_ue,
        bound: r_lb_perfect - delta_r_bs - delta_r_ue,
        lambda1,
        lambda2,
    })
}

/// `1 - rate_mismatch / rate_perfect`, clamped to `[0, 1]`.
pub fn normalized_loss(rate_mismatch: f64, rate_perfect: f64) -> Result<f64> {
    if !(rate_perfect > 0.0) {
        return Err(Error::Precondition(format!(
            "reference rate must be > 0 (got {rate_perfect})"
        )));
    }
    let loss = 1.0 - rate_mismatch / rate_perfect;
    if !(0.0..=1.0).contains(&loss) {
        log::warn!("normalized loss {loss} outside [0, 1]; clamping");
    }
    Ok(loss.clamp(0.0, 1.0))
}

/// Downlink system evaluated by [`ergodic_downlink`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DownlinkSetup {
    pub antennas: usize,
    pub users: usize,
    /// Transmit SNR, linear.
    pub rho: f64,
}

impl DownlinkSetup {
    pub fn with_snr_db(antennas: usize, users: usize, snr_db: f64) -> Self {
        DownlinkSetup {
            antennas,
            users,
            rho: 10f64.powf(snr_db / 10.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DownlinkRates {
    /// Naive TDD zero-forcing under mismatch.
    pub mismatch: ErgodicRate,
    /// Same channels with all RF gains equal to one.
    pub perfect: ErgodicRate,
    /// Calibrated zero-forcing under the same mismatch.
    pub calibrated: ErgodicRate,
    /// `1 - E[mismatch] / E[perfect]`, clamped to `[0, 1]`.
    pub loss: f64,
    /// Delta-method standard error of `loss`.
    pub loss_std_error: f64,
}

#[derive(Debug, Clone, Copy)]
struct TrialRates {
    mismatch: f64,
    perfect: f64,
    calibrated: f64,
}

fn downlink_trial(
    setup: &DownlinkSetup,
    cfg: &MismatchConfig,
    seed: u64,
    trial: u64,
) -> Result<TrialRates> {
    let mut rng = stream(seed, Purpose::Mismatch, trial);
    let (k, m) = (setup.users, setup.antennas);
    let h = CMatrix::from_column_slice(k, m, gen_smallscale(&mut rng, k * m).as_slice());
    let gains = sample_rf_gains(cfg, m, k, &mut rng)?;
    let (g_ul, g_dl) = effective_channels(&h, &gains)?;
    let mismatch = downlink_sumrate(&g_dl, &zf_precoder(&g_ul)?, setup.rho)?;
    let calibrated = downlink_sumrate(
        &g_dl,
        &calibrated_zf_precoder(&g_ul, &gains.c_bs_t, &gains.c_bs_r)?,
        setup.rho,
    )?;
    let perfect = downlink_sumrate(&h, &zf_precoder(&h.transpose())?, setup.rho)?;
    Ok(TrialRates {
        mismatch,
        perfect,
        calibrated,
    })
}

/// Monte Carlo ergodic downlink rates over i.i.d. `CN(0, 1)` channels and
/// fresh RF gains per trial. Trial `t` draws from stream
/// `(seed, Mismatch, t)`.
pub fn ergodic_downlink(
    setup: &DownlinkSetup,
    cfg: &MismatchConfig,
    trials: usize,
    seed: u64,
) -> Result<DownlinkRates> {
    cfg.validate()?;
    if trials == 0 {
        return Err(Error::Precondition("at least one trial is required".into()));
    }
    if !(setup.rho > 0.0) {
        return Err(Error::Precondition("rho must be > 0".into()));
    }
    let samples = (0..trials as u64)
        .into_par_iter()
        .map(|t| downlink_trial(setup, cfg, seed, t))
        .collect::<Result<Vec<_>>>()?;
    let pick = |f: fn(&TrialRates) -> f64| samples.iter().map(f).collect::<Vec<_>>();
    let (a, b, c) = (
        pick(|s| s.mismatch),
        pick(|s| s.perfect),
        pick(|s| s.calibrated),
    );
    let mismatch = ErgodicRate::from_samples(&a);
    let perfect = ErgodicRate::from_samples(&b);
    let calibrated = ErgodicRate::from_samples(&c);
    let loss = normalized_loss(mismatch.mean, perfect.mean)?;
    let ratio = mismatch.mean / perfect.mean;
    let n = trials as f64;
    let loss_std_error = if trials > 1 {
        let var = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - ratio * y).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        (var / n).sqrt() / perfect.mean
    } else {
        0.0
    };
    Ok(DownlinkRates {
        mismatch,
        perfect,
        calibrated,
        loss,
        loss_std_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_offdiag_abs;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn random_channel(users: usize, antennas: usize, seed: u64) -> CMatrix {
        let v = gen_smallscale(&mut stream(seed, Purpose::Mismatch, 99), users * antennas);
        CMatrix::from_column_slice(users, antennas, v.as_slice())
    }

    fn heavy_mismatch() -> MismatchConfig {
        MismatchConfig {
            theta_bs_t: 1.0,
            theta_bs_r: 0.7,
            theta_ue_t: 0.5,
            theta_ue_r: 2.0,
            delta2_bs_t: 0.1,
            delta2_bs_r: 0.05,
            delta2_ue_t: 0.2,
            delta2_ue_r: 0.02,
        }
    }

    #[test]
    fn no_mismatch_gives_unit_gains() {
        let g = sample_rf_gains(
            &MismatchConfig::perfect(),
            8,
            3,
            &mut stream(1, Purpose::Mismatch, 0),
        )
        .unwrap();
        assert_eq!(g, RfGains::identity(8, 3));
    }

    #[test]
    fn gain_moments() {
        let cfg = MismatchConfig {
            theta_bs_t: PI / 4.0,
            delta2_bs_t: 0.1,
            ..MismatchConfig::default()
        };
        let n = 100_000;
        let g = sample_rf_gains(&cfg, n, 1, &mut stream(2, Purpose::Mismatch, 0)).unwrap();
        let power = g.c_bs_t.iter().map(|c| c.norm_sqr()).sum::<f64>() / n as f64;
        let mean = g.c_bs_t.sum() / n as f64;
        assert_relative_eq!(power, (2.0 * 0.1f64).exp(), max_relative = 0.01);
        assert_relative_eq!(
            mean.re,
            (0.05f64).exp() * sinc(PI / 4.0),
            max_relative = 0.01
        );
        assert!(mean.im.abs() < 0.01);
        assert!(g
            .c_bs_t
            .iter()
            .all(|c| c.arg().abs() <= PI / 4.0 && c.norm() > 0.0));
    }

    #[test]
    fn db_conventions() {
        let v = DbConvention::Amplitude.to_natural(3.0);
        assert_relative_eq!(v, 3.0 * (LN_10 / 20.0).powi(2), epsilon = 1e-15);
        assert_relative_eq!(
            DbConvention::Power.to_natural(3.0),
            4.0 * v,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            DbConvention::Power.from_natural(DbConvention::Power.to_natural(2.5)),
            2.5
        );
    }

    #[test]
    fn config_validation() {
        assert!(MismatchConfig::bs_phase(4.0).validate().is_err());
        let cfg = MismatchConfig {
            delta2_ue_r: -1.0,
            ..MismatchConfig::default()
        };
        assert!(matches!(
            cfg.validate(),
            Err(Error::InvalidMismatch {
                field: "delta2_ue_r",
                ..
            })
        ));
    }

    #[test]
    fn reciprocal_without_mismatch() {
        let h = random_channel(3, 5, 1);
        let (ul, dl) = effective_channels(&h, &RfGains::identity(5, 3)).unwrap();
        assert_eq!(ul, h.transpose());
        assert_eq!(dl, h);
    }

    #[test]
    fn scalar_effective_channels() {
        let h = CMatrix::from_element(1, 1, C64::new(0.3, 0.4));
        let gains = RfGains {
            c_bs_t: CVector::from_element(1, C64::new(1.1, 0.2)),
            c_bs_r: CVector::from_element(1, C64::new(0.9, -0.1)),
            c_ue_t: CVector::from_element(1, C64::new(1.0, 0.5)),
            c_ue_r: CVector::from_element(1, C64::new(0.7, 0.0)),
        };
        let (ul, dl) = effective_channels(&h, &gains).unwrap();
        assert_eq!(ul[(0, 0)], gains.c_bs_r[0] * h[(0, 0)] * gains.c_ue_t[0]);
        assert_eq!(dl[(0, 0)], gains.c_ue_r[0] * h[(0, 0)] * gains.c_bs_t[0]);
    }

    #[test]
    fn effective_channels_match_matrix_products() {
        let h = random_channel(4, 8, 3);
        let gains = sample_rf_gains(
            &heavy_mismatch(),
            8,
            4,
            &mut stream(3, Purpose::Mismatch, 1),
        )
        .unwrap();
        let (ul, dl) = effective_channels(&h, &gains).unwrap();
        let diag = |v: &CVector| CMatrix::from_diagonal(v);
        let ul_oracle = diag(&gains.c_bs_r) * h.transpose() * diag(&gains.c_ue_t);
        let dl_oracle = diag(&gains.c_ue_r) * &h * diag(&gains.c_bs_t);
        assert_relative_eq!((ul - ul_oracle).norm(), 0.0, epsilon = 1e-13);
        assert_relative_eq!((&dl - dl_oracle).norm(), 0.0, epsilon = 1e-13);
        // G_DL^T and G_UL differ only by the diagonal chain ratios.
        let (ul, _) = effective_channels(&h, &gains).unwrap();
        for m in 0..8 {
            for k in 0..4 {
                let expected = ul[(m, k)] * gains.c_ue_r[k] * gains.c_bs_t[m]
                    / (gains.c_bs_r[m] * gains.c_ue_t[k]);
                assert_relative_eq!((dl[(k, m)] - expected).norm(), 0.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn identity_channel_precoder() {
        let w = zf_precoder(&CMatrix::identity(3, 3)).unwrap();
        assert_relative_eq!(
            (w - CMatrix::identity(3, 3).unscale(3f64.sqrt())).norm(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn zero_forcing_without_mismatch_inverts_channel() {
        let h = random_channel(4, 12, 5);
        let w = zf_direction(&h.transpose()).unwrap();
        assert_relative_eq!(
            (&h * &w - CMatrix::identity(4, 4)).norm(),
            0.0,
            epsilon = 1e-12
        );
        let scaled = zf_precoder(&h.transpose()).unwrap();
        assert_relative_eq!(
            (&scaled * scaled.adjoint()).trace().re,
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn mismatch_leaks_interference() {
        let h = random_channel(4, 16, 6);
        let gains = sample_rf_gains(
            &MismatchConfig::bs_phase(PI / 3.0),
            16,
            4,
            &mut stream(6, Purpose::Mismatch, 0),
        )
        .unwrap();
        let (ul, dl) = effective_channels(&h, &gains).unwrap();
        let e = dl * zf_precoder(&ul).unwrap();
        assert!(max_offdiag_abs(&e) > 1e-3);
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let thin = random_channel(4, 3, 7).transpose();
        assert!(matches!(zf_direction(&thin), Err(Error::Singular { .. })));
        let repeated = CMatrix::from_fn(6, 2, |m, _| C64::new(m as f64, 1.0));
        assert!(matches!(
            zf_direction(&repeated),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn calibration_reduces_to_plain_zf_without_mismatch() {
        let h = random_channel(3, 10, 8);
        let g = RfGains::identity(10, 3);
        let (ul, _) = effective_channels(&h, &g).unwrap();
        let plain = zf_precoder(&ul).unwrap();
        let calibrated = calibrated_zf_precoder(&ul, &g.c_bs_t, &g.c_bs_r).unwrap();
        assert_eq!(plain, calibrated);
    }

    #[test]
    fn calibration_diagonalises_downlink() {
        let h = random_channel(8, 64, 9);
        let gains = sample_rf_gains(
            &heavy_mismatch(),
            64,
            8,
            &mut stream(9, Purpose::Mismatch, 0),
        )
        .unwrap();
        let (ul, dl) = effective_channels(&h, &gains).unwrap();
        let e = &dl * calibrated_zf_direction(&ul, &gains.c_bs_t, &gains.c_bs_r).unwrap();
        for k in 0..8 {
            let expected = gains.c_ue_r[k] / gains.c_ue_t[k];
            assert_relative_eq!((e[(k, k)] - expected).norm(), 0.0, epsilon = 1e-10);
        }
        let scaled = dl * calibrated_zf_precoder(&ul, &gains.c_bs_t, &gains.c_bs_r).unwrap();
        assert!(max_offdiag_abs(&scaled) <= 1e-10);
    }

    #[test]
    fn zero_base_station_gain() {
        let h = random_channel(2, 4, 10);
        let mut g = RfGains::identity(4, 2);
        g.c_bs_t[2] = C64::new(0.0, 0.0);
        let (ul, _) = effective_channels(&h, &g).unwrap();
        assert_eq!(
            calibrated_zf_precoder(&ul, &g.c_bs_t, &g.c_bs_r),
            Err(Error::ZeroGain(2))
        );
    }

    #[test]
    fn interference_free_downlink_rate() {
        let d = C64::new(0.6, -0.3);
        let g = CMatrix::identity(3, 3) * d;
        let w = CMatrix::identity(3, 3);
        let rate = downlink_sumrate(&g, &w, 10.0).unwrap();
        assert_relative_eq!(
            rate,
            3.0 * (1.0 + 10.0 * d.norm_sqr()).log2(),
            epsilon = 1e-13
        );
        assert!(downlink_sumrate(&g, &w, 1e-15).unwrap() < 1e-13);
    }

    #[test]
    fn downlink_rate_matches_sinr_definition() {
        let h = random_channel(3, 6, 11);
        let w = unit_power(random_channel(3, 6, 12).transpose());
        let rho = 4.0;
        let mut oracle = 0.0;
        for k in 0..3 {
            let mut received = [C64::new(0.0, 0.0); 3];
            for (j, r) in received.iter_mut().enumerate() {
                for m in 0..6 {
                    *r += h[(k, m)] * w[(m, j)];
                }
            }
            let signal = rho * received[k].norm_sqr();
            let interference: f64 = (0..3)
                .filter(|&j| j != k)
                .map(|j| rho * received[j].norm_sqr())
                .sum();
            oracle += (1.0 + signal / (interference + 1.0)).log2();
        }
        assert_relative_eq!(
            downlink_sumrate(&h, &w, rho).unwrap(),
            oracle,
            epsilon = 1e-12
        );
    }

    #[test]
    fn bound_lambdas_at_sixty_degrees() {
        let (l1, l2) = bound_lambdas(&MismatchConfig::bs_phase(PI / 3.0));
        assert_relative_eq!(sinc(PI / 3.0), 0.82699, epsilon = 1e-5);
        assert_relative_eq!(l1, 0.4677, epsilon = 1e-4);
        assert_relative_eq!(l2, 0.6322, epsilon = 1e-4);
    }

    #[test]
    fn ue_amplitude_penalty() {
        let cfg = MismatchConfig {
            theta_bs_t: 0.1,
            delta2_ue_t: 0.5,
            ..MismatchConfig::default()
        };
        let b = mismatch_bound(64, 8, 10.0, &cfg).unwrap();
        assert_relative_eq!(b.delta_r_ue, 8.0 * LOG2_E, epsilon = 1e-12);
        assert_relative_eq!(b.delta_r_ue, 11.542, epsilon = 1e-3);
        assert_relative_eq!(b.bound, b.r_lb_perfect - b.delta_r_bs - b.delta_r_ue);
    }

    #[test]
    fn bound_terms() {
        let b = mismatch_bound(64, 8, 10.0, &MismatchConfig::bs_phase(PI / 6.0)).unwrap();
        assert_relative_eq!(
            b.r_lb_perfect,
            8.0 * (10f64.log2() + 7f64.log2()),
            epsilon = 1e-12
        );
        let expected_bs =
            8.0 * (10f64.log2() + (b.lambda1 / b.lambda2).log2() + (512.0f64 / 392.0).log2());
        assert_relative_eq!(b.delta_r_bs, expected_bs, epsilon = 1e-12);
        assert!(b.lambda1 > 0.0 && b.lambda1 <= 1.0 && b.lambda2 >= 0.0);
    }

    #[test]
    fn bound_degenerates_without_bs_mismatch() {
        assert_eq!(
            mismatch_bound(64, 8, 10.0, &MismatchConfig::ue_phase(1.0)),
            Err(Error::DegenerateBound)
        );
        assert!(mismatch_bound(8, 8, 10.0, &MismatchConfig::bs_phase(0.5)).is_err());
        assert!(mismatch_bound(64, 1, 10.0, &MismatchConfig::bs_phase(0.5)).is_err());
    }

    #[test]
    fn lambda_shapes() {
        let (l1, l2) = bound_lambdas(&MismatchConfig::perfect());
        assert_eq!((l1, l2), (1.0, 0.0));
        let thetas: Vec<f64> = (0..=20).map(|i| PI * i as f64 / 20.0).collect();
        for w in thetas.windows(2) {
            let a = bound_lambdas(&MismatchConfig {
                theta_bs_t: w[0],
                theta_bs_r: 0.3,
                ..Default::default()
            })
            .0;
            let b = bound_lambdas(&MismatchConfig {
                theta_bs_t: w[1],
                theta_bs_r: 0.3,
                ..Default::default()
            })
            .0;
            assert!(b <= a);
            let a = bound_lambdas(&MismatchConfig {
                theta_bs_r: w[0],
                ..Default::default()
            })
            .0;
            let b = bound_lambdas(&MismatchConfig {
                theta_bs_r: w[1],
                ..Default::default()
            })
            .0;
            assert!(b <= a);
        }
    }

    #[test]
    fn loss_edges() {
        assert_eq!(normalized_loss(3.0, 3.0).unwrap(), 0.0);
        assert_eq!(normalized_loss(0.0, 3.0).unwrap(), 1.0);
        assert_eq!(normalized_loss(4.0, 3.0).unwrap(), 0.0);
        assert!(normalized_loss(1.0, 0.0).is_err());
    }

    #[test]
    fn ergodic_downlink_is_deterministic_and_calibration_recovers() {
        let setup = DownlinkSetup::with_snr_db(32, 4, 10.0);
        let cfg = MismatchConfig::bs_phase(PI / 3.0);
        let a = ergodic_downlink(&setup, &cfg, 200, 3).unwrap();
        let b = ergodic_downlink(&setup, &cfg, 200, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.loss > 0.2);
        // Phase-only calibration leaves unit-modulus UE gains, so the
        // calibrated rate equals the perfect one trial by trial.
        assert_relative_eq!(a.calibrated.mean, a.perfect.mean, max_relative = 1e-9);
        let none = ergodic_downlink(&setup, &MismatchConfig::perfect(), 50, 3).unwrap();
        assert_eq!(none.loss, 0.0);
    }
}
