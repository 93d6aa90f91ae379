//! MMSE channel estimation under full pilot reuse.
//!
//! Estimates of the same user's channel toward different cells are built
//! from one pilot observation, so they are perfectly collinear: this is pilot
//! contamination. The empirical estimate/error cross-correlation stays near
//! zero, as MMSE orthogonality requires.
//!
//! Run with `cargo run --release --example channel_estimation`.

use lsas::channel::{ChannelSet, CorrelationModel, CorrelationSet};
use lsas::estimation::{Covariances, EstimateSet};
use lsas::rng::{stream, Purpose};
use lsas::scenario::LargeScaleMap;
use lsas::CMatrix;

fn main() -> lsas::Result<()> {
    let (cells, rrus, users, antennas) = (2, 2, 2, 4);
    // Own-cell users are strong; the neighbouring cell leaks in at -10 dB.
    let map = LargeScaleMap::from_fn(cells, rrus, users, |l, n, k| {
        let base = if l == 0 { 1.0 } else { 0.1 };
        base * (1.0 + 0.5 * n as f64) / (1.0 + k as f64)
    })?;
    let corr = CorrelationSet::for_map(CorrelationModel::exponential(0.5)?, &map, antennas)?;
    let cov = Covariances::new(&map, &corr, 0.1, 0.1)?;

    let mut rng = stream(11, Purpose::Trial, 0);
    let channels = ChannelSet::generate(&map, &corr, &mut rng)?;
    let est = EstimateSet::from_channels(&channels, &cov, &mut rng)?;
    let a = est.g_hat[0].column(0).into_owned();
    let b = est.g_hat[1].column(0).into_owned();
    let cosine = a.dotc(&b).norm() / (a.norm() * b.norm());
    println!("|cos| between user 0's estimates toward cells 0 and 1: {cosine:.12}");

    let trials = 20_000;
    let dim = cov.dim();
    let mut cross = CMatrix::zeros(dim, dim);
    for t in 0..trials {
        let mut rng = stream(12, Purpose::Trial, t);
        let channels = ChannelSet::generate(&map, &corr, &mut rng)?;
        let est = EstimateSet::from_channels(&channels, &cov, &mut rng)?;
        let err = est.errors(&channels);
        let g_hat = est.g_hat[0].column(0);
        cross += g_hat * err[0].column(0).adjoint();
    }
    cross /= lsas::C64::new(trials as f64, 0.0);
    let scale = cov.weighted(0, 0).norm();
    println!(
        "||E[g_hat g_err^H]||_F / ||R Lambda||_F over {trials} trials: {:.4}",
        cross.norm() / scale
    );
    let mse: f64 = (0..cells).map(|l| cov.err_cov(l, 0).trace().re).sum();
    println!("analytic estimation MSE of user 0, summed over cells: {mse:.4}");
    Ok(())
}
