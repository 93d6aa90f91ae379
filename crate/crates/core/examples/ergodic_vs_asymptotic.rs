//! Monte Carlo ergodic uplink sum-rate against the deterministic equivalent
//! as the array grows.
//!
//! Run with `cargo run --release --example ergodic_vs_asymptotic`.

use lsas::asymptotic::asymptotic_sumrate;
use lsas::channel::{CorrelationModel, CorrelationSet};
use lsas::estimation::Covariances;
use lsas::rate_mc::ergodic_sumrate_from_covariances;
use lsas::scenario::LargeScaleMap;

fn main() -> lsas::Result<()> {
    let (cells, users) = (3, 4);
    let lambda = [
        [1.0, 0.8, 0.6, 0.9],
        [0.3, 0.2, 0.25, 0.1],
        [0.15, 0.1, 0.2, 0.05],
    ];
    let map = LargeScaleMap::from_fn(cells, 1, users, |l, _, k| lambda[l][k])?;
    let (gamma_p, gamma_ul) = (0.1, 0.1);

    println!(
        "{:>5} {:>12} {:>10} {:>12} {:>10}",
        "M", "C_mc", "std_err", "C_inf", "gap"
    );
    for antennas in [8, 16, 32, 64, 128, 256] {
        let corr = CorrelationSet::for_map(CorrelationModel::uncorrelated(), &map, antennas)?;
        let cov = Covariances::new(&map, &corr, gamma_p, gamma_ul)?;
        let mc = ergodic_sumrate_from_covariances(&cov, 5, 1000)?;
        let inf = asymptotic_sumrate(&map, &corr, gamma_p, gamma_ul)?.c_inf;
        println!(
            "{antennas:>5} {:>12.4} {:>10.4} {:>12.4} {:>10.4}",
            mc.mean,
            mc.std_error,
            inf,
            (mc.mean - inf).abs()
        );
    }
    Ok(())
}
