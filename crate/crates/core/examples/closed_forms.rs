//! Collocated closed form of the deterministic equivalent and its
//! large-array limit, where only pilot contamination remains.
//!
//! Run with `cargo run --example closed_forms`.

use lsas::asymptotic::{asymptotic_sumrate, c_inf_special, c_limit};
use lsas::channel::{CorrelationModel, CorrelationSet};
use lsas::scenario::LargeScaleMap;

fn main() -> lsas::Result<()> {
    let lambda = [
        [1.0, 0.7, 0.5],
        [0.2, 0.3, 0.1],
        [0.1, 0.05, 0.2],
        [0.04, 0.1, 0.02],
    ];
    let map = LargeScaleMap::from_fn(4, 1, 3, |l, _, k| lambda[l][k])?;
    let (gamma_p, gamma_ul) = (0.05, 0.05);
    let model = CorrelationModel::uncorrelated();
    let limit = c_limit(&map)?;

    println!("{:>11} {:>14} {:>14}", "M", "closed form", "xi pipeline");
    for antennas in [4usize, 16, 64, 256, 1024] {
        let closed = c_inf_special(&map, antennas, model, gamma_p, gamma_ul)?;
        let corr = CorrelationSet::for_map(model, &map, antennas)?;
        let full = asymptotic_sumrate(&map, &corr, gamma_p, gamma_ul)?.c_inf;
        println!("{antennas:>11} {closed:>14.6} {full:>14.6}");
    }
    for antennas in [1_000_000usize, 100_000_000] {
        let closed = c_inf_special(&map, antennas, model, gamma_p, gamma_ul)?;
        println!("{antennas:>11} {closed:>14.6}");
    }
    println!("large-array limit: {limit:.6}");
    Ok(())
}
