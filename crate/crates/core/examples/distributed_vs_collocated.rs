//! Distributed versus collocated antennas with the same total count and the
//! same user drops.
//!
//! Run with `cargo run --release --example distributed_vs_collocated`.

use lsas::asymptotic::asymptotic_sumrate;
use lsas::channel::{CorrelationModel, CorrelationSet};
use lsas::rng::{stream, Purpose};
use lsas::scenario::{build_layout, compute_largescale, drop_users, Scenario};

fn main() -> lsas::Result<()> {
    let distributed = Scenario {
        cells: 7,
        rrus_per_cell: 7,
        antennas_per_rru: 8,
        users_per_cell: 8,
        ..Scenario::default()
    };
    let collocated = Scenario {
        rrus_per_cell: 1,
        antennas_per_rru: distributed.antennas_total(),
        ..distributed.clone()
    };
    let model = CorrelationModel::uncorrelated();
    let drops = 20;
    let mut wins = 0;
    let mut ratio_sum = 0.0;
    println!(
        "{:>5} {:>13} {:>13} {:>7}",
        "drop", "distributed", "collocated", "ratio"
    );
    for d in 0..drops {
        let layout = build_layout(&distributed)?;
        let layout = drop_users(&distributed, &layout, &mut stream(3, Purpose::Placement, d))?;
        let map_d =
            compute_largescale(&distributed, &layout, &mut stream(3, Purpose::Shadowing, d))?;
        let map_c = compute_largescale(
            &collocated,
            &layout.collocated(),
            &mut stream(3, Purpose::Shadowing, d),
        )?;
        let cd = asymptotic_sumrate(
            &map_d,
            &CorrelationSet::for_map(model, &map_d, distributed.antennas_per_rru)?,
            distributed.gamma_p,
            distributed.gamma_ul,
        )?
        .c_inf;
        let cc = asymptotic_sumrate(
            &map_c,
            &CorrelationSet::for_map(model, &map_c, collocated.antennas_per_rru)?,
            collocated.gamma_p,
            collocated.gamma_ul,
        )?
        .c_inf;
        wins += usize::from(cd > cc);
        ratio_sum += cd / cc;
        println!("{d:>5} {cd:>13.3} {cc:>13.3} {:>7.2}", cd / cc);
    }
    println!(
        "distributed wins {wins}/{drops}; mean ratio {:.2}",
        ratio_sum / drops as f64
    );
    Ok(())
}
