//! Hexagonal layout, user drop and large-scale fading for a distributed
//! deployment.
//!
//! Run with `cargo run --example layout`.

use lsas::rng::{stream, Purpose};
use lsas::scenario::{build_layout, compute_largescale, drop_users, Scenario};

fn main() -> lsas::Result<()> {
    let s = Scenario {
        cells: 7,
        rrus_per_cell: 7,
        antennas_per_rru: 8,
        users_per_cell: 4,
        ..Scenario::default()
    };
    let layout = build_layout(&s)?;
    let layout = drop_users(&s, &layout, &mut stream(s.rng_seed, Purpose::Placement, 0))?;
    let map = compute_largescale(&s, &layout, &mut stream(s.rng_seed, Purpose::Shadowing, 0))?;

    println!("cell centers:");
    for (l, c) in layout.cell_centers.iter().enumerate() {
        println!("  cell {l}: ({:8.1}, {:8.1})", c.x, c.y);
    }
    println!("reference-cell RRUs:");
    for (n, r) in layout.rru_positions[0].iter().enumerate() {
        println!("  rru {n}: ({:7.1}, {:7.1})", r.x, r.y);
    }

    println!("\nlarge-scale gain in dB from each user to its strongest reference RRU:");
    for l in 0..s.cells {
        let row: Vec<String> = (0..s.users_per_cell)
            .map(|k| {
                let best = map.per_rru(l, k).into_iter().fold(f64::MIN, f64::max);
                format!("{:7.1}", 10.0 * best.log10())
            })
            .collect();
        println!("  cell {l}: {}", row.join(" "));
    }
    Ok(())
}
