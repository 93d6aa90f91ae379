//! Normalized sum-rate loss and the analytic lower bound as base-station
//! phase or amplitude mismatch grows, and the much weaker effect of user-side
//! mismatch.
//!
//! The bound column is loose for mild mismatch and overshoots the simulated
//! rate once the base-station phase range approaches pi/2.
//!
//! Run with `cargo run --release --example mismatch_sweep`.

use std::f64::consts::PI;

use lsas::reciprocity::{
    ergodic_downlink, mismatch_bound, DbConvention, DownlinkSetup, MismatchConfig,
};

fn report(label: &str, setup: &DownlinkSetup, cfg: &MismatchConfig) -> lsas::Result<()> {
    let rates = ergodic_downlink(setup, cfg, 1000, 8)?;
    let bound = match mismatch_bound(setup.antennas, setup.users, setup.rho, cfg) {
        Ok(b) => format!("{:9.3}", b.bound),
        Err(_) => format!("{:>9}", "-"),
    };
    println!(
        "{label:<24} {:9.3} {:9.3} {:7.3} ± {:.3} {bound}",
        rates.mismatch.mean, rates.perfect.mean, rates.loss, rates.loss_std_error
    );
    Ok(())
}

fn main() -> lsas::Result<()> {
    let setup = DownlinkSetup::with_snr_db(64, 8, 10.0);
    println!(
        "{:<24} {:>9} {:>9} {:>15} {:>9}",
        "mismatch", "rate", "perfect", "loss", "bound"
    );
    for (label, theta) in [
        ("BS phase 0", 0.0),
        ("BS phase pi/6", PI / 6.0),
        ("BS phase pi/3", PI / 3.0),
        ("BS phase pi/2", PI / 2.0),
    ] {
        report(label, &setup, &MismatchConfig::bs_phase(theta))?;
    }
    report("UE phase pi/3", &setup, &MismatchConfig::ue_phase(PI / 3.0))?;
    for db in [1.0, 3.0] {
        report(
            &format!("BS amplitude {db} dB"),
            &setup,
            &MismatchConfig::bs_amplitude_db(db, DbConvention::Power),
        )?;
        report(
            &format!("UE amplitude {db} dB"),
            &setup,
            &MismatchConfig::ue_amplitude_db(db, DbConvention::Power),
        )?;
    }
    Ok(())
}
