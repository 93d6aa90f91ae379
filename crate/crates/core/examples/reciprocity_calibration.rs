//! Zero-forcing under TDD RF mismatch, with and without calibration.
//!
//! Run with `cargo run --example reciprocity_calibration`.

use std::f64::consts::PI;

use lsas::channel::gen_smallscale;
use lsas::linalg::max_offdiag_abs;
use lsas::reciprocity::{
    calibrated_zf_precoder, downlink_sumrate, effective_channels, sample_rf_gains, zf_precoder,
    MismatchConfig,
};
use lsas::rng::{stream, Purpose};
use lsas::CMatrix;

fn main() -> lsas::Result<()> {
    let (users, antennas, rho) = (8, 64, 10.0);
    let mut rng = stream(21, Purpose::Mismatch, 0);
    let h = CMatrix::from_column_slice(
        users,
        antennas,
        gen_smallscale(&mut rng, users * antennas).as_slice(),
    );
    let cfg = MismatchConfig {
        theta_bs_t: PI / 3.0,
        theta_bs_r: PI / 3.0,
        theta_ue_t: PI / 4.0,
        delta2_bs_t: 0.1,
        ..MismatchConfig::default()
    };
    let gains = sample_rf_gains(&cfg, antennas, users, &mut rng)?;
    let (g_ul, g_dl) = effective_channels(&h, &gains)?;

    let naive = zf_precoder(&g_ul)?;
    let calibrated = calibrated_zf_precoder(&g_ul, &gains.c_bs_t, &gains.c_bs_r)?;
    let perfect = zf_precoder(&h.transpose())?;
    println!("max off-diagonal |G_DL W|:");
    println!(
        "  naive ZF       {:.3e}",
        max_offdiag_abs(&(&g_dl * &naive))
    );
    println!(
        "  calibrated ZF  {:.3e}",
        max_offdiag_abs(&(&g_dl * &calibrated))
    );
    println!("downlink sum-rate at 10 dB:");
    println!(
        "  perfect hardware {:.3}",
        downlink_sumrate(&h, &perfect, rho)?
    );
    println!(
        "  naive ZF         {:.3}",
        downlink_sumrate(&g_dl, &naive, rho)?
    );
    println!(
        "  calibrated ZF    {:.3}",
        downlink_sumrate(&g_dl, &calibrated, rho)?
    );
    Ok(())
}
