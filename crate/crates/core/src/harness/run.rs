use std::fmt::Write as _;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use super::config::{ConfigError, ExperimentKind, ExperimentSpec, SweepPoint};
use crate::asymptotic::{asymptotic_sumrate, c_inf, c_inf_special, XiTable};
use crate::channel::{gen_smallscale, CorrelationModel, CorrelationSet};
use crate::error::{Error, Result};
use crate::estimation::Covariances;
use crate::linalg::{max_offdiag_abs, CMatrix};
use crate::rate_mc::{ergodic_sumrate_from_covariances, ErgodicRate};
use crate::reciprocity::{
    calibrated_zf_precoder, effective_channels, ergodic_downlink, mismatch_bound, sample_rf_gains,
    zf_precoder, DownlinkSetup, RfGains,
};
use crate::rng::{stream, Purpose};
use crate::scenario::{build_layout, compute_largescale, drop_users, LargeScaleMap, Scenario};

pub const CSV_HEADER: &str = "sweep_value,metric,value,std_error,trials,seed";

/// One CSV line: a metric evaluated at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep_value: Option<f64>,
    pub metric: &'static str,
    pub value: f64,
    /// Zero for analytic metrics.
    pub std_error: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("numerical failure{}: {source}", sweep_suffix(.sweep_value))]
    Numerical {
        sweep_value: Option<f64>,
        source: Error,
    },
    #[error("I/O error on {}: {source}", .path.display())]
    Io { path: PathBuf, source: io::Error },
}

fn sweep_suffix(v: &Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!(" at sweep value {v}"))
}

impl HarnessError {
    /// Process exit status for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Numerical { .. } => 3,
            HarnessError::Io { .. } => 4,
        }
    }
}

/// Runs every sweep point of `spec` in order.
pub fn run_experiment(spec: &ExperimentSpec) -> std::result::Result<Vec<ResultRow>, HarnessError> {
    let points = spec.points().map_err(|message| ConfigError {
        line: None,
        key: spec.sweep.as_ref().map(|s| s.parameter.name().to_string()),
        message,
    })?;
    let mut rows = Vec::new();
    for point in &points {
        let metrics = run_point(spec, point).map_err(|source| HarnessError::Numerical {
            sweep_value: point.value,
            source,
        })?;
        log::info!(
            "{} at {}: {} metrics",
            spec.kind,
            point
                .value
                .map_or_else(|| "base point".into(), |v| v.to_string()),
            metrics.len()
        );
        rows.extend(metrics.into_iter().map(|m| ResultRow {
            sweep_value: point.value,
            metric: m.name,
            value: m.value,
            std_error: m.std_error,
            trials: m.trials,
            seed: point.scenario.rng_seed,
        }));
    }
    Ok(rows)
}

struct Metric {
    name: &'static str,
    value: f64,
    std_error: f64,
    trials: usize,
}

impl Metric {
    fn analytic(name: &'static str, value: f64) -> Self {
        Metric {
            name,
            value,
            std_error: 0.0,
            trials: 0,
        }
    }

    fn sampled(name: &'static str, rate: ErgodicRate) -> Self {
        Metric {
            name,
            value: rate.mean,
            std_error: rate.std_error,
            trials: rate.trials,
        }
    }
}

fn run_point(spec: &ExperimentSpec, p: &SweepPoint) -> Result<Vec<Metric>> {
    match spec.kind {
        ExperimentKind::UplinkErgodic => uplink(spec, p, false),
        ExperimentKind::UplinkAsymptoticCompare => uplink(spec, p, true),
        ExperimentKind::DistributedVsCollocated => distributed_vs_collocated(spec, p),
        ExperimentKind::MismatchPhaseSweep | ExperimentKind::MismatchAmplitudeSweep => downlink(p),
        ExperimentKind::CalibrationCheck => calibration_check(p),
    }
}

/// Large-scale map of drop `d`: placement and shadowing each draw from their
/// own stream.
fn drop_map(s: &Scenario, drop: u64) -> Result<LargeScaleMap> {
    let layout = drop_users(
        s,
        &build_layout(s)?,
        &mut stream(s.rng_seed, Purpose::Placement, drop),
    )?;
    compute_largescale(
        s,
        &layout,
        &mut stream(s.rng_seed, Purpose::Shadowing, drop),
    )
}

/// Small-scale seed for drop `d`; drop 0 uses the configured seed itself.
fn trial_seed(seed: u64, drop: u64) -> u64 {
    seed ^ drop.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Mean over drops; with one drop the per-drop standard error is kept,
/// otherwise the spread across drops is reported.
fn across_drops(name: &'static str, values: &[f64], single_se: f64, trials: usize) -> Metric {
    if values.len() == 1 {
        return Metric {
            name,
            value: values[0],
            std_error: single_se,
            trials,
        };
    }
    let rate = ErgodicRate::from_samples(values);
    Metric {
        name,
        value: rate.mean,
        std_error: rate.std_error,
        trials: trials * values.len(),
    }
}

fn correlation_model(s: &Scenario) -> Result<CorrelationModel> {
    CorrelationModel::exponential(s.correlation_coefficient)
}

fn uplink(spec: &ExperimentSpec, p: &SweepPoint, compare: bool) -> Result<Vec<Metric>> {
    let s = &p.scenario;
    let model = correlation_model(s)?;
    let closed_form = compare && s.rrus_per_cell == 1 && model.is_identity();
    let (mut mc, mut mc_se, mut inf, mut gap, mut special) = (vec![], 0.0, vec![], vec![], vec![]);
    for d in 0..spec.drops as u64 {
        let map = drop_map(s, d)?;
        let corr = CorrelationSet::for_map(model, &map, s.antennas_per_rru)?;
        let cov = Covariances::new(&map, &corr, s.gamma_p, s.gamma_ul)?;
        let rate = ergodic_sumrate_from_covariances(&cov, trial_seed(s.rng_seed, d), s.num_trials)?;
        mc.push(rate.mean);
        mc_se = rate.std_error;
        if compare {
            let c = c_inf(&XiTable::compute(&cov))?.c_inf;
            inf.push(c);
            gap.push((rate.mean - c).abs());
        }
        if closed_form {
            special.push(c_inf_special(
                &map,
                s.antennas_per_rru,
                model,
                s.gamma_p,
                s.gamma_ul,
            )?);
        }
    }
    let mut out = vec![across_drops("mc_sumrate", &mc, mc_se, s.num_trials)];
    if compare {
        out.push(across_drops("c_inf", &inf, 0.0, 0));
        out.push(across_drops("gap", &gap, mc_se, s.num_trials));
    }
    if closed_form {
        out.push(across_drops("c_inf_closed_form", &special, 0.0, 0));
    }
    Ok(out)
}

fn distributed_vs_collocated(spec: &ExperimentSpec, p: &SweepPoint) -> Result<Vec<Metric>> {
    let distributed = &p.scenario;
    let collocated = Scenario {
        rrus_per_cell: 1,
        antennas_per_rru: distributed.antennas_total(),
        ..distributed.clone()
    };
    let model = correlation_model(distributed)?;
    let (mut dist, mut coll, mut ratio, mut wins) = (vec![], vec![], vec![], vec![]);
    for d in 0..spec.drops as u64 {
        let seed = distributed.rng_seed;
        let layout = drop_users(
            distributed,
            &build_layout(distributed)?,
            &mut stream(seed, Purpose::Placement, d),
        )?;
        let map_d = compute_largescale(
            distributed,
            &layout,
            &mut stream(seed, Purpose::Shadowing, d),
        )?;
        let map_c = compute_largescale(
            &collocated,
            &layout.collocated(),
            &mut stream(seed, Purpose::Shadowing, d),
        )?;
        let corr_d = CorrelationSet::for_map(model, &map_d, distributed.antennas_per_rru)?;
        let corr_c = CorrelationSet::for_map(model, &map_c, collocated.antennas_per_rru)?;
        let cd =
            asymptotic_sumrate(&map_d, &corr_d, distributed.gamma_p, distributed.gamma_ul)?.c_inf;
        let cc =
            asymptotic_sumrate(&map_c, &corr_c, collocated.gamma_p, collocated.gamma_ul)?.c_inf;
        dist.push(cd);
        coll.push(cc);
        ratio.push(cd / cc);
        wins.push(if cd > cc { 1.0 } else { 0.0 });
    }
    Ok(vec![
        across_drops("c_inf_distributed", &dist, 0.0, 1),
        across_drops("c_inf_collocated", &coll, 0.0, 1),
        across_drops("mean_ratio", &ratio, 0.0, 1),
        across_drops("win_fraction", &wins, 0.0, 1),
    ])
}

fn downlink(p: &SweepPoint) -> Result<Vec<Metric>> {
    let s = &p.scenario;
    let (antennas, users) = (s.antennas_total(), s.users_per_cell);
    let setup = DownlinkSetup::with_snr_db(antennas, users, p.snr_db);
    let rates = ergodic_downlink(&setup, &p.mismatch, s.num_trials, s.rng_seed)?;
    let mut out = vec![
        Metric::sampled("rate_mismatch", rates.mismatch),
        Metric::sampled("rate_perfect", rates.perfect),
        Metric::sampled("rate_calibrated", rates.calibrated),
        Metric {
            name: "normalized_loss",
            value: rates.loss,
            std_error: rates.loss_std_error,
            trials: s.num_trials,
        },
    ];
    match mismatch_bound(antennas, users, setup.rho, &p.mismatch) {
        Ok(b) => out.push(Metric::analytic("rate_bound", b.bound)),
        // The bound does not exist for this point; the row is omitted.
        Err(Error::DegenerateBound | Error::Precondition(_)) => {}
        Err(e) => return Err(e),
    }
    Ok(out)
}

fn calibration_check(p: &SweepPoint) -> Result<Vec<Metric>> {
    let s = &p.scenario;
    let (antennas, users) = (s.antennas_total(), s.users_per_cell);
    let mut residual: f64 = 0.0;
    let mut reduces = true;
    for t in 0..s.num_trials as u64 {
        let mut rng = stream(s.rng_seed, Purpose::Mismatch, t);
        let h = CMatrix::from_column_slice(
            users,
            antennas,
            gen_smallscale(&mut rng, users * antennas).as_slice(),
        );
        let gains = sample_rf_gains(&p.mismatch, antennas, users, &mut rng)?;
        let (g_ul, g_dl) = effective_channels(&h, &gains)?;
        let w = calibrated_zf_precoder(&g_ul, &gains.c_bs_t, &gains.c_bs_r)?;
        residual = residual.max(max_offdiag_abs(&(g_dl * w)));
        let ones = RfGains::identity(antennas, users);
        let (plain_ul, _) = effective_channels(&h, &ones)?;
        reduces &= calibrated_zf_precoder(&plain_ul, &ones.c_bs_t, &ones.c_bs_r)?
            == zf_precoder(&plain_ul)?;
    }
    let mut residual_row = Metric::analytic("max_offdiag_residual", residual);
    residual_row.trials = s.num_trials;
    let mut identity_row =
        Metric::analytic("identity_reduction_exact", if reduces { 1.0 } else { 0.0 });
    identity_row.trials = s.num_trials;
    Ok(vec![residual_row, identity_row])
}

fn number(x: f64) -> String {
    format!("{x:.11e}")
}

/// CSV text with header; values carry 12 significant digits.
pub fn render_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let sweep = r.sweep_value.map_or_else(String::new, |v| v.to_string());
        writeln!(
            out,
            "{sweep},{},{},{},{},{}",
            r.metric,
            number(r.value),
            number(r.std_error),
            r.trials,
            r.seed
        )
        .expect("writing to a String cannot fail");
    }
    out
}

/// Writes `contents` to a temporary file next to `path`, then renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &str) -> std::result::Result<(), HarnessError> {
    let io_err = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(contents.as_bytes()).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}
