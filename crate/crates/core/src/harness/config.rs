use std::fmt;
use std::ops::Range;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::Error;
use crate::reciprocity::{DbConvention, MismatchConfig};
use crate::scenario::Scenario;

/// Configuration problem, anchored to a line of the file where possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "`{key}`: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    UplinkErgodic,
    UplinkAsymptoticCompare,
    DistributedVsCollocated,
    MismatchPhaseSweep,
    MismatchAmplitudeSweep,
    CalibrationCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::UplinkErgodic,
        ExperimentKind::UplinkAsymptoticCompare,
        ExperimentKind::DistributedVsCollocated,
        ExperimentKind::MismatchPhaseSweep,
        ExperimentKind::MismatchAmplitudeSweep,
        ExperimentKind::CalibrationCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::UplinkErgodic => "uplink-ergodic",
            ExperimentKind::UplinkAsymptoticCompare => "uplink-asymptotic-compare",
            ExperimentKind::DistributedVsCollocated => "distributed-vs-collocated",
            ExperimentKind::MismatchPhaseSweep => "mismatch-phase-sweep",
            ExperimentKind::MismatchAmplitudeSweep => "mismatch-amplitude-sweep",
            ExperimentKind::CalibrationCheck => "calibration-check",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Whether the kind runs the downlink reciprocity model, which reads the
    /// `[mismatch]` table.
    pub fn uses_mismatch(self) -> bool {
        matches!(
            self,
            ExperimentKind::MismatchPhaseSweep
                | ExperimentKind::MismatchAmplitudeSweep
                | ExperimentKind::CalibrationCheck
        )
    }

    pub fn sweep_parameters(self) -> &'static [SweepParameter] {
        use SweepParameter::*;
        match self {
            ExperimentKind::UplinkErgodic
            | ExperimentKind::UplinkAsymptoticCompare
            | ExperimentKind::DistributedVsCollocated => &[
                Cells,
                Rrus,
                Antennas,
                Users,
                GammaP,
                GammaUl,
                Correlation,
                PathlossExponent,
                ShadowingSigma,
            ],
            ExperimentKind::MismatchPhaseSweep => &[
                ThetaBs, ThetaUe, ThetaBsT, ThetaBsR, ThetaUeT, ThetaUeR, SnrDb, Antennas, Users,
            ],
            ExperimentKind::MismatchAmplitudeSweep => {
                &[Delta2BsDb, Delta2UeDb, SnrDb, Antennas, Users]
            }
            ExperimentKind::CalibrationCheck => &[Antennas, Users],
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Quantity varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Cells,
    Rrus,
    Antennas,
    Users,
    GammaP,
    GammaUl,
    Correlation,
    PathlossExponent,
    ShadowingSigma,
    SnrDb,
    /// Both base-station chains.
    ThetaBs,
    /// Both user chains.
    ThetaUe,
    ThetaBsT,
    ThetaBsR,
    ThetaUeT,
    ThetaUeR,
    /// Both base-station chains, in dB under the configured convention.
    Delta2BsDb,
    Delta2UeDb,
}

impl SweepParameter {
    const ALL: [SweepParameter; 18] = [
        SweepParameter::Cells,
        SweepParameter::Rrus,
        SweepParameter::Antennas,
        SweepParameter::Users,
        SweepParameter::GammaP,
        SweepParameter::GammaUl,
        SweepParameter::Correlation,
        SweepParameter::PathlossExponent,
        SweepParameter::ShadowingSigma,
        SweepParameter::SnrDb,
        SweepParameter::ThetaBs,
        SweepParameter::ThetaUe,
        SweepParameter::ThetaBsT,
        SweepParameter::ThetaBsR,
        SweepParameter::ThetaUeT,
        SweepParameter::ThetaUeR,
        SweepParameter::Delta2BsDb,
        SweepParameter::Delta2UeDb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Cells => "L",
            SweepParameter::Rrus => "N",
            SweepParameter::Antennas => "M",
            SweepParameter::Users => "K",
            SweepParameter::GammaP => "gamma_p",
            SweepParameter::GammaUl => "gamma_ul",
            SweepParameter::Correlation => "correlation_coefficient",
            SweepParameter::PathlossExponent => "pathloss_exponent",
            SweepParameter::ShadowingSigma => "shadowing_sigma",
            SweepParameter::SnrDb => "snr_db",
            SweepParameter::ThetaBs => "theta_bs",
            SweepParameter::ThetaUe => "theta_ue",
            SweepParameter::ThetaBsT => "theta_bs_t",
            SweepParameter::ThetaBsR => "theta_bs_r",
            SweepParameter::ThetaUeT => "theta_ue_t",
            SweepParameter::ThetaUeR => "theta_ue_r",
            SweepParameter::Delta2BsDb => "delta2_bs_db",
            SweepParameter::Delta2UeDb => "delta2_ue_db",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

/// Fully validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub scenario: Scenario,
    pub mismatch: Option<MismatchConfig>,
    /// Convention for dB amplitude variances, including `delta2_*_db` sweeps.
    pub db_convention: DbConvention,
    pub sweep: Option<Sweep>,
    pub output: Option<PathBuf>,
    /// Downlink transmit SNR for the reciprocity kinds.
    pub snr_db: f64,
    /// Independent user drops averaged by the uplink kinds.
    pub drops: usize,
}

pub const DEFAULT_SNR_DB: f64 = 10.0;
pub const DEFAULT_DROPS: usize = 1;

/// Parameters of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: Option<f64>,
    pub scenario: Scenario,
    pub mismatch: MismatchConfig,
    pub snr_db: f64,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, scenario: Scenario) -> Self {
        ExperimentSpec {
            kind,
            scenario,
            mismatch: None,
            db_convention: DbConvention::default(),
            sweep: None,
            output: None,
            snr_db: DEFAULT_SNR_DB,
            drops: DEFAULT_DROPS,
        }
    }

    /// Sweep points in file order; a single point without a value when no
    /// sweep is configured.
    pub fn points(&self) -> Result<Vec<SweepPoint>, String> {
        match &self.sweep {
            None => Ok(vec![self.point(None)?]),
            Some(sweep) => sweep
                .values
                .iter()
                .map(|&v| self.point(Some((sweep.parameter, v))))
                .collect(),
        }
    }

    fn point(&self, value: Option<(SweepParameter, f64)>) -> Result<SweepPoint, String> {
        let mut p = SweepPoint {
            value: value.map(|(_, v)| v),
            scenario: self.scenario.clone(),
            mismatch: self.mismatch.unwrap_or_default(),
            snr_db: self.snr_db,
        };
        if let Some((param, v)) = value {
            apply(param, v, &mut p, self.db_convention)?;
        }
        p.scenario.validate().map_err(|e| e.to_string())?;
        p.mismatch.validate().map_err(|e| e.to_string())?;
        if !p.snr_db.is_finite() {
            return Err(format!("snr_db must be finite (got {})", p.snr_db));
        }
        Ok(p)
    }

    /// Serializes to the configuration format; parsing the result yields an
    /// equal spec.
    pub fn to_toml(&self) -> Result<String, ConfigError> {
        let s = &self.scenario;
        let span = |v| Some(Spanned::new(0..0, v));
        let count = |v: usize| Some(Spanned::new(0..0, v as i64));
        let seed = i64::try_from(s.rng_seed).map_err(|_| ConfigError {
            line: None,
            key: Some("rng_seed".into()),
            message: "seed does not fit in a TOML integer".into(),
        })?;
        let raw = RawConfig {
            experiment: Spanned::new(
                0..0,
                RawExperiment {
                    kind: Spanned::new(0..0, self.kind.name().to_string()),
                    output: self
                        .output
                        .as_ref()
                        .map(|p| Spanned::new(0..0, p.display().to_string())),
                    sweep_parameter: self
                        .sweep
                        .as_ref()
                        .map(|w| Spanned::new(0..0, w.parameter.name().to_string())),
                    sweep_values: self
                        .sweep
                        .as_ref()
                        .map(|w| Spanned::new(0..0, w.values.clone())),
                    snr_db: span(self.snr_db),
                    drops: count(self.drops),
                },
            ),
            scenario: Some(Spanned::new(
                0..0,
                RawScenario {
                    cells: count(s.cells),
                    rrus_per_cell: count(s.rrus_per_cell),
                    antennas_per_rru: count(s.antennas_per_rru),
                    users_per_cell: count(s.users_per_cell),
                    cell_radius: span(s.cell_radius),
                    pathloss_exponent: span(s.pathloss_exponent),
                    shadowing_sigma: span(s.shadowing_sigma),
                    reference_distance: span(s.reference_distance),
                    min_access_distance: span(s.min_access_distance),
                    gamma_p: span(s.gamma_p),
                    gamma_ul: span(s.gamma_ul),
                    correlation_coefficient: span(s.correlation_coefficient),
                    rng_seed: Some(Spanned::new(0..0, seed)),
                    num_trials: count(s.num_trials),
                },
            )),
            mismatch: self.mismatch.map(|m| {
                Spanned::new(
                    0..0,
                    RawMismatch {
                        theta_bs_t: span(m.theta_bs_t),
                        theta_bs_r: span(m.theta_bs_r),
                        theta_ue_t: span(m.theta_ue_t),
                        theta_ue_r: span(m.theta_ue_r),
                        delta2_bs_t: span(m.delta2_bs_t),
                        delta2_bs_r: span(m.delta2_bs_r),
                        delta2_ue_t: span(m.delta2_ue_t),
                        delta2_ue_r: span(m.delta2_ue_r),
                        db_convention: Some(Spanned::new(
                            0..0,
                            convention_name(self.db_convention).to_string(),
                        )),
                        ..RawMismatch::default()
                    },
                )
            }),
        };
        toml::to_string(&raw).map_err(|e| ConfigError {
            line: None,
            key: None,
            message: e.to_string(),
        })
    }
}

fn apply(
    param: SweepParameter,
    v: f64,
    p: &mut SweepPoint,
    convention: DbConvention,
) -> Result<(), String> {
    use SweepParameter::*;
    let count = || {
        if v.fract() == 0.0 && v >= 1.0 && v <= u32::MAX as f64 {
            Ok(v as usize)
        } else {
            Err(format!(
                "{} must be a positive integer (got {v})",
                param.name()
            ))
        }
    };
    let s = &mut p.scenario;
    let m = &mut p.mismatch;
    match param {
        Cells => s.cells = count()?,
        Rrus => s.rrus_per_cell = count()?,
        Antennas => s.antennas_per_rru = count()?,
        Users => s.users_per_cell = count()?,
        GammaP => s.gamma_p = v,
        GammaUl => s.gamma_ul = v,
        Correlation => s.correlation_coefficient = v,
        PathlossExponent => s.pathloss_exponent = v,
        ShadowingSigma => s.shadowing_sigma = v,
        SnrDb => p.snr_db = v,
        ThetaBs => (m.theta_bs_t, m.theta_bs_r) = (v, v),
        ThetaUe => (m.theta_ue_t, m.theta_ue_r) = (v, v),
        ThetaBsT => m.theta_bs_t = v,
        ThetaBsR => m.theta_bs_r = v,
        ThetaUeT => m.theta_ue_t = v,
        ThetaUeR => m.theta_ue_r = v,
        Delta2BsDb => {
            let d = convention.to_natural(v);
            (m.delta2_bs_t, m.delta2_bs_r) = (d, d);
        }
        Delta2UeDb => {
            let d = convention.to_natural(v);
            (m.delta2_ue_t, m.delta2_ue_r) = (d, d);
        }
    }
    Ok(())
}

fn convention_name(c: DbConvention) -> &'static str {
    match c {
        DbConvention::Power => "power",
        DbConvention::Amplitude => "amplitude",
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Spanned<RawExperiment>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scenario: Option<Spanned<RawScenario>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mismatch: Option<Spanned<RawMismatch>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    kind: Spanned<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<Spanned<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep_parameter: Option<Spanned<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep_values: Option<Spanned<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    snr_db: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    drops: Option<Spanned<i64>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    cells: Option<Spanned<i64>>,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    rrus_per_cell: Option<Spanned<i64>>,
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    antennas_per_rru: Option<Spanned<i64>>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    users_per_cell: Option<Spanned<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cell_radius: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pathloss_exponent: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shadowing_sigma: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference_distance: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_access_distance: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma_p: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma_ul: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    correlation_coefficient: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rng_seed: Option<Spanned<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    num_trials: Option<Spanned<i64>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMismatch {
    #[serde(skip_serializing_if = "Option::is_none")]
    theta_bs_t: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta_bs_r: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta_ue_t: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta_ue_r: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta2_bs_t: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta2_bs_r: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta2_ue_t: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta2_ue_r: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta2_bs_t_db: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta2_bs_r_db: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta2_ue_t_db: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta2_ue_r_db: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    db_convention: Option<Spanned<String>>,
}

/// Maps byte offsets to 1-based line numbers.
struct Lines<'a>(&'a str);

impl Lines<'_> {
    fn line(&self, span: &Range<usize>) -> usize {
        let end = span.start.min(self.0.len());
        self.0[..end].matches('\n').count() + 1
    }

    fn error(&self, span: &Range<usize>, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: Some(self.line(span)),
            key: Some(key.to_string()),
            message: message.into(),
        }
    }
}

fn first_backticked(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}

fn count_field(
    lines: &Lines,
    key: &str,
    value: &Option<Spanned<i64>>,
    default: usize,
) -> Result<usize, ConfigError> {
    match value {
        None => Ok(default),
        Some(v) => {
            let n = *v.get_ref();
            if n < 1 {
                Err(lines.error(&v.span(), key, format!("must be at least 1 (got {n})")))
            } else {
                usize::try_from(n).map_err(|_| lines.error(&v.span(), key, "too large"))
            }
        }
    }
}

fn float_field(value: &Option<Spanned<f64>>, default: f64) -> f64 {
    value.as_ref().map_or(default, |v| *v.get_ref())
}

fn scenario_from_raw(
    lines: &Lines,
    raw: &RawScenario,
    table: &Range<usize>,
) -> Result<Scenario, ConfigError> {
    let d = Scenario::default();
    let seed = match &raw.rng_seed {
        None => d.rng_seed,
        Some(v) => u64::try_from(*v.get_ref())
            .map_err(|_| lines.error(&v.span(), "rng_seed", "must be >= 0"))?,
    };
    let s = Scenario {
        cells: count_field(lines, "L", &raw.cells, d.cells)?,
        rrus_per_cell: count_field(lines, "N", &raw.rrus_per_cell, d.rrus_per_cell)?,
        antennas_per_rru: count_field(lines, "M", &raw.antennas_per_rru, d.antennas_per_rru)?,
        users_per_cell: count_field(lines, "K", &raw.users_per_cell, d.users_per_cell)?,
        cell_radius: float_field(&raw.cell_radius, d.cell_radius),
        pathloss_exponent: float_field(&raw.pathloss_exponent, d.pathloss_exponent),
        shadowing_sigma: float_field(&raw.shadowing_sigma, d.shadowing_sigma),
        reference_distance: float_field(&raw.reference_distance, d.reference_distance),
        min_access_distance: float_field(&raw.min_access_distance, d.min_access_distance),
        gamma_p: float_field(&raw.gamma_p, d.gamma_p),
        gamma_ul: float_field(&raw.gamma_ul, d.gamma_ul),
        correlation_coefficient: float_field(
            &raw.correlation_coefficient,
            d.correlation_coefficient,
        ),
        rng_seed: seed,
        num_trials: count_field(lines, "num_trials", &raw.num_trials, d.num_trials)?,
    };
    if let Err(Error::InvalidScenario { field, reason }) = s.validate() {
        let span = scenario_span(raw, field).unwrap_or_else(|| table.clone());
        return Err(lines.error(&span, field, reason));
    }
    Ok(s)
}

fn scenario_span(raw: &RawScenario, field: &str) -> Option<Range<usize>> {
    let f = |v: &Option<Spanned<f64>>| v.as_ref().map(|v| v.span());
    let i = |v: &Option<Spanned<i64>>| v.as_ref().map(|v| v.span());
    match field {
        "L" => i(&raw.cells),
        "N" => i(&raw.rrus_per_cell),
        "M" => i(&raw.antennas_per_rru),
        "K" => i(&raw.users_per_cell),
        "num_trials" => i(&raw.num_trials),
        "cell_radius" => f(&raw.cell_radius),
        "pathloss_exponent" => f(&raw.pathloss_exponent),
        "shadowing_sigma" => f(&raw.shadowing_sigma),
        "reference_distance" => f(&raw.reference_distance),
        "min_access_distance" => f(&raw.min_access_distance),
        "gamma_p" => f(&raw.gamma_p),
        "gamma_ul" => f(&raw.gamma_ul),
        "correlation_coefficient" => f(&raw.correlation_coefficient),
        _ => None,
    }
}

fn mismatch_from_raw(
    lines: &Lines,
    raw: &RawMismatch,
    table: &Range<usize>,
) -> Result<(MismatchConfig, DbConvention), ConfigError> {
    let convention = match &raw.db_convention {
        None => DbConvention::default(),
        Some(v) => match v.get_ref().as_str() {
            "power" => DbConvention::Power,
            "amplitude" => DbConvention::Amplitude,
            other => {
                return Err(lines.error(
                    &v.span(),
                    "db_convention",
                    format!("expected \"power\" or \"amplitude\" (got \"{other}\")"),
                ))
            }
        },
    };
    let delta = |key: &str,
                 natural: &Option<Spanned<f64>>,
                 db: &Option<Spanned<f64>>|
     -> Result<f64, ConfigError> {
        match (natural, db) {
            (Some(_), Some(d)) => Err(lines.error(
                &d.span(),
                &format!("{key}_db"),
                format!("conflicts with `{key}`; give the variance once"),
            )),
            (Some(n), None) => Ok(*n.get_ref()),
            (None, Some(d)) => Ok(convention.to_natural(*d.get_ref())),
            (None, None) => Ok(0.0),
        }
    };
    let cfg = MismatchConfig {
        theta_bs_t: float_field(&raw.theta_bs_t, 0.0),
        theta_bs_r: float_field(&raw.theta_bs_r, 0.0),
        theta_ue_t: float_field(&raw.theta_ue_t, 0.0),
        theta_ue_r: float_field(&raw.theta_ue_r, 0.0),
        delta2_bs_t: delta("delta2_bs_t", &raw.delta2_bs_t, &raw.delta2_bs_t_db)?,
        delta2_bs_r: delta("delta2_bs_r", &raw.delta2_bs_r, &raw.delta2_bs_r_db)?,
        delta2_ue_t: delta("delta2_ue_t", &raw.delta2_ue_t, &raw.delta2_ue_t_db)?,
        delta2_ue_r: delta("delta2_ue_r", &raw.delta2_ue_r, &raw.delta2_ue_r_db)?,
    };
    if let Err(Error::InvalidMismatch { field, reason }) = cfg.validate() {
        let span = match field {
            "theta_bs_t" => raw.theta_bs_t.as_ref(),
            "theta_bs_r" => raw.theta_bs_r.as_ref(),
            "theta_ue_t" => raw.theta_ue_t.as_ref(),
            "theta_ue_r" => raw.theta_ue_r.as_ref(),
            "delta2_bs_t" => raw.delta2_bs_t.as_ref().or(raw.delta2_bs_t_db.as_ref()),
            "delta2_bs_r" => raw.delta2_bs_r.as_ref().or(raw.delta2_bs_r_db.as_ref()),
            "delta2_ue_t" => raw.delta2_ue_t.as_ref().or(raw.delta2_ue_t_db.as_ref()),
            "delta2_ue_r" => raw.delta2_ue_r.as_ref().or(raw.delta2_ue_r_db.as_ref()),
            _ => None,
        }
        .map_or_else(|| table.clone(), |v| v.span());
        return Err(lines.error(&span, field, reason));
    }
    Ok((cfg, convention))
}

/// Parses and validates a TOML experiment configuration.
pub fn parse_config(text: &str) -> Result<ExperimentSpec, ConfigError> {
    let lines = Lines(text);
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
        line: e.span().map(|s| lines.line(&s)),
        key: first_backticked(e.message()),
        message: e.message().trim().to_string(),
    })?;
    let exp = raw.experiment.get_ref();
    let kind = ExperimentKind::from_name(exp.kind.get_ref()).ok_or_else(|| {
        let names: Vec<_> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
        lines.error(
            &exp.kind.span(),
            "kind",
            format!(
                "unknown experiment kind \"{}\"; expected one of {}",
                exp.kind.get_ref(),
                names.join(", ")
            ),
        )
    })?;
    let scenario = match &raw.scenario {
        Some(s) => scenario_from_raw(&lines, s.get_ref(), &s.span())?,
        None => Scenario::default(),
    };
    let (mismatch, db_convention) = match &raw.mismatch {
        Some(m) if !kind.uses_mismatch() => {
            return Err(lines.error(
                &m.span(),
                "mismatch",
                format!("experiment kind {kind} does not use RF mismatch"),
            ))
        }
        Some(m) => {
            let (cfg, conv) = mismatch_from_raw(&lines, m.get_ref(), &m.span())?;
            (Some(cfg), conv)
        }
        None => (None, DbConvention::default()),
    };
    let snr_db = float_field(&exp.snr_db, DEFAULT_SNR_DB);
    let drops = count_field(&lines, "drops", &exp.drops, DEFAULT_DROPS)?;
    let sweep = match (&exp.sweep_parameter, &exp.sweep_values) {
        (None, None) => None,
        (Some(p), None) => {
            return Err(lines.error(
                &p.span(),
                "sweep_values",
                "required when sweep_parameter is set",
            ))
        }
        (None, Some(v)) => {
            return Err(lines.error(
                &v.span(),
                "sweep_parameter",
                "required when sweep_values is set",
            ))
        }
        (Some(p), Some(v)) => {
            let allowed = kind.sweep_parameters();
            let parameter = SweepParameter::from_name(p.get_ref())
                .filter(|param| allowed.contains(param))
                .ok_or_else(|| {
                    let names: Vec<_> = allowed.iter().map(|a| a.name()).collect();
                    lines.error(
                        &p.span(),
                        "sweep_parameter",
                        format!(
                            "\"{}\" cannot be swept for {kind}; expected one of {}",
                            p.get_ref(),
                            names.join(", ")
                        ),
                    )
                })?;
            if v.get_ref().is_empty() {
                return Err(lines.error(&v.span(), "sweep_values", "must not be empty"));
            }
            Some(Sweep {
                parameter,
                values: v.get_ref().clone(),
            })
        }
    };
    let spec = ExperimentSpec {
        kind,
        scenario,
        mismatch,
        db_convention,
        sweep,
        output: exp.output.as_ref().map(|o| PathBuf::from(o.get_ref())),
        snr_db,
        drops,
    };
    if let Err(message) = spec.points() {
        let (span, key) = match &exp.sweep_values {
            Some(v) => (v.span(), "sweep_values"),
            None => (
                exp.snr_db
                    .as_ref()
                    .map_or(raw.experiment.span(), |s| s.span()),
                "snr_db",
            ),
        };
        return Err(lines.error(&span, key, message));
    }
    Ok(spec)
}
