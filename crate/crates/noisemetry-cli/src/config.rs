//! Argument parsing, file configuration, and the merge rule between them:
//! explicit flags win, then config-file values, then built-in defaults.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use noisemetry::gaussian::{SourceKind, SourceSpec};
use noisemetry::haloscope::{CavityParams, Engineering, Receiver};

use crate::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "noisemetry",
    version,
    about = "Fisher-information calculations for weak excess-noise sensing",
    long_about = "Fisher-information calculations for weak excess-noise sensing: \
                  channel-level quantum limits, receiver performance, cavity-search \
                  spectra and scan-rate totals, figure datasets, oracle checks, and \
                  Monte Carlo estimator runs.\n\n\
                  Cavity rates are normalized to the loss rate (gamma_l = 1); totals \
                  therefore carry units of gamma_l. A TOML config file may supply any \
                  long-flag value (keys named like the flags, e.g. `gm_ratio`); \
                  explicit flags override the file."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Quantum Fisher information (or the source-agnostic bound) of a channel point
    Qfi(PointArgs),
    /// Classical Fisher information of a concrete receiver at a channel point
    Fi(PointArgs),
    /// Fisher-information spectrum over detuning, as CSV
    Spectrum(SpectrumArgs),
    /// Frequency-integrated Fisher total at a fixed coupling
    Scanrate(StrategyArgs),
    /// Coupling ratio maximizing the integrated Fisher total
    Optimize(OptimizeArgs),
    /// Dataset behind one figure of the accompanying analysis, as CSV
    Figure(FigureArgs),
    /// Number-basis oracle vs closed forms; exit 0 only if all pass
    OracleCheck(OracleArgs),
    /// Seeded Monte Carlo counts and maximum-likelihood summary
    Sample(SampleArgs),
    /// Multi-sensor correlated-noise concentration identity; exit 0 only if it holds
    DistributedCheck(DistributedArgs),
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// TOML config file; explicit flags override its values
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output file (CSV for grids, JSON for scalar reports); default stdout
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct PointArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Probe source: vacuum | sv | tmsv (for `qfi` also: ub)
    #[arg(long)]
    pub source: Option<String>,
    /// Receiver (for `fi`): homodyne | bell | nulling | counting
    #[arg(long)]
    pub receiver: Option<String>,
    /// Source gain, linear or in dB (e.g. 4 or 10dB)
    #[arg(long = "G", value_name = "GAIN")]
    pub gain: Option<String>,
    /// Channel transmissivity
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Excess noise occupation
    #[arg(long)]
    pub nb: Option<f64>,
    /// Source seed thermal occupation
    #[arg(long)]
    pub nt: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct StrategyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Strategy shorthand, e.g. vac-hom, sv-hom, sv-qfi, tmsv-qfi, ub,
    /// sv-null, tmsv-null, bell, vac-pd, sv-pd, tmsv-pd
    #[arg(long)]
    pub strategy: Option<String>,
    /// Probe source (alternative to --strategy): vacuum | sv | tmsv
    #[arg(long)]
    pub source: Option<String>,
    /// Receiver (alternative to --strategy): qfi | ub | homodyne | bell | nulling | counting
    #[arg(long)]
    pub receiver: Option<String>,
    /// Input-engineering model: ideal | practical
    #[arg(long)]
    pub engineering: Option<String>,
    /// Source gain, linear or in dB
    #[arg(long = "G", value_name = "GAIN")]
    pub gain: Option<String>,
    /// Measurement-port coupling over the loss rate
    #[arg(long)]
    pub gm_ratio: Option<f64>,
    /// Bath temperature in millikelvin
    #[arg(long = "temp-mK", value_name = "MK")]
    pub temp_mk: Option<f64>,
    /// Cavity center frequency in gigahertz
    #[arg(long = "fc-GHz", value_name = "GHZ")]
    pub fc_ghz: Option<f64>,
    /// Signal coupling over the loss rate
    #[arg(long)]
    pub ga_ratio: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub strategy: StrategyArgs,
    /// Detuning grid in loss-rate units, lo:hi:points
    #[arg(long, value_name = "LO:HI:N", allow_hyphen_values = true)]
    pub omega_grid: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub strategy: StrategyArgs,
    /// Coupling-ratio search range, lo:hi
    #[arg(long, value_name = "LO:HI")]
    pub gm_range: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct FigureArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Figure id: 3a 3b 4a 4b 5a 5b 6a 6b 7a 7b 8a 8b 9a 9b 10 11
    pub id: Option<String>,
    /// Squeezing level override, linear or in dB
    #[arg(long = "G", value_name = "GAIN")]
    pub gain: Option<String>,
    /// Excess-noise override for the channel-level figures
    #[arg(long)]
    pub nb: Option<f64>,
    /// Bath temperature in millikelvin
    #[arg(long = "temp-mK", value_name = "MK")]
    pub temp_mk: Option<f64>,
    /// Cavity center frequency in gigahertz
    #[arg(long = "fc-GHz", value_name = "GHZ")]
    pub fc_ghz: Option<f64>,
    /// Signal coupling over the loss rate
    #[arg(long)]
    pub ga_ratio: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Check the two-mode joint count distribution instead of single-mode QFI
    #[arg(long)]
    pub two_mode: bool,
    /// Number-basis truncation (default 60 single-mode, 40 two-mode)
    #[arg(long)]
    pub cutoff: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Probe source: sv (single-mode counts) | tmsv (joint counts)
    #[arg(long)]
    pub source: Option<String>,
    /// Receiver generating the counts: nulling | counting
    #[arg(long)]
    pub receiver: Option<String>,
    /// Source gain, linear or in dB
    #[arg(long = "G", value_name = "GAIN")]
    pub gain: Option<String>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub nb: Option<f64>,
    #[arg(long)]
    pub nt: Option<f64>,
    /// Counts per replication
    #[arg(long)]
    pub samples: Option<usize>,
    /// Number of replications
    #[arg(long)]
    pub reps: Option<usize>,
    /// RNG seed; required for reproducibility
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
pub struct DistributedArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Sensor counts to check, comma separated
    #[arg(long, value_name = "M,M,...")]
    pub modes: Option<String>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub nb: Option<f64>,
    /// Random Gaussian test states per sensor count
    #[arg(long)]
    pub states: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Deviation tolerance for the identity
    #[arg(long)]
    pub tol: Option<f64>,
}

/// Config-file counterpart of the flags. Keys are the long flag names with
/// dashes as underscores; unknown keys are rejected so typos surface as
/// parse errors.
#[derive(Deserialize, Debug, Default, Clone)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub kappa: Option<f64>,
    pub nb: Option<f64>,
    pub nt: Option<f64>,
    #[serde(rename = "G", alias = "gain")]
    pub gain: Option<toml::Value>,
    pub source: Option<String>,
    pub receiver: Option<String>,
    pub strategy: Option<String>,
    pub engineering: Option<String>,
    pub gm_ratio: Option<f64>,
    pub gm_range: Option<String>,
    pub temp_mk: Option<f64>,
    pub fc_ghz: Option<f64>,
    pub ga_ratio: Option<f64>,
    pub omega_grid: Option<String>,
    pub out: Option<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub samples: Option<usize>,
    pub reps: Option<usize>,
    pub cutoff: Option<usize>,
    pub modes: Option<String>,
    pub states: Option<usize>,
    pub figure: Option<String>,
    pub tol: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&PathBuf>) -> Result<Self, CliError> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Config(format!("config {}: {e}", p.display())))
            }
        }
    }

    /// Gain from the config file, which may be a bare number or a string
    /// like "10dB".
    pub fn gain_string(&self) -> Result<Option<String>, CliError> {
        match &self.gain {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s.clone())),
            Some(toml::Value::Float(x)) => Ok(Some(format!("{x}"))),
            Some(toml::Value::Integer(x)) => Ok(Some(format!("{x}"))),
            Some(other) => Err(CliError::Config(format!(
                "config key G must be a number or a \"<x>dB\" string, got {other}"
            ))),
        }
    }
}

/// `"10dB"` (case-insensitive) or a bare linear value.
pub fn parse_gain(text: &str) -> Result<f64, CliError> {
    let t = text.trim();
    let lower = t.to_ascii_lowercase();
    if let Some(db_part) = lower.strip_suffix("db") {
        let db: f64 = db_part
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("cannot parse gain {t:?}")))?;
        Ok(SourceSpec::gain_from_db(db))
    } else {
        t.parse()
            .map_err(|_| CliError::Config(format!("cannot parse gain {t:?}")))
    }
}

pub fn parse_source(text: &str) -> Result<SourceKind, CliError> {
    match text.to_ascii_lowercase().as_str() {
        "vacuum" | "vac" => Ok(SourceKind::Vacuum),
        "sv" | "squeezed" | "squeezed-vacuum" => Ok(SourceKind::SqueezedVacuum),
        "tmsv" | "entangled" => Ok(SourceKind::Tmsv),
        other => Err(CliError::Config(format!(
            "unknown source {other:?} (expected vacuum, sv, or tmsv)"
        ))),
    }
}

pub fn parse_receiver(text: &str) -> Result<Receiver, CliError> {
    match text.to_ascii_lowercase().as_str() {
        "qfi" | "qfi-limit" => Ok(Receiver::QfiLimit),
        "ub" | "upper-bound" | "bound" => Ok(Receiver::UpperBound),
        "homodyne" | "hom" => Ok(Receiver::Homodyne),
        "bell" => Ok(Receiver::Bell),
        "nulling" | "null" => Ok(Receiver::Nulling),
        "counting" | "pd" | "photon-counting" => Ok(Receiver::PhotonCounting),
        other => Err(CliError::Config(format!(
            "unknown receiver {other:?} (expected qfi, ub, homodyne, bell, nulling, or counting)"
        ))),
    }
}

pub fn parse_engineering(text: &str) -> Result<Engineering, CliError> {
    match text.to_ascii_lowercase().as_str() {
        "ideal" => Ok(Engineering::Ideal),
        "practical" => Ok(Engineering::Practical),
        other => Err(CliError::Config(format!(
            "unknown engineering model {other:?} (expected ideal or practical)"
        ))),
    }
}

/// Shorthand strategy names used by `--strategy`; equivalent to the matching
/// `--source`/`--receiver` pair.
pub fn parse_strategy(text: &str) -> Result<(SourceKind, Receiver), CliError> {
    match text.to_ascii_lowercase().as_str() {
        "vac-hom" | "vacuum-homodyne" => Ok((SourceKind::Vacuum, Receiver::Homodyne)),
        "sv-hom" | "sv-homodyne" => Ok((SourceKind::SqueezedVacuum, Receiver::Homodyne)),
        "vac-qfi" | "vl" => Ok((SourceKind::Vacuum, Receiver::QfiLimit)),
        "sv-qfi" => Ok((SourceKind::SqueezedVacuum, Receiver::QfiLimit)),
        "tmsv-qfi" => Ok((SourceKind::Tmsv, Receiver::QfiLimit)),
        "ub" | "tmsv-ub" | "bound" => Ok((SourceKind::Tmsv, Receiver::UpperBound)),
        "sv-null" => Ok((SourceKind::SqueezedVacuum, Receiver::Nulling)),
        "tmsv-null" => Ok((SourceKind::Tmsv, Receiver::Nulling)),
        "bell" | "tmsv-bell" => Ok((SourceKind::Tmsv, Receiver::Bell)),
        "vac-pd" => Ok((SourceKind::Vacuum, Receiver::PhotonCounting)),
        "sv-pd" => Ok((SourceKind::SqueezedVacuum, Receiver::PhotonCounting)),
        "tmsv-pd" => Ok((SourceKind::Tmsv, Receiver::PhotonCounting)),
        other => Err(CliError::Config(format!("unknown strategy {other:?}"))),
    }
}

/// `"lo:hi:n"` with lo < hi and n >= 2.
pub fn parse_grid(text: &str) -> Result<(f64, f64, usize), CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Config(format!(
            "grid {text:?} must look like lo:hi:n"
        )));
    }
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| CliError::Config(format!("bad grid endpoint {:?}", parts[0])))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| CliError::Config(format!("bad grid endpoint {:?}", parts[1])))?;
    let n: usize = parts[2]
        .parse()
        .map_err(|_| CliError::Config(format!("bad grid size {:?}", parts[2])))?;
    if !(lo < hi) || n < 2 {
        return Err(CliError::Config(format!(
            "grid {text:?} must be strictly increasing with at least 2 points"
        )));
    }
    Ok((lo, hi, n))
}

/// `"lo:hi"` with 0 < lo < hi.
pub fn parse_range(text: &str) -> Result<(f64, f64), CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 2 {
        return Err(CliError::Config(format!("range {text:?} must look like lo:hi")));
    }
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| CliError::Config(format!("bad range endpoint {:?}", parts[0])))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| CliError::Config(format!("bad range endpoint {:?}", parts[1])))?;
    if !(0.0 < lo && lo < hi) {
        return Err(CliError::Config(format!("range {text:?} needs 0 < lo < hi")));
    }
    Ok((lo, hi))
}

/// Comma-separated positive integers, e.g. "2,3,5".
pub fn parse_mode_list(text: &str) -> Result<Vec<usize>, CliError> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let m: usize = part
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("bad sensor count {part:?}")))?;
        if m == 0 {
            return Err(CliError::Config("sensor count must be positive".into()));
        }
        out.push(m);
    }
    if out.is_empty() {
        return Err(CliError::Config("empty sensor-count list".into()));
    }
    Ok(out)
}

/// Loss-normalized cavity from the merged flags (gamma_l = 1).
pub fn build_cavity(
    gm_ratio: f64,
    ga_ratio: f64,
    temp_mk: f64,
    fc_ghz: f64,
) -> Result<CavityParams, CliError> {
    let cavity = CavityParams::new(
        gm_ratio,
        1.0,
        ga_ratio,
        temp_mk * 1e-3,
        2.0 * std::f64::consts::PI * fc_ghz * 1e9,
    )?;
    if let Some(warning) = cavity.coupling_hierarchy_warning() {
        eprintln!("warning: {warning}");
    }
    Ok(cavity)
}
