//! Subcommand implementations. Every command merges flags with an optional
//! TOML config (flags win), runs deterministically, and emits CSV for grids
//! or JSON for scalar reports.

use std::path::PathBuf;

use rayon::prelude::*;
use serde_json::json;

use noisemetry::fock;
use noisemetry::gaussian::{ChannelParams, SourceKind, SourceSpec};
use noisemetry::haloscope::{
    fi_direct_counting_sv, fi_direct_counting_tmsv, figure_data, fisher_spectrum,
    optimize_coupling, total_fisher_closed, CavityParams, Engineering, FigureParams, Receiver,
    StrategySpec, DEFAULT_GM_RANGE,
};
use noisemetry::measurements::{
    fi_bell, fi_from_distribution, fi_from_joint_distribution, fi_homodyne_sv,
    fi_homodyne_vacuum, fi_photon_counting_vacuum, mle_estimate, mle_estimate_joint,
    nulled_sv_distribution, nulled_tmsv_distribution, r_star_tmsv, sample_counts,
    sample_joint_counts, CountDistribution,
};
use noisemetry::qfi::{
    qfi_sv, qfi_sv_thermal_from_loss, qfi_tmsv, qfi_tmsv_thermal_from_loss, qfi_vacuum_limit,
    ub_combined,
    FisherMethod, FisherResult,
};
use noisemetry::{distributed, Error};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{
    build_cavity, parse_engineering, parse_gain, parse_grid, parse_mode_list, parse_range,
    parse_receiver, parse_source, parse_strategy, Cli, Command, FileConfig, PointArgs,
    StrategyArgs,
};
use crate::output::{csv_text, emit, emit_json};
use crate::CliError;

const DEFAULT_TEMP_MK: f64 = 61.0;
const DEFAULT_FC_GHZ: f64 = 10.0;
const DEFAULT_GA_RATIO: f64 = 1e-12;
/// Tail mass kept out of a sampled truth distribution.
const SAMPLE_TAIL_TOL: f64 = 1e-9;
/// Single-mode oracle tolerance (matches the repo's oracle-equivalence gate).
const ORACLE_QFI_REL_TOL: f64 = 1e-3;
/// Two-mode distribution tolerances.
const ORACLE_ENTRY_TOL: f64 = 1e-8;
const ORACLE_NORM_TOL: f64 = 1e-9;

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Qfi(args) => cmd_qfi(args),
        Command::Fi(args) => cmd_fi(args),
        Command::Spectrum(args) => cmd_spectrum(args),
        Command::Scanrate(args) => cmd_scanrate(args),
        Command::Optimize(args) => cmd_optimize(args),
        Command::Figure(args) => cmd_figure(args),
        Command::OracleCheck(args) => cmd_oracle_check(args),
        Command::Sample(args) => cmd_sample(args),
        Command::DistributedCheck(args) => cmd_distributed_check(args),
    }
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn source_label(kind: SourceKind) -> &'static str {
    match kind {
        SourceKind::Vacuum => "vacuum",
        SourceKind::SqueezedVacuum => "sv",
        SourceKind::Tmsv => "tmsv",
    }
}

fn receiver_label(receiver: Receiver) -> &'static str {
    match receiver {
        Receiver::QfiLimit => "qfi",
        Receiver::UpperBound => "ub",
        Receiver::Homodyne => "homodyne",
        Receiver::Bell => "bell",
        Receiver::Nulling => "nulling",
        Receiver::PhotonCounting => "counting",
    }
}

fn engineering_label(engineering: Engineering) -> &'static str {
    match engineering {
        Engineering::Ideal => "ideal",
        Engineering::Practical => "practical",
    }
}

/// Merged channel-point inputs shared by `qfi` and `fi`.
struct PointInputs {
    source_text: String,
    gain: f64,
    kappa: f64,
    n_b: f64,
    n_t: f64,
    out: Option<PathBuf>,
}

impl PointInputs {
    fn merge(args: &PointArgs, default_source: &str) -> Result<Self, CliError> {
        let cfg = FileConfig::load(args.common.config.as_ref())?;
        init_threads(args.common.threads.or(cfg.threads));
        let gain_text = match &args.gain {
            Some(g) => Some(g.clone()),
            None => cfg.gain_string()?,
        };
        let gain = match gain_text {
            Some(t) => parse_gain(&t)?,
            None => 1.0,
        };
        let n_b = args
            .nb
            .or(cfg.nb)
            .ok_or_else(|| CliError::Config("missing --nb (excess noise occupation)".into()))?;
        Ok(PointInputs {
            source_text: args
                .source
                .clone()
                .or(cfg.source.clone())
                .unwrap_or_else(|| default_source.to_string()),
            gain,
            kappa: args.kappa.or(cfg.kappa).unwrap_or(1.0),
            n_b,
            n_t: args.nt.or(cfg.nt).unwrap_or(0.0),
            out: args
                .common
                .out
                .clone()
                .or_else(|| cfg.out.as_ref().map(PathBuf::from)),
        })
    }
}

fn point_report(
    command: &str,
    inputs: &PointInputs,
    receiver: Option<&str>,
    result: &FisherResult,
) -> serde_json::Value {
    let mut report = json!({
        "command": command,
        "source": inputs.source_text.to_ascii_lowercase(),
        "gain": inputs.gain,
        "kappa": inputs.kappa,
        "n_b": inputs.n_b,
        "n_t": inputs.n_t,
        "signal_photons": result.params.n_s,
        "value": result.value,
        "method": result.method.to_string(),
    });
    if let Some(r) = receiver {
        report["receiver"] = json!(r);
    }
    report
}

fn cmd_qfi(args: PointArgs) -> Result<(), CliError> {
    let inputs = PointInputs::merge(&args, "vacuum")?;
    let g = inputs.gain;
    let (kappa, n_b, n_t) = (inputs.kappa, inputs.n_b, inputs.n_t);
    let result = if inputs.source_text.eq_ignore_ascii_case("ub") {
        let n_s = SourceSpec::new(SourceKind::Tmsv, g.max(1.0), 0.0)?.signal_photons();
        ub_combined(n_s, kappa, n_b)?
    } else {
        let kind = parse_source(&inputs.source_text)?;
        let n_s = (g - 1.0) * (g - 1.0) / (4.0 * g);
        match (kind, n_t == 0.0) {
            (SourceKind::Vacuum, true) => qfi_vacuum_limit(n_b)?,
            // A thermal probe's output stays thermal, so counting attains
            // the quantum limit for it.
            (SourceKind::Vacuum, false) => FisherResult {
                value: fi_photon_counting_vacuum(kappa, n_b, n_t)?,
                method: FisherMethod::ClosedForm,
                params: noisemetry::qfi::FisherParams { kappa, n_b, n_s: 0.0, n_t },
            },
            (SourceKind::SqueezedVacuum, true) => qfi_sv(n_s, kappa, n_b)?,
            (SourceKind::SqueezedVacuum, false) => {
                qfi_sv_thermal_from_loss(g, 1.0 - kappa, n_b, n_t)?
            }
            (SourceKind::Tmsv, true) => qfi_tmsv(n_s, kappa, n_b)?,
            (SourceKind::Tmsv, false) => qfi_tmsv_thermal_from_loss(g, 1.0 - kappa, n_b, n_t)?,
        }
    };
    emit_json(&point_report("qfi", &inputs, None, &result), inputs.out.as_ref())
}

fn cmd_fi(args: PointArgs) -> Result<(), CliError> {
    let receiver_text = args
        .receiver
        .clone()
        .or(FileConfig::load(args.common.config.as_ref())?.receiver)
        .ok_or_else(|| CliError::Config("missing --receiver".into()))?;
    let receiver = parse_receiver(&receiver_text)?;
    let default_source = if receiver == Receiver::Bell { "tmsv" } else { "vacuum" };
    let inputs = PointInputs::merge(&args, default_source)?;
    let kind = parse_source(&inputs.source_text)?;
    let g = inputs.gain;
    let (kappa, n_b, n_t) = (inputs.kappa, inputs.n_b, inputs.n_t);

    let scalar = |value: f64, n_s: f64| FisherResult {
        value,
        method: FisherMethod::ClosedForm,
        params: noisemetry::qfi::FisherParams { kappa, n_b, n_s, n_t },
    };
    let n_s = (g - 1.0) * (g - 1.0) / (4.0 * g);
    let result = match (receiver, kind) {
        (Receiver::Homodyne, SourceKind::Vacuum) => {
            scalar(fi_homodyne_vacuum(kappa, n_b, n_t)?, 0.0)
        }
        (Receiver::Homodyne, SourceKind::SqueezedVacuum) => {
            scalar(fi_homodyne_sv(g, kappa, n_b, n_t)?, n_s)
        }
        (Receiver::Bell, SourceKind::Tmsv) => scalar(fi_bell(g, kappa, n_b, n_t)?, n_s),
        (Receiver::Nulling, SourceKind::SqueezedVacuum) => {
            fi_from_distribution(|nb, n_max| nulled_sv_distribution(g, kappa, nb, n_t, n_max), n_b)?
        }
        (Receiver::Nulling, SourceKind::Tmsv) => fi_from_joint_distribution(
            |nb, n_max| nulled_tmsv_distribution(g, kappa, nb, n_t, n_max),
            n_b,
        )?,
        (Receiver::PhotonCounting, SourceKind::Vacuum) => {
            scalar(fi_photon_counting_vacuum(kappa, n_b, n_t)?, 0.0)
        }
        (Receiver::PhotonCounting, SourceKind::SqueezedVacuum) => {
            fi_direct_counting_sv(g, kappa, n_b, n_t)?
        }
        (Receiver::PhotonCounting, SourceKind::Tmsv) => {
            fi_direct_counting_tmsv(g, kappa, n_b, n_t)?
        }
        (Receiver::QfiLimit | Receiver::UpperBound, _) => {
            return Err(CliError::Config(
                "receiver-free quantities live under the qfi command".into(),
            ));
        }
        (r, k) => {
            return Err(CliError::Domain(format!(
                "receiver {} is incompatible with source {}",
                receiver_label(r),
                source_label(k)
            )));
        }
    };
    emit_json(
        &point_report("fi", &inputs, Some(receiver_label(receiver)), &result),
        inputs.out.as_ref(),
    )
}

/// Merged strategy + cavity inputs shared by spectrum/scanrate/optimize.
struct StrategyInputs {
    strategy: StrategySpec,
    cavity: CavityParams,
    gain: f64,
    gm_range: (f64, f64),
    omega_grid: (f64, f64, usize),
    out: Option<PathBuf>,
}

fn merge_strategy(
    args: &StrategyArgs,
    omega_grid: Option<&String>,
    gm_range: Option<&String>,
    out: Option<&PathBuf>,
) -> Result<StrategyInputs, CliError> {
    let cfg = FileConfig::load(args.common.config.as_ref())?;
    init_threads(args.common.threads.or(cfg.threads));

    let (kind, receiver) = match args.strategy.clone().or(cfg.strategy.clone()) {
        Some(name) => parse_strategy(&name)?,
        None => {
            let source_text = args
                .source
                .clone()
                .or(cfg.source.clone())
                .ok_or_else(|| CliError::Config("need --strategy or --source/--receiver".into()))?;
            let receiver_text = args
                .receiver
                .clone()
                .or(cfg.receiver.clone())
                .ok_or_else(|| CliError::Config("need --strategy or --source/--receiver".into()))?;
            (parse_source(&source_text)?, parse_receiver(&receiver_text)?)
        }
    };
    let engineering = match args.engineering.clone().or(cfg.engineering.clone()) {
        Some(e) => parse_engineering(&e)?,
        None => Engineering::Ideal,
    };
    let gain_text = match &args.gain {
        Some(g) => Some(g.clone()),
        None => cfg.gain_string()?,
    };
    let gain = match gain_text {
        Some(t) => parse_gain(&t)?,
        None => 1.0,
    };
    let source = match kind {
        SourceKind::Vacuum => SourceSpec::vacuum(),
        SourceKind::SqueezedVacuum => SourceSpec::squeezed_vacuum(gain, 0.0)?,
        SourceKind::Tmsv => SourceSpec::tmsv(gain, 0.0)?,
    };
    let strategy = StrategySpec::new(source, receiver, engineering)?;

    let cavity = build_cavity(
        args.gm_ratio.or(cfg.gm_ratio).unwrap_or(1.0),
        args.ga_ratio.or(cfg.ga_ratio).unwrap_or(DEFAULT_GA_RATIO),
        args.temp_mk.or(cfg.temp_mk).unwrap_or(DEFAULT_TEMP_MK),
        args.fc_ghz.or(cfg.fc_ghz).unwrap_or(DEFAULT_FC_GHZ),
    )?;

    let omega_grid = match omega_grid.cloned().or(cfg.omega_grid.clone()) {
        Some(text) => parse_grid(&text)?,
        None => (-8.0, 8.0, 201),
    };
    let gm_range = match gm_range.cloned().or(cfg.gm_range.clone()) {
        Some(text) => parse_range(&text)?,
        None => DEFAULT_GM_RANGE,
    };
    Ok(StrategyInputs {
        strategy,
        cavity,
        gain,
        gm_range,
        omega_grid,
        out: out.cloned().or_else(|| cfg.out.as_ref().map(PathBuf::from)),
    })
}

fn strategy_report_base(command: &str, inputs: &StrategyInputs) -> serde_json::Value {
    json!({
        "command": command,
        "source": source_label(inputs.strategy.source.kind),
        "receiver": receiver_label(inputs.strategy.receiver),
        "engineering": engineering_label(inputs.strategy.engineering),
        "gain": inputs.gain,
        "gm_ratio": inputs.cavity.gm_ratio(),
        "ga_ratio": inputs.cavity.ga_ratio(),
        "temp_mk": inputs.cavity.temp * 1e3,
        "n_thermal": inputs.cavity.n_thermal(),
    })
}

fn cmd_spectrum(args: crate::config::SpectrumArgs) -> Result<(), CliError> {
    let inputs = merge_strategy(
        &args.strategy,
        args.omega_grid.as_ref(),
        None,
        args.strategy.common.out.as_ref(),
    )?;
    let (lo, hi, n) = inputs.omega_grid;
    let grid = noisemetry::numerics::linspace(lo, hi, n);
    let rows: Result<Vec<Vec<f64>>, Error> = grid
        .par_iter()
        .map(|&w_over_gl| {
            let r = fisher_spectrum(
                &inputs.strategy,
                &inputs.cavity,
                w_over_gl * inputs.cavity.gamma_l,
            )?;
            Ok(vec![w_over_gl, r.value, r.params.kappa, r.params.n_b])
        })
        .collect();
    let columns = vec![
        "omega_over_gl".to_string(),
        "fisher".to_string(),
        "kappa".to_string(),
        "n_b".to_string(),
    ];
    emit(&csv_text(&columns, &rows?), inputs.out.as_ref())
}

fn cmd_scanrate(args: StrategyArgs) -> Result<(), CliError> {
    let inputs = merge_strategy(&args, None, None, args.common.out.as_ref())?;
    let result = total_fisher_closed(&inputs.strategy, &inputs.cavity)?;
    let mut report = strategy_report_base("scanrate", &inputs);
    report["total"] = json!(result.total);
    report["method"] = json!(result.method.to_string());
    emit_json(&report, inputs.out.as_ref())
}

fn cmd_optimize(args: crate::config::OptimizeArgs) -> Result<(), CliError> {
    let inputs = merge_strategy(
        &args.strategy,
        None,
        args.gm_range.as_ref(),
        args.strategy.common.out.as_ref(),
    )?;
    let result = optimize_coupling(&inputs.strategy, &inputs.cavity, inputs.gm_range)?;
    let mut report = strategy_report_base("optimize", &inputs);
    report["gm_range"] = json!([inputs.gm_range.0, inputs.gm_range.1]);
    report["optimum_coupling"] = json!(result.optimum_coupling);
    report["total"] = json!(result.total);
    report["method"] = json!(result.method.to_string());
    report["at_boundary"] = json!(result.at_boundary);
    emit_json(&report, inputs.out.as_ref())
}

fn cmd_figure(args: crate::config::FigureArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(args.common.config.as_ref())?;
    init_threads(args.common.threads.or(cfg.threads));
    let id = args
        .id
        .clone()
        .or(cfg.figure.clone())
        .ok_or_else(|| CliError::Config("missing figure id".into()))?;
    let gain_text = match &args.gain {
        Some(g) => Some(g.clone()),
        None => cfg.gain_string()?,
    };
    let gain_db = match gain_text {
        Some(t) => 10.0 * parse_gain(&t)?.log10(),
        None => 10.0,
    };
    let cavity = build_cavity(
        1.0,
        args.ga_ratio.or(cfg.ga_ratio).unwrap_or(DEFAULT_GA_RATIO),
        args.temp_mk.or(cfg.temp_mk).unwrap_or(DEFAULT_TEMP_MK),
        args.fc_ghz.or(cfg.fc_ghz).unwrap_or(DEFAULT_FC_GHZ),
    )?;
    let params = FigureParams {
        cavity,
        gain_db,
        n_b: args.nb.or(cfg.nb).unwrap_or(1e-3),
    };
    let data = figure_data(&id, &params)?;
    let out = args
        .common
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(PathBuf::from));
    emit(&csv_text(&data.columns, &data.rows), out.as_ref())
}

fn cmd_oracle_check(args: crate::config::OracleArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(args.common.config.as_ref())?;
    init_threads(args.common.threads.or(cfg.threads));
    let out = args
        .common
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(PathBuf::from));
    let cutoff = args.cutoff.or(cfg.cutoff).unwrap_or(60);
    if args.two_mode {
        oracle_check_two_mode(cutoff, out.as_ref())
    } else {
        oracle_check_single(cutoff, out.as_ref())
    }
}

/// Number-basis finite-difference QFI against the closed forms on the
/// standard grid (vacuum probe for unit gain, squeezed probe otherwise).
fn oracle_check_single(cutoff: usize, out: Option<&PathBuf>) -> Result<(), CliError> {
    let kappas = [0.3, 0.6, 1.0];
    let noises = [1e-3, 0.1, 0.5];
    let gains = [1.0, 4.0, 10.0];
    let mut grid: Vec<(f64, f64, f64)> = Vec::with_capacity(27);
    for &k in &kappas {
        for &nb in &noises {
            for &g in &gains {
                grid.push((k, nb, g));
            }
        }
    }

    struct PointOutcome {
        kappa: f64,
        n_b: f64,
        gain: f64,
        rel_dev: Option<f64>,
        tail_mass: f64,
        error: Option<String>,
    }
    let outcomes: Vec<PointOutcome> = grid
        .par_iter()
        .map(|&(kappa, n_b, gain)| {
            let run = || -> Result<(f64, f64), Error> {
                let (input, tail) = if gain == 1.0 {
                    (fock::fock_vacuum(cutoff), 0.0)
                } else {
                    let st = fock::fock_squeezed_vacuum(gain, cutoff)?;
                    let tail = st.tail_mass;
                    (st, tail)
                };
                let family = |x: f64| -> Result<fock::FockDensityMatrix, Error> {
                    fock::apply_channel_fock(&input, &ChannelParams::new(kappa, x)?, 1e-13)
                };
                let oracle = fock::qfi_fidelity_fd(family, kappa, n_b, None)?;
                let n_s = (gain - 1.0) * (gain - 1.0) / (4.0 * gain);
                let closed = if gain == 1.0 {
                    qfi_vacuum_limit(n_b)?.value
                } else {
                    qfi_sv(n_s, kappa, n_b)?.value
                };
                Ok(((oracle / closed - 1.0).abs(), tail))
            };
            match run() {
                Ok((rel_dev, tail_mass)) => PointOutcome {
                    kappa,
                    n_b,
                    gain,
                    rel_dev: Some(rel_dev),
                    tail_mass,
                    error: None,
                },
                Err(e) => PointOutcome {
                    kappa,
                    n_b,
                    gain,
                    rel_dev: None,
                    tail_mass: f64::NAN,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let mut worst_dev = 0.0f64;
    let mut worst_point = json!(null);
    let mut failures = Vec::new();
    let mut max_tail = 0.0f64;
    for o in &outcomes {
        if let Some(d) = o.rel_dev {
            if d > worst_dev {
                worst_dev = d;
                worst_point = json!({"kappa": o.kappa, "n_b": o.n_b, "gain": o.gain});
            }
            if d > ORACLE_QFI_REL_TOL {
                failures.push(json!({
                    "kappa": o.kappa, "n_b": o.n_b, "gain": o.gain,
                    "rel_deviation": d,
                }));
            }
            if o.tail_mass.is_finite() {
                max_tail = max_tail.max(o.tail_mass);
            }
        } else {
            failures.push(json!({
                "kappa": o.kappa, "n_b": o.n_b, "gain": o.gain,
                "error": o.error,
            }));
        }
    }
    let pass = failures.is_empty();
    let report = json!({
        "command": "oracle-check",
        "mode": "single-mode",
        "cutoff": cutoff,
        "tolerance": ORACLE_QFI_REL_TOL,
        "points": grid.len(),
        "worst_rel_deviation": worst_dev,
        "worst_point": worst_point,
        "max_input_tail_mass": max_tail,
        "failures": failures,
        "pass": pass,
    });
    emit_json(&report, out)?;
    if pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "oracle check failed at {} of {} grid points (worst relative deviation {:.3e}, \
             largest truncated-input tail mass {:.3e})",
            report["failures"].as_array().map_or(0, |f| f.len()),
            grid.len(),
            worst_dev,
            max_tail
        )))
    }
}

/// Two-mode pipeline check: entangle, pass the signal through the channel,
/// anti-squeeze, read photon statistics — against the analytic joint count
/// distribution.
fn oracle_check_two_mode(cutoff: usize, out: Option<&PathBuf>) -> Result<(), CliError> {
    let (gain, kappa, n_b) = (10.0, 0.6, 1e-3);
    let run = || -> Result<(f64, f64, f64, usize), Error> {
        let probe = fock::fock_tmsv(gain, cutoff)?;
        let through = fock::apply_channel_fock_signal(&probe, &ChannelParams::new(kappa, n_b)?, 1e-13)?;
        let nulled = fock::apply_two_mode_squeeze_fock(&through, r_star_tmsv(gain, kappa));
        let pipeline = nulled.joint_distribution();
        // The loss stage pads the signal axis, so the table is rectangular.
        let n_pipe = (pipeline.len() - 1).min(pipeline[0].len() - 1);

        let formula = nulled_tmsv_distribution(gain, kappa, n_b, 0.0, n_pipe)?;
        let n_cmp = n_pipe.min(formula.n_max());
        let mut max_entry_dev = 0.0f64;
        for n_r in 0..=n_cmp {
            for n_a in 0..=n_cmp {
                let dev = (pipeline[n_r][n_a] - formula.probs[(n_r, n_a)]).abs();
                max_entry_dev = max_entry_dev.max(dev);
            }
        }
        let formula_sum: f64 = formula.probs.iter().sum();
        let norm_defect = (formula_sum + formula.tail_mass - 1.0).abs();
        let pipeline_mass: f64 = pipeline.iter().flatten().sum();
        Ok((max_entry_dev, norm_defect, 1.0 - pipeline_mass, n_cmp))
    };
    match run() {
        Ok((max_entry_dev, norm_defect, pipeline_tail, n_cmp)) => {
            let pass = max_entry_dev <= ORACLE_ENTRY_TOL
                && norm_defect <= ORACLE_NORM_TOL
                && pipeline_tail.abs() <= 1e-6;
            let report = json!({
                "command": "oracle-check",
                "mode": "two-mode",
                "cutoff": cutoff,
                "gain": gain,
                "kappa": kappa,
                "n_b": n_b,
                "compared_up_to": n_cmp,
                "per_entry_tolerance": ORACLE_ENTRY_TOL,
                "normalization_tolerance": ORACLE_NORM_TOL,
                "max_entry_deviation": max_entry_dev,
                "normalization_defect": norm_defect,
                "pipeline_tail_mass": pipeline_tail,
                "pass": pass,
            });
            emit_json(&report, out)?;
            if pass {
                Ok(())
            } else {
                Err(CliError::CheckFailed(format!(
                    "two-mode distribution check failed: max entry deviation {max_entry_dev:.3e}, \
                     normalization defect {norm_defect:.3e}, pipeline tail mass {pipeline_tail:.3e} \
                     (a small cutoff leaves unaccounted tail mass; raise --cutoff)"
                )))
            }
        }
        Err(e) => {
            let report = json!({
                "command": "oracle-check",
                "mode": "two-mode",
                "cutoff": cutoff,
                "pass": false,
                "error": e.to_string(),
            });
            emit_json(&report, out)?;
            Err(CliError::CheckFailed(format!(
                "two-mode pipeline did not complete at cutoff {cutoff}: {e}"
            )))
        }
    }
}

/// Geometric (thermal) count distribution with the given mean occupation.
fn thermal_counts(mean: f64, n_max: usize) -> Result<CountDistribution, Error> {
    if !(mean.is_finite() && mean > 0.0) {
        return Err(Error::domain(format!(
            "thermal counts need a positive mean, got {mean}"
        )));
    }
    let ratio = mean / (1.0 + mean);
    let mut probs = Vec::with_capacity(n_max + 1);
    let mut p = 1.0 / (1.0 + mean);
    for _ in 0..=n_max {
        probs.push(p);
        p *= ratio;
    }
    Ok(CountDistribution::from_probs(probs))
}

fn cmd_sample(args: crate::config::SampleArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(args.common.config.as_ref())?;
    init_threads(args.common.threads.or(cfg.threads));
    let seed = args.seed.or(cfg.seed).ok_or_else(|| {
        CliError::Config("sampling requires an explicit --seed for reproducibility".into())
    })?;
    let source_text = args
        .source
        .clone()
        .or(cfg.source.clone())
        .unwrap_or_else(|| "vacuum".to_string());
    let receiver_text = args
        .receiver
        .clone()
        .or(cfg.receiver.clone())
        .unwrap_or_else(|| "nulling".to_string());
    let gain_text = match &args.gain {
        Some(g) => Some(g.clone()),
        None => cfg.gain_string()?,
    };
    let gain = match gain_text {
        Some(t) => parse_gain(&t)?,
        None => 1.0,
    };
    let kappa = args.kappa.or(cfg.kappa).unwrap_or(1.0);
    let n_b = args
        .nb
        .or(cfg.nb)
        .ok_or_else(|| CliError::Config("missing --nb (true noise occupation)".into()))?;
    let n_t = args.nt.or(cfg.nt).unwrap_or(0.0);
    let samples = args.samples.or(cfg.samples).unwrap_or(10_000);
    let reps = args.reps.or(cfg.reps).unwrap_or(1);
    if samples == 0 || reps == 0 {
        return Err(CliError::Config("--samples and --reps must be positive".into()));
    }
    let out = args
        .common
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(PathBuf::from));

    let kind = parse_source(&source_text)?;
    let receiver = parse_receiver(&receiver_text)?;
    let bracket = (n_b / 10.0, n_b * 10.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    enum Model<'a> {
        Single(Box<dyn Fn(f64, usize) -> Result<CountDistribution, Error> + Sync + 'a>),
        Joint(
            Box<
                dyn Fn(f64, usize) -> Result<noisemetry::measurements::JointCountDistribution, Error>
                    + Sync
                    + 'a,
            >,
        ),
    }
    let model = match (kind, receiver) {
        (SourceKind::Vacuum, Receiver::Nulling | Receiver::PhotonCounting) => {
            // Vacuum probe: counting the raw output, which is thermal with
            // mean kappa n_t + n_b. Nulling has nothing to null here.
            Model::Single(Box::new(move |nb, n_max| thermal_counts(kappa * n_t + nb, n_max)))
        }
        (SourceKind::SqueezedVacuum, Receiver::Nulling) => Model::Single(Box::new(
            move |nb, n_max| nulled_sv_distribution(gain, kappa, nb, n_t, n_max),
        )),
        (SourceKind::Tmsv, Receiver::Nulling) => Model::Joint(Box::new(move |nb, n_max| {
            nulled_tmsv_distribution(gain, kappa, nb, n_t, n_max)
        })),
        (k, r) => {
            return Err(CliError::Config(format!(
                "sampling supports vacuum counting and sv/tmsv nulling, not {} + {}",
                source_label(k),
                receiver_label(r)
            )));
        }
    };

    // Truth distribution: grow the cutoff until the unaccounted tail is
    // negligible against the sample size.
    let mut report = json!({
        "command": "sample",
        "source": source_label(kind),
        "receiver": receiver_label(receiver),
        "gain": gain,
        "kappa": kappa,
        "n_b": n_b,
        "n_t": n_t,
        "samples": samples,
        "reps": reps,
        "seed": seed,
    });
    let mut csv = String::new();

    match model {
        Model::Single(family) => {
            let mut n_max = 64;
            let truth = loop {
                let d = family(n_b, n_max)?;
                if d.tail_mass <= SAMPLE_TAIL_TOL || n_max >= 8192 {
                    break d;
                }
                n_max *= 2;
            };
            let fisher = fi_from_distribution(&*family, n_b)?.value;
            let all_counts: Vec<Vec<u32>> = (0..reps)
                .map(|_| sample_counts(&truth, samples, &mut rng))
                .collect();
            let estimates: Result<Vec<f64>, Error> = all_counts
                .par_iter()
                .map(|counts| Ok(mle_estimate(counts, &*family, bracket)?.estimate))
                .collect();
            let estimates = estimates?;
            csv.push_str("rep,index,count\n");
            for (rep, counts) in all_counts.iter().enumerate() {
                for (index, c) in counts.iter().enumerate() {
                    csv.push_str(&format!("{rep},{index},{c}\n"));
                }
            }
            attach_mle_summary(&mut report, &estimates, fisher, samples, n_b);
        }
        Model::Joint(family) => {
            let mut n_max = 32;
            let truth = loop {
                let d = family(n_b, n_max)?;
                if d.tail_mass <= SAMPLE_TAIL_TOL || n_max >= 512 {
                    break d;
                }
                n_max *= 2;
            };
            let fisher = fi_from_joint_distribution(&*family, n_b)?.value;
            let all_counts: Vec<Vec<(u32, u32)>> = (0..reps)
                .map(|_| sample_joint_counts(&truth, samples, &mut rng))
                .collect();
            let estimates: Result<Vec<f64>, Error> = all_counts
                .par_iter()
                .map(|counts| Ok(mle_estimate_joint(counts, &*family, bracket)?.estimate))
                .collect();
            let estimates = estimates?;
            csv.push_str("rep,index,n_signal,n_idler\n");
            for (rep, counts) in all_counts.iter().enumerate() {
                for (index, (nr, na)) in counts.iter().enumerate() {
                    csv.push_str(&format!("{rep},{index},{nr},{na}\n"));
                }
            }
            attach_mle_summary(&mut report, &estimates, fisher, samples, n_b);
        }
    }

    if let Some(path) = &out {
        std::fs::write(path, &csv)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    emit_json(&report, None)
}

fn attach_mle_summary(
    report: &mut serde_json::Value,
    estimates: &[f64],
    fisher: f64,
    samples: usize,
    n_b: f64,
) {
    let reps = estimates.len();
    let mean: f64 = estimates.iter().sum::<f64>() / reps as f64;
    let crb = 1.0 / (samples as f64 * fisher);
    report["fisher_per_sample"] = json!(fisher);
    report["crb_variance"] = json!(crb);
    report["estimate_mean"] = json!(mean);
    report["estimate_bias"] = json!(mean - n_b);
    if reps >= 2 {
        let var: f64 =
            estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (reps - 1) as f64;
        report["estimate_variance"] = json!(var);
        report["variance_over_crb"] = json!(var / crb);
    } else {
        report["estimate_variance"] = json!(null);
        report["variance_over_crb"] = json!(null);
    }
}

fn cmd_distributed_check(args: crate::config::DistributedArgs) -> Result<(), CliError> {
    let cfg = FileConfig::load(args.common.config.as_ref())?;
    init_threads(args.common.threads.or(cfg.threads));
    let modes = match args.modes.clone().or(cfg.modes.clone()) {
        Some(text) => parse_mode_list(&text)?,
        None => vec![2, 3, 5],
    };
    let kappa = args.kappa.or(cfg.kappa).unwrap_or(0.6);
    let n_b = args.nb.or(cfg.nb).unwrap_or(0.2);
    let states = args.states.or(cfg.states).unwrap_or(8);
    let seed = args.seed.or(cfg.seed).unwrap_or(7);
    let tol = args.tol.or(cfg.tol).unwrap_or(1e-12);
    let out = args
        .common
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(PathBuf::from));

    let ch = ChannelParams::new(kappa, n_b)?;
    let mut entries = Vec::new();
    let mut all_pass = true;
    let mut worst = 0.0f64;
    for &m in &modes {
        let spec = distributed::CorrelatedChannelSpec::new(m, ch)?;
        let inputs = distributed::random_squeezed_states(m, states, seed ^ m as u64)?;
        let r = distributed::verify_reduction(&spec, &inputs, tol)?;
        all_pass &= r.pass;
        worst = worst.max(r.max_cov_deviation.max(r.max_mean_deviation));
        entries.push(json!({
            "m": m,
            "states": r.states_checked,
            "max_cov_deviation": r.max_cov_deviation,
            "max_mean_deviation": r.max_mean_deviation,
            "max_idle_identity_deviation": r.max_idle_identity_deviation,
            "network_orthogonality_deviation": r.max_orthogonality_deviation,
            "network_symplecticity_deviation": r.max_symplecticity_deviation,
            "pass": r.pass,
        }));
    }
    // The concentrated problem inherits the single-sensor bound at M-fold
    // noise; include it for the largest array as a convenience.
    let biggest = *modes.iter().max().expect("non-empty mode list");
    let inherited = distributed::collective_noise_bound(
        2.025,
        &distributed::CorrelatedChannelSpec::new(biggest, ch)?,
    )?;
    let report = json!({
        "command": "distributed-check",
        "kappa": kappa,
        "n_b": n_b,
        "tolerance": tol,
        "seed": seed,
        "checks": entries,
        "worst_deviation": worst,
        "inherited_bound_example": {
            "m": biggest,
            "signal_photons": 2.025,
            "value": inherited.value,
        },
        "pass": all_pass,
    });
    emit_json(&report, out.as_ref())?;
    if all_pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "concentration identity violated: worst deviation {worst:.3e} above tolerance {tol:.1e}"
        )))
    }
}

