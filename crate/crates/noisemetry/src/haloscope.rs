//! Cavity-search observables: Fisher-information spectra over detuning,
//! frequency-integrated totals (proportional to the scan rate of a
//! weak-signal search), closed-form totals, over-coupling asymptotes, and
//! measurement-port coupling optimization.
//!
//! A microwave cavity couples to a measurement port at rate `gamma_m`, to an
//! internal loss bath at rate `gamma_l`, and to a very weak signal field at
//! rate `gamma_a`. Seen from the measurement port, the cavity at detuning
//! `omega` acts as a phase-covariant Gaussian channel with transmissivity
//! `kappa(omega) = chi_mm^2(omega)` and excess noise
//!
//! ```text
//! n_B(omega) = (1 - chi_mm^2(omega)) n_T + chi_ma^2(omega) n_a,
//! ```
//!
//! where `n_T` is the thermal occupation of the loss bath and `n_a` the
//! signal-field occupation to be estimated. All Fisher quantities here are
//! about `n_a` at the weak-signal point `n_a = 0`, obtained from the
//! channel-level information about `n_B` through the parameter-change factor
//! `chi_ma^4`. Totals integrate the spectrum over the full real detuning
//! axis and carry units of rate (per squared signal occupation).
//!
//! Two input-engineering models are covered. Under ideal engineering the
//! probe source is pure and receiver electronics are noiseless; under
//! practical engineering the source seed modes carry the same thermal
//! occupation `n_T` as the cavity bath, and the vacuum-probe quantum limit
//! degrades to that of a thermal probe.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{apply_channel, make_source, ChannelParams, SourceKind, SourceSpec};
use crate::measurements::{
    fi_bell, fi_from_distribution, fi_from_joint_distribution, fi_homodyne_sv,
    fi_homodyne_vacuum, fi_photon_counting_vacuum, nulled_sv_distribution,
    nulled_tmsv_distribution, CountDistribution, JointCountDistribution, NulledSvParams,
    NulledTmsvParams,
};
use crate::numerics::{golden_max, integrate_real_line, linspace, LnFactorial};
use crate::qfi::{
    qfi_sv_from_loss, qfi_sv_thermal_from_loss, qfi_tmsv_from_loss, qfi_tmsv_thermal_from_loss,
    qfi_vacuum_limit, ub_combined_from_loss, ub_ue_from_loss, FisherMethod, FisherParams,
    FisherResult,
};

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Relative tolerance of the detuning quadrature.
pub const QUAD_REL_TOL: f64 = 1e-8;
/// Default search range for the measurement-port coupling ratio.
pub const DEFAULT_GM_RANGE: (f64, f64) = (1e-2, 1e3);
/// Coarse log-grid size used to bracket a coupling optimum.
const OPT_GRID_POINTS: usize = 96;
/// Dense fallback grid used when the objective is not unimodal.
const OPT_DENSE_POINTS: usize = 600;
/// Relative width tolerance of the golden-section refinement (in log10 of
/// the coupling ratio).
const OPT_GOLDEN_TOL: f64 = 1e-6;
/// Below this squeezing margin the entangled-probe practical closed total is
/// numerically unreliable (G - 1 cancellations) and quadrature takes over.
const TMSV_CLOSED_MIN_GAIN_MARGIN: f64 = 1e-3;
/// Below this bath occupation the same closed total loses accuracy.
const TMSV_CLOSED_MIN_NT: f64 = 1e-9;

/// Bose-Einstein occupation of a bath mode at angular frequency `omega` and
/// temperature `temp` (kelvin).
pub fn thermal_occupation(temp: f64, omega: f64) -> Result<f64> {
    if !(temp > 0.0 && omega > 0.0) {
        return Err(Error::domain(format!(
            "thermal occupation needs temp > 0 and omega > 0, got ({temp}, {omega})"
        )));
    }
    Ok(1.0 / (HBAR * omega / (BOLTZMANN * temp)).exp_m1())
}

// ---------------------------------------------------------------------------
// Cavity description
// ---------------------------------------------------------------------------

/// Cavity coupling rates and operating point.
///
/// Rates are angular frequencies (rad/s). The signal coupling `gamma_a` is
/// physically many orders of magnitude below the other two; it enters the
/// observables only through the `chi_ma^4` prefactor, so its absolute scale
/// just sets the overall units of the totals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityParams {
    /// Measurement-port coupling rate.
    pub gamma_m: f64,
    /// Internal loss rate.
    pub gamma_l: f64,
    /// Signal-field coupling rate.
    pub gamma_a: f64,
    /// Bath temperature in kelvin.
    pub temp: f64,
    /// Cavity center angular frequency (rad/s); the bath occupation is
    /// evaluated here for every detuning.
    pub omega_c: f64,
}

impl CavityParams {
    pub fn new(gamma_m: f64, gamma_l: f64, gamma_a: f64, temp: f64, omega_c: f64) -> Result<Self> {
        for (name, v) in [
            ("gamma_m", gamma_m),
            ("gamma_l", gamma_l),
            ("gamma_a", gamma_a),
            ("temp", temp),
            ("omega_c", omega_c),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("cavity parameter {name} = {v} must be > 0")));
            }
        }
        Ok(CavityParams { gamma_m, gamma_l, gamma_a, temp, omega_c })
    }

    /// Loss-normalized cavity (`gamma_l = 1`) at the standard operating
    /// point of a dilution-refrigerator microwave search: 61 mK bath,
    /// 2*pi*10 GHz center frequency, signal coupling 1e-12 of the loss rate.
    pub fn standard(gm_ratio: f64) -> Result<Self> {
        CavityParams::new(gm_ratio, 1.0, 1e-12, 0.061, 2.0 * std::f64::consts::PI * 1.0e10)
    }

    /// Same cavity with the measurement-port coupling set to
    /// `gm_ratio * gamma_l`.
    pub fn with_gm_ratio(&self, gm_ratio: f64) -> Result<Self> {
        CavityParams::new(gm_ratio * self.gamma_l, self.gamma_l, self.gamma_a, self.temp, self.omega_c)
    }

    /// Total linewidth `gamma_m + gamma_l + gamma_a`.
    pub fn gamma_total(&self) -> f64 {
        self.gamma_m + self.gamma_l + self.gamma_a
    }

    /// Measurement coupling in units of the loss rate.
    pub fn gm_ratio(&self) -> f64 {
        self.gamma_m / self.gamma_l
    }

    /// Signal coupling in units of the loss rate.
    pub fn ga_ratio(&self) -> f64 {
        self.gamma_a / self.gamma_l
    }

    /// Bath occupation at the center frequency.
    pub fn n_thermal(&self) -> f64 {
        1.0 / (HBAR * self.omega_c / (BOLTZMANN * self.temp)).exp_m1()
    }

    /// The analysis assumes the signal coupling is negligible against the
    /// loss rate; returns a diagnostic when that hierarchy is violated.
    pub fn coupling_hierarchy_warning(&self) -> Option<String> {
        if self.gamma_a > 1e-3 * self.gamma_l {
            Some(format!(
                "gamma_a = {:.3e} is not small against gamma_l = {:.3e}; \
                 spectra remain well-defined but the susceptibility model \
                 neglects the signal port's back-action",
                self.gamma_a, self.gamma_l
            ))
        } else {
            None
        }
    }
}

// ---------------------------------------------------------------------------
// Susceptibilities and the effective channel
// ---------------------------------------------------------------------------

/// Squared port susceptibilities at one detuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Susceptibilities {
    /// Measurement-port reflection `chi_mm^2`; the effective channel
    /// transmissivity.
    pub chi_mm2: f64,
    /// Measurement-to-signal transfer `chi_ma^2`; the parameter-change
    /// factor between `n_B` and `n_a` information.
    pub chi_ma2: f64,
    /// Exact complement `1 - chi_mm^2 = gamma_m gamma_l / D`, computed
    /// without cancellation so deep tails keep full precision.
    pub chi_loss2: f64,
}

/// Port susceptibilities at detuning `omega` from cavity resonance:
///
/// ```text
/// chi_mm^2 = [(gamma_m - gamma_l)^2/4 + omega^2] / D,
/// chi_ma^2 = gamma_m gamma_a / D,      D = (gamma_m + gamma_l)^2/4 + omega^2.
/// ```
pub fn susceptibilities(omega: f64, cavity: &CavityParams) -> Susceptibilities {
    let (gm, gl) = (cavity.gamma_m, cavity.gamma_l);
    let d = 0.25 * (gm + gl) * (gm + gl) + omega * omega;
    Susceptibilities {
        chi_mm2: (0.25 * (gm - gl) * (gm - gl) + omega * omega) / d,
        chi_ma2: gm * cavity.gamma_a / d,
        chi_loss2: gm * gl / d,
    }
}

/// Excess noise referred to the measurement port at detuning `omega`, for
/// signal occupation `n_a`:
/// `n_B(omega) = (1 - chi_mm^2) n_T + chi_ma^2 n_a`.
pub fn background_occupation(omega: f64, cavity: &CavityParams, n_a: f64) -> f64 {
    let sus = susceptibilities(omega, cavity);
    sus.chi_loss2 * cavity.n_thermal() + sus.chi_ma2 * n_a
}

// ---------------------------------------------------------------------------
// Strategies
// ---------------------------------------------------------------------------

/// Receiver placed on the returned (and, for entangled probes, retained)
/// modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Receiver {
    /// No concrete receiver: the quantum Fisher information of the output
    /// state for the given source.
    QfiLimit,
    /// Source-agnostic upper bound at the probe's signal-photon budget
    /// (tighter of the dilation and teleportation-simulation branches).
    UpperBound,
    /// Single-quadrature homodyne on the returned mode.
    Homodyne,
    /// Balanced beamsplitter across returned and retained modes followed by
    /// dual homodyne.
    Bell,
    /// Anti-squeezing that maps the zero-noise output to vacuum, then photon
    /// counting.
    Nulling,
    /// Photon counting directly on the raw output mode(s).
    PhotonCounting,
}

/// Input-engineering model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engineering {
    /// Pure probe sources.
    Ideal,
    /// Source seed modes thermalized at the cavity bath occupation; the
    /// vacuum-probe quantum limit becomes the thermal-probe counting limit.
    Practical,
}

/// A complete sensing strategy: probe source, receiver, and engineering
/// model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategySpec {
    pub source: SourceSpec,
    pub receiver: Receiver,
    pub engineering: Engineering,
}

impl StrategySpec {
    /// Validates receiver/source compatibility. The source must be given
    /// with `n_t = 0`: its seed contamination is decided by the engineering
    /// model and the cavity temperature, not by the caller.
    pub fn new(source: SourceSpec, receiver: Receiver, engineering: Engineering) -> Result<Self> {
        if source.n_t != 0.0 {
            return Err(Error::domain(
                "strategy sources carry n_t = 0; seed contamination is set by the \
                 engineering model from the cavity temperature",
            ));
        }
        let ok = match receiver {
            Receiver::QfiLimit | Receiver::UpperBound | Receiver::PhotonCounting => true,
            Receiver::Homodyne => source.kind != SourceKind::Tmsv,
            Receiver::Bell => source.kind == SourceKind::Tmsv,
            Receiver::Nulling => source.kind != SourceKind::Vacuum,
        };
        if !ok {
            return Err(Error::domain(format!(
                "receiver {receiver:?} is incompatible with source {:?}",
                source.kind
            )));
        }
        Ok(StrategySpec { source, receiver, engineering })
    }

    /// Seed thermal occupation implied by the engineering model.
    fn source_contamination(&self, cavity: &CavityParams) -> f64 {
        match self.engineering {
            Engineering::Ideal => 0.0,
            Engineering::Practical => cavity.n_thermal(),
        }
    }
}

// ---------------------------------------------------------------------------
// Channel-level dispatch
// ---------------------------------------------------------------------------

/// Raw-output photon statistics of a single-mode squeezed probe after the
/// channel, as count-distribution parameters (no nulling).
fn raw_sv_distribution(
    g: f64,
    kappa: f64,
    n_b: f64,
    n_t: f64,
    n_max: usize,
) -> Result<CountDistribution> {
    let source = make_source(&SourceSpec::squeezed_vacuum(g, n_t)?);
    let out = apply_channel(&source, &ChannelParams::new(kappa, n_b)?, 0)?;
    let (vq, vp) = (out.cov[(0, 0)], out.cov[(1, 1)]);
    let params = NulledSvParams::from_moments(0.5 * (vq + vp) - 0.5, 0.5 * (vq - vp))?;
    Ok(params.distribution(n_max))
}

/// Raw-output joint photon statistics of an entangled probe after the
/// channel (direct counting on returned and retained modes, no nulling).
fn raw_tmsv_params(g: f64, kappa: f64, n_b: f64, n_t: f64) -> Result<NulledTmsvParams> {
    let source = make_source(&SourceSpec::tmsv(g, n_t)?);
    let out = apply_channel(&source, &ChannelParams::new(kappa, n_b)?, 0)?;
    Ok(NulledTmsvParams {
        var_return: 2.0 * out.cov[(0, 0)],
        var_idler: 2.0 * out.cov[(2, 2)],
        covar: 2.0 * out.cov[(0, 2)],
    })
}

fn raw_tmsv_distribution(
    g: f64,
    kappa: f64,
    n_b: f64,
    n_t: f64,
    n_max: usize,
) -> Result<JointCountDistribution> {
    let params = raw_tmsv_params(g, kappa, n_b, n_t)?;
    let ln_fact = LnFactorial::new(2 * n_max + 2);
    let mut probs = nalgebra::DMatrix::<f64>::zeros(n_max + 1, n_max + 1);
    for n_r in 0..=n_max {
        for n_a in 0..=n_max {
            probs[(n_r, n_a)] = params.joint_prob(n_r, n_a, &ln_fact)?;
        }
    }
    Ok(JointCountDistribution::from_probs(probs))
}

/// Fisher information about the raw joint counts of an entangled probe,
/// computed from the analytic count-distribution parameters rather than the
/// number-basis oracle (fast enough for grids; supports seeded sources).
pub fn fi_direct_counting_tmsv(g: f64, kappa: f64, n_b: f64, n_t: f64) -> Result<FisherResult> {
    fi_from_joint_distribution(|nb, n_max| raw_tmsv_distribution(g, kappa, nb, n_t, n_max), n_b)
}

/// Fisher information about raw photon counts on the returned mode of a
/// single-mode squeezed probe (no nulling stage).
pub fn fi_direct_counting_sv(g: f64, kappa: f64, n_b: f64, n_t: f64) -> Result<FisherResult> {
    fi_from_distribution(|nb, n_max| raw_sv_distribution(g, kappa, nb, n_t, n_max), n_b)
}

/// Channel-level Fisher information about `n_b` for the strategy, with the
/// channel given as `(kappa, loss = 1 - kappa, n_b)` and the seed
/// contamination already resolved.
fn channel_fisher(
    strategy: &StrategySpec,
    kappa: f64,
    loss: f64,
    n_b: f64,
    n_t_src: f64,
) -> Result<FisherResult> {
    let g = strategy.source.gain;
    let n_s = strategy.source.signal_photons();
    match (strategy.receiver, strategy.source.kind) {
        (Receiver::QfiLimit, SourceKind::Vacuum) => match strategy.engineering {
            Engineering::Ideal => qfi_vacuum_limit(n_b),
            // A thermal probe's output is thermal; counting is optimal, so
            // the counting information is the quantum limit.
            Engineering::Practical => wrap_scalar(
                fi_photon_counting_vacuum(kappa, n_b, n_t_src)?,
                kappa,
                n_b,
                0.0,
                n_t_src,
            ),
        },
        (Receiver::QfiLimit, SourceKind::SqueezedVacuum) => match strategy.engineering {
            Engineering::Ideal => qfi_sv_from_loss(n_s, loss, n_b),
            // The loss-parameterized form: deep in the spectral tails the
            // generic Gaussian solve loses the nearly-pure squeezed output
            // to conditioning.
            Engineering::Practical => qfi_sv_thermal_from_loss(g, loss, n_b, n_t_src),
        },
        (Receiver::QfiLimit, SourceKind::Tmsv) => match strategy.engineering {
            Engineering::Ideal => qfi_tmsv_from_loss(n_s, loss, n_b),
            Engineering::Practical => qfi_tmsv_thermal_from_loss(g, loss, n_b, n_t_src),
        },
        // The bound constrains any probe of the stated signal budget; seed
        // contamination cannot raise it, so it is evaluated at the clean n_s
        // under both engineering models.
        (Receiver::UpperBound, _) => ub_combined_from_loss(n_s, loss, n_b),
        (Receiver::Homodyne, SourceKind::Vacuum) => wrap_scalar(
            fi_homodyne_vacuum(kappa, n_b, n_t_src)?,
            kappa,
            n_b,
            n_s,
            n_t_src,
        ),
        (Receiver::Homodyne, SourceKind::SqueezedVacuum) => wrap_scalar(
            fi_homodyne_sv(g, kappa, n_b, n_t_src)?,
            kappa,
            n_b,
            n_s,
            n_t_src,
        ),
        (Receiver::Bell, SourceKind::Tmsv) => wrap_scalar(
            fi_bell(g, kappa, n_b, n_t_src)?,
            kappa,
            n_b,
            n_s,
            n_t_src,
        ),
        (Receiver::Nulling, SourceKind::SqueezedVacuum) => fi_from_distribution(
            |nb, n_max| nulled_sv_distribution(g, kappa, nb, n_t_src, n_max),
            n_b,
        ),
        (Receiver::Nulling, SourceKind::Tmsv) => fi_from_joint_distribution(
            |nb, n_max| nulled_tmsv_distribution(g, kappa, nb, n_t_src, n_max),
            n_b,
        ),
        (Receiver::PhotonCounting, SourceKind::Vacuum) => wrap_scalar(
            fi_photon_counting_vacuum(kappa, n_b, n_t_src)?,
            kappa,
            n_b,
            0.0,
            n_t_src,
        ),
        (Receiver::PhotonCounting, SourceKind::SqueezedVacuum) => {
            fi_direct_counting_sv(g, kappa, n_b, n_t_src)
        }
        (Receiver::PhotonCounting, SourceKind::Tmsv) => {
            fi_direct_counting_tmsv(g, kappa, n_b, n_t_src)
        }
        _ => Err(Error::domain(format!(
            "receiver {:?} is incompatible with source {:?}",
            strategy.receiver, strategy.source.kind
        ))),
    }
}

fn wrap_scalar(value: f64, kappa: f64, n_b: f64, n_s: f64, n_t: f64) -> Result<FisherResult> {
    Ok(FisherResult {
        value,
        method: FisherMethod::ClosedForm,
        params: FisherParams { kappa, n_b, n_s, n_t },
    })
}

/// Fisher-information spectrum about the signal occupation `n_a` at detuning
/// `omega`, evaluated at the weak-signal point `n_a = 0`.
///
/// The value is `chi_ma^4(omega)` times the channel-level information about
/// `n_B` at `kappa = chi_mm^2(omega)`, `n_B = (1 - chi_mm^2) n_T`. The
/// result's `params` echo that effective channel point.
pub fn fisher_spectrum(
    strategy: &StrategySpec,
    cavity: &CavityParams,
    omega: f64,
) -> Result<FisherResult> {
    let sus = susceptibilities(omega, cavity);
    let n_b = sus.chi_loss2 * cavity.n_thermal();
    let n_t_src = strategy.source_contamination(cavity);
    let inner = channel_fisher(strategy, sus.chi_mm2, sus.chi_loss2, n_b, n_t_src)?;
    Ok(FisherResult {
        value: sus.chi_ma2 * sus.chi_ma2 * inner.value,
        method: inner.method,
        params: FisherParams {
            kappa: sus.chi_mm2,
            n_b,
            n_s: strategy.source.signal_photons(),
            n_t: n_t_src,
        },
    })
}

/// Spectrum of the dilation branch of the upper bound alone (the branch with
/// a transcribed closed-form total). The default `UpperBound` receiver uses
/// the tighter combination of both branches instead.
pub fn dilation_bound_spectrum(cavity: &CavityParams, n_s: f64, omega: f64) -> Result<f64> {
    let sus = susceptibilities(omega, cavity);
    let n_b = sus.chi_loss2 * cavity.n_thermal();
    let inner = ub_ue_from_loss(n_s, sus.chi_loss2, n_b)?;
    Ok(sus.chi_ma2 * sus.chi_ma2 * inner.value)
}

// ---------------------------------------------------------------------------
// Totals
// ---------------------------------------------------------------------------

/// A frequency-integrated Fisher total, optionally from a coupling
/// optimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRateResult {
    /// Integrated Fisher information about `n_a` (units: rad/s per squared
    /// occupation).
    pub total: f64,
    /// Coupling ratio found by [`optimize_coupling`]; `None` for totals
    /// evaluated at a fixed cavity.
    pub optimum_coupling: Option<f64>,
    /// How the total was computed (closed form or adaptive quadrature).
    pub method: FisherMethod,
    /// Set when an optimization terminated at the edge of its search range;
    /// over-coupling optima are reported at the range top, never
    /// extrapolated.
    pub at_boundary: bool,
}

/// Total Fisher information about `n_a` by adaptive quadrature over the full
/// detuning axis, via the substitution `omega = (gamma/2) tan(u)`.
pub fn total_fisher_quadrature(
    strategy: &StrategySpec,
    cavity: &CavityParams,
) -> Result<ScanRateResult> {
    let spectrum = |omega: f64| match fisher_spectrum(strategy, cavity, omega) {
        Ok(r) => r.value,
        Err(_) => f64::NAN,
    };
    let q = integrate_real_line(&spectrum, 0.5 * cavity.gamma_total(), QUAD_REL_TOL)?;
    if !q.value.is_finite() {
        return Err(Error::convergence(
            "detuning quadrature hit an invalid spectrum evaluation".to_string(),
        ));
    }
    Ok(ScanRateResult {
        total: q.value,
        optimum_coupling: None,
        method: FisherMethod::Quadrature,
        at_boundary: false,
    })
}

/// Total Fisher information from the transcribed closed forms where one
/// exists for the strategy; all other strategies (including the combined
/// upper bound and the single-mode-squeezed quantum limit, which has no
/// compact total) fall back to quadrature, recorded in `method`.
pub fn total_fisher_closed(
    strategy: &StrategySpec,
    cavity: &CavityParams,
) -> Result<ScanRateResult> {
    match closed_total(strategy, cavity) {
        Some(total) => Ok(ScanRateResult {
            total,
            optimum_coupling: None,
            method: FisherMethod::ClosedForm,
            at_boundary: false,
        }),
        None => total_fisher_quadrature(strategy, cavity),
    }
}

/// The transcribed closed total for the strategy, if one exists and is
/// numerically trustworthy at these parameters.
fn closed_total(strategy: &StrategySpec, cavity: &CavityParams) -> Option<f64> {
    let n_t = cavity.n_thermal();
    let n_s = strategy.source.signal_photons();
    let g = strategy.source.gain;
    let (gm, gl, ga) = (cavity.gamma_m, cavity.gamma_l, cavity.gamma_a);
    use Engineering::*;
    use Receiver::*;
    use SourceKind::*;
    match (strategy.engineering, strategy.receiver, strategy.source.kind) {
        // Counting on a vacuum/thermal probe attains its quantum limit, so
        // both receivers share a total.
        (Ideal, QfiLimit | PhotonCounting, Vacuum) => Some(total_vl_ideal(gm, gl, ga, n_t)),
        (Ideal, QfiLimit, Tmsv) => Some(total_tmsv_ideal(n_s, gm, gl, ga, n_t)),
        (Ideal, Homodyne, Vacuum) => Some(total_vachom_ideal(gm, gl, ga, n_t)),
        (Ideal, Homodyne, SqueezedVacuum) => Some(total_svhom_ideal(n_s, gm, gl, ga, n_t)),
        (Practical, QfiLimit | PhotonCounting, Vacuum) => {
            Some(total_vl_practical(gm, gl, ga, n_t))
        }
        (Practical, QfiLimit, Tmsv)
            if g - 1.0 >= TMSV_CLOSED_MIN_GAIN_MARGIN && n_t >= TMSV_CLOSED_MIN_NT =>
        {
            Some(total_tmsv_practical(g, gm, gl, ga, n_t))
        }
        (Practical, Homodyne, Vacuum) => Some(total_vachom_practical(gm, gl, ga, n_t)),
        (Practical, Homodyne, SqueezedVacuum) => {
            Some(total_svhom_practical(g, gm, gl, ga, n_t))
        }
        _ => None,
    }
}

/// Closed total of the dilation-branch upper bound (valid under both
/// engineering models; the bound keeps the clean signal budget `n_s`).
pub fn dilation_bound_total(cavity: &CavityParams, n_s: f64) -> f64 {
    let n_t = cavity.n_thermal();
    let (gm, gl, ga) = (cavity.gamma_m, cavity.gamma_l, cavity.gamma_a);
    let pref = 2.0 * std::f64::consts::PI * ga * ga * gm
        / (n_t
            * (n_t + 1.0)
            * (ga + gl)
            * (4.0 * gm * n_t * (ga + gl) + (ga + gl + gm) * (ga + gl + gm)).powf(1.5));
    let bracket = 2.0
        * gl
        * (ga * (2.0 * n_s * n_t + n_s + n_t + 1.0)
            + gm * (2.0 * n_t + 1.0) * (n_s * n_t + n_t + 1.0))
        + 2.0 * ga * gm * (2.0 * n_t + 1.0) * (n_s * n_t + n_t + 1.0)
        + (ga * ga + gl * gl + gm * gm) * (2.0 * n_s * n_t + n_s + n_t + 1.0);
    pref * bracket
}

fn total_vl_ideal(gm: f64, gl: f64, ga: f64, n_t: f64) -> f64 {
    2.0 * std::f64::consts::PI * ga * ga * gm
        / (n_t
            * (ga + gl)
            * (4.0 * gm * n_t * (ga + gl) + (ga + gl + gm) * (ga + gl + gm)).sqrt())
}

fn total_vachom_ideal(gm: f64, gl: f64, ga: f64, n_t: f64) -> f64 {
    8.0 * std::f64::consts::PI * ga * ga * gm * gm
        / (8.0 * gm * n_t * (ga + gl) + (ga + gl + gm) * (ga + gl + gm)).powf(1.5)
}

fn total_svhom_ideal(n_s: f64, gm: f64, gl: f64, ga: f64, n_t: f64) -> f64 {
    let cp = (n_s * (n_s + 1.0)).sqrt();
    let num = 8.0
        * std::f64::consts::PI
        * ga
        * ga
        * gm
        * gm
        * (2.0 * n_s - 2.0 * cp + 1.0).powf(1.5)
        * (8.0 * n_s * (n_s + cp + 1.0) + 4.0 * cp + 1.0);
    let den = (2.0 * gl * gm * (4.0 * n_t - 2.0 * n_s + 2.0 * cp + 1.0)
        + (gl * gl + gm * gm) * (2.0 * n_s - 2.0 * cp + 1.0))
        .powf(1.5);
    num / den
}

fn total_tmsv_ideal(n_s: f64, gm: f64, gl: f64, ga: f64, n_t: f64) -> f64 {
    let nu = 2.0 * n_t + 1.0;
    let num = 2.0 * std::f64::consts::PI * ga * ga * gm * (2.0 * n_t * n_s + n_t + n_s + 1.0);
    let den = n_t
        * (n_t + 1.0)
        * (ga + gl)
        * (2.0 * gl * (ga + gm * nu * (2.0 * n_s + 1.0))
            + 2.0 * ga * gm * nu * (2.0 * n_s + 1.0)
            + ga * ga
            + gl * gl
            + gm * gm)
            .sqrt();
    num / den
}

fn total_vl_practical(gm: f64, gl: f64, ga: f64, n_t: f64) -> f64 {
    let gamma = ga + gl + gm;
    4.0 * std::f64::consts::PI * ga * ga * gm * gm / (n_t * (n_t + 1.0) * gamma * gamma * gamma)
}

fn total_vachom_practical(gm: f64, gl: f64, ga: f64, n_t: f64) -> f64 {
    let nu = 2.0 * n_t + 1.0;
    let gamma = ga + gl + gm;
    8.0 * std::f64::consts::PI * ga * ga * gm * gm / (nu * nu * gamma * gamma * gamma)
}

fn total_svhom_practical(g: f64, gm: f64, gl: f64, ga: f64, n_t: f64) -> f64 {
    let nu = 2.0 * n_t + 1.0;
    8.0 * std::f64::consts::PI * g * g * ga * ga * gm * gm
        / (nu * nu * (2.0 * (2.0 * g - 1.0) * gl * gm + gl * gl + gm * gm).powf(1.5))
}

/// Transcribed practical-engineering entangled-probe total. Exact but badly
/// conditioned as `g -> 1` or `n_t -> 0`; [`closed_total`] guards those
/// corners and routes to quadrature instead.
fn total_tmsv_practical(g: f64, gm: f64, gl: f64, ga: f64, n_t: f64) -> f64 {
    let nu = 2.0 * n_t + 1.0;
    let pref = -std::f64::consts::PI * ga * ga * gm
        / (2.0 * (g - 1.0) * (g - 1.0) * g * gl * n_t * n_t * (n_t + 1.0) * (n_t + 1.0) * nu);
    let g2 = g * g;
    let t1 = n_t.powf(2.5)
        * (g2 * nu - 2.0 * g + 2.0 * n_t + 1.0).powi(2)
        * (g / (gl * gm * ((g2 + 1.0) * nu - 2.0 * g * (n_t + 1.0))
            + g * (gl * gl + gm * gm) * n_t))
            .sqrt();
    let t2 = (n_t + 1.0).powf(2.5)
        * ((g2 + 1.0) * nu + 2.0 * g).powi(2)
        * (g / (gl * gm * ((g2 + 1.0) * nu - 2.0 * g * n_t)
            + g * (gl * gl + gm * gm) * (n_t + 1.0)))
            .sqrt();
    let t3 = (g + 1.0)
        * (g + 1.0)
        * nu
        * ((g2 + 1.0) * nu * nu + 2.0 * g)
        * (g * (2.0 * n_t * n_t + 2.0 * n_t + 1.0)
            / (gl * gm * ((g2 + 1.0) * nu * nu - 4.0 * g * n_t * (n_t + 1.0))
                + g * (gl * gl + gm * gm) * (2.0 * n_t * n_t + 2.0 * n_t + 1.0)))
            .sqrt();
    pref * (t1 - t2 + t3)
}

// ---------------------------------------------------------------------------
// Over-coupling asymptotes
// ---------------------------------------------------------------------------
//
// As gamma_m grows without bound the totals of the quantum-limit family
// approach finite values; the library reports boundary optima at the search
// range top and provides these limits separately rather than extrapolating.

/// Over-coupling limit of [`dilation_bound_total`]:
/// `2 pi (gamma_a^2/(gamma_a + gamma_l)) (1 + n_T + n_s (1 + 2 n_T)) / (n_T (1 + n_T))`.
pub fn overcoupled_dilation_bound_total(cavity: &CavityParams, n_s: f64) -> f64 {
    let n_t = cavity.n_thermal();
    2.0 * std::f64::consts::PI * cavity.gamma_a * cavity.gamma_a
        / (cavity.gamma_a + cavity.gamma_l)
        * (1.0 + n_t + n_s * (1.0 + 2.0 * n_t))
        / (n_t * (1.0 + n_t))
}

/// Over-coupling limit of the ideal vacuum-probe total:
/// `2 pi (gamma_a^2/(gamma_a + gamma_l)) / n_T`.
pub fn overcoupled_vl_total_ideal(cavity: &CavityParams) -> f64 {
    2.0 * std::f64::consts::PI * cavity.gamma_a * cavity.gamma_a
        / ((cavity.gamma_a + cavity.gamma_l) * cavity.n_thermal())
}

/// Over-coupling limit of the ideal single-mode-squeezed quantum-limit
/// total: `2 pi (gamma_a^2/gamma_l) (1 + 2 n_s)^2 / (n_s + n_T + 2 n_s n_T)`.
///
/// The ideal entangled-probe total needs no separate limit: its
/// over-coupling value coincides with [`overcoupled_dilation_bound_total`].
pub fn overcoupled_sv_total_ideal(cavity: &CavityParams, n_s: f64) -> f64 {
    let n_t = cavity.n_thermal();
    2.0 * std::f64::consts::PI * cavity.gamma_a * cavity.gamma_a / cavity.gamma_l
        * (1.0 + 2.0 * n_s) * (1.0 + 2.0 * n_s)
        / (n_s + n_t + 2.0 * n_s * n_t)
}

/// Coupling-optimized vacuum-probe homodyne total,
/// `32 pi gamma_l (gamma_a/gamma_l)^2 / (27 (1 + 2 n_T)^2)`, attained at
/// coupling ratio 2 (exact under practical engineering; the ideal total
/// approaches the same law as `n_T -> 0`).
pub fn vachom_optimum_total(cavity: &CavityParams) -> f64 {
    let nu = 1.0 + 2.0 * cavity.n_thermal();
    32.0 * std::f64::consts::PI * cavity.gamma_a * cavity.gamma_a
        / (27.0 * cavity.gamma_l * nu * nu)
}

// ---------------------------------------------------------------------------
// Coupling optimization
// ---------------------------------------------------------------------------

/// Maximizes the strategy's total Fisher information over the
/// measurement-port coupling ratio `gamma_m / gamma_l` within `gm_range`.
///
/// The objective is scanned on a log-spaced grid to bracket the optimum; a
/// non-unimodal scan (more than one direction reversal, as with piecewise
/// optima competing between interior and over-coupled branches) triggers a
/// dense rescan before golden-section refinement. Optima on the range edge
/// are reported with `at_boundary` set rather than extrapolated.
pub fn optimize_coupling(
    strategy: &StrategySpec,
    cavity: &CavityParams,
    gm_range: (f64, f64),
) -> Result<ScanRateResult> {
    let (lo, hi) = gm_range;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
        return Err(Error::domain(format!(
            "coupling search range ({lo}, {hi}) must satisfy 0 < lo < hi"
        )));
    }
    let objective = |t: f64| -> f64 {
        match cavity
            .with_gm_ratio(10f64.powf(t))
            .and_then(|cav| total_fisher_closed(strategy, &cav))
        {
            Ok(r) => r.total,
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let (t_lo, t_hi) = (lo.log10(), hi.log10());

    let scan = |n: usize| -> (Vec<f64>, Vec<f64>) {
        let ts = linspace(t_lo, t_hi, n);
        let fs: Vec<f64> = ts.par_iter().map(|&t| objective(t)).collect();
        (ts, fs)
    };
    let (mut ts, mut fs) = scan(OPT_GRID_POINTS);
    if !fs.iter().any(|f| f.is_finite()) {
        return Err(Error::domain(
            "coupling optimization: the total failed at every grid point".to_string(),
        ));
    }
    if direction_reversals(&fs) > 1 {
        let dense = scan(OPT_DENSE_POINTS);
        ts = dense.0;
        fs = dense.1;
    }
    let best = fs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty grid");

    if best == 0 || best == ts.len() - 1 {
        let t_edge = ts[best];
        let cav = cavity.with_gm_ratio(10f64.powf(t_edge))?;
        let at_edge = total_fisher_closed(strategy, &cav)?;
        return Ok(ScanRateResult {
            total: at_edge.total,
            optimum_coupling: Some(10f64.powf(t_edge)),
            method: at_edge.method,
            at_boundary: true,
        });
    }
    let refined = golden_max(&objective, ts[best - 1], ts[best + 1], OPT_GOLDEN_TOL)?;
    let gm_star = 10f64.powf(refined.argmax);
    let cav = cavity.with_gm_ratio(gm_star)?;
    let at_opt = total_fisher_closed(strategy, &cav)?;
    Ok(ScanRateResult {
        total: at_opt.total,
        optimum_coupling: Some(gm_star),
        method: at_opt.method,
        at_boundary: false,
    })
}

/// Number of sign reversals in the discrete gradient of `fs` (0 or 1 for a
/// unimodal profile).
fn direction_reversals(fs: &[f64]) -> usize {
    let mut reversals = 0usize;
    let mut prev = 0i8;
    for pair in fs.windows(2) {
        let d = pair[1] - pair[0];
        let s = if d > 0.0 {
            1i8
        } else if d < 0.0 {
            -1i8
        } else {
            0i8
        };
        if s != 0 {
            if prev != 0 && s != prev {
                reversals += 1;
            }
            prev = s;
        }
    }
    reversals
}

// ---------------------------------------------------------------------------
// Figure datasets
// ---------------------------------------------------------------------------

/// Parameters shared by the figure datasets; each figure overrides the
/// coupling ratio or squeezing level its caption fixes.
#[derive(Debug, Clone, Copy)]
pub struct FigureParams {
    /// Base cavity (loss rate, signal coupling, temperature, center
    /// frequency); figures set `gamma_m` as needed.
    pub cavity: CavityParams,
    /// Squeezing level in dB where a figure fixes it.
    pub gain_db: f64,
    /// Excess-noise level for the channel-level figures.
    pub n_b: f64,
}

impl Default for FigureParams {
    fn default() -> Self {
        FigureParams {
            cavity: CavityParams::standard(1.0).expect("standard cavity is valid"),
            gain_db: 10.0,
            n_b: 1e-3,
        }
    }
}

/// A plot-ready table: one named column per curve, one row per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureData {
    pub figure: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

const FIGURE_IDS: &[&str] = &[
    "3a", "3b", "4a", "4b", "5a", "5b", "6a", "6b", "7a", "7b", "8a", "8b", "9a", "9b", "10",
    "11",
];

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Emits the dataset behind one figure of the accompanying analysis:
///
/// * `3a`/`3b` — entangled- and squeezed-probe quantum limits over a
///   `(kappa, gain)` grid, normalized by the upper bound;
/// * `7a`/`7b` — the same grid normalized by the vacuum limit;
/// * `4a`/`4b` — channel-level receiver performance versus squeezing at
///   `kappa = 1` and `0.6`, in dB over vacuum homodyne;
/// * `5a`/`5b` — ideal-engineering totals versus coupling ratio, and
///   coupling-optimized totals versus squeezing, in dB over the optimized
///   vacuum-homodyne total;
/// * `9a`/`9b` — the practical-engineering counterparts of 5a/5b;
/// * `6a`/`6b` — ideal-engineering spectra versus detuning at critical
///   coupling and at coupling ratio `2G`;
/// * `8a`/`8b` — the practical-engineering counterparts of 6a/6b;
/// * `10` — nulling versus direct counting for the entangled probe over a
///   `(kappa, gain)` grid;
/// * `11` — the two competing branches (critical coupling versus the
///   over-coupling limit) of the ideal squeezed-probe total versus
///   squeezing.
pub fn figure_data(figure_id: &str, params: &FigureParams) -> Result<FigureData> {
    match figure_id {
        "3a" | "3b" | "7a" | "7b" => figure_ratio_grid(figure_id, params),
        "4a" => figure_receivers_vs_gain("4a", 1.0, params),
        "4b" => figure_receivers_vs_gain("4b", 0.6, params),
        "5a" => figure_totals_vs_coupling("5a", Engineering::Ideal, params),
        "9a" => figure_totals_vs_coupling("9a", Engineering::Practical, params),
        "5b" => figure_optimized_totals_vs_gain("5b", Engineering::Ideal, params),
        "9b" => figure_optimized_totals_vs_gain("9b", Engineering::Practical, params),
        "6a" => figure_spectra("6a", Engineering::Ideal, 1.0, params),
        "6b" => figure_spectra("6b", Engineering::Ideal, f64::NAN, params),
        "8a" => figure_spectra("8a", Engineering::Practical, 1.0, params),
        "8b" => figure_spectra("8b", Engineering::Practical, f64::NAN, params),
        "10" => figure_nulling_vs_direct(params),
        "11" => figure_piecewise_branches(params),
        other => Err(Error::domain(format!(
            "unknown figure id {other:?}; valid ids: {FIGURE_IDS:?}"
        ))),
    }
}

/// Quantum-limit ratio grids (figures 3 and 7).
fn figure_ratio_grid(figure_id: &str, params: &FigureParams) -> Result<FigureData> {
    use crate::qfi::{qfi_sv, qfi_tmsv, ub_combined};
    let n_b = params.n_b;
    let kappas = linspace(0.02, 1.0, 50);
    let gains_db = linspace(0.2, 30.0, 50);
    let grid: Vec<(f64, f64)> = kappas
        .iter()
        .flat_map(|&k| gains_db.iter().map(move |&gdb| (k, gdb)))
        .collect();
    let rows: Result<Vec<Vec<f64>>> = grid
        .par_iter()
        .map(|&(kappa, gain_db)| {
            let n_s = SourceSpec::squeezed_vacuum(SourceSpec::gain_from_db(gain_db), 0.0)?
                .signal_photons();
            let probe = match figure_id {
                "3a" | "7a" => qfi_tmsv(n_s, kappa, n_b)?.value,
                _ => qfi_sv(n_s, kappa, n_b)?.value,
            };
            let reference = match figure_id {
                "3a" | "3b" => ub_combined(n_s, kappa, n_b)?.value,
                _ => qfi_vacuum_limit(n_b)?.value,
            };
            Ok(vec![kappa, gain_db, probe, reference, probe / reference])
        })
        .collect();
    let reference_name = match figure_id {
        "3a" | "3b" => "qfi_bound",
        _ => "qfi_vacuum",
    };
    let probe_name = match figure_id {
        "3a" | "7a" => "qfi_tmsv",
        _ => "qfi_sv",
    };
    Ok(FigureData {
        figure: figure_id.to_string(),
        columns: vec![
            "kappa".into(),
            "gain_db".into(),
            probe_name.into(),
            reference_name.into(),
            "ratio".into(),
        ],
        rows: rows?,
    })
}

/// Channel-level receiver comparison versus squeezing (figure 4).
fn figure_receivers_vs_gain(figure_id: &str, kappa: f64, params: &FigureParams) -> Result<FigureData> {
    use crate::qfi::{qfi_sv, qfi_tmsv};
    let n_b = params.n_b;
    let norm = fi_homodyne_vacuum(kappa, n_b, 0.0)?;
    let gains_db = linspace(0.0, 15.0, 61);
    let rows: Result<Vec<Vec<f64>>> = gains_db
        .par_iter()
        .map(|&gain_db| {
            let g = SourceSpec::gain_from_db(gain_db);
            let n_s = SourceSpec::squeezed_vacuum(g, 0.0)?.signal_photons();
            let vl = qfi_vacuum_limit(n_b)?.value;
            let sv = qfi_sv(n_s, kappa, n_b)?.value;
            let tmsv = qfi_tmsv(n_s, kappa, n_b)?.value;
            let hom_sv = fi_homodyne_sv(g, kappa, n_b, 0.0)?;
            let bell = fi_bell(g, kappa, n_b, 0.0)?;
            let null_sv = fi_from_distribution(
                |nb, n_max| nulled_sv_distribution(g, kappa, nb, 0.0, n_max),
                n_b,
            )?
            .value;
            let null_tmsv = fi_from_joint_distribution(
                |nb, n_max| nulled_tmsv_distribution(g, kappa, nb, 0.0, n_max),
                n_b,
            )?
            .value;
            Ok(vec![
                gain_db,
                db(vl / norm),
                db(sv / norm),
                db(tmsv / norm),
                db(hom_sv / norm),
                db(bell / norm),
                db(null_sv / norm),
                db(null_tmsv / norm),
            ])
        })
        .collect();
    Ok(FigureData {
        figure: figure_id.to_string(),
        columns: vec![
            "gain_db".into(),
            "qfi_vacuum_db".into(),
            "qfi_sv_db".into(),
            "qfi_tmsv_db".into(),
            "fi_hom_sv_db".into(),
            "fi_bell_db".into(),
            "fi_null_sv_db".into(),
            "fi_null_tmsv_db".into(),
        ],
        rows: rows?,
    })
}

/// The six per-figure total-Fisher strategies shared by figures 5 and 9.
fn total_strategies(gain: f64, engineering: Engineering) -> Result<[StrategySpec; 6]> {
    Ok([
        StrategySpec::new(SourceSpec::tmsv(gain, 0.0)?, Receiver::UpperBound, engineering)?,
        StrategySpec::new(SourceSpec::tmsv(gain, 0.0)?, Receiver::QfiLimit, engineering)?,
        StrategySpec::new(
            SourceSpec::squeezed_vacuum(gain, 0.0)?,
            Receiver::QfiLimit,
            engineering,
        )?,
        StrategySpec::new(
            SourceSpec::squeezed_vacuum(gain, 0.0)?,
            Receiver::Homodyne,
            engineering,
        )?,
        StrategySpec::new(SourceSpec::vacuum(), Receiver::Homodyne, engineering)?,
        StrategySpec::new(SourceSpec::vacuum(), Receiver::QfiLimit, engineering)?,
    ])
}

const TOTALS_COLUMNS: [&str; 6] = [
    "ub_db",
    "qfi_tmsv_db",
    "qfi_sv_db",
    "fi_hom_sv_db",
    "fi_hom_vac_db",
    "qfi_vacuum_db",
];

/// Totals versus coupling ratio at fixed squeezing (figures 5a and 9a).
fn figure_totals_vs_coupling(
    figure_id: &str,
    engineering: Engineering,
    params: &FigureParams,
) -> Result<FigureData> {
    let gain = SourceSpec::gain_from_db(params.gain_db);
    let strategies = total_strategies(gain, engineering)?;
    let norm = optimize_coupling(&strategies[4], &params.cavity, DEFAULT_GM_RANGE)?.total;
    let gm_dbs = linspace(-10.0, 30.0, 81);
    let rows: Result<Vec<Vec<f64>>> = gm_dbs
        .par_iter()
        .map(|&gm_db| {
            let cav = params.cavity.with_gm_ratio(10f64.powf(gm_db / 10.0))?;
            let mut row = vec![gm_db];
            for strategy in &strategies {
                row.push(db(total_fisher_closed(strategy, &cav)?.total / norm));
            }
            Ok(row)
        })
        .collect();
    let mut columns = vec!["gm_ratio_db".to_string()];
    columns.extend(TOTALS_COLUMNS.iter().map(|s| s.to_string()));
    Ok(FigureData { figure: figure_id.to_string(), columns, rows: rows? })
}

/// Coupling-optimized totals versus squeezing (figures 5b and 9b).
fn figure_optimized_totals_vs_gain(
    figure_id: &str,
    engineering: Engineering,
    params: &FigureParams,
) -> Result<FigureData> {
    let vac_hom = StrategySpec::new(SourceSpec::vacuum(), Receiver::Homodyne, engineering)?;
    let norm = optimize_coupling(&vac_hom, &params.cavity, DEFAULT_GM_RANGE)?.total;
    let gains_db = linspace(0.0, 40.0, 41);
    let rows: Result<Vec<Vec<f64>>> = gains_db
        .par_iter()
        .map(|&gain_db| {
            let gain = SourceSpec::gain_from_db(gain_db);
            let strategies = total_strategies(gain, engineering)?;
            let mut row = vec![gain_db];
            for strategy in &strategies {
                let opt = optimize_coupling(strategy, &params.cavity, DEFAULT_GM_RANGE)?;
                row.push(db(opt.total / norm));
            }
            Ok(row)
        })
        .collect();
    let mut columns = vec!["gain_db".to_string()];
    columns.extend(TOTALS_COLUMNS.iter().map(|s| format!("{}_star", s)));
    Ok(FigureData { figure: figure_id.to_string(), columns, rows: rows? })
}

/// Fisher spectra versus detuning (figures 6 and 8). `gm_ratio` of NaN means
/// "use 2G" (the over-coupled subplot).
fn figure_spectra(
    figure_id: &str,
    engineering: Engineering,
    gm_ratio: f64,
    params: &FigureParams,
) -> Result<FigureData> {
    let gain = SourceSpec::gain_from_db(params.gain_db);
    let gm_ratio = if gm_ratio.is_nan() { 2.0 * gain } else { gm_ratio };
    let cavity = params.cavity.with_gm_ratio(gm_ratio)?;
    // Normalization: the vacuum-homodyne spectrum peak at critical coupling,
    // which is the same constant under both engineering models.
    let critical = params.cavity.with_gm_ratio(1.0)?;
    let sus0 = susceptibilities(0.0, &critical);
    let nu = 1.0 + 2.0 * critical.n_thermal();
    let norm = sus0.chi_ma2 * sus0.chi_ma2 * 2.0 / (nu * nu);

    let strategies = [
        StrategySpec::new(SourceSpec::tmsv(gain, 0.0)?, Receiver::UpperBound, engineering)?,
        StrategySpec::new(SourceSpec::vacuum(), Receiver::QfiLimit, engineering)?,
        StrategySpec::new(SourceSpec::squeezed_vacuum(gain, 0.0)?, Receiver::QfiLimit, engineering)?,
        StrategySpec::new(SourceSpec::tmsv(gain, 0.0)?, Receiver::QfiLimit, engineering)?,
        StrategySpec::new(SourceSpec::squeezed_vacuum(gain, 0.0)?, Receiver::Homodyne, engineering)?,
        StrategySpec::new(SourceSpec::vacuum(), Receiver::Homodyne, engineering)?,
        StrategySpec::new(SourceSpec::squeezed_vacuum(gain, 0.0)?, Receiver::Nulling, engineering)?,
        StrategySpec::new(SourceSpec::tmsv(gain, 0.0)?, Receiver::Nulling, engineering)?,
    ];
    let half_width = 0.5 * cavity.gamma_total() / cavity.gamma_l;
    let omegas = linspace(-8.0 * half_width, 8.0 * half_width, 201);
    let rows: Result<Vec<Vec<f64>>> = omegas
        .par_iter()
        .map(|&w_over_gl| {
            let omega = w_over_gl * cavity.gamma_l;
            let mut row = vec![w_over_gl];
            for strategy in &strategies {
                row.push(db(fisher_spectrum(strategy, &cavity, omega)?.value / norm));
            }
            Ok(row)
        })
        .collect();
    Ok(FigureData {
        figure: figure_id.to_string(),
        columns: vec![
            "omega_over_gl".into(),
            "ub_db".into(),
            "qfi_vacuum_db".into(),
            "qfi_sv_db".into(),
            "qfi_tmsv_db".into(),
            "fi_hom_sv_db".into(),
            "fi_hom_vac_db".into(),
            "fi_null_sv_db".into(),
            "fi_null_tmsv_db".into(),
        ],
        rows: rows?,
    })
}

/// Nulling versus direct counting for the entangled probe (figure 10).
fn figure_nulling_vs_direct(params: &FigureParams) -> Result<FigureData> {
    let n_b = params.n_b;
    let kappas = linspace(0.1, 1.0, 19);
    let gains_db = linspace(0.5, 12.0, 24);
    let grid: Vec<(f64, f64)> = kappas
        .iter()
        .flat_map(|&k| gains_db.iter().map(move |&gdb| (k, gdb)))
        .collect();
    let rows: Result<Vec<Vec<f64>>> = grid
        .par_iter()
        .map(|&(kappa, gain_db)| {
            let g = SourceSpec::gain_from_db(gain_db);
            let nulled = fi_from_joint_distribution(
                |nb, n_max| nulled_tmsv_distribution(g, kappa, nb, 0.0, n_max),
                n_b,
            )?
            .value;
            let direct = fi_direct_counting_tmsv(g, kappa, n_b, 0.0)?.value;
            Ok(vec![kappa, gain_db, nulled, direct, db(nulled / direct)])
        })
        .collect();
    Ok(FigureData {
        figure: "10".to_string(),
        columns: vec![
            "kappa".into(),
            "gain_db".into(),
            "fi_null_tmsv".into(),
            "fi_direct_tmsv".into(),
            "advantage_db".into(),
        ],
        rows: rows?,
    })
}

/// Branch competition of the ideal squeezed-probe total (figure 11): the
/// critical-coupling interior value versus the over-coupling limit, both in
/// units of `2 pi gamma_l (gamma_a/gamma_l)^2`.
fn figure_piecewise_branches(params: &FigureParams) -> Result<FigureData> {
    let cavity = params.cavity;
    let unit = 2.0 * std::f64::consts::PI * cavity.gamma_a * cavity.gamma_a / cavity.gamma_l;
    let critical_cavity = cavity.with_gm_ratio(1.0)?;
    let gains_db = linspace(0.0, 40.0, 81);
    let rows: Result<Vec<Vec<f64>>> = gains_db
        .par_iter()
        .map(|&gain_db| {
            let gain = SourceSpec::gain_from_db(gain_db);
            let source = SourceSpec::squeezed_vacuum(gain, 0.0)?;
            let strategy = StrategySpec::new(source, Receiver::QfiLimit, Engineering::Ideal)?;
            let critical = total_fisher_quadrature(&strategy, &critical_cavity)?.total / unit;
            let overcoupled =
                overcoupled_sv_total_ideal(&cavity, source.signal_photons()) / unit;
            let flag = if overcoupled > critical { 1.0 } else { 0.0 };
            Ok(vec![gain_db, critical, overcoupled, flag])
        })
        .collect();
    Ok(FigureData {
        figure: "11".to_string(),
        columns: vec![
            "gain_db".into(),
            "critical_total_norm".into(),
            "overcoupled_total_norm".into(),
            "optimum_is_overcoupled".into(),
        ],
        rows: rows?,
    })
}

// ---------------------------------------------------------------------------
