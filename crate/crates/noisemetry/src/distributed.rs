//! Multi-sensor correlated background noise and its interferometric
//! concentration onto a single mode.
//!
//! An array of M identical sensors sees the same Gaussian background: every
//! mode is attenuated by the common transmissivity kappa, and classical
//! noise of occupation n_B is added identically (fully correlated) to all
//! modes in both quadratures. Conjugating this M-mode channel by a
//! uniform-interference beamsplitter network — a real orthogonal symplectic
//! whose first row is 1/sqrt(M) in every slot — concentrates the correlated
//! noise: the network output sees excess noise M n_B on the bright mode and
//! plain loss on the remaining M - 1 modes. Estimating n_B with the array
//! is therefore exactly the single-sensor problem at M times the noise, and
//! the single-mode information bounds apply verbatim at occupation M n_B.
//!
//! All statements here are about first and second moments, so the identity
//! can be checked to machine precision on arbitrary Gaussian inputs; the
//! checker below does exactly that.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gaussian::{
    apply_channel, apply_symplectic, ChannelParams, GaussianState, SymplecticOp,
};
use crate::qfi::{ub_combined, FisherResult};

/// An M-sensor array exposed to fully correlated background noise; each
/// sensor individually sees the phase-covariant channel `ch`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelatedChannelSpec {
    /// Number of sensor modes.
    pub m: usize,
    /// Per-mode transmissivity and noise occupation.
    pub ch: ChannelParams,
}

impl CorrelatedChannelSpec {
    /// `m = 1` degenerates to the ordinary single-mode channel; the
    /// concentration identity is meaningful for `m >= 2`.
    pub fn new(m: usize, ch: ChannelParams) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("need at least one sensor mode"));
        }
        Ok(CorrelatedChannelSpec { m, ch })
    }
}

/// Applies the correlated-noise channel to an M-mode state:
///
/// ```text
/// V -> kappa V + ((1 - kappa)/2) I + n_B (E (x) I_2),    mean -> sqrt(kappa) mean,
/// ```
///
/// where E is the all-ones M x M matrix — the same classical noise quadrature
/// pattern is added to every mode. Per-mode marginals coincide with the
/// single-mode channel's.
pub fn apply_correlated_channel(
    state: &GaussianState,
    spec: &CorrelatedChannelSpec,
) -> Result<GaussianState> {
    let m = spec.m;
    if state.n_modes() != m {
        return Err(Error::domain(format!(
            "state has {} modes but the channel spec has {m}",
            state.n_modes()
        )));
    }
    let (kappa, n_b) = (spec.ch.kappa, spec.ch.n_b);
    let dim = 2 * m;
    let mut cov = &state.cov * kappa;
    let vac = 0.5 * (1.0 - kappa);
    for d in 0..dim {
        cov[(d, d)] += vac;
    }
    for i in 0..m {
        for j in 0..m {
            cov[(2 * i, 2 * j)] += n_b;
            cov[(2 * i + 1, 2 * j + 1)] += n_b;
        }
    }
    Ok(GaussianState {
        mean: &state.mean * kappa.sqrt(),
        cov,
    })
}

/// The M x M uniform-interference network: a symmetric Householder
/// reflection with first row (and column) 1/sqrt(M) in every slot. It is
/// orthogonal, and its mode-wise action on quadratures is symplectic.
pub fn reduction_network(m: usize) -> Result<DMatrix<f64>> {
    if m == 0 {
        return Err(Error::domain("need at least one sensor mode"));
    }
    let mut h = DMatrix::<f64>::identity(m, m);
    if m == 1 {
        return Ok(h);
    }
    // Householder reflection swapping e_1 with the uniform unit vector.
    let u = 1.0 / (m as f64).sqrt();
    let mut w = vec![-u; m];
    w[0] = 1.0 - u;
    let norm2: f64 = w.iter().map(|x| x * x).sum();
    for i in 0..m {
        for j in 0..m {
            h[(i, j)] -= 2.0 * w[i] * w[j] / norm2;
        }
    }
    Ok(h)
}

/// Expands an M x M mode-mixing orthogonal to the 2M x 2M symplectic acting
/// identically on both quadratures.
pub fn mode_symplectic(h: &DMatrix<f64>) -> DMatrix<f64> {
    let m = h.nrows();
    let mut s = DMatrix::<f64>::zeros(2 * m, 2 * m);
    for i in 0..m {
        for j in 0..m {
            s[(2 * i, 2 * j)] = h[(i, j)];
            s[(2 * i + 1, 2 * j + 1)] = h[(i, j)];
        }
    }
    s
}

fn conjugate(state: &GaussianState, s: &DMatrix<f64>) -> GaussianState {
    GaussianState {
        mean: s * &state.mean,
        cov: s * &state.cov * s.transpose(),
    }
}

/// Outcome of checking the concentration identity on a batch of states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionReport {
    pub m: usize,
    pub kappa: f64,
    pub n_b: f64,
    pub states_checked: usize,
    /// Largest absolute covariance-entry deviation between the conjugated
    /// correlated channel and the concentrated form (bright mode at noise
    /// M n_B, plain loss elsewhere).
    pub max_cov_deviation: f64,
    /// Largest absolute mean-vector deviation, same comparison.
    pub max_mean_deviation: f64,
    /// Largest deviation of the conjugated channel's idle modes from being
    /// left untouched. Zero exactly when kappa = 1; at kappa < 1 the idle
    /// modes are attenuated, and this records by how much.
    pub max_idle_identity_deviation: f64,
    /// Network quality: largest entry of |B B^T - I| and |S Omega S^T - Omega|.
    pub max_orthogonality_deviation: f64,
    pub max_symplecticity_deviation: f64,
    pub tolerance: f64,
    /// True when the concentrated-form deviations and the network checks all
    /// sit below `tolerance` (the idle-identity deviation is diagnostic
    /// only).
    pub pass: bool,
}

/// Checks, state by state, that conjugating the correlated M-mode channel by
/// the uniform network equals a single-mode channel at noise M n_B on the
/// bright mode composed with plain loss on the other modes:
///
/// ```text
/// B N^(M) B^{-1} = N_{kappa, M n_B} (x) L_kappa^{(x)(M-1)}.
/// ```
///
/// At kappa = 1 the loss factors are identities and the right-hand side is
/// the bright-mode channel alone; `max_idle_identity_deviation` reports how
/// far the idle modes are from untouched in the general lossy case.
pub fn verify_reduction(
    spec: &CorrelatedChannelSpec,
    test_states: &[GaussianState],
    tolerance: f64,
) -> Result<ReductionReport> {
    let m = spec.m;
    if m < 2 {
        return Err(Error::domain(
            "the concentration identity needs at least two sensor modes",
        ));
    }
    let h = reduction_network(m)?;
    let s = mode_symplectic(&h);
    let s_inv = s.transpose();

    let max_orth = (&h * h.transpose() - DMatrix::<f64>::identity(m, m)).abs().max();
    let omega = GaussianState::symplectic_form(m);
    let max_symp = (&s * &omega * s.transpose() - &omega).abs().max();

    let bright = ChannelParams::new(spec.ch.kappa, m as f64 * spec.ch.n_b)?;
    let idle = ChannelParams::new(spec.ch.kappa, 0.0)?;

    let mut max_cov = 0.0f64;
    let mut max_mean = 0.0f64;
    let mut max_idle = 0.0f64;
    for state in test_states {
        if state.n_modes() != m {
            return Err(Error::domain(format!(
                "test state has {} modes, spec has {m}",
                state.n_modes()
            )));
        }
        // Left side: rotate into the network frame, pass through the
        // correlated channel, rotate back ... read right-to-left as
        // B after N^(M) after B^{-1}.
        let pre = conjugate(state, &s_inv);
        let mid = apply_correlated_channel(&pre, spec)?;
        let lhs = conjugate(&mid, &s);

        // Right side: bright-mode channel plus per-mode loss.
        let mut rhs = apply_channel(state, &bright, 0)?;
        for mode in 1..m {
            rhs = apply_channel(&rhs, &idle, mode)?;
        }
        max_cov = max_cov.max((&lhs.cov - &rhs.cov).abs().max());
        max_mean = max_mean.max((&lhs.mean - &rhs.mean).abs().max());

        // Idle-mode identity diagnostic: compare the lhs against leaving
        // modes 2..M alone entirely.
        let bright_only = apply_channel(state, &bright, 0)?;
        let cov_dev = (&lhs.cov - &bright_only.cov).abs().max();
        let mean_dev = (&lhs.mean - &bright_only.mean).abs().max();
        max_idle = max_idle.max(cov_dev.max(mean_dev));
    }

    Ok(ReductionReport {
        m,
        kappa: spec.ch.kappa,
        n_b: spec.ch.n_b,
        states_checked: test_states.len(),
        max_cov_deviation: max_cov,
        max_mean_deviation: max_mean,
        max_idle_identity_deviation: max_idle,
        max_orthogonality_deviation: max_orth,
        max_symplecticity_deviation: max_symp,
        tolerance,
        pass: max_cov <= tolerance
            && max_mean <= tolerance
            && max_orth <= tolerance
            && max_symp <= tolerance,
    })
}

/// Seeded batch of M-mode Gaussian states with random single-mode squeezing,
/// pairwise mixing, cross-mode squeezing, and displacements — generic enough
/// to exercise every covariance entry.
pub fn random_squeezed_states(m: usize, count: usize, seed: u64) -> Result<Vec<GaussianState>> {
    if m == 0 {
        return Err(Error::domain("need at least one mode"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = Vec::with_capacity(count);
    for _ in 0..count {
        let mut state = GaussianState::vacuum(m);
        for mode in 0..m {
            let r: f64 = rng.random_range(-1.0..1.0);
            state = apply_symplectic(&state, &SymplecticOp::Squeeze { r, mode })?;
        }
        if m >= 2 {
            for i in 0..m - 1 {
                let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
                state = apply_symplectic(
                    &state,
                    &SymplecticOp::BeamSplitter { theta, modes: (i, i + 1) },
                )?;
            }
            let r: f64 = rng.random_range(-0.6..0.6);
            state = apply_symplectic(&state, &SymplecticOp::TwoModeSqueeze { r, modes: (0, m - 1) })?;
        }
        for k in 0..2 * m {
            state.mean[k] = rng.random_range(-2.0..2.0);
        }
        states.push(state);
    }
    Ok(states)
}

/// Information bound inherited by the concentrated problem: the
/// source-agnostic upper bound of the single-mode channel at occupation
/// `M n_B` also bounds any estimate of `n_B` from the sensor array at the
/// stated per-mode signal budget.
pub fn collective_noise_bound(n_s: f64, spec: &CorrelatedChannelSpec) -> Result<FisherResult> {
    ub_combined(n_s, spec.ch.kappa, spec.m as f64 * spec.ch.n_b)
}
