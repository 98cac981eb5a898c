//! Quantum Fisher information for excess-noise estimation: closed forms,
//! universal upper bounds, an overlap-based bound oracle, and a generic
//! Gaussian-state QFI solver.
//!
//! All Fisher informations refer to the single parameter `n_b`, the excess
//! noise photons added by the channel, and carry units of `1 / n_b^2`.

use std::fmt;

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};
use crate::gaussian::{apply_channel, make_source, ChannelParams, SourceSpec};

/// Parameter echo attached to every Fisher-information result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherParams {
    pub kappa: f64,
    pub n_b: f64,
    /// Mean signal photons of the probe (zero for vacuum probes).
    pub n_s: f64,
    /// Source thermal occupation (zero unless stated otherwise).
    pub n_t: f64,
}

/// How a Fisher-information value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FisherMethod {
    /// Analytic expression.
    ClosedForm,
    /// Linear solve on the Gaussian covariance representation; the flag
    /// records whether the operator was singular and a pseudo-inverse was
    /// used (the value is then a least-squares surrogate, not a QFI).
    GaussianSolve { pseudo_inverse: bool },
    /// Fidelity curvature by finite differences (Fock oracle).
    FidelityFiniteDifference,
    /// Classical information of a photon-count distribution.
    CountDistribution,
    /// Frequency integral of a spectral density.
    Quadrature,
}

impl fmt::Display for FisherMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FisherMethod::ClosedForm => write!(f, "closed-form"),
            FisherMethod::GaussianSolve { pseudo_inverse: false } => write!(f, "gaussian-solve"),
            FisherMethod::GaussianSolve { pseudo_inverse: true } => {
                write!(f, "gaussian-solve-pseudo-inverse")
            }
            FisherMethod::FidelityFiniteDifference => write!(f, "fidelity-finite-difference"),
            FisherMethod::CountDistribution => write!(f, "count-distribution"),
            FisherMethod::Quadrature => write!(f, "quadrature"),
        }
    }
}

/// A Fisher-information value plus provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherResult {
    pub value: f64,
    pub method: FisherMethod,
    pub params: FisherParams,
}

impl FisherResult {
    fn closed(value: f64, kappa: f64, n_b: f64, n_s: f64) -> Self {
        FisherResult {
            value,
            method: FisherMethod::ClosedForm,
            params: FisherParams { kappa, n_b, n_s, n_t: 0.0 },
        }
    }
}

/// Rejects parameter combinations where the closed forms blow up or the
/// channel is unphysical. `n_b = 0` makes every QFI diverge (the output
/// states become pure in the vacuum-probe case), so it is a domain error.
fn check_channel(kappa: f64, n_b: f64) -> Result<()> {
    ChannelParams::new(kappa, n_b)?;
    if n_b == 0.0 {
        return Err(Error::domain(
            "n_b = 0: the Fisher information for excess noise diverges at the noiseless point",
        ));
    }
    Ok(())
}

/// Rejects points too close to `n_b = kappa - 1`, where the thermal-probe
/// branch and the two-mode closed form are singular.
fn check_amp_margin(kappa: f64, n_b: f64) -> Result<()> {
    if n_b + 1.0 - kappa < 1e-12 {
        return Err(Error::domain(format!(
            "n_b + 1 - kappa = {:.3e} is too close to the quantum-limited-amplifier singularity",
            n_b + 1.0 - kappa
        )));
    }
    Ok(())
}

/// QFI of a vacuum probe: `1 / (n_b (n_b + 1))`, independent of `kappa`.
pub fn qfi_vacuum_limit(n_b: f64) -> Result<FisherResult> {
    check_channel(1.0, n_b)?;
    Ok(FisherResult::closed(1.0 / (n_b * (n_b + 1.0)), f64::NAN, n_b, 0.0))
}

/// Upper bound on the QFI of any probe with mean signal photons `n_s`,
/// obtained from a unitary extension of the channel:
///
/// ```text
/// J <= 1/(n_b (n_b+1))
///      + kappa n_s (2 n_b - kappa + 1) / (n_b (n_b+1)^2 (n_b - kappa + 1)).
/// ```
pub fn ub_ue(n_s: f64, kappa: f64, n_b: f64) -> Result<FisherResult> {
    check_channel(kappa, n_b)?;
    check_amp_margin(kappa, n_b)?;
    if !n_s.is_finite() || n_s < 0.0 {
        return Err(Error::domain(format!("signal photons n_s = {n_s} must be finite and >= 0")));
    }
    let value = 1.0 / (n_b * (n_b + 1.0))
        + kappa * n_s * (2.0 * n_b - kappa + 1.0)
            / (n_b * (n_b + 1.0) * (n_b + 1.0) * (n_b - kappa + 1.0));
    Ok(FisherResult::closed(value, kappa, n_b, n_s))
}

/// Upper bound from the infinite-temperature (thermal-probe) limit:
/// `1 / (n_b (n_b + 1 - kappa))`. Independent of `n_s`.
pub fn ub_tp(kappa: f64, n_b: f64) -> Result<FisherResult> {
    check_channel(kappa, n_b)?;
    check_amp_margin(kappa, n_b)?;
    Ok(FisherResult::closed(1.0 / (n_b * (n_b + 1.0 - kappa)), kappa, n_b, f64::INFINITY))
}

/// The tighter of [`ub_ue`] and [`ub_tp`].
pub fn ub_combined(n_s: f64, kappa: f64, n_b: f64) -> Result<FisherResult> {
    let ue = ub_ue(n_s, kappa, n_b)?;
    let tp = ub_tp(kappa, n_b)?;
    let value = ue.value.min(tp.value);
    Ok(FisherResult::closed(value, kappa, n_b, n_s))
}

/// Exact QFI of a squeezed-vacuum probe with mean signal photons `n_s`.
pub fn qfi_sv(n_s: f64, kappa: f64, n_b: f64) -> Result<FisherResult> {
    check_channel(kappa, n_b)?;
    if !n_s.is_finite() || n_s < 0.0 {
        return Err(Error::domain(format!("signal photons n_s = {n_s} must be finite and >= 0")));
    }
    let num = (n_b + 1.0) * (n_b + 1.0)
        + (n_b + 2.0 * kappa * n_s) * (n_b + 2.0 * kappa * n_s)
        + 2.0 * kappa * n_s * (kappa + 1.0);
    let den = (kappa * n_s * (2.0 * n_b - kappa + 1.0) + n_b * (n_b + 1.0))
        * (2.0 * n_b * (n_b + 2.0 * kappa * n_s + 1.0) - 2.0 * (kappa - 1.0) * kappa * n_s + 1.0);
    Ok(FisherResult::closed(num / den, kappa, n_b, n_s))
}

/// Large-squeezing limit of [`qfi_sv`]: `2 / (1 - kappa + 2 n_b)^2`.
pub fn qfi_sv_asymptote(kappa: f64, n_b: f64) -> Result<f64> {
    check_channel(kappa, n_b)?;
    let d = 1.0 - kappa + 2.0 * n_b;
    if d.abs() < 1e-12 {
        return Err(Error::domain("squeezed-probe asymptote singular at 1 - kappa + 2 n_b = 0"));
    }
    Ok(2.0 / (d * d))
}

/// Exact QFI of a two-mode squeezed probe (signal through the channel, idler
/// retained) with mean signal photons `n_s`, measured jointly.
pub fn qfi_tmsv(n_s: f64, kappa: f64, n_b: f64) -> Result<FisherResult> {
    check_channel(kappa, n_b)?;
    check_amp_margin(kappa, n_b)?;
    if !n_s.is_finite() || n_s < 0.0 {
        return Err(Error::domain(format!("signal photons n_s = {n_s} must be finite and >= 0")));
    }
    let a = 2.0 * n_b - kappa + 1.0;
    let num = a * n_s + n_b - kappa + 1.0;
    let den = n_b * (n_b - kappa + 1.0) * (a * n_s + n_b + 1.0);
    Ok(FisherResult::closed(num / den, kappa, n_b, n_s))
}

/// Advantage of the two-mode probe over the vacuum probe,
/// `qfi_tmsv / qfi_vacuum_limit`, in closed form (always `>= 1`).
pub fn tmsv_vl_ratio(n_s: f64, kappa: f64, n_b: f64) -> Result<f64> {
    check_channel(kappa, n_b)?;
    check_amp_margin(kappa, n_b)?;
    let a = 2.0 * n_b + 1.0 - kappa;
    Ok(1.0 + kappa * n_s * a / ((n_b + 1.0 - kappa) * (a * n_s + n_b + 1.0)))
}

// ---------------------------------------------------------------------------
// Loss-parameterized closed forms
// ---------------------------------------------------------------------------
//
// A cavity profile pushes `kappa` within machine epsilon of one at large
// detuning, where differences like `n_b + 1 - kappa` computed from `kappa`
// itself lose every significant digit. These variants take the loss fraction
// `loss = 1 - kappa` directly, so the combinations `n_b + loss` and
// `2 n_b + loss` stay exact however small both become. They cover lossy
// channels only (`kappa <= 1`); the far tails they serve decay like 1/omega^2
// and still matter at tight quadrature tolerances.

/// Validates a loss-parameterized channel point: `loss` in [0, 1], `n_b > 0`.
fn check_loss_channel(loss: f64, n_b: f64) -> Result<()> {
    if !loss.is_finite() || !(0.0..=1.0).contains(&loss) {
        return Err(Error::domain(format!("loss fraction {loss} must lie in [0, 1]")));
    }
    if !n_b.is_finite() || n_b <= 0.0 {
        return Err(Error::domain(format!("n_b = {n_b} must be positive and finite")));
    }
    Ok(())
}

/// [`ub_ue`] with the loss fraction `loss = 1 - kappa` supplied directly.
pub fn ub_ue_from_loss(n_s: f64, loss: f64, n_b: f64) -> Result<FisherResult> {
    check_loss_channel(loss, n_b)?;
    let kappa = 1.0 - loss;
    let value = 1.0 / (n_b * (n_b + 1.0))
        + kappa * n_s * (2.0 * n_b + loss)
            / (n_b * (n_b + 1.0) * (n_b + 1.0) * (n_b + loss));
    Ok(FisherResult::closed(value, kappa, n_b, n_s))
}

/// [`ub_tp`] with the loss fraction supplied directly: `1 / (n_b (n_b + loss))`.
pub fn ub_tp_from_loss(loss: f64, n_b: f64) -> Result<FisherResult> {
    check_loss_channel(loss, n_b)?;
    Ok(FisherResult::closed(1.0 / (n_b * (n_b + loss)), 1.0 - loss, n_b, f64::INFINITY))
}

/// [`ub_combined`] with the loss fraction supplied directly.
pub fn ub_combined_from_loss(n_s: f64, loss: f64, n_b: f64) -> Result<FisherResult> {
    let ue = ub_ue_from_loss(n_s, loss, n_b)?;
    let tp = ub_tp_from_loss(loss, n_b)?;
    Ok(FisherResult::closed(ue.value.min(tp.value), 1.0 - loss, n_b, n_s))
}

/// [`qfi_sv`] with the loss fraction supplied directly.
pub fn qfi_sv_from_loss(n_s: f64, loss: f64, n_b: f64) -> Result<FisherResult> {
    check_loss_channel(loss, n_b)?;
    let kappa = 1.0 - loss;
    let num = (n_b + 1.0) * (n_b + 1.0)
        + (n_b + 2.0 * kappa * n_s) * (n_b + 2.0 * kappa * n_s)
        + 2.0 * kappa * n_s * (kappa + 1.0);
    let den = (kappa * n_s * (2.0 * n_b + loss) + n_b * (n_b + 1.0))
        * (2.0 * n_b * (n_b + 2.0 * kappa * n_s + 1.0) + 2.0 * kappa * n_s * loss + 1.0);
    Ok(FisherResult::closed(num / den, kappa, n_b, n_s))
}

/// [`qfi_tmsv`] with the loss fraction supplied directly.
pub fn qfi_tmsv_from_loss(n_s: f64, loss: f64, n_b: f64) -> Result<FisherResult> {
    check_loss_channel(loss, n_b)?;
    let a = 2.0 * n_b + loss;
    let num = a * n_s + n_b + loss;
    let den = n_b * (n_b + loss) * (a * n_s + n_b + 1.0);
    Ok(FisherResult::closed(num / den, 1.0 - loss, n_b, n_s))
}

/// QFI of a squeezed probe built on a thermal seed (occupation `n_t`), in
/// closed form. Covers the contaminated-source case that [`qfi_sv_from_loss`]
/// excludes, without the conditioning trouble the generic Gaussian solver
/// runs into when the output state is strongly squeezed and nearly pure.
///
/// For a single-mode Gaussian state with diagonal second moments
/// `Sigma = diag(s_q, s_p)` (vacuum = identity) and `dSigma/dn_b = 2 I`,
///
/// ```text
/// QFI = 2 (s_q^2 + s_p^2) / (d (d + 1)) + 2 (s_q + s_p)^2 / (d (d - 1) (d + 1)),
/// ```
///
/// with `d = s_q s_p`. The determinant excess `d - 1` is assembled as a sum
/// of non-negative products of the small parameters, so it never suffers the
/// `1 - kappa` cancellation (writing `sigma = 2 n_t + 1`, `a = loss + 2 n_b`,
/// and using `kappa sigma + a - 1 = 2 kappa n_t + 2 n_b` exactly):
///
/// ```text
/// d - 1 = 2 (kappa n_t + n_b) (kappa sigma + a + 1)
///       + kappa sigma a (g - 1)^2 / g.
/// ```
pub fn qfi_sv_thermal_from_loss(gain: f64, loss: f64, n_b: f64, n_t: f64) -> Result<FisherResult> {
    check_loss_channel(loss, n_b)?;
    if !(gain.is_finite() && gain >= 1.0) {
        return Err(Error::domain(format!("gain {gain} must be >= 1")));
    }
    if !(n_t.is_finite() && n_t >= 0.0) {
        return Err(Error::domain(format!("seed occupation n_t = {n_t} must be non-negative")));
    }
    let kappa = 1.0 - loss;
    let seed = 2.0 * n_t + 1.0;
    let add = loss + 2.0 * n_b;
    let s_q = kappa * seed * gain + add;
    let s_p = kappa * seed / gain + add;
    let d_m1 = 2.0 * (kappa * n_t + n_b) * (kappa * seed + add + 1.0)
        + kappa * seed * add * (gain - 1.0) * (gain - 1.0) / gain;
    let d = d_m1 + 1.0;
    let value = 2.0 * (s_q * s_q + s_p * s_p) / (d * (d + 1.0))
        + 2.0 * (s_q + s_p) * (s_q + s_p) / (d * d_m1 * (d + 1.0));
    if !value.is_finite() {
        return Err(Error::domain(format!(
            "squeezed-thermal information is not finite at gain {gain}, loss {loss}, \
             n_b {n_b}, n_t {n_t}"
        )));
    }
    let n_s = SourceSpec::squeezed_vacuum(gain, n_t)?.signal_photons();
    Ok(FisherResult {
        value,
        method: FisherMethod::ClosedForm,
        params: FisherParams { kappa, n_b, n_s, n_t },
    })
}

/// QFI of a two-mode squeezed probe built on thermal seeds (occupation `n_t`
/// each), in closed form: signal mode through the channel, idler retained
/// losslessly. Covers the contaminated-source case that
/// [`qfi_tmsv_from_loss`] excludes, and unlike [`qfi_tmsv_gaussian`] it stays
/// accurate when strong squeezing makes the joint output nearly pure.
///
/// Writing `c = (g + 1/g)/2`, `sigma = 2 n_t + 1`, `a = loss + 2 n_b`, the
/// annihilation-basis output moments are `alpha = kappa sigma c + a` (signal),
/// `beta = sigma c` (idler), and cross term `gamma^2 = kappa sigma^2 (c^2 - 1)`.
/// Solving the Lyapunov equation for this family symbolically gives
///
/// ```text
/// QFI = 4 [(beta^2 - 1)(alpha beta + 1) - gamma^2 (beta^2 + 1)]
///       / [(P + 2) (P - delta) (P + delta)],
/// P = alpha beta - gamma^2 - 1,    delta = alpha - beta,
/// ```
///
/// and every factor is assembled here as a sum of non-negative products of
/// the small parameters, so no `1 - kappa`-style cancellation survives
/// (`e = sigma c - 1`, itself non-negative):
///
/// ```text
/// numerator / 4 = sigma^2 (c^2 - 1) (a beta + loss)
///               + 4 n_t (n_t + 1) (a beta + 1 + kappa beta^2)
/// P + 2         = 4 kappa n_t (n_t + 1) + loss e + 2 n_b beta + 2
/// P - delta     = 4 kappa n_t (n_t + 1) + 2 e (loss + n_b)
/// P + delta     = 4 kappa n_t (n_t + 1) + 2 n_b (beta + 1)
/// ```
pub fn qfi_tmsv_thermal_from_loss(gain: f64, loss: f64, n_b: f64, n_t: f64) -> Result<FisherResult> {
    check_loss_channel(loss, n_b)?;
    if !(gain.is_finite() && gain >= 1.0) {
        return Err(Error::domain(format!("gain {gain} must be >= 1")));
    }
    if !(n_t.is_finite() && n_t >= 0.0) {
        return Err(Error::domain(format!("seed occupation n_t = {n_t} must be non-negative")));
    }
    let kappa = 1.0 - loss;
    let seed = 2.0 * n_t + 1.0;
    let add = loss + 2.0 * n_b;
    // c - 1 = (g - 1)^2 / (2 g) keeps c^2 - 1 = (c - 1)(c + 1) exact near g = 1.
    let c_m1 = (gain - 1.0) * (gain - 1.0) / (2.0 * gain);
    let c = 1.0 + c_m1;
    let s2 = c_m1 * (c + 1.0);
    let beta = seed * c;
    let e = c_m1 + 2.0 * n_t * c;
    let seed_excess = 4.0 * kappa * n_t * (n_t + 1.0);
    let num4 = seed * seed * s2 * (add * beta + loss)
        + 4.0 * n_t * (n_t + 1.0) * (add * beta + 1.0 + kappa * beta * beta);
    let q = seed_excess + loss * e + 2.0 * n_b * beta + 2.0;
    let p_minus = seed_excess + 2.0 * e * (loss + n_b);
    let p_plus = seed_excess + 2.0 * n_b * (beta + 1.0);
    // p_minus vanishes only for clean unsqueezed seeds (g = 1, n_t = 0), where
    // the probe degenerates to vacuum and the general ratio is 0/0; take the
    // limit explicitly.
    let value = if p_minus == 0.0 {
        1.0 / (n_b * (n_b + 1.0))
    } else {
        4.0 * num4 / (q * p_minus * p_plus)
    };
    if !value.is_finite() {
        return Err(Error::domain(format!(
            "two-mode squeezed-thermal information is not finite at gain {gain}, loss {loss}, \
             n_b {n_b}, n_t {n_t}"
        )));
    }
    let n_s = SourceSpec::tmsv(gain, n_t)?.signal_photons();
    Ok(FisherResult {
        value,
        method: FisherMethod::ClosedForm,
        params: FisherParams { kappa, n_b, n_s, n_t },
    })
}

// ---------------------------------------------------------------------------
// Overlap-based bound oracle
// ---------------------------------------------------------------------------

/// Per-mode and per-photon factors of the output-state overlap bound between
/// channels with excess noise `n_b` and `n_b'` at equal `kappa`.
///
/// Both factors equal one (with vanishing first derivative) at `n_b' = n_b`,
/// so the bound information is `-4 (d^2 zeta1 + n_s d^2 zeta2)` per signal
/// mode, with derivatives in `n_b'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapParams {
    /// Probe-independent factor (one power per signal mode).
    pub zeta1: f64,
    /// Photon-weighted factor (one power per signal photon).
    pub zeta2: f64,
}

/// Evaluates the overlap factors.
pub fn overlap_params(kappa: f64, n_b: f64, n_b_prime: f64) -> Result<OverlapParams> {
    ChannelParams::new(kappa, n_b)?;
    ChannelParams::new(kappa, n_b_prime)?;
    let xi = (n_b + 1.0) * (n_b_prime + 1.0);
    let s = xi.sqrt() - (n_b * n_b_prime).sqrt();
    let zeta1 = 1.0 / s;
    let nu = n_b + 1.0 - kappa;
    let nu_p = n_b_prime + 1.0 - kappa;
    if nu < 0.0 || nu_p < 0.0 {
        return Err(Error::domain("overlap factors need n_b >= kappa - 1 on both arguments"));
    }
    let zeta2 = ((nu * nu_p).sqrt() * s + kappa) / (xi.sqrt() * s);
    Ok(OverlapParams { zeta1, zeta2 })
}

/// Overlap bound for a probe with signal photon-number distribution
/// `photon_dist` (index = total signal photons) spread over `modes` signal
/// modes: `sum_n p_n zeta1^modes zeta2^n`.
pub fn overlap_bound(
    kappa: f64,
    n_b: f64,
    n_b_prime: f64,
    photon_dist: &[f64],
    modes: usize,
) -> Result<f64> {
    if photon_dist.is_empty() {
        return Err(Error::domain("photon distribution must be non-empty"));
    }
    let total: f64 = photon_dist.iter().sum();
    if photon_dist.iter().any(|&p| !(0.0..=1.0 + 1e-9).contains(&p)) || (total - 1.0).abs() > 1e-6 {
        return Err(Error::domain(format!(
            "photon distribution must be a probability vector (sum = {total})"
        )));
    }
    let z = overlap_params(kappa, n_b, n_b_prime)?;
    let z1m = z.zeta1.powi(modes as i32);
    let mut acc = 0.0;
    let mut z2n = 1.0;
    for &p in photon_dist {
        acc += p * z1m * z2n;
        z2n *= z.zeta2;
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Gaussian-state QFI solver
// ---------------------------------------------------------------------------

/// `b - r x`, with every product split exactly through a fused multiply-add
/// and the terms summed with Neumaier compensation. The residual comes out
/// at roughly doubled working precision, which is what lets iterative
/// refinement converge on ill-conditioned solves.
fn compensated_residual(r: &DMatrix<f64>, x: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = b.len();
    let mut out = DVector::zeros(n);
    for i in 0..n {
        let mut sum = b[i];
        let mut comp = 0.0;
        for j in 0..n {
            let p = -r[(i, j)] * x[j];
            let err = (-r[(i, j)]).mul_add(x[j], -p);
            for term in [p, err] {
                let t = sum + term;
                comp += if sum.abs() >= term.abs() {
                    (sum - t) + term
                } else {
                    (term - t) + sum
                };
                sum = t;
            }
        }
        out[i] = sum + comp;
    }
    out
}

/// Converts a quadrature covariance (ordering `q1, p1, ...`, vacuum `I/2`)
/// into the annihilation-basis second-moment matrix over `(a1, a1^dag, ...)`.
///
/// Restricted to covariances with no `q`-`p` cross correlations (all states
/// produced in this crate), which keeps the result real.
pub fn quad_to_annihilation(v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = v.nrows();
    if n % 2 != 0 || v.ncols() != n {
        return Err(Error::domain("covariance must be square and even-dimensional"));
    }
    let modes = n / 2;
    for i in 0..modes {
        for j in 0..modes {
            let qp = v[(2 * i, 2 * j + 1)];
            let pq = v[(2 * i + 1, 2 * j)];
            if qp.abs() > 1e-10 || pq.abs() > 1e-10 {
                return Err(Error::domain(
                    "q-p cross correlations are outside the supported (real) representation",
                ));
            }
        }
    }
    let mut sigma = DMatrix::zeros(n, n);
    for i in 0..modes {
        for j in 0..modes {
            let q = v[(2 * i, 2 * j)];
            let p = v[(2 * i + 1, 2 * j + 1)];
            let d = 0.5 * (q - p);
            let s = 0.5 * (q + p);
            sigma[(2 * i, 2 * j)] = d;
            sigma[(2 * i + 1, 2 * j + 1)] = d;
            sigma[(2 * i, 2 * j + 1)] = s;
            sigma[(2 * i + 1, 2 * j)] = s;
        }
    }
    Ok(sigma)
}

/// QFI of a zero-mean Gaussian family from its annihilation-basis second
/// moments `sigma` and their parameter derivative `dsigma`:
///
/// ```text
/// J = (1/2) vec(dsigma)^T (sigma (x) sigma + Omega (x) Omega / 4)^{-1} vec(dsigma).
/// ```
///
/// A singular operator (pure states in the family) triggers a pseudo-inverse
/// fallback, reported through the method tag; the value is then only a
/// least-squares surrogate.
pub fn qfi_gaussian(sigma: &DMatrix<f64>, dsigma: &DMatrix<f64>) -> Result<FisherResult> {
    let n = sigma.nrows();
    if n % 2 != 0 || sigma.ncols() != n || dsigma.nrows() != n || dsigma.ncols() != n {
        return Err(Error::domain("sigma and dsigma must be square, even-dimensional, same size"));
    }
    let modes = n / 2;
    let mut omega = DMatrix::zeros(n, n);
    for m in 0..modes {
        omega[(2 * m, 2 * m + 1)] = 1.0;
        omega[(2 * m + 1, 2 * m)] = -1.0;
    }
    let r = sigma.kronecker(sigma) + omega.kronecker(&omega) * 0.25;
    let b = DVector::from_column_slice(dsigma.as_slice());
    let mut pseudo_inverse = false;
    let lu = r.clone().lu();
    let refined = lu.solve(&b).map(|mut x| {
        // Iterative refinement with compensated residuals. Strong squeezing
        // makes the solve operator ill-conditioned (condition number up to
        // ~1e13) while staying numerically nonsingular; plain LU then loses
        // most of the solution, but each correction from an extra-precision
        // residual recovers it.
        let mut previous = f64::INFINITY;
        for _ in 0..8 {
            let res = compensated_residual(&r, &x, &b);
            let size = res.amax();
            if !size.is_finite() || size >= 0.5 * previous {
                break;
            }
            previous = size;
            match lu.solve(&res) {
                Some(dx) => x += dx,
                None => break,
            }
        }
        x
    });
    // A solution rounded to f64 cannot leave a residual below roughly
    // eps * |R| * |x|; accept anything within a safety factor of that floor
    // (or trivially small against the right-hand side).
    let acceptable = |x: &DVector<f64>| {
        let res = compensated_residual(&r, x, &b).amax();
        let floor = f64::EPSILON * (n as f64) * r.amax() * x.amax().max(b.amax());
        res.is_finite() && (res <= 1e-8 * b.amax().max(1e-300) || res <= 100.0 * floor)
    };
    let x = match refined {
        Some(x) if acceptable(&x) => x,
        _ => {
            pseudo_inverse = true;
            let svd = SVD::new(r.clone(), true, true);
            let cutoff = 1e-12 * svd.singular_values.max();
            svd.solve(&b, cutoff)
                .map_err(|e| Error::convergence(format!("pseudo-inverse solve failed: {e}")))?
        }
    };
    let value = 0.5 * b.dot(&x);
    Ok(FisherResult {
        value,
        method: FisherMethod::GaussianSolve { pseudo_inverse },
        params: FisherParams { kappa: f64::NAN, n_b: f64::NAN, n_s: f64::NAN, n_t: f64::NAN },
    })
}

/// Annihilation-basis second moments of the channel output for a
/// squeezed-vacuum probe (2x2).
pub fn output_sigma_sv(gain: f64, kappa: f64, n_b: f64, n_t: f64) -> Result<DMatrix<f64>> {
    let ch = ChannelParams::new(kappa, n_b)?;
    let src = make_source(&SourceSpec::squeezed_vacuum(gain, n_t)?);
    let out = apply_channel(&src, &ch, 0)?;
    quad_to_annihilation(&out.cov)
}

/// Annihilation-basis second moments of the channel output for a two-mode
/// squeezed probe, signal mode first (4x4).
pub fn output_sigma_tmsv(gain: f64, kappa: f64, n_b: f64, n_t: f64) -> Result<DMatrix<f64>> {
    let ch = ChannelParams::new(kappa, n_b)?;
    let src = make_source(&SourceSpec::tmsv(gain, n_t)?);
    let out = apply_channel(&src, &ch, 0)?;
    quad_to_annihilation(&out.cov)
}

/// The derivative of the output second moments in `n_b` is the same constant
/// matrix for every probe: `X = [[0,1],[1,0]]` on the probed mode, zero on
/// retained modes.
fn dsigma_probed(modes: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(2 * modes, 2 * modes);
    d[(0, 1)] = 1.0;
    d[(1, 0)] = 1.0;
    d
}

/// QFI of the squeezed-vacuum probe via the Gaussian solver (valid for
/// thermal-contaminated sources too, unlike the closed form).
pub fn qfi_sv_gaussian(gain: f64, kappa: f64, n_b: f64, n_t: f64) -> Result<FisherResult> {
    check_channel(kappa, n_b)?;
    let sigma = output_sigma_sv(gain, kappa, n_b, n_t)?;
    let mut res = qfi_gaussian(&sigma, &dsigma_probed(1))?;
    res.params = FisherParams {
        kappa,
        n_b,
        n_s: SourceSpec::squeezed_vacuum(gain, n_t)?.signal_photons(),
        n_t,
    };
    Ok(res)
}

/// QFI of the two-mode squeezed probe via the Gaussian solver.
pub fn qfi_tmsv_gaussian(gain: f64, kappa: f64, n_b: f64, n_t: f64) -> Result<FisherResult> {
    check_channel(kappa, n_b)?;
    let sigma = output_sigma_tmsv(gain, kappa, n_b, n_t)?;
    let mut res = qfi_gaussian(&sigma, &dsigma_probed(2))?;
    res.params = FisherParams {
        kappa,
        n_b,
        n_s: SourceSpec::tmsv(gain, n_t)?.signal_photons(),
        n_t,
    };
    Ok(res)
}

// ---------------------------------------------------------------------------
// Compound channels
// ---------------------------------------------------------------------------

/// One frequency component of a compound channel whose excess noise depends
/// on a shared physical parameter `theta`.
pub struct CompoundComponent {
    /// Mean signal photons probing this component.
    pub n_s: f64,
    /// Transmissivity of this component.
    pub kappa: f64,
    /// Excess noise as a function of `theta`.
    pub n_b: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Optional analytic derivative `d n_b / d theta`; finite differences
    /// (step `max(1e-6 |theta|, 1e-9)`, Richardson-extrapolated) otherwise.
    pub dn_b: Option<Box<dyn Fn(f64) -> f64 + Send + Sync>>,
}

/// Upper bound on the Fisher information about `theta` carried by a compound
/// channel: `sum_l (d n_b,l / d theta)^2 * ub_ue(n_s,l, kappa_l, n_b,l)`.
pub fn ub_compound(components: &[CompoundComponent], theta: f64) -> Result<FisherResult> {
    if components.is_empty() {
        return Err(Error::domain("compound channel needs at least one component"));
    }
    let mut total = 0.0;
    for c in components {
        let n_b = (c.n_b)(theta);
        let slope = match &c.dn_b {
            Some(d) => d(theta),
            None => {
                let h = (1e-6 * theta.abs()).max(1e-9);
                crate::numerics::derivative_richardson(&|t| (c.n_b)(t), theta, h)
            }
        };
        total += slope * slope * ub_ue(c.n_s, c.kappa, n_b)?.value;
    }
    Ok(FisherResult {
        value: total,
        method: FisherMethod::ClosedForm,
        params: FisherParams { kappa: f64::NAN, n_b: f64::NAN, n_s: f64::NAN, n_t: 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::second_derivative_richardson;
    use approx::assert_relative_eq;

    // Frozen reference values, computed independently with exact rational
    // arithmetic at (n_s, kappa, n_b) = (1, 3/5, 1/10) and (2, 9/10, 1/100).
    const UE_REF_1: f64 = 15.041322314049587;
    const TP_REF_1: f64 = 20.0;
    const VL_REF_1: f64 = 9.090909090909092;
    const SV_REF_1: f64 = 5.286246983987716;
    const TMSV_REF_1: f64 = 12.941176470588236;
    const RATIO_REF_1: f64 = 1.423529411764706;
    const UE_REF_2: f64 = 291.50439796454896;
    const SV_REF_2: f64 = 63.62930504075593;
    const TMSV_REF_2: f64 = 254.54545454545453;
    const VL_REF_2: f64 = 99.00990099009901;

    #[test]
    fn frozen_closed_forms() {
        assert_relative_eq!(ub_ue(1.0, 0.6, 0.1).unwrap().value, UE_REF_1, max_relative = 1e-14);
        assert_relative_eq!(ub_tp(0.6, 0.1).unwrap().value, TP_REF_1, max_relative = 1e-14);
        assert_relative_eq!(qfi_vacuum_limit(0.1).unwrap().value, VL_REF_1, max_relative = 1e-14);
        assert_relative_eq!(qfi_sv(1.0, 0.6, 0.1).unwrap().value, SV_REF_1, max_relative = 1e-14);
        assert_relative_eq!(qfi_tmsv(1.0, 0.6, 0.1).unwrap().value, TMSV_REF_1, max_relative = 1e-14);
        assert_relative_eq!(tmsv_vl_ratio(1.0, 0.6, 0.1).unwrap(), RATIO_REF_1, max_relative = 1e-14);
        assert_relative_eq!(ub_combined(1.0, 0.6, 0.1).unwrap().value, UE_REF_1, max_relative = 1e-14);

        assert_relative_eq!(ub_ue(2.0, 0.9, 0.01).unwrap().value, UE_REF_2, max_relative = 1e-14);
        assert_relative_eq!(qfi_sv(2.0, 0.9, 0.01).unwrap().value, SV_REF_2, max_relative = 1e-14);
        assert_relative_eq!(qfi_tmsv(2.0, 0.9, 0.01).unwrap().value, TMSV_REF_2, max_relative = 1e-14);
        assert_relative_eq!(qfi_vacuum_limit(0.01).unwrap().value, VL_REF_2, max_relative = 1e-14);
    }

    #[test]
    fn closed_form_limits() {
        // n_s = 0 collapses everything with a probe onto the vacuum limit.
        let vl = qfi_vacuum_limit(0.1).unwrap().value;
        assert_relative_eq!(qfi_sv(0.0, 0.6, 0.1).unwrap().value, vl, max_relative = 1e-13);
        assert_relative_eq!(qfi_tmsv(0.0, 0.6, 0.1).unwrap().value, vl, max_relative = 1e-13);
        assert_relative_eq!(ub_ue(0.0, 0.6, 0.1).unwrap().value, vl, max_relative = 1e-13);
        // Large squeezing approaches the asymptote.
        let asym = qfi_sv_asymptote(0.6, 0.1).unwrap();
        let big = qfi_sv(1e8, 0.6, 0.1).unwrap().value;
        assert_relative_eq!(big, asym, max_relative = 1e-6);
        // The ratio formula is consistent with the two closed forms.
        assert_relative_eq!(
            tmsv_vl_ratio(3.0, 0.8, 0.05).unwrap(),
            qfi_tmsv(3.0, 0.8, 0.05).unwrap().value / qfi_vacuum_limit(0.05).unwrap().value,
            max_relative = 1e-12
        );
    }

    #[test]
    fn loss_parameterization_matches_kappa_forms() {
        // At moderate loss both parameterizations are exact and must agree
        // to rounding.
        for &(n_s, kappa, n_b) in &[(1.0f64, 0.6f64, 0.1f64), (2.0, 0.9, 0.01), (0.3, 0.99, 0.3)] {
            let loss = 1.0 - kappa;
            assert_relative_eq!(
                ub_ue_from_loss(n_s, loss, n_b).unwrap().value,
                ub_ue(n_s, kappa, n_b).unwrap().value,
                max_relative = 1e-13
            );
            assert_relative_eq!(
                ub_tp_from_loss(loss, n_b).unwrap().value,
                ub_tp(kappa, n_b).unwrap().value,
                max_relative = 1e-13
            );
            assert_relative_eq!(
                ub_combined_from_loss(n_s, loss, n_b).unwrap().value,
                ub_combined(n_s, kappa, n_b).unwrap().value,
                max_relative = 1e-13
            );
            assert_relative_eq!(
                qfi_sv_from_loss(n_s, loss, n_b).unwrap().value,
                qfi_sv(n_s, kappa, n_b).unwrap().value,
                max_relative = 1e-13
            );
            assert_relative_eq!(
                qfi_tmsv_from_loss(n_s, loss, n_b).unwrap().value,
                qfi_tmsv(n_s, kappa, n_b).unwrap().value,
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn loss_parameterization_survives_deep_tails() {
        // kappa = 1 - 1e-25 rounds to 1.0 in f64; the loss forms must stay
        // finite and match the analytic tail expansions.
        let loss = 1e-25;
        let n_t = 3.83e-4;
        let n_b = loss * n_t;
        let n_s = 2.025;
        let ue = ub_ue_from_loss(n_s, loss, n_b).unwrap().value;
        let expect_ue = (1.0 + n_t + n_s * (1.0 + 2.0 * n_t)) / (loss * n_t * (1.0 + n_t));
        assert_relative_eq!(ue, expect_ue, max_relative = 1e-10);
        let tmsv = qfi_tmsv_from_loss(n_s, loss, n_b).unwrap().value;
        assert_relative_eq!(tmsv, expect_ue, max_relative = 1e-10);
        let sv = qfi_sv_from_loss(n_s, loss, n_b).unwrap().value;
        let expect_sv =
            (1.0 + 2.0 * n_s) * (1.0 + 2.0 * n_s) / (loss * (n_t + n_s * (1.0 + 2.0 * n_t)));
        assert_relative_eq!(sv, expect_sv, max_relative = 1e-10);
        // The teleportation-style bound is enormous here, so the combination
        // must pick the extension branch.
        assert_relative_eq!(
            ub_combined_from_loss(n_s, loss, n_b).unwrap().value,
            ue,
            max_relative = 1e-14
        );
        // loss = 0 is the additive-noise channel, fine for every form.
        assert!(ub_combined_from_loss(1.0, 0.0, 1e-3).unwrap().value.is_finite());
        assert!(qfi_sv_from_loss(1.0, 0.0, 1e-3).unwrap().value > 0.0);
        // Out-of-range loss fractions are rejected.
        assert!(ub_ue_from_loss(1.0, -0.1, 1e-3).is_err());
        assert!(qfi_tmsv_from_loss(1.0, 1.2, 1e-3).is_err());
        assert!(qfi_sv_from_loss(1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn domain_guards() {
        assert!(qfi_vacuum_limit(0.0).is_err());
        assert!(ub_ue(1.0, 0.6, 0.0).is_err());
        assert!(ub_ue(-1.0, 0.6, 0.1).is_err());
        assert!(ub_ue(1.0, 1.2, 0.1).is_err()); // unphysical: n_b < kappa - 1
        assert!(ub_tp(1.5, 0.5).is_err()); // quantum-limited amplifier singularity
        assert!(qfi_tmsv(1.0, 1.5, 0.5).is_err());
    }

    #[test]
    fn overlap_factors_normalise_at_equal_noise() {
        for &(kappa, n_b) in &[(0.6f64, 0.1f64), (1.0, 1e-3), (0.9, 0.5)] {
            let z = overlap_params(kappa, n_b, n_b).unwrap();
            assert_relative_eq!(z.zeta1, 1.0, epsilon = 1e-13);
            assert_relative_eq!(z.zeta2, 1.0, epsilon = 1e-13);
            // First derivatives in the second argument vanish.
            let h = (1e-4 * n_b).max(1e-9);
            let d1 = (overlap_params(kappa, n_b, n_b + h).unwrap().zeta1
                - overlap_params(kappa, n_b, n_b - h).unwrap().zeta1)
                / (2.0 * h);
            let d2 = (overlap_params(kappa, n_b, n_b + h).unwrap().zeta2
                - overlap_params(kappa, n_b, n_b - h).unwrap().zeta2)
                / (2.0 * h);
            assert!(d1.abs() < 1e-6, "zeta1 slope {d1:.3e}");
            assert!(d2.abs() < 1e-6, "zeta2 slope {d2:.3e}");
        }
    }

    #[test]
    fn overlap_curvature_reproduces_ue_bound() {
        // Independent oracle: J = -4 (d^2 zeta1 + n_s d^2 zeta2) must match
        // the closed-form unitary-extension bound.
        for &(n_s, kappa, n_b) in &[(1.0f64, 0.6f64, 0.1f64), (2.0, 0.9, 0.01), (0.5, 1.0, 0.05)] {
            // Step large enough that the second difference stays clear of
            // roundoff (values are ~1 and curvatures ~J/4).
            let h = (1e-3 * n_b).max(1e-9);
            let z1 = |x: f64| overlap_params(kappa, n_b, x).unwrap().zeta1;
            let z2 = |x: f64| overlap_params(kappa, n_b, x).unwrap().zeta2;
            let d2z1 = second_derivative_richardson(&z1, n_b, 1.0, h);
            let d2z2 = second_derivative_richardson(&z2, n_b, 1.0, h);
            let j_fd = -4.0 * (d2z1 + n_s * d2z2);
            let j_cf = ub_ue(n_s, kappa, n_b).unwrap().value;
            assert_relative_eq!(j_fd, j_cf, max_relative = 5e-6);
        }
    }

    #[test]
    fn overlap_bound_depends_only_on_mean_photons() {
        // Any photon distribution with the same mean gives the same bound
        // information; check with two very different distributions of mean 2.
        let (kappa, n_b) = (0.7f64, 0.08f64);
        let geometric: Vec<f64> = {
            let nbar = 2.0f64;
            let r = nbar / (nbar + 1.0);
            let mut p = 1.0 / (nbar + 1.0);
            let mut v = Vec::new();
            for _ in 0..400 {
                v.push(p);
                p *= r;
            }
            v
        };
        let two_point = {
            let mut v = vec![0.0; 5];
            v[0] = 0.5;
            v[4] = 0.5; // mean 2
            v
        };
        let h = (1e-4 * n_b).max(1e-9);
        let j = |dist: &[f64]| {
            let f = |x: f64| overlap_bound(kappa, n_b, x, dist, 1).unwrap();
            -4.0 * second_derivative_richardson(&f, n_b, f(n_b), h)
        };
        let j_geo = j(&geometric);
        let j_two = j(&two_point);
        assert_relative_eq!(j_geo, j_two, max_relative = 1e-5);
        assert_relative_eq!(j_geo, ub_ue(2.0, kappa, n_b).unwrap().value, max_relative = 1e-4);
    }

    #[test]
    fn gaussian_solver_thermal_family() {
        // Thermal family sigma = (n + 1/2) X has QFI 1/(n(n+1)).
        for &n in &[0.01, 0.1, 0.5, 2.0] {
            let mut sigma = DMatrix::zeros(2, 2);
            sigma[(0, 1)] = n + 0.5;
            sigma[(1, 0)] = n + 0.5;
            let mut d = DMatrix::zeros(2, 2);
            d[(0, 1)] = 1.0;
            d[(1, 0)] = 1.0;
            let res = qfi_gaussian(&sigma, &d).unwrap();
            assert_eq!(res.method, FisherMethod::GaussianSolve { pseudo_inverse: false });
            assert_relative_eq!(res.value, 1.0 / (n * (n + 1.0)), max_relative = 1e-11);
        }
    }

    #[test]
    fn gaussian_solver_matches_closed_forms() {
        for &(n_s, kappa, n_b) in &[(1.0, 0.6, 0.1), (2.0, 0.9, 0.01), (0.3, 1.0, 0.2)] {
            let gain = SourceSpec::gain_for_signal_photons(n_s).unwrap();
            let sv = qfi_sv_gaussian(gain, kappa, n_b, 0.0).unwrap();
            assert_relative_eq!(sv.value, qfi_sv(n_s, kappa, n_b).unwrap().value, max_relative = 1e-9);
            let tm = qfi_tmsv_gaussian(gain, kappa, n_b, 0.0).unwrap();
            assert_relative_eq!(tm.value, qfi_tmsv(n_s, kappa, n_b).unwrap().value, max_relative = 1e-9);
        }
    }

    #[test]
    fn squeezed_thermal_closed_form_collapses_to_clean_probe() {
        // With a clean seed the thermal form must be the established closed
        // form, across gains, losses, and noise levels.
        for &gain in &[1.0, 1.5, 4.0, 10.0, 100.0, 1e4] {
            for &loss in &[0.0, 1e-6, 1e-3, 0.05, 0.4, 0.9] {
                for &n_b in &[1e-9, 1e-4, 0.1, 0.7] {
                    let n_s = (gain - 1.0) * (gain - 1.0) / (4.0 * gain);
                    let reference = qfi_sv_from_loss(n_s, loss, n_b).unwrap().value;
                    let thermal = qfi_sv_thermal_from_loss(gain, loss, n_b, 0.0).unwrap().value;
                    assert_relative_eq!(thermal, reference, max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn squeezed_thermal_closed_form_matches_solver_when_well_conditioned() {
        for &(gain, kappa, n_b, n_t) in &[
            (4.0, 0.7, 0.05, 0.01),
            (10.0, 0.6, 1e-3, 3.83e-4),
            (2.0, 0.95, 0.2, 0.1),
            (30.0, 0.3, 0.01, 1e-3),
        ] {
            let solver = qfi_sv_gaussian(gain, kappa, n_b, n_t).unwrap().value;
            let closed = qfi_sv_thermal_from_loss(gain, 1.0 - kappa, n_b, n_t).unwrap().value;
            assert_relative_eq!(closed, solver, max_relative = 1e-8);
        }
    }

    #[test]
    fn squeezed_thermal_closed_form_survives_the_deep_tail() {
        // Strong squeezing with a nearly transparent channel: the generic
        // solve operator is ill-conditioned beyond rescue here, while the
        // closed form stays well above the single-quadrature readout it
        // must dominate.
        let (gain, loss, n_b, n_t) = (1000.0, 6.5032e-5, 2.4913e-8, 3.8309e-4);
        let value = qfi_sv_thermal_from_loss(gain, loss, n_b, n_t).unwrap().value;
        let kappa = 1.0 - loss;
        let s_p = kappa * (2.0 * n_t + 1.0) / gain + loss + 2.0 * n_b;
        let squeezed_quadrature_fi = 2.0 / (s_p * s_p);
        assert!(value >= squeezed_quadrature_fi, "{value} < {squeezed_quadrature_fi}");
        assert!(value < 100.0 * squeezed_quadrature_fi, "{value} implausibly large");
    }

    #[test]
    fn two_mode_thermal_closed_form_collapses_to_clean_probe() {
        // With clean seeds the general form must reproduce the established
        // two-mode closed form, across gains (including the unsqueezed
        // corner), losses, and noise levels.
        for &gain in &[1.0, 1.5, 4.0, 10.0, 100.0, 1e4] {
            for &loss in &[0.0, 1e-6, 1e-3, 0.05, 0.4, 0.9] {
                for &n_b in &[1e-9, 1e-4, 0.1, 0.7] {
                    let n_s = (gain - 1.0) * (gain - 1.0) / (4.0 * gain);
                    let reference = qfi_tmsv_from_loss(n_s, loss, n_b).unwrap().value;
                    let thermal = qfi_tmsv_thermal_from_loss(gain, loss, n_b, 0.0).unwrap().value;
                    assert_relative_eq!(thermal, reference, max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn two_mode_thermal_closed_form_matches_solver_when_well_conditioned() {
        for &(gain, kappa, n_b, n_t) in &[
            (4.0, 0.7, 0.05, 0.01),
            (10.0, 0.6, 1e-3, 3.83e-4),
            (2.0, 0.95, 0.2, 0.1),
            (30.0, 0.3, 0.01, 1e-3),
        ] {
            let solver = qfi_tmsv_gaussian(gain, kappa, n_b, n_t).unwrap().value;
            let closed = qfi_tmsv_thermal_from_loss(gain, 1.0 - kappa, n_b, n_t).unwrap().value;
            assert_relative_eq!(closed, solver, max_relative = 1e-8);
        }
    }

    #[test]
    fn two_mode_thermal_closed_form_survives_the_deep_tail() {
        // Frozen 60-digit references in regimes where the joint output is
        // nearly pure and the generic solve operator is singular to working
        // precision.
        for &(gain, loss, n_b, n_t, expected) in &[
            (1000.0, 6.5032e-5, 2.4913e-8, 3.8309e-4, 1.6235590778938813e8),
            (1e4, 1e-6, 1e-6, 0.01, 9.1635017331737697e8),
            (1000.0, 1e-8, 1e-9, 1e-4, 1.2319289320764851e9),
        ] {
            let value = qfi_tmsv_thermal_from_loss(gain, loss, n_b, n_t).unwrap().value;
            assert_relative_eq!(value, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn gaussian_solver_flags_pure_states() {
        // The vacuum is pure: the solve operator is singular and the
        // pseudo-inverse path must be flagged.
        let mut sigma = DMatrix::zeros(2, 2);
        sigma[(0, 1)] = 0.5;
        sigma[(1, 0)] = 0.5;
        let mut d = DMatrix::zeros(2, 2);
        d[(0, 1)] = 1.0;
        d[(1, 0)] = 1.0;
        let res = qfi_gaussian(&sigma, &d).unwrap();
        assert_eq!(res.method, FisherMethod::GaussianSolve { pseudo_inverse: true });
    }

    #[test]
    fn transform_rejects_qp_correlations() {
        let mut v = DMatrix::identity(2, 2) * 0.5;
        v[(0, 1)] = 0.1;
        v[(1, 0)] = 0.1;
        assert!(quad_to_annihilation(&v).is_err());
    }

    #[test]
    fn compound_bound_sums_components() {
        // Two components with analytic slopes; compare against the explicit sum.
        let comps = vec![
            CompoundComponent {
                n_s: 1.0,
                kappa: 0.6,
                n_b: Box::new(|t: f64| 0.1 + 0.05 * t * t),
                dn_b: Some(Box::new(|t: f64| 0.1 * t)),
            },
            CompoundComponent {
                n_s: 0.5,
                kappa: 0.9,
                n_b: Box::new(|t: f64| 0.2 * t.exp()),
                dn_b: None, // exercised through finite differences
            },
        ];
        let theta = 0.3;
        let expected = (0.1f64 * theta).powi(2) * ub_ue(1.0, 0.6, 0.1 + 0.05 * theta * theta).unwrap().value
            + (0.2 * theta.exp()).powi(2) * ub_ue(0.5, 0.9, 0.2 * theta.exp()).unwrap().value;
        let got = ub_compound(&comps, theta).unwrap().value;
        assert_relative_eq!(got, expected, max_relative = 1e-8);
    }

    #[test]
    fn oracle_cross_check_sv_and_tmsv() {
        // Fock-oracle fidelity QFI vs the closed forms at one spot each.
        use crate::fock;
        let (n_s, kappa, n_b) = (1.0, 0.6, 0.1);
        let gain = SourceSpec::gain_for_signal_photons(n_s).unwrap();

        let family = |x: f64| -> Result<fock::FockDensityMatrix> {
            let ch = ChannelParams::new(kappa, x)?;
            fock::apply_channel_fock(&fock::fock_squeezed_vacuum(gain, 60)?, &ch, 1e-13)
        };
        let j = fock::qfi_fidelity_fd(family, kappa, n_b, None).unwrap();
        assert_relative_eq!(j, qfi_sv(n_s, kappa, n_b).unwrap().value, max_relative = 1e-4);

        let family2 = |x: f64| -> Result<fock::TwoModeFock> {
            let ch = ChannelParams::new(kappa, x)?;
            fock::apply_channel_fock_signal(&fock::fock_tmsv(gain, 40)?, &ch, 1e-13)
        };
        let j2 = fock::qfi_fidelity_fd(family2, kappa, n_b, None).unwrap();
        assert_relative_eq!(j2, qfi_tmsv(n_s, kappa, n_b).unwrap().value, max_relative = 1e-4);
    }
}
