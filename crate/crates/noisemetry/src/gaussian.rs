//! Gaussian states, the phase-covariant noise channel, and symplectic
//! transforms.
//!
//! States live on `M` modes with quadrature ordering `(q1, p1, ..., qM, pM)`
//! and vacuum covariance `I/2` (so a thermal state of mean occupation `n` has
//! covariance `(2n+1)/2 * I`). The channel with transmissivity `kappa` and
//! excess noise `n_b` acts on one mode as
//!
//! ```text
//! V -> kappa * V + (mu/4) * I,      mu = 4 n_b + 2 (1 - kappa),
//! mean -> sqrt(kappa) * mean,
//! ```
//!
//! which covers loss (`kappa < 1`), amplification (`kappa > 1`) and the
//! identity (`kappa = 1`, `n_b = 0`). Physicality requires
//! `n_b >= max(kappa - 1, 0)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Transmissivity/excess-noise pair of the phase-covariant channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Power transmissivity (gain when `> 1`). Must be `>= 0`.
    pub kappa: f64,
    /// Mean excess noise photons added per mode. Must satisfy
    /// `n_b >= max(kappa - 1, 0)`.
    pub n_b: f64,
}

/// Small slack on the physicality floor so that quantum-limited amplifiers
/// (`n_b = kappa - 1`) constructed from rounded inputs are accepted.
const PHYSICALITY_TOL: f64 = 1e-12;

impl ChannelParams {
    /// Validates and constructs channel parameters.
    pub fn new(kappa: f64, n_b: f64) -> Result<Self> {
        if !kappa.is_finite() || kappa < 0.0 {
            return Err(Error::domain(format!("transmissivity kappa = {kappa} must be finite and >= 0")));
        }
        if !n_b.is_finite() || n_b < 0.0 {
            return Err(Error::domain(format!("excess noise n_b = {n_b} must be finite and >= 0")));
        }
        let floor = (kappa - 1.0).max(0.0);
        if n_b < floor - PHYSICALITY_TOL {
            return Err(Error::domain(format!(
                "n_b = {n_b} below the physicality floor max(kappa-1, 0) = {floor} for kappa = {kappa}"
            )));
        }
        Ok(ChannelParams { kappa, n_b })
    }

    /// Additive quadrature noise, `mu = 4 n_b + 2 (1 - kappa)`.
    pub fn mu(&self) -> f64 {
        4.0 * self.n_b + 2.0 * (1.0 - self.kappa)
    }

    /// Splits the channel into a pure-loss stage followed by a
    /// quantum-limited amplifier stage.
    pub fn decompose(&self) -> LossAmpDecomposition {
        let gain = 1.0 + self.n_b;
        LossAmpDecomposition { eta: self.kappa / gain, gain }
    }
}

/// Pure-loss / quantum-limited-amplifier factorisation of the channel:
/// a loss of transmissivity `eta` followed by an amplifier of gain `gain`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossAmpDecomposition {
    /// Transmissivity of the leading pure-loss stage (`0 <= eta <= 1`).
    pub eta: f64,
    /// Gain of the trailing quantum-limited amplifier stage (`>= 1`).
    pub gain: f64,
}

/// Channel/source noise combination used by the measurement closed forms:
/// `mu = 4 n_b + 2 (1 - kappa)` and `nu = 2 n_t + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelOutputParams {
    /// Additive quadrature noise of the channel.
    pub mu: f64,
    /// Thermal variance factor of the probe source.
    pub nu: f64,
}

impl ChannelOutputParams {
    /// Builds the pair from channel parameters and source occupation `n_t`.
    pub fn new(ch: &ChannelParams, n_t: f64) -> Self {
        ChannelOutputParams { mu: ch.mu(), nu: 2.0 * n_t + 1.0 }
    }
}

/// Probe source family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    /// Single-mode vacuum (or thermal, when `n_t > 0`) probe.
    Vacuum,
    /// Single-mode squeezed vacuum of power gain `G` (quadrature variances
    /// `G/2` and `1/(2G)` at `n_t = 0`).
    SqueezedVacuum,
    /// Two-mode squeezed vacuum; mode 0 is the signal sent through the
    /// channel, mode 1 the retained idler.
    Tmsv,
}

/// Probe source: family, squeezing strength, and pre-squeezing thermal
/// occupation `n_t` of the seed mode(s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec {
    pub kind: SourceKind,
    /// Linear power gain `G >= 1` of the squeezing stage (`G = 1` means no
    /// squeezing; required for [`SourceKind::Vacuum`]).
    pub gain: f64,
    /// Thermal occupation of the seed mode(s) before squeezing.
    pub n_t: f64,
}

impl SourceSpec {
    /// Validates and constructs a source description.
    pub fn new(kind: SourceKind, gain: f64, n_t: f64) -> Result<Self> {
        if !gain.is_finite() || gain < 1.0 {
            return Err(Error::domain(format!("source gain G = {gain} must be finite and >= 1")));
        }
        if !n_t.is_finite() || n_t < 0.0 {
            return Err(Error::domain(format!("source occupation n_t = {n_t} must be finite and >= 0")));
        }
        if kind == SourceKind::Vacuum && gain != 1.0 {
            return Err(Error::domain("a vacuum source has no squeezing stage; use G = 1"));
        }
        Ok(SourceSpec { kind, gain, n_t })
    }

    /// Vacuum probe at zero temperature.
    pub fn vacuum() -> Self {
        SourceSpec { kind: SourceKind::Vacuum, gain: 1.0, n_t: 0.0 }
    }

    /// Squeezed-vacuum probe of gain `G` on a seed of occupation `n_t`.
    pub fn squeezed_vacuum(gain: f64, n_t: f64) -> Result<Self> {
        SourceSpec::new(SourceKind::SqueezedVacuum, gain, n_t)
    }

    /// Two-mode squeezed probe of gain `G` on seeds of occupation `n_t`.
    pub fn tmsv(gain: f64, n_t: f64) -> Result<Self> {
        SourceSpec::new(SourceKind::Tmsv, gain, n_t)
    }

    /// Converts a squeezing level in decibels to a linear power gain.
    pub fn gain_from_db(db: f64) -> f64 {
        10f64.powf(db / 10.0)
    }

    /// Mean signal photons sent into the channel.
    ///
    /// For squeezed sources on thermal seeds this is
    /// `N_S = (2 (G^2 + 1) n_t + (G - 1)^2) / (4 G)`; a vacuum/thermal probe
    /// carries `n_t` photons.
    pub fn signal_photons(&self) -> f64 {
        match self.kind {
            SourceKind::Vacuum => self.n_t,
            SourceKind::SqueezedVacuum | SourceKind::Tmsv => {
                let g = self.gain;
                (2.0 * (g * g + 1.0) * self.n_t + (g - 1.0) * (g - 1.0)) / (4.0 * g)
            }
        }
    }

    /// Gain that yields `n_s` signal photons at `n_t = 0`:
    /// `G = 1 + 2 n_s + 2 sqrt(n_s (n_s + 1))`.
    pub fn gain_for_signal_photons(n_s: f64) -> Result<f64> {
        if !n_s.is_finite() || n_s < 0.0 {
            return Err(Error::domain(format!("signal photon number {n_s} must be finite and >= 0")));
        }
        Ok(1.0 + 2.0 * n_s + 2.0 * (n_s * (n_s + 1.0)).sqrt())
    }
}

/// Zero-mean-aware Gaussian state: mean vector and covariance matrix over
/// `(q1, p1, ..., qM, pM)` with vacuum covariance `I/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianState {
    /// The `M`-mode vacuum.
    pub fn vacuum(n_modes: usize) -> Self {
        GaussianState {
            mean: DVector::zeros(2 * n_modes),
            cov: DMatrix::identity(2 * n_modes, 2 * n_modes) * 0.5,
        }
    }

    /// Number of modes.
    pub fn n_modes(&self) -> usize {
        self.mean.len() / 2
    }

    /// Mean photon number of one mode, including the mean-field contribution.
    pub fn photon_number(&self, mode: usize) -> f64 {
        let q = 2 * mode;
        let p = q + 1;
        0.5 * (self.cov[(q, q)] + self.cov[(p, p)] - 1.0)
            + 0.5 * (self.mean[q] * self.mean[q] + self.mean[p] * self.mean[p])
    }

    /// Total mean photon number over all modes.
    pub fn total_photons(&self) -> f64 {
        (0..self.n_modes()).map(|m| self.photon_number(m)).sum()
    }

    /// Symplectic form `Omega = diag([[0, 1], [-1, 0]], ...)` for `M` modes.
    pub fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
        let mut omega = DMatrix::zeros(2 * n_modes, 2 * n_modes);
        for m in 0..n_modes {
            omega[(2 * m, 2 * m + 1)] = 1.0;
            omega[(2 * m + 1, 2 * m)] = -1.0;
        }
        omega
    }

    /// Checks the uncertainty relation `V + i Omega / 2 >= 0` by diagonalising
    /// the real symmetric embedding `[[V, -Omega/2], [Omega/2, V]]`, whose
    /// spectrum doubles that of the Hermitian matrix.
    pub fn check_uncertainty(&self, tol: f64) -> Result<()> {
        let n = self.mean.len();
        let omega = Self::symplectic_form(self.n_modes());
        let mut emb = DMatrix::zeros(2 * n, 2 * n);
        emb.view_mut((0, 0), (n, n)).copy_from(&self.cov);
        emb.view_mut((n, n), (n, n)).copy_from(&self.cov);
        emb.view_mut((0, n), (n, n)).copy_from(&(-0.5 * &omega));
        emb.view_mut((n, 0), (n, n)).copy_from(&(0.5 * &omega));
        let eigs = emb.symmetric_eigenvalues();
        let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -tol {
            return Err(Error::domain(format!(
                "covariance violates the uncertainty relation (min eigenvalue {min:.3e})"
            )));
        }
        Ok(())
    }
}

/// Builds the Gaussian state emitted by a probe source.
///
/// Seeds every mode with a thermal state of occupation `n_t`, then applies
/// the squeezing stage of strength `G`.
pub fn make_source(spec: &SourceSpec) -> GaussianState {
    let nu = 2.0 * spec.n_t + 1.0;
    let g = spec.gain;
    match spec.kind {
        SourceKind::Vacuum => GaussianState {
            mean: DVector::zeros(2),
            cov: DMatrix::identity(2, 2) * (0.5 * nu),
        },
        SourceKind::SqueezedVacuum => GaussianState {
            mean: DVector::zeros(2),
            cov: DMatrix::from_diagonal(&DVector::from_vec(vec![0.5 * nu * g, 0.5 * nu / g])),
        },
        SourceKind::Tmsv => {
            let alpha = nu * (g * g + 1.0) / (4.0 * g);
            let gamma = nu * (g * g - 1.0) / (4.0 * g);
            let mut cov = DMatrix::zeros(4, 4);
            for i in 0..4 {
                cov[(i, i)] = alpha;
            }
            // qq cross-correlation +gamma, pp cross-correlation -gamma.
            cov[(0, 2)] = gamma;
            cov[(2, 0)] = gamma;
            cov[(1, 3)] = -gamma;
            cov[(3, 1)] = -gamma;
            GaussianState { mean: DVector::zeros(4), cov }
        }
    }
}

/// Applies the phase-covariant channel to one mode of a state.
pub fn apply_channel(state: &GaussianState, ch: &ChannelParams, mode: usize) -> Result<GaussianState> {
    let n_modes = state.n_modes();
    if mode >= n_modes {
        return Err(Error::domain(format!("mode index {mode} out of range for {n_modes}-mode state")));
    }
    let sk = ch.kappa.sqrt();
    let mut out = state.clone();
    let q = 2 * mode;
    let p = q + 1;
    // Row/column scaling by sqrt(kappa) on the acted mode, then additive noise.
    for idx in [q, p] {
        out.mean[idx] *= sk;
        for j in 0..2 * n_modes {
            out.cov[(idx, j)] *= sk;
        }
        for i in 0..2 * n_modes {
            out.cov[(i, idx)] *= sk;
        }
    }
    let add = 0.25 * ch.mu();
    out.cov[(q, q)] += add;
    out.cov[(p, p)] += add;
    Ok(out)
}

/// Symplectic operations used to build sources and receivers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SymplecticOp {
    /// Beam splitter mixing modes `(i, j)`:
    /// `q_i -> cos(theta) q_i + sin(theta) q_j` (same for `p`).
    BeamSplitter { theta: f64, modes: (usize, usize) },
    /// Single-mode squeezer: `q -> e^r q`, `p -> e^{-r} p`
    /// (power gain `G = e^{2r}` on the `q` variance).
    Squeeze { r: f64, mode: usize },
    /// Two-mode squeezer on `(i, j)`:
    /// `q_i -> cosh(r) q_i + sinh(r) q_j`, `p_i -> cosh(r) p_i - sinh(r) p_j`.
    TwoModeSqueeze { r: f64, modes: (usize, usize) },
}

/// Builds the `2M x 2M` symplectic matrix of an operation.
pub fn symplectic_matrix(op: &SymplecticOp, n_modes: usize) -> Result<DMatrix<f64>> {
    let mut s = DMatrix::identity(2 * n_modes, 2 * n_modes);
    let check = |m: usize| -> Result<()> {
        if m >= n_modes {
            return Err(Error::domain(format!("mode index {m} out of range for {n_modes} modes")));
        }
        Ok(())
    };
    match *op {
        SymplecticOp::BeamSplitter { theta, modes: (i, j) } => {
            check(i)?;
            check(j)?;
            if i == j {
                return Err(Error::domain("beam splitter needs two distinct modes"));
            }
            let (c, sn) = (theta.cos(), theta.sin());
            for off in 0..2 {
                let (a, b) = (2 * i + off, 2 * j + off);
                s[(a, a)] = c;
                s[(a, b)] = sn;
                s[(b, a)] = -sn;
                s[(b, b)] = c;
            }
        }
        SymplecticOp::Squeeze { r, mode } => {
            check(mode)?;
            s[(2 * mode, 2 * mode)] = r.exp();
            s[(2 * mode + 1, 2 * mode + 1)] = (-r).exp();
        }
        SymplecticOp::TwoModeSqueeze { r, modes: (i, j) } => {
            check(i)?;
            check(j)?;
            if i == j {
                return Err(Error::domain("two-mode squeezer needs two distinct modes"));
            }
            let (ch, sh) = (r.cosh(), r.sinh());
            let (qi, pi, qj, pj) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
            s[(qi, qi)] = ch;
            s[(qi, qj)] = sh;
            s[(qj, qi)] = sh;
            s[(qj, qj)] = ch;
            s[(pi, pi)] = ch;
            s[(pi, pj)] = -sh;
            s[(pj, pi)] = -sh;
            s[(pj, pj)] = ch;
        }
    }
    Ok(s)
}

/// Applies a symplectic operation to a state: `mean -> S mean`,
/// `V -> S V S^T`.
pub fn apply_symplectic(state: &GaussianState, op: &SymplecticOp) -> Result<GaussianState> {
    let s = symplectic_matrix(op, state.n_modes())?;
    Ok(GaussianState {
        mean: &s * &state.mean,
        cov: &s * &state.cov * s.transpose(),
    })
}

/// Verifies `S Omega S^T = Omega` to absolute tolerance `tol`.
pub fn is_symplectic(s: &DMatrix<f64>, tol: f64) -> bool {
    let n_modes = s.nrows() / 2;
    let omega = GaussianState::symplectic_form(n_modes);
    let residual = s * &omega * s.transpose() - &omega;
    residual.amax() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn channel_floor_enforced() {
        assert!(ChannelParams::new(0.6, 0.1).is_ok());
        assert!(ChannelParams::new(2.0, 1.5).is_ok());
        assert!(ChannelParams::new(2.0, 0.5).is_err()); // below kappa - 1
        assert!(ChannelParams::new(-0.1, 0.0).is_err());
        assert!(ChannelParams::new(0.5, -0.01).is_err());
        // quantum-limited amplifier sits exactly on the floor
        assert!(ChannelParams::new(2.0, 1.0).is_ok());
    }

    #[test]
    fn decomposition_values() {
        let d = ChannelParams::new(0.6, 0.1).unwrap().decompose();
        assert_relative_eq!(d.eta, 6.0 / 11.0, epsilon = 1e-15);
        assert_relative_eq!(d.gain, 1.1, epsilon = 1e-15);
        let d = ChannelParams::new(2.0, 1.5).unwrap().decompose();
        assert_relative_eq!(d.eta, 0.8, epsilon = 1e-15);
        assert_relative_eq!(d.gain, 2.5, epsilon = 1e-15);
    }

    #[test]
    fn decomposition_composes_to_channel() {
        // Loss then quantum-limited amplification must reproduce the channel
        // action on variances exactly.
        for &(kappa, n_b) in &[(0.6, 0.1), (1.0, 1e-3), (2.0, 1.5), (0.25, 2.0)] {
            let ch = ChannelParams::new(kappa, n_b).unwrap();
            let d = ch.decompose();
            let loss = ChannelParams::new(d.eta, 0.0).unwrap();
            let amp = ChannelParams::new(d.gain, d.gain - 1.0).unwrap();
            let probe = make_source(&SourceSpec::squeezed_vacuum(3.0, 0.2).unwrap());
            let direct = apply_channel(&probe, &ch, 0).unwrap();
            let staged = apply_channel(&apply_channel(&probe, &loss, 0).unwrap(), &amp, 0).unwrap();
            assert_relative_eq!(direct.cov[(0, 0)], staged.cov[(0, 0)], epsilon = 1e-14);
            assert_relative_eq!(direct.cov[(1, 1)], staged.cov[(1, 1)], epsilon = 1e-14);
        }
    }

    #[test]
    fn squeezed_vacuum_ten_db() {
        let g = SourceSpec::gain_from_db(10.0);
        let st = make_source(&SourceSpec::squeezed_vacuum(g, 0.0).unwrap());
        assert_relative_eq!(st.cov[(0, 0)], 5.0, epsilon = 1e-12);
        assert_relative_eq!(st.cov[(1, 1)], 0.05, epsilon = 1e-12);
        assert_relative_eq!(st.cov[(0, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn vacuum_through_channel() {
        let ch = ChannelParams::new(0.6, 0.1).unwrap();
        let out = apply_channel(&GaussianState::vacuum(1), &ch, 0).unwrap();
        assert_relative_eq!(out.cov[(0, 0)], 0.6, epsilon = 1e-15);
        assert_relative_eq!(out.cov[(1, 1)], 0.6, epsilon = 1e-15);
        assert_relative_eq!(out.photon_number(0), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn photon_bookkeeping_through_channel() {
        // Output photons = kappa * input photons + n_b on the acted mode.
        for &(kappa, n_b) in &[(0.6, 0.1), (1.0, 0.25), (2.0, 1.2)] {
            let ch = ChannelParams::new(kappa, n_b).unwrap();
            for spec in [
                SourceSpec::vacuum(),
                SourceSpec::squeezed_vacuum(4.0, 0.3).unwrap(),
                SourceSpec::tmsv(6.0, 0.0).unwrap(),
            ] {
                let st = make_source(&spec);
                let n_in = st.photon_number(0);
                let out = apply_channel(&st, &ch, 0).unwrap();
                assert_relative_eq!(out.photon_number(0), kappa * n_in + n_b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn signal_photon_count() {
        let spec = SourceSpec::squeezed_vacuum(10.0, 0.0).unwrap();
        // sinh^2(r) with e^{2r} = 10: (G - 1)^2 / 4G = 81/40.
        assert_relative_eq!(spec.signal_photons(), 81.0 / 40.0, epsilon = 1e-13);
        assert_relative_eq!(make_source(&spec).photon_number(0), 81.0 / 40.0, epsilon = 1e-12);
        let spec = SourceSpec::tmsv(10.0, 0.2).unwrap();
        assert_relative_eq!(make_source(&spec).photon_number(0), spec.signal_photons(), epsilon = 1e-12);
        // Round trip gain <-> photon number.
        let g = SourceSpec::gain_for_signal_photons(81.0 / 40.0).unwrap();
        assert_relative_eq!(g, 10.0, epsilon = 1e-12);
    }

    #[test]
    fn tmsv_splits_into_two_squeezed_vacua() {
        // A balanced beam splitter turns a two-mode squeezed state into two
        // independent single-mode squeezed states of the same strength.
        let g = 7.0;
        let nu = 1.4; // thermal seeds keep the identity, scaled by nu
        let st = make_source(&SourceSpec::tmsv(g, (nu - 1.0) / 2.0).unwrap());
        let bs = SymplecticOp::BeamSplitter { theta: std::f64::consts::FRAC_PI_4, modes: (0, 1) };
        let out = apply_symplectic(&st, &bs).unwrap();
        assert_relative_eq!(out.cov[(0, 0)], 0.5 * nu * g, epsilon = 1e-12);
        assert_relative_eq!(out.cov[(1, 1)], 0.5 * nu / g, epsilon = 1e-12);
        assert_relative_eq!(out.cov[(2, 2)], 0.5 * nu / g, epsilon = 1e-12);
        assert_relative_eq!(out.cov[(3, 3)], 0.5 * nu * g, epsilon = 1e-12);
        for i in 0..2 {
            for j in 2..4 {
                assert!(out.cov[(i, j)].abs() < 1e-12, "cross block must vanish");
            }
        }
    }

    #[test]
    fn symplectic_matrices_are_symplectic() {
        let ops = [
            SymplecticOp::BeamSplitter { theta: 0.7, modes: (0, 2) },
            SymplecticOp::Squeeze { r: -0.9, mode: 1 },
            SymplecticOp::TwoModeSqueeze { r: 1.3, modes: (2, 0) },
        ];
        for op in &ops {
            let s = symplectic_matrix(op, 3).unwrap();
            assert!(is_symplectic(&s, 1e-12), "{op:?} must preserve the symplectic form");
        }
    }

    #[test]
    fn uncertainty_checks() {
        GaussianState::vacuum(2).check_uncertainty(1e-12).unwrap();
        let st = make_source(&SourceSpec::tmsv(25.0, 0.0).unwrap());
        st.check_uncertainty(1e-10).unwrap();
        // Sub-vacuum isotropic noise must be rejected.
        let bad = GaussianState {
            mean: DVector::zeros(2),
            cov: DMatrix::identity(2, 2) * 0.3,
        };
        assert!(bad.check_uncertainty(1e-12).is_err());
    }

    #[test]
    fn channel_preserves_uncertainty() {
        let ch = ChannelParams::new(1.8, 0.9).unwrap();
        let st = make_source(&SourceSpec::tmsv(30.0, 0.0).unwrap());
        let out = apply_channel(&st, &ch, 0).unwrap();
        out.check_uncertainty(1e-10).unwrap();
    }
}
