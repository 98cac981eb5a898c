//! Truncated Fock-space oracle: exact density-matrix evolution through the
//! noise channel, fidelities, and fidelity-based quantum Fisher information.
//!
//! This module is deliberately independent of the Gaussian covariance
//! machinery and of every closed form in [`crate::qfi`]: states are number
//! bases density matrices, the channel acts through its Kraus decomposition
//! (pure loss followed by a quantum-limited amplifier), and the QFI is
//! extracted from fidelities by finite differences. It exists so the fast
//! paths can be validated against brute force.
//!
//! All states reachable here (sources built by this module, evolved through
//! the channel and through squeezers with real squeezing parameters) have
//! real symmetric density matrices, so the arithmetic stays real throughout.
//! Two-mode states additionally conserve the photon-number difference
//! `delta = n_signal - n_idler`, so they are stored block-by-block in
//! `delta`; this turns `O(D^6)` eigenproblems into `O(D^4)` work.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::gaussian::ChannelParams;
use crate::numerics::LnFactorial;

/// Default bound on source/evolution weight allowed beyond the cutoff.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// Most negative eigenvalue tolerated (then clipped to zero) when taking
/// matrix square roots of nominally positive semidefinite matrices.
const EIG_NEG_TOL: f64 = 1e-8;

/// `m * ln(x)` with the convention `0 * ln(0) = 0`, for log-domain powers.
#[inline]
fn pow_ln(x: f64, m: usize) -> f64 {
    if m == 0 {
        0.0
    } else {
        m as f64 * x.ln()
    }
}

// ---------------------------------------------------------------------------
// Kraus coefficients
// ---------------------------------------------------------------------------

/// Kraus coefficient tables for the loss/amplifier factorisation of the
/// channel, evaluated in the log domain for stability at large cutoffs.
///
/// The pure-loss stage of transmissivity `eta` maps
/// `|n> -> b[k][n] |n-k>` with `b[k][n]^2 = C(n,k) (1-eta)^k eta^(n-k)`;
/// the amplifier stage of gain `g` maps
/// `|n> -> a[l][n] |n+l>` with `a[l][n]^2 = C(n+l,l) (1-1/g)^l g^(-n-1)`.
#[derive(Debug, Clone)]
pub struct KrausSet {
    /// `loss[k][n]`, zero for `k > n`; `n < cutoff_in`.
    pub loss: Vec<Vec<f64>>,
    /// `amp[l][n]`; `n < cutoff_in`, `l <= headroom`.
    pub amp: Vec<Vec<f64>>,
    /// Input cutoff the tables were built for.
    pub cutoff_in: usize,
    /// Number of amplifier quanta retained (`l <= headroom`); the output of
    /// the amplifier stage needs `cutoff_in + headroom` levels.
    pub headroom: usize,
}

impl KrausSet {
    /// Builds the tables for a channel on states of `cutoff_in` levels,
    /// retaining enough amplifier quanta that every input level keeps all but
    /// `tail_tol` of its weight.
    pub fn new(ch: &ChannelParams, cutoff_in: usize, tail_tol: f64) -> Result<Self> {
        let d = ch.decompose();
        let headroom = amp_headroom(d.gain, cutoff_in - 1, tail_tol)?;
        let lf = LnFactorial::new(cutoff_in + headroom + 1);
        let mut loss = Vec::with_capacity(cutoff_in);
        for k in 0..cutoff_in {
            let mut row = vec![0.0; cutoff_in];
            for (n, slot) in row.iter_mut().enumerate().skip(k) {
                // pow_ln handles the eta = 0 and eta = 1 edges without NaNs.
                let ln_sq = lf.ln_choose(n, k) + pow_ln(1.0 - d.eta, k) + pow_ln(d.eta, n - k);
                *slot = (0.5 * ln_sq).exp();
            }
            loss.push(row);
        }
        let ln_g = d.gain.ln();
        let one_minus_inv_g = 1.0 - 1.0 / d.gain;
        let mut amp = Vec::with_capacity(headroom + 1);
        for l in 0..=headroom {
            let mut row = vec![0.0; cutoff_in];
            for (n, slot) in row.iter_mut().enumerate() {
                let ln_sq = lf.ln_choose(n + l, l) + pow_ln(one_minus_inv_g, l) - (n as f64 + 1.0) * ln_g;
                *slot = (0.5 * ln_sq).exp();
            }
            amp.push(row);
        }
        Ok(KrausSet { loss, amp, cutoff_in, headroom })
    }

    /// Largest deviation of `sum_k coeff^2` from one over all input levels,
    /// for both stages (the amplifier sum is allowed to fall short by the
    /// construction tail tolerance).
    pub fn completeness_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for n in 0..self.cutoff_in {
            let s: f64 = self.loss.iter().map(|row| row[n] * row[n]).sum();
            worst = worst.max((s - 1.0).abs());
            let a: f64 = self.amp.iter().map(|row| row[n] * row[n]).sum();
            worst = worst.max((a - 1.0).abs());
        }
        worst
    }
}

/// Smallest number of amplifier quanta `L` such that an input level `n_top`
/// keeps weight `>= 1 - tail_tol` within `n_top + L` levels.
fn amp_headroom(gain: f64, n_top: usize, tail_tol: f64) -> Result<usize> {
    if gain <= 1.0 {
        return Ok(0);
    }
    const MAX_HEADROOM: usize = 20_000;
    let x = 1.0 - 1.0 / gain;
    // Negative-binomial weights w_l = C(n+l, l) x^l / g^(n+1), built by the
    // ratio recurrence w_{l+1}/w_l = x (n+1+l)/(l+1).
    let mut w = (-(n_top as f64 + 1.0) * gain.ln()).exp();
    let mut cum = w;
    let mut l = 0usize;
    while 1.0 - cum > tail_tol {
        if l >= MAX_HEADROOM {
            return Err(Error::convergence(format!(
                "amplifier headroom exceeded {MAX_HEADROOM} quanta (gain {gain}, top level {n_top})"
            )));
        }
        w *= x * (n_top as f64 + 1.0 + l as f64) / (l as f64 + 1.0);
        cum += w;
        l += 1;
    }
    Ok(l)
}

// ---------------------------------------------------------------------------
// Single-mode states
// ---------------------------------------------------------------------------

/// Single-mode density matrix on Fock levels `0 .. cutoff-1`, real symmetric.
#[derive(Debug, Clone)]
pub struct FockDensityMatrix {
    /// Number of retained Fock levels.
    pub cutoff: usize,
    /// `cutoff x cutoff` real symmetric matrix, unit trace up to rounding.
    pub matrix: DMatrix<f64>,
    /// Source weight discarded by the cutoff before renormalisation.
    pub tail_mass: f64,
}

impl FockDensityMatrix {
    /// Trace of the stored matrix.
    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().sum()
    }

    /// Photon-number distribution (the diagonal).
    pub fn photon_distribution(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().cloned().collect()
    }

    /// Mean photon number.
    pub fn mean_photons(&self) -> f64 {
        self.matrix.diagonal().iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }
}

/// Vacuum state `|0><0|`.
pub fn fock_vacuum(cutoff: usize) -> FockDensityMatrix {
    let mut m = DMatrix::zeros(cutoff, cutoff);
    m[(0, 0)] = 1.0;
    FockDensityMatrix { cutoff, matrix: m, tail_mass: 0.0 }
}

/// Thermal state of mean occupation `n_bar` (geometric diagonal), retained
/// weight renormalised to unit trace.
pub fn fock_thermal(n_bar: f64, cutoff: usize) -> Result<FockDensityMatrix> {
    if !n_bar.is_finite() || n_bar < 0.0 {
        return Err(Error::domain(format!("thermal occupation {n_bar} must be finite and >= 0")));
    }
    if n_bar == 0.0 {
        return Ok(fock_vacuum(cutoff));
    }
    let ratio = n_bar / (n_bar + 1.0);
    let mut p = 1.0 / (n_bar + 1.0);
    let mut diag = Vec::with_capacity(cutoff);
    let mut total = 0.0;
    for _ in 0..cutoff {
        diag.push(p);
        total += p;
        p *= ratio;
    }
    let mut m = DMatrix::zeros(cutoff, cutoff);
    for (n, &w) in diag.iter().enumerate() {
        m[(n, n)] = w / total;
    }
    Ok(FockDensityMatrix { cutoff, matrix: m, tail_mass: 1.0 - total })
}

/// Squeezed vacuum of power gain `G = e^{2r}`: the pure state
/// `sum_m c_{2m} |2m>` with `c_{2m} = tanh(r)^m sqrt((2m)!) / (2^m m!) / sqrt(cosh r)`,
/// renormalised over the retained levels.
pub fn fock_squeezed_vacuum(gain: f64, cutoff: usize) -> Result<FockDensityMatrix> {
    if !gain.is_finite() || gain < 1.0 {
        return Err(Error::domain(format!("squeezing gain {gain} must be finite and >= 1")));
    }
    let r = 0.5 * gain.ln();
    let t = r.tanh();
    let lf = LnFactorial::new(cutoff.max(2));
    let mut amp = vec![0.0; cutoff];
    amp[0] = 1.0;
    let ln_norm = -0.5 * r.cosh().ln();
    for m in 1..=(cutoff - 1) / 2 {
        let ln_c = pow_ln(t, m) + 0.5 * lf.ln_fact(2 * m) - m as f64 * 2f64.ln() - lf.ln_fact(m);
        amp[2 * m] = (ln_c).exp();
    }
    let norm0 = ln_norm.exp();
    for a in amp.iter_mut() {
        *a *= norm0;
    }
    let total: f64 = amp.iter().map(|a| a * a).sum();
    let scale = 1.0 / total.sqrt();
    let mut m = DMatrix::zeros(cutoff, cutoff);
    for i in 0..cutoff {
        for j in 0..cutoff {
            m[(i, j)] = amp[i] * scale * amp[j] * scale;
        }
    }
    Ok(FockDensityMatrix { cutoff, matrix: m, tail_mass: 1.0 - total })
}

// ---------------------------------------------------------------------------
// Two-mode states (signal, idler), blocked by delta = n_signal - n_idler
// ---------------------------------------------------------------------------

/// Two-mode density matrix, block-diagonal in `delta = n_signal - n_idler`.
///
/// Block `delta` collects the matrix elements
/// `<n_a + delta, n_a| rho |n_b + delta, n_b>` (signal level first) and is
/// indexed by the idler levels `n_a, n_b` in `idler_range(delta)`.
#[derive(Debug, Clone)]
pub struct TwoModeFock {
    /// Signal-mode cutoff (may exceed the idler cutoff after amplification).
    pub cutoff_signal: usize,
    /// Idler-mode cutoff.
    pub cutoff_idler: usize,
    /// Blocks for `delta = -(cutoff_idler-1) ..= cutoff_signal-1`, in order.
    pub blocks: Vec<DMatrix<f64>>,
    /// Source weight discarded by the cutoff before renormalisation.
    pub tail_mass: f64,
}

impl TwoModeFock {
    /// Index of block `delta` within `blocks`.
    #[inline]
    fn block_index(&self, delta: isize) -> usize {
        (delta + self.cutoff_idler as isize - 1) as usize
    }

    /// Smallest idler level appearing in block `delta`.
    #[inline]
    pub fn idler_start(delta: isize) -> usize {
        (-delta).max(0) as usize
    }

    /// Number of (signal, idler) pairs in block `delta`.
    fn block_len(cutoff_signal: usize, cutoff_idler: usize, delta: isize) -> usize {
        let lo = Self::idler_start(delta);
        let hi = (cutoff_idler as isize - 1).min(cutoff_signal as isize - 1 - delta);
        if hi < lo as isize {
            0
        } else {
            (hi - lo as isize + 1) as usize
        }
    }

    /// All-zero state container with the given cutoffs.
    fn zeros(cutoff_signal: usize, cutoff_idler: usize) -> Self {
        let blocks = (-(cutoff_idler as isize - 1)..=cutoff_signal as isize - 1)
            .map(|delta| {
                let len = Self::block_len(cutoff_signal, cutoff_idler, delta);
                DMatrix::zeros(len, len)
            })
            .collect();
        TwoModeFock { cutoff_signal, cutoff_idler, blocks, tail_mass: 0.0 }
    }

    /// Trace over all blocks.
    pub fn trace(&self) -> f64 {
        self.blocks.iter().map(|b| b.diagonal().sum()).sum()
    }

    /// Joint photon-number distribution `P[n_signal][n_idler]`.
    pub fn joint_distribution(&self) -> Vec<Vec<f64>> {
        let mut p = vec![vec![0.0; self.cutoff_idler]; self.cutoff_signal];
        for delta in -(self.cutoff_idler as isize - 1)..=self.cutoff_signal as isize - 1 {
            let blk = &self.blocks[self.block_index(delta)];
            let lo = Self::idler_start(delta);
            for j in 0..blk.nrows() {
                let n_a = lo + j;
                let n_s = (n_a as isize + delta) as usize;
                p[n_s][n_a] = blk[(j, j)];
            }
        }
        p
    }

    /// Dense matrix on the composite basis `|n_signal * cutoff_idler + n_idler>`
    /// (for small-cutoff validation only).
    pub fn dense(&self) -> DMatrix<f64> {
        let d = self.cutoff_signal * self.cutoff_idler;
        let mut m = DMatrix::zeros(d, d);
        for delta in -(self.cutoff_idler as isize - 1)..=self.cutoff_signal as isize - 1 {
            let blk = &self.blocks[self.block_index(delta)];
            let lo = Self::idler_start(delta);
            for j in 0..blk.nrows() {
                for k in 0..blk.ncols() {
                    let (na, nb) = (lo + j, lo + k);
                    let (sa, sb) = ((na as isize + delta) as usize, (nb as isize + delta) as usize);
                    m[(sa * self.cutoff_idler + na, sb * self.cutoff_idler + nb)] = blk[(j, k)];
                }
            }
        }
        m
    }
}

/// Two-mode squeezed vacuum of power gain `G = e^{2r}`: the pure state
/// `sum_n lambda_n |n, n>` with `lambda_n = tanh(r)^n / cosh(r)`, renormalised
/// over the retained levels. Mode order is (signal, idler).
pub fn fock_tmsv(gain: f64, cutoff: usize) -> Result<TwoModeFock> {
    if !gain.is_finite() || gain < 1.0 {
        return Err(Error::domain(format!("squeezing gain {gain} must be finite and >= 1")));
    }
    let r = 0.5 * gain.ln();
    let t = r.tanh();
    let mut lambda = Vec::with_capacity(cutoff);
    let mut v = 1.0 / r.cosh();
    for _ in 0..cutoff {
        lambda.push(v);
        v *= t;
    }
    let total: f64 = lambda.iter().map(|l| l * l).sum();
    let scale = 1.0 / total.sqrt();
    let mut st = TwoModeFock::zeros(cutoff, cutoff);
    // All weight sits in the delta = 0 block.
    let idx = st.block_index(0);
    let blk = &mut st.blocks[idx];
    for i in 0..cutoff {
        for j in 0..cutoff {
            blk[(i, j)] = lambda[i] * scale * lambda[j] * scale;
        }
    }
    st.tail_mass = 1.0 - total;
    Ok(st)
}

// ---------------------------------------------------------------------------
// Channel application
// ---------------------------------------------------------------------------

/// Evolves a single-mode state through the channel by Kraus summation:
/// pure loss first, then the quantum-limited amplifier. The output cutoff
/// grows by the amplifier headroom needed to keep truncation below
/// `tail_tol`.
pub fn apply_channel_fock(
    state: &FockDensityMatrix,
    ch: &ChannelParams,
    tail_tol: f64,
) -> Result<FockDensityMatrix> {
    let d_in = state.cutoff;
    let kraus = KrausSet::new(ch, d_in, tail_tol)?;
    // Loss stage: rho'_{m,n} = sum_k b[k][m+k] b[k][n+k] rho_{m+k,n+k}.
    let mut lossy = DMatrix::<f64>::zeros(d_in, d_in);
    for (k, row) in kraus.loss.iter().enumerate() {
        for m in 0..d_in - k {
            for n in 0..d_in - k {
                lossy[(m, n)] += row[m + k] * row[n + k] * state.matrix[(m + k, n + k)];
            }
        }
    }
    // Amplifier stage: rho''_{m+l,n+l} += a[l][m] a[l][n] rho'_{m,n}.
    let d_out = d_in + kraus.headroom;
    let mut out = DMatrix::zeros(d_out, d_out);
    for (l, row) in kraus.amp.iter().enumerate() {
        for m in 0..d_in {
            for n in 0..d_in {
                out[(m + l, n + l)] += row[m] * row[n] * lossy[(m, n)];
            }
        }
    }
    let trace: f64 = out.diagonal().sum();
    if (1.0 - trace).abs() > 10.0 * tail_tol.max(1e-13) + state.tail_mass.abs() {
        return Err(Error::convergence(format!(
            "channel application lost trace {:.3e} beyond the requested tail tolerance",
            1.0 - trace
        )));
    }
    Ok(FockDensityMatrix { cutoff: d_out, matrix: out, tail_mass: state.tail_mass + (1.0 - trace) })
}

/// Evolves the signal mode of a two-mode state through the channel.
/// Loss moves weight from block `delta` to `delta - k`; amplification to
/// `delta + l`. The signal cutoff grows by the amplifier headroom.
pub fn apply_channel_fock_signal(
    state: &TwoModeFock,
    ch: &ChannelParams,
    tail_tol: f64,
) -> Result<TwoModeFock> {
    let d_s = state.cutoff_signal;
    let d_a = state.cutoff_idler;
    let kraus = KrausSet::new(ch, d_s, tail_tol)?;
    let d_s_out = d_s + kraus.headroom;

    // Loss stage, into an intermediate container with the input cutoffs.
    let mut lossy = TwoModeFock::zeros(d_s, d_a);
    for delta in -(d_a as isize - 1)..=d_s as isize - 1 {
        let src = &state.blocks[state.block_index(delta)];
        if src.nrows() == 0 {
            continue;
        }
        let lo = TwoModeFock::idler_start(delta);
        for (k, row) in kraus.loss.iter().enumerate() {
            let delta_out = delta - k as isize;
            if delta_out < -(d_a as isize - 1) {
                break;
            }
            let idx_out = lossy.block_index(delta_out);
            let lo_out = TwoModeFock::idler_start(delta_out);
            let dst = &mut lossy.blocks[idx_out];
            for i in 0..src.nrows() {
                let n_a = lo + i;
                let n_s = (n_a as isize + delta) as usize;
                if n_s < k || n_a < lo_out {
                    continue;
                }
                let ci = row[n_s];
                if ci == 0.0 {
                    continue;
                }
                for j in 0..src.ncols() {
                    let m_a = lo + j;
                    let m_s = (m_a as isize + delta) as usize;
                    if m_s < k || m_a < lo_out {
                        continue;
                    }
                    dst[(n_a - lo_out, m_a - lo_out)] += ci * row[m_s] * src[(i, j)];
                }
            }
        }
    }

    // Amplifier stage into the enlarged signal space.
    let mut out = TwoModeFock::zeros(d_s_out, d_a);
    for delta in -(d_a as isize - 1)..=d_s as isize - 1 {
        let src = &lossy.blocks[lossy.block_index(delta)];
        if src.nrows() == 0 {
            continue;
        }
        let lo = TwoModeFock::idler_start(delta);
        for (l, row) in kraus.amp.iter().enumerate() {
            let delta_out = delta + l as isize;
            let idx_out = out.block_index(delta_out);
            let lo_out = TwoModeFock::idler_start(delta_out);
            let dst = &mut out.blocks[idx_out];
            for i in 0..src.nrows() {
                let n_a = lo + i;
                let n_s = (n_a as isize + delta) as usize;
                let ci = row[n_s];
                if ci == 0.0 {
                    continue;
                }
                for j in 0..src.ncols() {
                    let m_a = lo + j;
                    let m_s = (m_a as isize + delta) as usize;
                    dst[(n_a - lo_out, m_a - lo_out)] += ci * row[m_s] * src[(i, j)];
                }
            }
        }
    }
    let trace = out.trace();
    if (1.0 - trace).abs() > 10.0 * tail_tol.max(1e-13) + state.tail_mass.abs() {
        return Err(Error::convergence(format!(
            "channel application lost trace {:.3e} beyond the requested tail tolerance",
            1.0 - trace
        )));
    }
    out.tail_mass = state.tail_mass + (1.0 - trace);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Squeezing unitaries on the truncated space
// ---------------------------------------------------------------------------

/// Matrix exponential of a small-norm-scalable real matrix by
/// scaling-and-squaring with a Taylor series.
fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.amax() * n as f64; // cheap upper bound on the 1-norm
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scaled = a * 2f64.powi(-(s as i32));
    let mut result = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=60u32 {
        term = (&term * &scaled) / k as f64;
        let t = term.amax();
        result += &term;
        if t < 1e-18 {
            break;
        }
    }
    for _ in 0..s {
        result = &result * &result;
    }
    result
}

/// Applies the single-mode squeezer `exp(r (adag^2 - a^2) / 2)` (so `r > 0`
/// amplifies the `q` quadrature, matching
/// [`crate::gaussian::SymplecticOp::Squeeze`]) to a state, as an exactly
/// orthogonal matrix on the truncated space.
pub fn apply_squeeze_fock(state: &FockDensityMatrix, r: f64) -> FockDensityMatrix {
    let d = state.cutoff;
    let mut gen = DMatrix::zeros(d, d);
    for n in 0..d.saturating_sub(2) {
        let c = 0.5 * r * (((n + 1) * (n + 2)) as f64).sqrt();
        gen[(n + 2, n)] = c;
        gen[(n, n + 2)] = -c;
    }
    let u = expm(&gen);
    FockDensityMatrix {
        cutoff: d,
        matrix: &u * &state.matrix * u.transpose(),
        tail_mass: state.tail_mass,
    }
}

/// Applies the two-mode squeezer `exp(r (adag_s adag_a - a_s a_a))` (so
/// `r > 0` correlates the `q` quadratures, matching
/// [`crate::gaussian::SymplecticOp::TwoModeSqueeze`]) blockwise; each block
/// transforms by an exactly orthogonal matrix.
pub fn apply_two_mode_squeeze_fock(state: &TwoModeFock, r: f64) -> TwoModeFock {
    let mut out = state.clone();
    for delta in -(state.cutoff_idler as isize - 1)..=state.cutoff_signal as isize - 1 {
        let idx = state.block_index(delta);
        let blk = &state.blocks[idx];
        let m = blk.nrows();
        if m == 0 {
            continue;
        }
        let lo = TwoModeFock::idler_start(delta);
        let mut gen = DMatrix::zeros(m, m);
        for j in 0..m.saturating_sub(1) {
            let n_a = (lo + j) as f64;
            let n_s = n_a + delta as f64;
            let c = r * ((n_s + 1.0) * (n_a + 1.0)).sqrt();
            gen[(j + 1, j)] = c;
            gen[(j, j + 1)] = -c;
        }
        let u = expm(&gen);
        out.blocks[idx] = &u * blk * u.transpose();
    }
    out
}

// ---------------------------------------------------------------------------
// Fidelity and fidelity-based QFI
// ---------------------------------------------------------------------------

/// Square root of a real symmetric positive semidefinite matrix, clipping
/// slightly negative eigenvalues to zero.
fn sqrt_psd(m: &DMatrix<f64>, label: &str) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut worst = 0.0f64;
    let roots: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| {
            if l < worst {
                worst = l;
            }
            l.max(0.0).sqrt()
        })
        .collect();
    if worst < -EIG_NEG_TOL {
        return Err(Error::convergence(format!(
            "{label}: eigenvalue {worst:.3e} too negative for a density matrix square root"
        )));
    }
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (c, &root) in roots.iter().enumerate() {
        scaled.column_mut(c).scale_mut(root);
    }
    Ok(&scaled * v.transpose())
}

/// `Tr sqrt(sqrt(a) b sqrt(a))` for one pair of symmetric PSD blocks,
/// computed as the nuclear norm `|| sqrt(a) sqrt(b) ||_1`. The trace-norm
/// form keeps eigenvalue rounding noise quadratic in the fidelity instead of
/// entering through a square root.
fn fidelity_block(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let ra = sqrt_psd(a, "fidelity")?;
    let rb = sqrt_psd(b, "fidelity")?;
    let prod = &ra * &rb;
    Ok(prod.singular_values().sum())
}

/// Pads a matrix with zero rows/columns up to `dim`.
fn pad_to(m: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    if m.nrows() == dim {
        return m.clone();
    }
    let mut out = DMatrix::zeros(dim, dim);
    out.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
    out
}

/// Uhlmann fidelity `Tr sqrt(sqrt(rho) sigma sqrt(rho))` between two
/// single-mode states (padded to a common cutoff).
pub fn fidelity(a: &FockDensityMatrix, b: &FockDensityMatrix) -> Result<f64> {
    let dim = a.cutoff.max(b.cutoff);
    fidelity_block(&pad_to(&a.matrix, dim), &pad_to(&b.matrix, dim))
}

/// Uhlmann fidelity between two two-mode states, computed block-by-block in
/// the conserved photon-number difference.
pub fn fidelity_two_mode(a: &TwoModeFock, b: &TwoModeFock) -> Result<f64> {
    if a.cutoff_idler != b.cutoff_idler {
        return Err(Error::domain("two-mode fidelity needs matching idler cutoffs"));
    }
    let d_a = a.cutoff_idler;
    let d_s = a.cutoff_signal.max(b.cutoff_signal);
    let mut f = 0.0;
    for delta in -(d_a as isize - 1)..=d_s as isize - 1 {
        let len = TwoModeFock::block_len(d_s, d_a, delta);
        if len == 0 {
            continue;
        }
        let take = |st: &TwoModeFock| -> DMatrix<f64> {
            if delta <= st.cutoff_signal as isize - 1 {
                pad_to(&st.blocks[st.block_index(delta)], len)
            } else {
                DMatrix::zeros(len, len)
            }
        };
        let blk_a = take(a);
        let blk_b = take(b);
        if blk_a.amax() == 0.0 || blk_b.amax() == 0.0 {
            continue;
        }
        f += fidelity_block(&blk_a, &blk_b)?;
    }
    Ok(f)
}

/// Anything with a pairwise fidelity; lets one finite-difference driver serve
/// both single- and two-mode families.
pub trait FidelityState {
    fn fidelity_with(&self, other: &Self) -> Result<f64>;
}

impl FidelityState for FockDensityMatrix {
    fn fidelity_with(&self, other: &Self) -> Result<f64> {
        fidelity(self, other)
    }
}

impl FidelityState for TwoModeFock {
    fn fidelity_with(&self, other: &Self) -> Result<f64> {
        fidelity_two_mode(self, other)
    }
}

/// Quantum Fisher information of a state family `n_b -> rho(n_b)` from the
/// curvature of the fidelity:
/// `J = -4 d^2/de^2 F(rho(n_b), rho(n_b + e))` at `e = 0`,
/// evaluated by a symmetric second difference with one Richardson step
/// (steps `eps` and `eps/2`).
///
/// The default step is `0.02 * n_b` (floored at 1e-9), shrunk if needed to
/// keep `n_b - eps` above the physicality floor.
pub fn qfi_fidelity_fd<S, F>(family: F, ch_kappa: f64, n_b: f64, eps: Option<f64>) -> Result<f64>
where
    S: FidelityState,
    F: Fn(f64) -> Result<S>,
{
    let floor = (ch_kappa - 1.0).max(0.0);
    if n_b <= floor {
        return Err(Error::domain(format!(
            "fidelity-based QFI needs n_b strictly above the physicality floor {floor}"
        )));
    }
    let mut step = eps.unwrap_or((0.02 * n_b).max(1e-9));
    step = step.min(0.5 * (n_b - floor));
    if step <= 0.0 {
        return Err(Error::domain("finite-difference step collapsed to zero"));
    }
    let center = family(n_b)?;
    let j_of = |e: f64| -> Result<f64> {
        let plus = family(n_b + e)?;
        let minus = family(n_b - e)?;
        let fp = center.fidelity_with(&plus)?;
        let fm = center.fidelity_with(&minus)?;
        Ok(-4.0 * (fp + fm - 2.0) / (e * e))
    };
    let j1 = j_of(step)?;
    let j2 = j_of(0.5 * step)?;
    Ok((4.0 * j2 - j1) / 3.0)
}
