//! Shared numerical kernels: adaptive Gauss-Kronrod quadrature, golden-section
//! optimisation, Richardson-extrapolated finite differences, and a cached
//! log-factorial table.
//!
//! These are deliberately small and self-contained; every routine reports
//! failure through [`Error::Convergence`] instead of silently returning a
//! low-quality answer.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

// 15-point Kronrod abscissae (positive half, descending), 7-point Gauss subset
// at the odd positions. Standard QUADPACK values.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_33,
    0.949_107_912_342_758_524_526_189_684_047_85,
    0.864_864_423_359_769_072_789_712_788_640_93,
    0.741_531_185_599_394_439_863_864_773_280_79,
    0.586_087_235_467_691_130_294_144_838_258_73,
    0.405_845_151_377_397_166_906_606_412_076_96,
    0.207_784_955_007_898_467_600_689_403_773_24,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_97,
    0.063_092_092_629_978_553_290_700_663_189_2,
    0.104_790_010_322_250_183_839_876_322_541_52,
    0.140_653_259_715_525_918_745_189_590_510_24,
    0.169_004_726_639_267_902_826_583_426_598_55,
    0.190_350_578_064_785_409_913_256_402_421_01,
    0.204_432_940_075_298_892_414_161_999_234_65,
    0.209_482_141_084_727_828_012_999_174_891_71,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_08,
    0.279_705_391_489_276_667_901_467_771_423_78,
    0.381_830_050_505_118_944_950_369_775_488_98,
    0.417_959_183_673_469_387_755_102_040_816_33,
];

/// Result of an adaptive quadrature run.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    /// Estimated integral value.
    pub value: f64,
    /// Estimated absolute error.
    pub abs_error: f64,
    /// Number of integrand evaluations performed.
    pub evaluations: usize,
}

/// One Gauss-Kronrod 7/15 evaluation on `[a, b]`.
///
/// Returns the Kronrod estimate together with `|K15 - G7|` as a local error
/// surrogate.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (i, &x) in XGK.iter().enumerate().take(7) {
        let dx = h * x;
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    kronrod *= h;
    gauss *= h;
    (kronrod, (kronrod - gauss).abs())
}

/// Work item for the global-adaptive subdivision queue, ordered by local
/// error estimate so the worst interval is refined first.
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Maximum number of interval bisections before giving up.
const MAX_SEGMENTS: usize = 4000;

/// Globally adaptive Gauss-Kronrod 7/15 integration of `f` over `[a, b]`.
///
/// Subdivides the interval with the largest local error estimate until the
/// accumulated error estimate drops below `rel_tol` times the integral
/// magnitude (with a tiny absolute floor for integrals near zero).
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> Result<Quadrature> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain("integration endpoints must be finite"));
    }
    let (value, error) = gk15(f, a, b);
    let mut evaluations = 15usize;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total_value = value;
    let mut total_error = error;
    let abs_floor = 1e-300;

    while total_error > rel_tol * total_value.abs().max(abs_floor) {
        if heap.len() >= MAX_SEGMENTS {
            return Err(Error::convergence(format!(
                "adaptive quadrature hit the {MAX_SEGMENTS}-segment limit (err {:.3e}, value {:.6e})",
                total_error, total_value
            )));
        }
        let worst = heap.pop().expect("queue cannot be empty while refining");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::convergence(
                "adaptive quadrature cannot bisect further at machine precision".to_string(),
            ));
        }
        let (lv, le) = gk15(f, worst.a, mid);
        let (rv, re) = gk15(f, mid, worst.b);
        evaluations += 30;
        total_value += lv + rv - worst.value;
        total_error += le + re - worst.error;
        heap.push(Segment { a: worst.a, b: mid, value: lv, error: le });
        heap.push(Segment { a: mid, b: worst.b, value: rv, error: re });
    }

    Ok(Quadrature { value: total_value, abs_error: total_error, evaluations })
}

/// Integrates `g(omega)` over the whole real line via the compactifying
/// substitution `omega = scale * tan(u)`, `u` in `(-pi/2, pi/2)`.
///
/// `scale` should match the natural width of the integrand (for a Lorentzian
/// of half-width `gamma/2`, pass something of that order) so the transformed
/// integrand is well resolved.
pub fn integrate_real_line<F: Fn(f64) -> f64>(g: &F, scale: f64, rel_tol: f64) -> Result<Quadrature> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::domain("tan-substitution scale must be positive"));
    }
    let half_pi = std::f64::consts::FRAC_PI_2;
    let transformed = |u: f64| {
        let c = u.cos();
        // cos(u) -> 0 only at the endpoints, which quadrature nodes never hit
        // exactly; the integrand must decay at least like 1/omega^2 for the
        // product to stay bounded.
        let sec2 = 1.0 / (c * c);
        g(scale * u.tan()) * scale * sec2
    };
    // Stay strictly inside the open interval to avoid evaluating tan at +-pi/2.
    let eps = 1e-14;
    integrate_adaptive(&transformed, -half_pi + eps, half_pi - eps, rel_tol)
}

/// Result of a golden-section maximisation.
#[derive(Debug, Clone, Copy)]
pub struct GoldenMax {
    /// Abscissa of the located maximum.
    pub argmax: f64,
    /// Function value at `argmax`.
    pub max_value: f64,
    /// True when the maximum landed on (or within tolerance of) a bracket
    /// endpoint, meaning the true optimum may lie outside the bracket.
    pub at_boundary: bool,
    /// Number of function evaluations used.
    pub evaluations: usize,
}

const GOLDEN_MAX_ITER: usize = 200;

/// Golden-section maximisation of a unimodal `f` on `[a, b]`.
///
/// The bracket is shrunk until its width falls below
/// `tol * max(|a|, |b|, 1)`. For multimodal functions, pre-scan with
/// [`grid_max`] to bracket the global optimum first.
pub fn golden_max<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<GoldenMax> {
    if !(a < b) {
        return Err(Error::domain("golden-section bracket must satisfy a < b"));
    }
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let (orig_a, orig_b) = (a, b);
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut evaluations = 2usize;
    let width_tol = tol * orig_a.abs().max(orig_b.abs()).max(1.0);
    for _ in 0..GOLDEN_MAX_ITER {
        if hi - lo <= width_tol {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
        evaluations += 1;
    }
    let (argmax, max_value) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    let span = orig_b - orig_a;
    let at_boundary = (argmax - orig_a).abs() <= 2.0 * width_tol.max(1e-12 * span)
        || (orig_b - argmax).abs() <= 2.0 * width_tol.max(1e-12 * span);
    Ok(GoldenMax { argmax, max_value, at_boundary, evaluations })
}

/// Evaluates `f` on an `n`-point grid over `[a, b]` (log-spaced when
/// `log_space` is set) and returns the bracketing triple around the best
/// sample: `(left neighbour, best, right neighbour)`.
pub fn grid_max<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, n: usize, log_space: bool) -> Result<(f64, f64, f64)> {
    if n < 3 {
        return Err(Error::domain("grid scan needs at least 3 points"));
    }
    if log_space && a <= 0.0 {
        return Err(Error::domain("log-spaced grid needs a > 0"));
    }
    let xs: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            if log_space {
                (a.ln() + t * (b.ln() - a.ln())).exp()
            } else {
                a + t * (b - a)
            }
        })
        .collect();
    let mut best = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &x) in xs.iter().enumerate() {
        let v = f(x);
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    let left = if best == 0 { xs[0] } else { xs[best - 1] };
    let right = if best == n - 1 { xs[n - 1] } else { xs[best + 1] };
    Ok((left, xs[best], right))
}

/// Central first derivative with one step of Richardson extrapolation,
/// accurate to O(h^4) for smooth `f`.
pub fn derivative_richardson<F: Fn(f64) -> f64>(f: &F, x: f64, h: f64) -> f64 {
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let d1 = d(h);
    let d2 = d(0.5 * h);
    (4.0 * d2 - d1) / 3.0
}

/// Central second derivative of a function with known centre value `f0 = f(x)`,
/// with one step of Richardson extrapolation (O(h^4) for smooth `f`).
pub fn second_derivative_richardson<F: Fn(f64) -> f64>(f: &F, x: f64, f0: f64, h: f64) -> f64 {
    let d = |h: f64| (f(x + h) - 2.0 * f0 + f(x - h)) / (h * h);
    let d1 = d(h);
    let d2 = d(0.5 * h);
    (4.0 * d2 - d1) / 3.0
}

/// Cached table of ln(n!) for binomial and related coefficients in the
/// log domain.
#[derive(Debug, Clone)]
pub struct LnFactorial {
    table: Vec<f64>,
}

impl LnFactorial {
    /// Builds the table for arguments `0..=n_max`.
    pub fn new(n_max: usize) -> Self {
        let mut table = Vec::with_capacity(n_max + 1);
        table.push(0.0);
        let mut acc = 0.0f64;
        for n in 1..=n_max {
            acc += (n as f64).ln();
            table.push(acc);
        }
        LnFactorial { table }
    }

    /// Largest argument covered by the table.
    pub fn n_max(&self) -> usize {
        self.table.len() - 1
    }

    /// ln(n!).
    #[inline]
    pub fn ln_fact(&self, n: usize) -> f64 {
        self.table[n]
    }

    /// ln C(n, k) for k <= n.
    #[inline]
    pub fn ln_choose(&self, n: usize, k: usize) -> f64 {
        debug_assert!(k <= n);
        self.table[n] - self.table[k] - self.table[n - k]
    }
}

/// Linearly spaced grid of `n` points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Logarithmically spaced grid of `n` points from `a` to `b` inclusive.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| (a.ln() + (b.ln() - a.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}
