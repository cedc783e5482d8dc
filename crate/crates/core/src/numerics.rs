//! Small numerical kernels shared by the rest of the crate: adaptive
//! Gauss–Legendre quadrature, a Brent-style bracketed root finder, central
//! finite differences and an equilibrated Cholesky inverse for small dense
//! symmetric positive definite matrices.
//!
//! Everything here is a pure function of its inputs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("quadrature did not reach tolerance after {subdivisions} subdivisions (estimate {estimate:e}, error {error:e})")]
    ToleranceNotMet {
        estimate: f64,
        error: f64,
        subdivisions: usize,
    },
    #[error("integrand returned a non-finite value at x = {at}")]
    NonFiniteIntegrand { at: f64 },
    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo:e}, f(hi) = {f_hi:e}")]
    NoSignChange {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },
    #[error("root finder exhausted {iterations} iterations (bracket width {width:e})")]
    MaxIterations { iterations: usize, width: f64 },
    #[error("function returned a non-finite value while differencing coordinate {index}")]
    NonFiniteValue { index: usize },
    #[error("matrix is not positive definite (equilibrated condition estimate {condition:e})")]
    NotPositiveDefinite { condition: f64 },
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("invalid numerical specification: {0}")]
    InvalidSpec(&'static str),
}

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_subdivisions: 1 << 14,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<(), NumericsError> {
        if !(self.abs_tol > 0.0) {
            return Err(NumericsError::InvalidSpec("abs_tol must be positive"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(NumericsError::InvalidSpec("rel_tol must be positive"));
        }
        if self.max_subdivisions < 1 {
            return Err(NumericsError::InvalidSpec("max_subdivisions must be at least 1"));
        }
        Ok(())
    }
}

/// Bracket and stopping rule for [`find_root_monotonic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootSpec {
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    /// Relative tolerance on the root location.
    pub x_tol: f64,
    pub max_iter: usize,
}

impl RootSpec {
    pub fn new(bracket_lo: f64, bracket_hi: f64) -> Self {
        Self {
            bracket_lo,
            bracket_hi,
            x_tol: 1e-14,
            max_iter: 200,
        }
    }
}

const GL_ORDER: usize = 20;

/// Nodes and weights of the Gauss–Legendre rule on [-1, 1], computed once by
/// Newton iteration on the three-term Legendre recurrence.
fn gauss_legendre_rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut rule = Vec::with_capacity(n);
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
        }
        rule
    })
}

fn panel_rule<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<f64, NumericsError> {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut sum = 0.0;
    for &(x, w) in gauss_legendre_rule() {
        let z = mid + half * x;
        let v = f(z);
        if !v.is_finite() {
            return Err(NumericsError::NonFiniteIntegrand { at: z });
        }
        sum += w * v;
    }
    Ok(sum * half)
}

struct Panel {
    lo: f64,
    hi: f64,
    left: f64,
    right: f64,
    error: f64,
}

impl Panel {
    fn new<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, whole: f64) -> Result<Self, NumericsError> {
        let mid = 0.5 * (lo + hi);
        let left = panel_rule(f, lo, mid)?;
        let right = panel_rule(f, mid, hi)?;
        Ok(Self {
            lo,
            hi,
            left,
            right,
            error: (whole - left - right).abs(),
        })
    }

    fn value(&self) -> f64 {
        self.left + self.right
    }
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Integrates `f` over `[lo, hi]` by globally adaptive bisection with a
/// 20-point Gauss–Legendre panel rule. The panel error is the difference
/// between the whole-panel rule and the sum over its two halves.
///
/// Reversed limits return exactly the negated forward integral.
pub fn integrate<F>(f: F, lo: f64, hi: f64, spec: &QuadratureSpec) -> Result<f64, NumericsError>
where
    F: Fn(f64) -> f64,
{
    spec.validate()?;
    if lo == hi {
        return Ok(0.0);
    }
    if lo > hi {
        return integrate(f, hi, lo, spec).map(|v| -v);
    }

    let whole = panel_rule(&f, lo, hi)?;
    let first = Panel::new(&f, lo, hi, whole)?;
    let mut total = first.value();
    let mut total_err = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let mut subdivisions = 1usize;

    loop {
        if total_err <= spec.abs_tol.max(spec.rel_tol * total.abs()) {
            // Re-sum to avoid drift from the running updates.
            return Ok(heap.iter().map(Panel::value).sum());
        }
        if subdivisions >= spec.max_subdivisions {
            return Err(NumericsError::ToleranceNotMet {
                estimate: total,
                error: total_err,
                subdivisions,
            });
        }
        let worst = heap.pop().expect("heap never empties");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // Panel can no longer be split in floating point.
            return Err(NumericsError::ToleranceNotMet {
                estimate: total,
                error: total_err,
                subdivisions,
            });
        }
        let left = Panel::new(&f, worst.lo, mid, worst.left)?;
        let right = Panel::new(&f, mid, worst.hi, worst.right)?;
        total += left.value() + right.value() - worst.value();
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        subdivisions += 1;
    }
}

/// Finds the root of a continuous, strictly monotonic `f` inside the bracket
/// with Brent's method (inverse quadratic / secant steps guarded by
/// bisection). The returned point always lies inside the initial bracket.
pub fn find_root_monotonic<F>(f: F, spec: &RootSpec) -> Result<f64, NumericsError>
where
    F: Fn(f64) -> f64,
{
    if !(spec.bracket_lo < spec.bracket_hi) {
        return Err(NumericsError::InvalidSpec("bracket_lo must be below bracket_hi"));
    }
    if !(spec.x_tol > 0.0) {
        return Err(NumericsError::InvalidSpec("x_tol must be positive"));
    }
    let (mut a, mut b) = (spec.bracket_lo, spec.bracket_hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if !fa.is_finite() || !fb.is_finite() {
        return Err(NumericsError::NonFiniteValue { index: 0 });
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(NumericsError::NoSignChange {
            lo: a,
            hi: b,
            f_lo: fa,
            f_hi: fb,
        });
    }

    let abs_floor = 1e-3 * spec.x_tol * (spec.bracket_hi - spec.bracket_lo);
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..spec.max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * (spec.x_tol * b.abs()).max(abs_floor);
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b.clamp(spec.bracket_lo, spec.bracket_hi));
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
        if !fb.is_finite() {
            return Err(NumericsError::NonFiniteValue { index: 0 });
        }
    }
    Err(NumericsError::MaxIterations {
        iterations: spec.max_iter,
        width: (c - b).abs(),
    })
}

/// Central-difference gradient with per-coordinate step
/// `step * max(1, |x_i|)`.
pub fn finite_difference_gradient<F>(f: F, x0: &[f64], step: f64) -> Result<Vec<f64>, NumericsError>
where
    F: Fn(&[f64]) -> f64,
{
    let steps: Vec<f64> = x0.iter().map(|x| step * x.abs().max(1.0)).collect();
    finite_difference_gradient_with_steps(f, x0, &steps)
}

/// Central-difference gradient with an explicit step for every coordinate.
/// Needed when coordinates live on very different scales (the Snell
/// constant is of order 1e-4 s/m).
pub fn finite_difference_gradient_with_steps<F>(
    f: F,
    x0: &[f64],
    steps: &[f64],
) -> Result<Vec<f64>, NumericsError>
where
    F: Fn(&[f64]) -> f64,
{
    if steps.len() != x0.len() {
        return Err(NumericsError::InvalidSpec("one step per coordinate required"));
    }
    if steps.iter().any(|h| !(*h > 0.0)) {
        return Err(NumericsError::InvalidSpec("finite-difference steps must be positive"));
    }
    let mut x = x0.to_vec();
    let mut grad = Vec::with_capacity(x0.len());
    for (i, &h) in steps.iter().enumerate() {
        x[i] = x0[i] + h;
        let up = f(&x);
        x[i] = x0[i] - h;
        let down = f(&x);
        x[i] = x0[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(NumericsError::NonFiniteValue { index: i });
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Ratio of extreme eigenvalues of a symmetric matrix. Infinite when the
/// smallest eigenvalue is not positive.
pub fn spd_condition_number(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn equilibrate(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>), NumericsError> {
    let n = m.nrows();
    let mut scale = Vec::with_capacity(n);
    for i in 0..n {
        let d = m[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return Err(NumericsError::NotPositiveDefinite {
                condition: f64::INFINITY,
            });
        }
        scale.push(1.0 / d.sqrt());
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| m[(i, j)] * scale[i] * scale[j]);
    Ok((scaled, scale))
}

/// Inverse of a small symmetric positive definite matrix.
///
/// The matrix is first equilibrated to unit diagonal, factored with
/// Cholesky, inverted, rescaled and polished with one step of iterative
/// refinement. The result is exactly symmetric.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>, NumericsError> {
    if m.nrows() != m.ncols() {
        return Err(NumericsError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let (scaled, scale) = equilibrate(m)?;
    let sym = (&scaled + scaled.transpose()) * 0.5;
    let chol = match sym.clone().cholesky() {
        Some(c) => c,
        None => {
            return Err(NumericsError::NotPositiveDefinite {
                condition: spd_condition_number(&sym),
            })
        }
    };
    let inv_scaled = chol.inverse();
    // One refinement step X <- X + X (I - S X) on the equilibrated system.
    let residual = DMatrix::identity(n, n) - &sym * &inv_scaled;
    let refined = &inv_scaled + &inv_scaled * residual;
    let mut out = DMatrix::from_fn(n, n, |i, j| refined[(i, j)] * scale[i] * scale[j]);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NotPositiveDefinite {
            condition: spd_condition_number(&sym),
        });
    }
    Ok(out)
}
