//! Martingale-transform goodness-of-fit test for zero-mean normal errors
//! with unknown variance.
//!
//! Residuals are standardized by the complete-case variance estimate, and
//! the empirical process of the standardized residuals is transformed with
//! `h(x) = (1, x, x^2 - 1)` so that its supremum converges to
//! `sup_{0 < t <= 1} |B(t)|` for a standard Brownian motion `B`, making the
//! critical values distribution free. The transform needs
//!
//! ```text
//! Gamma(t) = int_t^inf h(u) h(u)^T phi(u) du,
//! H(t)     = int_{-inf}^t h(u)^T Gamma(u)^{-1} phi(u) du,
//! ```
//!
//! with `Gamma` available in closed form from truncated Gaussian moments
//! and `H` tabulated once by cumulative trapezoid quadrature on a fine
//! grid. `Gamma(t)` degenerates as `t` grows, so the grid stops at the last
//! point whose condition number is below a cap; the test statistic treats
//! residuals beyond that cutoff through the `t ∧ Z_j` term only and reports
//! how many evaluation points were skipped.

use crate::gauss;
use nalgebra::{Matrix3, Vector3};
use std::f64::consts::PI;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TestError {
    #[error("need at least two residuals, got {n}")]
    TooFewResiduals { n: usize },
    #[error("residual at position {index} is not finite")]
    NonFinite { index: usize },
    #[error("residual variance estimate is zero; standardization impossible")]
    ZeroVariance,
    #[error("all standardized residuals exceed the conditioning cutoff {cutoff}")]
    AllAboveCutoff { cutoff: f64 },
    #[error("t = {t} is beyond the conditioning cutoff {cutoff}")]
    AboveCutoff { t: f64, cutoff: f64 },
    #[error("Gamma(t) numerically singular below the cutoff at t = {t}")]
    SingularGamma { t: f64 },
    #[error("test level must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("argument must be positive, got {0}")]
    NonPositive(f64),
    #[error("transform table construction failed: {0}")]
    TableBuild(String),
}

/// `h(x) = (1, -phi'(x)/phi(x), -(x phi(x))'/phi(x)) = (1, x, x^2 - 1)`.
pub fn h_vec(x: f64) -> Vector3<f64> {
    Vector3::new(1.0, x, x * x - 1.0)
}

/// Closed form of `Gamma(t) = int_t^inf h h^T phi du` via truncated Gaussian
/// moments, with `Q = 1 - Phi(t)` and `p = phi(t)`.
pub fn gamma_mat(t: f64) -> Matrix3<f64> {
    let q = gauss::sf(t);
    let p = gauss::pdf(t);
    let tp = t * p;
    Matrix3::new(
        q,
        p,
        tp,
        p,
        q + tp,
        (t * t + 1.0) * p,
        tp,
        (t * t + 1.0) * p,
        2.0 * q + (t * t * t + t) * p,
    )
}

const GRID_START: f64 = -8.5;
const GRID_STEP: f64 = 1e-3;
const GRID_END_MAX: f64 = 8.5;
const CONDITION_CAP: f64 = 1e10;

/// Precomputed cumulative transform `H` on a uniform grid, together with
/// per-point condition numbers of `Gamma` and the conditioning cutoff.
///
/// Built once and shared read-only; see [`TransformTables::standard`].
#[derive(Debug, Clone)]
pub struct TransformTables {
    grid_start: f64,
    step: f64,
    h_cum: Vec<Vector3<f64>>,
    cond: Vec<f64>,
}

impl TransformTables {
    /// The shared table with default grid `[-8.5, cutoff]`, step `1e-3`,
    /// condition cap `1e10`.
    pub fn standard() -> &'static TransformTables {
        static TABLES: OnceLock<TransformTables> = OnceLock::new();
        TABLES.get_or_init(|| {
            TransformTables::build(GRID_START, GRID_STEP, CONDITION_CAP, GRID_END_MAX)
                .expect("default transform table builds")
        })
    }

    /// Build a table on `grid_start + k * step`, stopping at `end_max` or at
    /// the first grid point whose `Gamma` condition number exceeds
    /// `condition_cap`, whichever comes first.
    pub fn build(
        grid_start: f64,
        step: f64,
        condition_cap: f64,
        end_max: f64,
    ) -> Result<Self, TestError> {
        if !(step.is_finite() && step > 0.0) {
            return Err(TestError::TableBuild(format!("bad step {step}")));
        }
        if !(condition_cap.is_finite() && condition_cap > 1.0) {
            return Err(TestError::TableBuild(format!(
                "bad condition cap {condition_cap}"
            )));
        }
        if !(grid_start.is_finite() && end_max.is_finite() && grid_start < end_max) {
            return Err(TestError::TableBuild(format!(
                "bad grid range [{grid_start}, {end_max}]"
            )));
        }
        let mut h_cum = Vec::new();
        let mut cond = Vec::new();
        let mut integrand_prev = Vector3::zeros();
        let mut running = Vector3::zeros();
        let mut k = 0usize;
        loop {
            let t = grid_start + k as f64 * step;
            if t > end_max + 0.5 * step {
                break;
            }
            let gamma = gamma_mat(t);
            let eigen = gamma.symmetric_eigen();
            let mut lambda_min = f64::INFINITY;
            let mut lambda_max = 0.0f64;
            for &ev in eigen.eigenvalues.iter() {
                lambda_min = lambda_min.min(ev);
                lambda_max = lambda_max.max(ev);
            }
            if lambda_min <= 0.0 {
                if k < 2 {
                    return Err(TestError::SingularGamma { t });
                }
                break;
            }
            let kappa = lambda_max / lambda_min;
            if kappa > condition_cap {
                break;
            }
            // Gamma^{-1} h phi via the eigendecomposition just computed
            let mut y = eigen.eigenvectors.transpose() * h_vec(t);
            for i in 0..3 {
                y[i] /= eigen.eigenvalues[i];
            }
            let integrand = eigen.eigenvectors * y * gauss::pdf(t);
            if k > 0 {
                running += (integrand_prev + integrand) * (0.5 * step);
            }
            integrand_prev = integrand;
            h_cum.push(running);
            cond.push(kappa);
            k += 1;
        }
        if h_cum.len() < 2 {
            return Err(TestError::TableBuild(
                "grid ended before two valid points".into(),
            ));
        }
        Ok(Self {
            grid_start,
            step,
            h_cum,
            cond,
        })
    }

    /// The largest usable `t`: the last grid point below the condition cap.
    pub fn cutoff(&self) -> f64 {
        self.grid_start + (self.h_cum.len() - 1) as f64 * self.step
    }

    pub fn grid_len(&self) -> usize {
        self.h_cum.len()
    }

    /// Condition numbers of `Gamma` along the grid.
    pub fn condition_numbers(&self) -> &[f64] {
        &self.cond
    }

    /// `H(t)` by linear interpolation on the grid; zero below the grid
    /// start (the integrand mass there is below 1e-15), an error past the
    /// cutoff.
    pub fn h_transform(&self, t: f64) -> Result<Vector3<f64>, TestError> {
        let cutoff = self.cutoff();
        if t > cutoff + 1e-12 {
            return Err(TestError::AboveCutoff { t, cutoff });
        }
        if !t.is_finite() {
            return Err(TestError::AboveCutoff { t, cutoff });
        }
        if t <= self.grid_start {
            return Ok(Vector3::zeros());
        }
        let pos = (t - self.grid_start) / self.step;
        let i = (pos.floor() as usize).min(self.h_cum.len() - 2);
        let frac = pos - i as f64;
        Ok(self.h_cum[i] + (self.h_cum[i + 1] - self.h_cum[i]) * frac)
    }
}

/// Outcome of the martingale-transform test.
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub alpha: f64,
    pub critical_value: f64,
    pub reject: bool,
    /// Number of residuals behind the statistic.
    pub n_used: usize,
    /// Evaluation points skipped because they exceeded the conditioning
    /// cutoff.
    pub truncated_points: usize,
}

/// The transformed-process statistic
/// `sup_t | N^{-1/2} sum_j { 1[Z_j <= t] - H(t ∧ Z_j) . h(Z_j) } |`
/// over standardized residuals `Z_j = r_j / sigma_hat`.
///
/// The supremum is realized over the sorted residuals and their left
/// limits (the indicator part is constant in between), plus the cutoff
/// point when truncation occurred. The same routine serves the tuned
/// statistic by passing adjusted residuals.
pub fn t_statistic(
    residuals: &[f64],
    tables: &TransformTables,
    alpha: f64,
) -> Result<TestResult, TestError> {
    let n = residuals.len();
    if n < 2 {
        return Err(TestError::TooFewResiduals { n });
    }
    if let Some(index) = residuals.iter().position(|v| !v.is_finite()) {
        return Err(TestError::NonFinite { index });
    }
    let sigma2 = residuals.iter().map(|r| r * r).sum::<f64>() / n as f64;
    if sigma2 <= 0.0 {
        return Err(TestError::ZeroVariance);
    }
    let sigma = sigma2.sqrt();
    let mut z: Vec<f64> = residuals.iter().map(|r| r / sigma).collect();
    z.sort_by(f64::total_cmp);

    let cutoff = tables.cutoff();
    let m = z.partition_point(|&v| v <= cutoff);
    let truncated = n - m;
    if m == 0 {
        return Err(TestError::AllAboveCutoff { cutoff });
    }

    let h: Vec<Vector3<f64>> = z.iter().map(|&v| h_vec(v)).collect();
    // prefix sums of H(Z_j) . h(Z_j) over the usable residuals
    let mut prefix = Vec::with_capacity(m + 1);
    prefix.push(0.0);
    for j in 0..m {
        let hh = tables.h_transform(z[j])?.dot(&h[j]);
        prefix.push(prefix[j] + hh);
    }
    // suffix sums of h(Z_j) over all residuals
    let mut suffix = vec![Vector3::zeros(); n + 1];
    for j in (0..n).rev() {
        suffix[j] = suffix[j + 1] + h[j];
    }

    let inv_sqrt_n = (n as f64).sqrt().recip();
    let mut best: f64 = 0.0;
    let mut j = 0usize;
    while j < m {
        let value = z[j];
        let mut end = j + 1;
        while end < n && z[end] == value {
            end += 1;
        }
        let h_here = tables.h_transform(value)?;
        // at the jump: indicator counts the whole tie group
        let at = inv_sqrt_n * (end as f64 - (prefix[end] + h_here.dot(&suffix[end])));
        // just below the jump: the group drops out of the indicator and
        // its H argument saturates at t
        let left = inv_sqrt_n * (j as f64 - (prefix[j] + h_here.dot(&suffix[j])));
        best = best.max(at.abs()).max(left.abs());
        j = end;
    }
    if truncated > 0 {
        let h_cut = tables.h_transform(cutoff)?;
        let at_cut = inv_sqrt_n * (m as f64 - (prefix[m] + h_cut.dot(&suffix[m])));
        best = best.max(at_cut.abs());
    }

    let critical_value = critical_value(alpha)?;
    Ok(TestResult {
        statistic: best,
        alpha,
        critical_value,
        reject: best > critical_value,
        n_used: n,
        truncated_points: truncated,
    })
}

/// `P(sup_{0 < t <= 1} |B(t)| <= x)` by the alternating series
/// `(4/pi) sum_k (-1)^k / (2k+1) exp(-pi^2 (2k+1)^2 / (8 x^2))`,
/// truncated once terms fall below 1e-12.
pub fn sup_brownian_cdf(x: f64) -> Result<f64, TestError> {
    if !(x.is_finite() && x > 0.0) {
        return Err(TestError::NonPositive(x));
    }
    let a = PI * PI / (8.0 * x * x);
    let mut sum = 0.0;
    let mut k = 0u64;
    loop {
        let odd = (2 * k + 1) as f64;
        let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
        let term = sign / odd * (-a * odd * odd).exp();
        sum += term;
        if term.abs() < 1e-12 || k > 10_000 {
            break;
        }
        k += 1;
    }
    Ok(4.0 / PI * sum)
}

/// The upper-`alpha` quantile of `sup |B|`, found by bisection to 1e-6.
pub fn critical_value(alpha: f64) -> Result<f64, TestError> {
    if !(alpha.is_finite() && alpha > 0.0 && alpha < 1.0) {
        return Err(TestError::InvalidAlpha(alpha));
    }
    let target = 1.0 - alpha;
    let mut lo = 1e-8;
    let mut hi = 20.0;
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if sup_brownian_cdf(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
