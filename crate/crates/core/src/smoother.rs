//! Local polynomial regression by weighted least squares, in complete-case
//! form for samples with missing responses.
//!
//! A fit of degree `d` localized at a query point `x` minimizes
//!
//! ```text
//! sum_j delta_j { Y_j - sum_{i in I(d)} beta_i psi_i((X_j - x)/c) }^2  w((X_j - x)/c)
//! ```
//!
//! over the coefficient vector `beta`; the regression estimate at `x` is the
//! coefficient of the zero multi-index. Bandwidth `c` and the kernel window
//! live in the covariates' own units. Each query solves a small dense least
//! squares problem through a column-pivoted QR of the square-root-weighted
//! design; rank deficiency is detected from the R diagonal, never via normal
//! equations. When the localized design is empty or deficient the bandwidth
//! is inflated by 1.1 at that query point, up to 25 attempts.

use crate::polybasis::{BasisSpec, ProductKernel};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmootherError {
    #[error("sample contains no rows")]
    EmptySample,
    #[error("covariate dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("row {row} contains a non-finite value")]
    NonFinite { row: usize },
    #[error("bandwidth must be positive and finite, got {value}")]
    InvalidBandwidth { value: f64 },
    #[error("bandwidth scale must be positive and finite, got {value}")]
    InvalidScale { value: f64 },
    #[error("smoothness must be positive and finite, got {value}")]
    InvalidSmoothness { value: f64 },
    #[error("bandwidth rule needs n >= 2, got {n}")]
    SampleTooSmallForRule { n: usize },
    #[error("degree-{degree} fit needs {needed} complete cases, sample has {available}")]
    InsufficientCompleteCases {
        degree: u32,
        needed: usize,
        available: usize,
    },
    #[error("query coordinate {axis} = {value} lies outside the domain box [{lo}, {hi}]")]
    OutOfDomain {
        axis: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("domain box axis {axis} has empty interior [{lo}, {hi}]")]
    DegenerateDomain { axis: usize, lo: f64, hi: f64 },
    #[error("no complete case fell inside the kernel window after {attempts} bandwidth inflations")]
    EmptyWindow { attempts: u32 },
    #[error("localized design stayed rank deficient after {attempts} bandwidth inflations")]
    RankDeficient { attempts: u32 },
}

/// One observation: covariates are always recorded, the response may be
/// missing. `delta = 1` exactly when the response is present.
#[derive(Debug, Clone, PartialEq)]
pub struct MarRow {
    covariates: Vec<f64>,
    response: Option<f64>,
}

impl MarRow {
    pub fn new(covariates: Vec<f64>, response: Option<f64>) -> Self {
        Self {
            covariates,
            response,
        }
    }

    pub fn covariates(&self) -> &[f64] {
        &self.covariates
    }

    pub fn response(&self) -> Option<f64> {
        self.response
    }

    /// The missingness indicator `delta`.
    pub fn observed(&self) -> bool {
        self.response.is_some()
    }
}

/// A sample of `(X_j, delta_j Y_j, delta_j)` rows with common covariate
/// dimension. The complete-case subsample is the set of rows with
/// `delta_j = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarSample {
    rows: Vec<MarRow>,
    dimension: usize,
}

impl MarSample {
    pub fn new(rows: Vec<MarRow>) -> Result<Self, SmootherError> {
        let dimension = rows.first().ok_or(SmootherError::EmptySample)?.covariates.len();
        if dimension == 0 {
            return Err(SmootherError::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        for (row_idx, row) in rows.iter().enumerate() {
            if row.covariates.len() != dimension {
                return Err(SmootherError::DimensionMismatch {
                    expected: dimension,
                    actual: row.covariates.len(),
                });
            }
            let finite = row.covariates.iter().all(|v| v.is_finite())
                && row.response.is_none_or(|y| y.is_finite());
            if !finite {
                return Err(SmootherError::NonFinite { row: row_idx });
            }
        }
        Ok(Self { rows, dimension })
    }

    /// Convenience constructor for one-dimensional covariates.
    pub fn univariate<I>(pairs: I) -> Result<Self, SmootherError>
    where
        I: IntoIterator<Item = (f64, Option<f64>)>,
    {
        Self::new(
            pairs
                .into_iter()
                .map(|(x, y)| MarRow::new(vec![x], y))
                .collect(),
        )
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[MarRow] {
        &self.rows
    }

    /// Number of complete cases `N = sum_j delta_j`.
    pub fn n_complete(&self) -> usize {
        self.rows.iter().filter(|r| r.observed()).count()
    }

    /// Complete cases with their original row indices.
    pub fn complete_cases(&self) -> impl Iterator<Item = (usize, &MarRow)> {
        self.rows.iter().enumerate().filter(|(_, r)| r.observed())
    }
}

/// Per-coordinate query bounds for a fitted smoother.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    bounds: Vec<(f64, f64)>,
}

impl DomainBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self, SmootherError> {
        if bounds.is_empty() {
            return Err(SmootherError::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        for (axis, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(SmootherError::DegenerateDomain { axis, lo, hi });
            }
        }
        Ok(Self { bounds })
    }

    /// The cube `[-1, 1]^m`.
    pub fn symmetric_unit(dimension: usize) -> Self {
        Self::new(vec![(-1.0, 1.0); dimension]).expect("static bounds are valid")
    }

    /// Componentwise covariate range over all rows (observed or not).
    pub fn from_sample(sample: &MarSample) -> Result<Self, SmootherError> {
        let m = sample.dimension();
        let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); m];
        for row in sample.rows() {
            for (b, &x) in bounds.iter_mut().zip(row.covariates()) {
                b.0 = b.0.min(x);
                b.1 = b.1.max(x);
            }
        }
        Self::new(bounds)
    }

    pub fn dimension(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn check_contains(&self, x: &[f64]) -> Result<(), SmootherError> {
        for (axis, (&(lo, hi), &v)) in self.bounds.iter().zip(x).enumerate() {
            let slack = 1e-9 * (hi - lo);
            if !v.is_finite() || v < lo - slack || v > hi + slack {
                return Err(SmootherError::OutOfDomain {
                    axis,
                    value: v,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }
}

/// The bandwidth sequence `scale * (n ln n)^(-1/4)`.
pub fn bandwidth_rule(n: usize, scale: f64) -> Result<f64, SmootherError> {
    bandwidth_rule_smoothness(n, scale, 2.0)
}

/// Generalized rule `scale * (n ln n)^(-1/(2s))` for smoothness `s`.
pub fn bandwidth_rule_smoothness(n: usize, scale: f64, s: f64) -> Result<f64, SmootherError> {
    if n < 2 {
        return Err(SmootherError::SampleTooSmallForRule { n });
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(SmootherError::InvalidScale { value: scale });
    }
    if !(s.is_finite() && s > 0.0) {
        return Err(SmootherError::InvalidSmoothness { value: s });
    }
    let nf = n as f64;
    Ok(scale * (nf * nf.ln()).powf(-0.5 / s))
}

const INFLATION_FACTOR: f64 = 1.1;
const MAX_ATTEMPTS: u32 = 25;
// Relative floor on the pivoted R diagonal below which the localized
// design is treated as rank deficient.
const RANK_TOLERANCE: f64 = 1e-9;

/// A fitted complete-case local polynomial smoother.
///
/// Construction copies the complete cases out of the sample in a canonical
/// order, so the fit is immutable afterwards and `evaluate` is safe to call
/// concurrently. Evaluation is lazy: nothing is precomputed on a grid.
#[derive(Debug, Clone)]
pub struct SmootherFit {
    basis: BasisSpec,
    kernel: ProductKernel,
    bandwidth: f64,
    domain: DomainBox,
    /// Complete-case covariates, flattened row-major, sorted by
    /// (covariates, response) so permuting the input sample cannot change
    /// any arithmetic path.
    case_x: Vec<f64>,
    case_y: Vec<f64>,
    /// First covariate coordinate per case, for window lookups.
    first: Vec<f64>,
}

/// Fit over the sample's own covariate range.
pub fn fit_local_poly(
    sample: &MarSample,
    degree: u32,
    kernel: &ProductKernel,
    bandwidth: f64,
) -> Result<SmootherFit, SmootherError> {
    let domain = DomainBox::from_sample(sample)?;
    fit_local_poly_in(sample, degree, kernel, bandwidth, domain)
}

/// Fit with an explicit domain box.
pub fn fit_local_poly_in(
    sample: &MarSample,
    degree: u32,
    kernel: &ProductKernel,
    bandwidth: f64,
    domain: DomainBox,
) -> Result<SmootherFit, SmootherError> {
    let m = sample.dimension();
    if kernel.dimension() != m {
        return Err(SmootherError::DimensionMismatch {
            expected: m,
            actual: kernel.dimension(),
        });
    }
    if domain.dimension() != m {
        return Err(SmootherError::DimensionMismatch {
            expected: m,
            actual: domain.dimension(),
        });
    }
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(SmootherError::InvalidBandwidth { value: bandwidth });
    }
    let basis = BasisSpec::new(degree, m);
    let available = sample.n_complete();
    if available < basis.len() {
        return Err(SmootherError::InsufficientCompleteCases {
            degree,
            needed: basis.len(),
            available,
        });
    }

    let mut order: Vec<usize> = sample
        .complete_cases()
        .map(|(idx, _)| idx)
        .collect();
    order.sort_by(|&a, &b| lex_cmp(&sample.rows()[a], &sample.rows()[b]));

    let mut case_x = Vec::with_capacity(order.len() * m);
    let mut case_y = Vec::with_capacity(order.len());
    let mut first = Vec::with_capacity(order.len());
    for &idx in &order {
        let row = &sample.rows()[idx];
        case_x.extend_from_slice(row.covariates());
        case_y.push(row.response().expect("complete case has a response"));
        first.push(row.covariates()[0]);
    }

    Ok(SmootherFit {
        basis,
        kernel: kernel.clone(),
        bandwidth,
        domain,
        case_x,
        case_y,
        first,
    })
}

fn lex_cmp(a: &MarRow, b: &MarRow) -> std::cmp::Ordering {
    for (va, vb) in a.covariates().iter().zip(b.covariates()) {
        let ord = va.total_cmp(vb);
        if ord != std::cmp::Ordering::Equal {
            return ord;
        }
    }
    let ya = a.response().unwrap_or(f64::NEG_INFINITY);
    let yb = b.response().unwrap_or(f64::NEG_INFINITY);
    ya.total_cmp(&yb)
}

impl SmootherFit {
    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn kernel(&self) -> &ProductKernel {
        &self.kernel
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn n_complete(&self) -> usize {
        self.case_y.len()
    }

    /// The regression estimate at `x`: coefficient 0 of the localized
    /// weighted least squares solution.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64, SmootherError> {
        let m = self.domain.dimension();
        if x.len() != m {
            return Err(SmootherError::DimensionMismatch {
                expected: m,
                actual: x.len(),
            });
        }
        self.domain.check_contains(x)?;

        let p = self.basis.len();
        let mut bandwidth = self.bandwidth;
        let mut saw_nonempty_window = false;
        let mut u = vec![0.0; m];
        let mut psi_row = vec![0.0; p];
        let mut members: Vec<(f64, f64)> = Vec::new(); // (weight, y) with u recomputed below
        let mut member_idx: Vec<usize> = Vec::new();

        for _attempt in 1..=MAX_ATTEMPTS {
            member_idx.clear();
            members.clear();
            // candidate window on the first coordinate
            let start = self.first.partition_point(|&v| v <= x[0] - bandwidth);
            let end = self.first.partition_point(|&v| v < x[0] + bandwidth);
            for case in start..end {
                let cx = &self.case_x[case * m..(case + 1) * m];
                for (uj, (&cj, &xj)) in u.iter_mut().zip(cx.iter().zip(x)) {
                    *uj = (cj - xj) / bandwidth;
                }
                let w = self.kernel.weight(&u);
                if w > 0.0 {
                    member_idx.push(case);
                    members.push((w, self.case_y[case]));
                }
            }

            if members.is_empty() {
                bandwidth *= INFLATION_FACTOR;
                continue;
            }
            saw_nonempty_window = true;
            if members.len() < p {
                bandwidth *= INFLATION_FACTOR;
                continue;
            }

            let rows = members.len();
            let mut design = DMatrix::zeros(rows, p);
            let mut rhs = DVector::zeros(rows);
            for (r, (&case, &(w, y))) in member_idx.iter().zip(&members).enumerate() {
                let cx = &self.case_x[case * m..(case + 1) * m];
                for (uj, (&cj, &xj)) in u.iter_mut().zip(cx.iter().zip(x)) {
                    *uj = (cj - xj) / bandwidth;
                }
                self.basis.eval_into(&u, &mut psi_row);
                let sw = w.sqrt();
                for (c, &v) in psi_row.iter().enumerate() {
                    design[(r, c)] = sw * v;
                }
                rhs[r] = sw * y;
            }

            match solve_wls(design, rhs, p) {
                Some(beta0) => return Ok(beta0),
                None => {
                    bandwidth *= INFLATION_FACTOR;
                    continue;
                }
            }
        }

        if saw_nonempty_window {
            Err(SmootherError::RankDeficient {
                attempts: MAX_ATTEMPTS,
            })
        } else {
            Err(SmootherError::EmptyWindow {
                attempts: MAX_ATTEMPTS,
            })
        }
    }
}

/// Least squares via column-pivoted QR; `None` signals rank deficiency.
fn solve_wls(design: DMatrix<f64>, rhs: DVector<f64>, p: usize) -> Option<f64> {
    let qr = design.col_piv_qr();
    let r = qr.r();
    let lead = r[(0, 0)].abs();
    if lead == 0.0 {
        return None;
    }
    for i in 1..p {
        if r[(i, i)].abs() <= RANK_TOLERANCE * lead {
            return None;
        }
    }
    let mut z = qr.q().transpose() * rhs;
    if !r.solve_upper_triangular_mut(&mut z) {
        return None;
    }
    qr.p().inv_permute_rows(&mut z);
    Some(z[0])
}

/// Residuals `eps_hat_{j,c} = Y_j - rhat_c(X_j)` for every complete case,
/// keyed by the original row index.
pub fn residuals_complete_case(
    fit: &SmootherFit,
    sample: &MarSample,
) -> Result<Vec<(usize, f64)>, SmootherError> {
    if sample.dimension() != fit.domain.dimension() {
        return Err(SmootherError::DimensionMismatch {
            expected: fit.domain.dimension(),
            actual: sample.dimension(),
        });
    }
    let mut out = Vec::with_capacity(sample.n_complete());
    for (idx, row) in sample.complete_cases() {
        let y = row.response().expect("complete case has a response");
        out.push((idx, y - fit.evaluate(row.covariates())?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn kernel1() -> ProductKernel {
        ProductKernel::new(4, 1)
    }

    #[test]
    fn bandwidth_rule_frozen_values() {
        assert_abs_diff_eq!(
            bandwidth_rule(100, 1.25).unwrap(),
            0.269835193273325,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            bandwidth_rule(50, 1.25).unwrap(),
            0.334246725948758,
            epsilon = 1e-14
        );
        assert!(matches!(
            bandwidth_rule(1, 1.25),
            Err(SmootherError::SampleTooSmallForRule { n: 1 })
        ));
        assert!(matches!(
            bandwidth_rule(100, 0.0),
            Err(SmootherError::InvalidScale { .. })
        ));
        // general exponent reduces to the default at s = 2
        assert_abs_diff_eq!(
            bandwidth_rule_smoothness(100, 1.25, 2.0).unwrap(),
            bandwidth_rule(100, 1.25).unwrap(),
            epsilon = 0.0
        );
    }

    #[test]
    fn reproduces_linear_data_exactly() {
        let xs = [0.05, 0.17, 0.33, 0.48, 0.62, 0.71, 0.89, 0.95];
        let sample =
            MarSample::univariate(xs.iter().map(|&x| (x, Some(2.0 + 3.0 * x)))).unwrap();
        let fit = fit_local_poly(&sample, 1, &kernel1(), 0.3).unwrap();
        for x in [0.1, 0.4, 0.55, 0.9] {
            assert_abs_diff_eq!(fit.evaluate(&[x]).unwrap(), 2.0 + 3.0 * x, epsilon = 1e-8);
        }
    }

    #[test]
    fn reproduces_constants_under_any_missingness() {
        let xs = [0.0, 0.2, 0.35, 0.5, 0.65, 0.8, 1.0];
        let deltas = [true, false, true, true, false, true, true];
        let sample = MarSample::univariate(
            xs.iter()
                .zip(deltas)
                .map(|(&x, d)| (x, d.then_some(7.25))),
        )
        .unwrap();
        let fit = fit_local_poly(&sample, 1, &kernel1(), 0.4).unwrap();
        for x in [0.0, 0.3, 0.77, 1.0] {
            assert_abs_diff_eq!(fit.evaluate(&[x]).unwrap(), 7.25, epsilon = 1e-10);
        }
    }

    #[test]
    fn transfer_identity_is_bit_exact() {
        // delta == 1 everywhere must take the same arithmetic path as a
        // fully observed fit on the same rows.
        let pairs: Vec<(f64, Option<f64>)> = (0..20)
            .map(|i| {
                let x = i as f64 / 19.0;
                (x, Some((5.0 * x).sin() + 0.3 * x))
            })
            .collect();
        let all_observed = MarSample::univariate(pairs.clone()).unwrap();
        let complete_case_view = MarSample::univariate(pairs).unwrap();
        let f1 = fit_local_poly(&all_observed, 1, &kernel1(), 0.25).unwrap();
        let f2 = fit_local_poly(&complete_case_view, 1, &kernel1(), 0.25).unwrap();
        for i in 0..=50 {
            let x = i as f64 / 50.0;
            let a = f1.evaluate(&[x]).unwrap();
            let b = f2.evaluate(&[x]).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn degree_zero_single_point() {
        let sample = MarSample::univariate([(0.5, Some(3.75))]).unwrap();
        let domain = DomainBox::new(vec![(0.0, 1.0)]).unwrap();
        let fit = fit_local_poly_in(&sample, 0, &kernel1(), 0.2, domain).unwrap();
        assert_abs_diff_eq!(fit.evaluate(&[0.5]).unwrap(), 3.75, epsilon = 0.0);
    }

    // Frozen oracle: five-point dataset solved independently with
    // high-precision normal equations (weights C_4 (1-u^2)^4, bandwidth 0.4).
    const ORACLE_XS: [f64; 5] = [0.05, 0.3, 0.5, 0.7, 0.95];
    const ORACLE_YS: [f64; 5] = [0.8, -0.1, 0.6, 1.1, -0.4];

    fn oracle_fit() -> SmootherFit {
        let sample =
            MarSample::univariate(ORACLE_XS.iter().zip(ORACLE_YS).map(|(&x, y)| (x, Some(y))))
                .unwrap();
        let domain = DomainBox::new(vec![(0.0, 1.0)]).unwrap();
        fit_local_poly_in(&sample, 1, &kernel1(), 0.4, domain).unwrap()
    }

    #[test]
    fn matches_brute_force_oracle_on_handbuilt_data() {
        let fit = oracle_fit();
        assert_abs_diff_eq!(fit.evaluate(&[0.2]).unwrap(), 0.295274894517322, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.evaluate(&[0.5]).unwrap(), 0.561244019138756, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.evaluate(&[0.8]).unwrap(), 0.457769492479262, epsilon = 1e-10);
    }

    #[test]
    fn residuals_match_oracle_and_respect_missingness() {
        let fit = oracle_fit();
        let sample =
            MarSample::univariate(ORACLE_XS.iter().zip(ORACLE_YS).map(|(&x, y)| (x, Some(y))))
                .unwrap();
        let res = residuals_complete_case(&fit, &sample).unwrap();
        let expected = [
            0.0,
            -0.231483723084511,
            0.038755980861244,
            0.277128400875823,
            0.0,
        ];
        assert_eq!(res.len(), 5);
        for ((idx, r), (j, e)) in res.iter().zip(expected.iter().enumerate()) {
            assert_eq!(*idx, j);
            assert_abs_diff_eq!(*r, *e, epsilon = 1e-9);
        }

        // delta = (1, 0, 1) keeps exactly rows 0 and 2
        let sparse = MarSample::univariate([
            (0.1, Some(1.0)),
            (0.5, None),
            (0.9, Some(2.0)),
        ])
        .unwrap();
        let fit = fit_local_poly(&sparse, 0, &kernel1(), 0.5).unwrap();
        let res = residuals_complete_case(&fit, &sparse).unwrap();
        let indices: Vec<usize> = res.iter().map(|(i, _)| *i).collect();
        assert_eq!(indices, vec![0, 2]);
    }

    #[test]
    fn permutation_invariance_is_exact() {
        let pairs = [
            (0.11, Some(0.4)),
            (0.52, Some(-0.2)),
            (0.23, None),
            (0.74, Some(1.3)),
            (0.95, Some(0.9)),
            (0.33, Some(0.0)),
        ];
        let mut shuffled = pairs;
        shuffled.swap(0, 4);
        shuffled.swap(1, 5);
        shuffled.swap(2, 3);
        let domain = DomainBox::new(vec![(0.0, 1.0)]).unwrap();
        let f1 = fit_local_poly_in(
            &MarSample::univariate(pairs).unwrap(),
            1,
            &kernel1(),
            0.45,
            domain.clone(),
        )
        .unwrap();
        let f2 = fit_local_poly_in(
            &MarSample::univariate(shuffled).unwrap(),
            1,
            &kernel1(),
            0.45,
            domain,
        )
        .unwrap();
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            assert_eq!(
                f1.evaluate(&[x]).unwrap().to_bits(),
                f2.evaluate(&[x]).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn linear_in_responses() {
        let xs = [0.02, 0.21, 0.38, 0.55, 0.73, 0.94];
        let y1 = [0.3, -0.1, 0.8, 0.2, -0.5, 0.6];
        let y2 = [1.1, 0.4, -0.2, 0.9, 0.3, -0.7];
        let domain = DomainBox::new(vec![(0.0, 1.0)]).unwrap();
        let build = |ys: &[f64]| {
            fit_local_poly_in(
                &MarSample::univariate(xs.iter().zip(ys).map(|(&x, &y)| (x, Some(y)))).unwrap(),
                1,
                &kernel1(),
                0.5,
                domain.clone(),
            )
            .unwrap()
        };
        let sum: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a + b).collect();
        let (fa, fb, fs) = (build(&y1), build(&y2), build(&sum));
        for x in [0.1, 0.5, 0.9] {
            let lhs = fs.evaluate(&[x]).unwrap();
            let rhs = fa.evaluate(&[x]).unwrap() + fb.evaluate(&[x]).unwrap();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
        }
    }

    #[test]
    fn empty_window_errors_after_inflation_cap() {
        let sample = MarSample::univariate([(0.0, Some(1.0)), (1.0, Some(2.0))]).unwrap();
        let domain = DomainBox::new(vec![(0.0, 1.0)]).unwrap();
        let fit = fit_local_poly_in(&sample, 0, &kernel1(), 1e-4, domain).unwrap();
        // 1e-4 * 1.1^24 is still far below the 0.5 gap
        assert!(matches!(
            fit.evaluate(&[0.5]),
            Err(SmootherError::EmptyWindow { attempts: 25 })
        ));
    }

    #[test]
    fn rank_deficiency_recovers_or_errors() {
        // all mass at one covariate value: inflation eventually reaches the
        // far point and restores full rank
        let sample = MarSample::univariate([
            (0.5, Some(1.0)),
            (0.5, Some(1.2)),
            (0.5, Some(0.8)),
            (0.9, Some(2.0)),
        ])
        .unwrap();
        let domain = DomainBox::new(vec![(0.0, 1.0)]).unwrap();
        let fit = fit_local_poly_in(&sample, 1, &kernel1(), 0.05, domain.clone()).unwrap();
        let v = fit.evaluate(&[0.5]).unwrap();
        assert!(v.is_finite());

        // a design that can never reach rank 2 exhausts the attempts
        let degenerate = MarSample::univariate([
            (0.5, Some(1.0)),
            (0.5, Some(1.5)),
            (0.5, Some(0.5)),
        ])
        .unwrap();
        let fit = fit_local_poly_in(&degenerate, 1, &kernel1(), 0.1, domain).unwrap();
        assert!(matches!(
            fit.evaluate(&[0.5]),
            Err(SmootherError::RankDeficient { attempts: 25 })
        ));
    }

    #[test]
    fn validates_inputs() {
        let sample = MarSample::univariate([(0.1, Some(1.0)), (0.9, None)]).unwrap();
        // only one complete case but a linear fit needs two
        assert!(matches!(
            fit_local_poly(&sample, 1, &kernel1(), 0.3),
            Err(SmootherError::InsufficientCompleteCases {
                needed: 2,
                available: 1,
                ..
            })
        ));
        let ok = MarSample::univariate([(0.1, Some(1.0)), (0.9, Some(2.0))]).unwrap();
        assert!(matches!(
            fit_local_poly(&ok, 1, &kernel1(), -0.5),
            Err(SmootherError::InvalidBandwidth { .. })
        ));
        let fit = fit_local_poly(&ok, 1, &kernel1(), 0.9).unwrap();
        assert!(matches!(
            fit.evaluate(&[2.0]),
            Err(SmootherError::OutOfDomain { .. })
        ));
        assert!(matches!(
            MarSample::new(vec![]),
            Err(SmootherError::EmptySample)
        ));
        assert!(matches!(
            MarSample::univariate([(f64::NAN, Some(0.0))]),
            Err(SmootherError::NonFinite { row: 0 })
        ));
    }

    #[test]
    fn two_dimensional_plane_reproduction() {
        let kern = ProductKernel::default_for_dimension(2);
        let mut rows = Vec::new();
        for i in 0..7 {
            for j in 0..7 {
                let x = vec![i as f64 / 6.0, j as f64 / 6.0];
                let y = 1.0 - 2.0 * x[0] + 0.5 * x[1];
                rows.push(MarRow::new(x, Some(y)));
            }
        }
        let sample = MarSample::new(rows).unwrap();
        let fit = fit_local_poly(&sample, 1, &kern, 0.45).unwrap();
        for q in [[0.25, 0.5], [0.5, 0.1], [0.8, 0.8]] {
            let truth = 1.0 - 2.0 * q[0] + 0.5 * q[1];
            assert_abs_diff_eq!(fit.evaluate(&q).unwrap(), truth, epsilon = 1e-8);
        }
    }
}
