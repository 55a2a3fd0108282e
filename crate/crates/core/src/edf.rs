//! Residual-based estimators of the error distribution function.
//!
//! All estimators put mass `1/N` on each complete-case residual, where `N`
//! is the number of complete cases. The plain complete-case estimator uses
//! residuals from the complete-case smoother; the tuned variant first
//! imputes every response from that smoother, refits on the completed
//! sample, and only then forms residuals — still for complete cases only.

use crate::polybasis::ProductKernel;
use crate::smoother::{self, DomainBox, MarRow, MarSample, SmootherError, SmootherFit};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EdfError {
    #[error("no residual values (no complete cases)")]
    NoCompleteCases,
    #[error("residual at position {index} is not finite")]
    NonFinite { index: usize },
    #[error(transparent)]
    Smoother(#[from] SmootherError),
    #[error("expected {expected} true errors for the complete cases, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
}

/// A right-continuous step function with mass `1/N` at each jump point.
#[derive(Debug, Clone, PartialEq)]
pub struct EdfEstimate {
    jumps: Vec<f64>,
    n: usize,
}

impl EdfEstimate {
    /// Build from raw residual values. Ties keep all their mass at the tied
    /// value; the jump list is sorted ascending.
    pub fn from_residuals(values: &[f64]) -> Result<Self, EdfError> {
        if values.is_empty() {
            return Err(EdfError::NoCompleteCases);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(EdfError::NonFinite { index });
        }
        let mut jumps = values.to_vec();
        jumps.sort_by(f64::total_cmp);
        Ok(Self {
            jumps,
            n: values.len(),
        })
    }

    /// `F_hat(t)`: the fraction of residuals `<= t`.
    pub fn evaluate(&self, t: f64) -> f64 {
        self.jumps.partition_point(|&v| v <= t) as f64 / self.n as f64
    }

    /// Left limit `F_hat(t-)`: the fraction of residuals `< t`.
    pub fn evaluate_left(&self, t: f64) -> f64 {
        self.jumps.partition_point(|&v| v < t) as f64 / self.n as f64
    }

    pub fn jump_points(&self) -> &[f64] {
        &self.jumps
    }

    /// The number of complete cases `N` behind the estimate.
    pub fn n_complete(&self) -> usize {
        self.n
    }

    /// CSV export: `t,F` rows listing distinct jump points and the
    /// post-jump values.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "t,F")?;
        let mut i = 0;
        while i < self.jumps.len() {
            let t = self.jumps[i];
            let mut j = i + 1;
            while j < self.jumps.len() && self.jumps[j] == t {
                j += 1;
            }
            writeln!(out, "{},{}", t, j as f64 / self.n as f64)?;
            i = j;
        }
        Ok(())
    }
}

/// The complete-case estimator: EDF of the residuals `Y_j - rhat_c(X_j)`
/// over the rows with observed responses.
pub fn edf_complete_case(
    sample: &MarSample,
    fit: &SmootherFit,
) -> Result<EdfEstimate, EdfError> {
    let residuals = smoother::residuals_complete_case(fit, sample)?;
    let values: Vec<f64> = residuals.into_iter().map(|(_, r)| r).collect();
    EdfEstimate::from_residuals(&values)
}

/// How the first-stage smoother completes the sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImputationMode {
    /// Replace every response with the fitted value, observed or not.
    Full,
    /// Keep observed responses, fill in only the missing ones.
    Partial,
}

/// Adjusted residuals behind the tuned estimator, keyed by row index.
///
/// Pipeline: fit the complete-case smoother with bandwidth `c1`; complete
/// the sample according to `mode`; refit on the completed sample (every row
/// now counts as observed) with bandwidth `c2`; return
/// `Y_j - rstar(X_j)` for the rows that really were observed.
pub fn tuned_residuals_in(
    sample: &MarSample,
    degree: u32,
    kernel: &ProductKernel,
    c1: f64,
    c2: f64,
    domain: &DomainBox,
    mode: ImputationMode,
) -> Result<Vec<(usize, f64)>, EdfError> {
    let first = smoother::fit_local_poly_in(sample, degree, kernel, c1, domain.clone())?;
    let mut completed = Vec::with_capacity(sample.len());
    for row in sample.rows() {
        let y = match (mode, row.response()) {
            (ImputationMode::Partial, Some(y)) => y,
            _ => first.evaluate(row.covariates())?,
        };
        completed.push(MarRow::new(row.covariates().to_vec(), Some(y)));
    }
    let completed = MarSample::new(completed)?;
    let second = smoother::fit_local_poly_in(&completed, degree, kernel, c2, domain.clone())?;
    let mut out = Vec::with_capacity(sample.n_complete());
    for (idx, row) in sample.complete_cases() {
        let y = row.response().expect("complete case has a response");
        out.push((idx, y - second.evaluate(row.covariates())?));
    }
    Ok(out)
}

/// The tuned estimator over the sample's own covariate range, with full
/// imputation and a common bandwidth pair.
pub fn edf_tuned(
    sample: &MarSample,
    degree: u32,
    kernel: &ProductKernel,
    c1: f64,
    c2: f64,
) -> Result<EdfEstimate, EdfError> {
    let domain = DomainBox::from_sample(sample)?;
    edf_tuned_in(sample, degree, kernel, c1, c2, &domain, ImputationMode::Full)
}

/// The tuned estimator with explicit domain and imputation mode.
pub fn edf_tuned_in(
    sample: &MarSample,
    degree: u32,
    kernel: &ProductKernel,
    c1: f64,
    c2: f64,
    domain: &DomainBox,
    mode: ImputationMode,
) -> Result<EdfEstimate, EdfError> {
    let residuals = tuned_residuals_in(sample, degree, kernel, c1, c2, domain, mode)?;
    let values: Vec<f64> = residuals.into_iter().map(|(_, r)| r).collect();
    EdfEstimate::from_residuals(&values)
}

/// The complete-case variance estimator: the mean of the squared residuals
/// (no extra centering — the residuals are already centered by the fit).
pub fn sigma2_complete_case(residuals: &[f64]) -> Result<f64, EdfError> {
    if residuals.is_empty() {
        return Err(EdfError::NoCompleteCases);
    }
    if let Some(index) = residuals.iter().position(|v| !v.is_finite()) {
        return Err(EdfError::NonFinite { index });
    }
    Ok(residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64)
}

/// Supremum over `t` of the absolute remainder
/// `F_hat(t) - N^{-1} sum 1[eps_j <= t] - f(t) N^{-1} sum eps_j`,
/// where `eps_j` are the complete cases' true errors and `f` the error
/// density with mode at `density_mode`.
///
/// Between jump points the step parts are constant and the density term is
/// monotone on each side of the mode, so scanning jump points, their left
/// limits, and the mode bounds the supremum.
pub fn sup_expansion_remainder(
    edf: &EdfEstimate,
    true_errors: &[f64],
    density: impl Fn(f64) -> f64,
    density_mode: f64,
) -> Result<f64, EdfError> {
    if true_errors.len() != edf.n_complete() {
        return Err(EdfError::LengthMismatch {
            expected: edf.n_complete(),
            actual: true_errors.len(),
        });
    }
    let truth = EdfEstimate::from_residuals(true_errors)?;
    let shift = true_errors.iter().sum::<f64>() / true_errors.len() as f64;
    let mut best: f64 = 0.0;
    let mut consider = |t: f64| {
        let d = density(t) * shift;
        let at = edf.evaluate(t) - truth.evaluate(t) - d;
        let left = edf.evaluate_left(t) - truth.evaluate_left(t) - d;
        best = best.max(at.abs()).max(left.abs());
    };
    for &t in edf.jump_points().iter().chain(truth.jump_points()) {
        consider(t);
    }
    consider(density_mode);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss;
    use crate::smoother::{fit_local_poly, fit_local_poly_in, MarSample};
    use approx::assert_abs_diff_eq;

    #[test]
    fn ecdf_arithmetic() {
        let edf = EdfEstimate::from_residuals(&[-1.0, 0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(edf.evaluate(0.0), 2.0 / 3.0);
        assert_abs_diff_eq!(edf.evaluate(-1.5), 0.0);
        assert_abs_diff_eq!(edf.evaluate(1.0), 1.0);
        assert_abs_diff_eq!(edf.evaluate(5.0), 1.0);
        assert_abs_diff_eq!(edf.evaluate_left(0.0), 1.0 / 3.0);
        // ranks at distinct jump points
        for (rank, &t) in edf.jump_points().iter().enumerate() {
            assert_abs_diff_eq!(edf.evaluate(t), (rank + 1) as f64 / 3.0);
        }
    }

    #[test]
    fn ties_stack_mass() {
        let edf = EdfEstimate::from_residuals(&[0.5, 0.5, 2.0, 0.5]).unwrap();
        assert_abs_diff_eq!(edf.evaluate(0.5), 0.75);
        assert_abs_diff_eq!(edf.evaluate_left(0.5), 0.0);
        let mut buf = Vec::new();
        edf.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,F\n0.5,0.75\n2,1\n");
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(matches!(
            EdfEstimate::from_residuals(&[]),
            Err(EdfError::NoCompleteCases)
        ));
        assert!(matches!(
            EdfEstimate::from_residuals(&[0.0, f64::NAN]),
            Err(EdfError::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn complete_case_edf_counts_only_observed_rows() {
        // residuals (-1, ., 1) under delta = (1, 0, 1): F(0) = 1/2
        let sample = MarSample::univariate([
            (0.25, Some(-1.0)),
            (0.5, None),
            (0.75, Some(1.0)),
        ])
        .unwrap();
        // a degree-0 wide fit averages the two observed responses to 0
        let kern = ProductKernel::new(4, 1);
        let fit = fit_local_poly(&sample, 0, &kern, 10.0).unwrap();
        let edf = edf_complete_case(&sample, &fit).unwrap();
        assert_eq!(edf.n_complete(), 2);
        assert_abs_diff_eq!(edf.evaluate(0.0), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn matches_full_data_ecdf_when_nothing_is_missing() {
        let pairs: Vec<(f64, Option<f64>)> = (0..30)
            .map(|i| {
                let x = i as f64 / 29.0;
                (x, Some((3.0 * x).sin() + if i % 2 == 0 { 0.2 } else { -0.1 }))
            })
            .collect();
        let sample = MarSample::univariate(pairs).unwrap();
        let kern = ProductKernel::new(4, 1);
        let fit = fit_local_poly(&sample, 1, &kern, 0.3).unwrap();
        let edf = edf_complete_case(&sample, &fit).unwrap();
        let manual: Vec<f64> = smoother::residuals_complete_case(&fit, &sample)
            .unwrap()
            .into_iter()
            .map(|(_, r)| r)
            .collect();
        let direct = EdfEstimate::from_residuals(&manual).unwrap();
        assert_eq!(edf, direct);
    }

    #[test]
    fn tuned_estimator_collapses_on_noise_free_polynomials() {
        let pairs: Vec<(f64, Option<f64>)> = (0..25)
            .map(|i| {
                let x = -1.0 + 2.0 * i as f64 / 24.0;
                let y = 0.5 - 1.5 * x;
                (x, (i % 3 != 0).then_some(y))
            })
            .collect();
        let sample = MarSample::univariate(pairs).unwrap();
        let kern = ProductKernel::new(4, 1);
        let domain = DomainBox::symmetric_unit(1);
        for mode in [ImputationMode::Full, ImputationMode::Partial] {
            let residuals =
                tuned_residuals_in(&sample, 1, &kern, 0.5, 0.5, &domain, mode).unwrap();
            for (_, r) in &residuals {
                assert!(r.abs() <= 1e-8, "adjusted residual {r} should vanish");
            }
        }
        let edf = edf_tuned(&sample, 1, &kern, 0.5, 0.5).unwrap();
        assert_abs_diff_eq!(edf.evaluate(1e-6), 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(edf.evaluate(-1e-6), 0.0, epsilon = 0.0);
    }

    /// Independent two-stage oracle on a five-point dataset: both stages
    /// solved with plain normal equations.
    #[test]
    fn tuned_matches_two_stage_oracle() {
        let xs = [0.05, 0.3, 0.5, 0.7, 0.95];
        let ys = [0.8, -0.1, 0.6, 1.1, -0.4];
        let deltas = [true, true, false, true, true];
        let kern = ProductKernel::new(4, 1);
        let c = 0.55;

        let oracle_ll = |data_x: &[f64], data_y: &[f64], q: f64| -> f64 {
            let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (&x, &y) in data_x.iter().zip(data_y) {
                let u = (x - q) / c;
                let w = kern.weight_1d(u);
                s0 += w;
                s1 += w * u;
                s2 += w * u * u;
                t0 += w * y;
                t1 += w * u * y;
            }
            (s2 * t0 - s1 * t1) / (s0 * s2 - s1 * s1)
        };

        let cc_x: Vec<f64> = xs
            .iter()
            .zip(deltas)
            .filter(|(_, d)| *d)
            .map(|(&x, _)| x)
            .collect();
        let cc_y: Vec<f64> = ys
            .iter()
            .zip(deltas)
            .filter(|(_, d)| *d)
            .map(|(&y, _)| y)
            .collect();
        let imputed: Vec<f64> = xs.iter().map(|&x| oracle_ll(&cc_x, &cc_y, x)).collect();
        let expected: Vec<f64> = cc_x
            .iter()
            .zip(&cc_y)
            .map(|(&x, &y)| y - oracle_ll(&xs, &imputed, x))
            .collect();

        let sample = MarSample::univariate(
            xs.iter()
                .zip(ys)
                .zip(deltas)
                .map(|((&x, y), d)| (x, d.then_some(y))),
        )
        .unwrap();
        let domain = DomainBox::new(vec![(0.0, 1.0)]).unwrap();
        let got =
            tuned_residuals_in(&sample, 1, &kern, c, c, &domain, ImputationMode::Full).unwrap();
        assert_eq!(got.len(), expected.len());
        for ((_, r), e) in got.iter().zip(expected) {
            assert_abs_diff_eq!(*r, e, epsilon = 1e-9);
        }
    }

    #[test]
    fn sigma2_examples() {
        assert_abs_diff_eq!(sigma2_complete_case(&[1.0, -1.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(sigma2_complete_case(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(sigma2_complete_case(&[3.0]).unwrap(), 9.0);
        assert!(matches!(
            sigma2_complete_case(&[]),
            Err(EdfError::NoCompleteCases)
        ));
    }

    #[test]
    fn expansion_remainder_on_hand_data() {
        // identical residual and error sets make the step parts cancel, so
        // the remainder is sup_t phi(t) |mean eps|, attained at the mode
        let values = [-0.4, 0.2, 1.1];
        let edf = EdfEstimate::from_residuals(&values).unwrap();
        let sup = sup_expansion_remainder(&edf, &values, gauss::pdf, 0.0).unwrap();
        let mean = values.iter().sum::<f64>() / 3.0;
        assert_abs_diff_eq!(sup, gauss::pdf(0.0) * mean.abs(), epsilon = 1e-12);
        assert!(matches!(
            sup_expansion_remainder(&edf, &values[..2], gauss::pdf, 0.0),
            Err(EdfError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn edf_is_a_valid_cdf_on_random_fits() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(404);
        for _ in 0..20 {
            let n = rng.random_range(10..60);
            let pairs: Vec<(f64, Option<f64>)> = (0..n)
                .map(|_| {
                    let x: f64 = rng.random_range(-1.0..1.0);
                    let y: f64 = rng.random_range(-2.0..2.0);
                    (x, rng.random_bool(0.7).then_some(y))
                })
                .collect();
            let Ok(sample) = MarSample::univariate(pairs) else {
                continue;
            };
            if sample.n_complete() < 4 {
                continue;
            }
            let kern = ProductKernel::new(4, 1);
            let fit = fit_local_poly_in(
                &sample,
                1,
                &kern,
                0.4,
                DomainBox::symmetric_unit(1),
            )
            .unwrap();
            let Ok(edf) = edf_complete_case(&sample, &fit) else {
                continue;
            };
            let mut prev = 0.0;
            for i in -40..=40 {
                let t = i as f64 / 10.0;
                let v = edf.evaluate(t);
                assert!((0.0..=1.0).contains(&v));
                assert!(v >= prev);
                prev = v;
            }
            // cadlag structure at the jumps: the jump point carries its own
            // mass, and the value holds until the next distinct jump
            let n = edf.n_complete() as f64;
            let jumps = edf.jump_points();
            for (k, &v) in jumps.iter().enumerate() {
                assert!(edf.evaluate(v) >= edf.evaluate_left(v) + 1.0 / n - 1e-12);
                if let Some(&next) = jumps[k + 1..].iter().find(|&&w| w > v) {
                    let mid = v + 0.5 * (next - v);
                    if mid > v && mid < next {
                        assert_abs_diff_eq!(edf.evaluate(mid), edf.evaluate(v), epsilon = 0.0);
                    }
                }
            }
            assert_abs_diff_eq!(edf.evaluate(jumps[jumps.len() - 1]), 1.0, epsilon = 0.0);
            assert_abs_diff_eq!(edf.evaluate_left(jumps[0]), 0.0, epsilon = 0.0);
        }
    }
}
