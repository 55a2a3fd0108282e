//! Estimation of the error distribution in nonparametric regression when
//! responses are missing at random (MAR).
//!
//! The model is `Y = r(X) + eps` with `eps` independent of the covariate
//! vector `X`, observed as `(X_j, delta_j * Y_j, delta_j)` where `delta_j`
//! indicates whether the response was recorded. Everything downstream is
//! built from *complete cases* (rows with `delta = 1`):
//!
//! * [`smoother`] — local polynomial regression fitted by weighted least
//!   squares on the complete cases, with compactly supported product
//!   kernels from [`polybasis`].
//! * [`edf`] — the complete-case residual empirical distribution function,
//!   a tuned variant that re-smooths a fully imputed sample, and the
//!   complete-case variance estimator.
//! * [`asymptotics`] — closed-form efficiency oracles: the influence
//!   function of the residual EDF, its asymptotic variance, and canonical
//!   gradients for linear functionals `E[h(eps)]`.
//! * [`normtest`] — a martingale-transform goodness-of-fit test for
//!   zero-mean normal errors with unknown variance, with critical values
//!   from the supremum of reflected Brownian motion.
//! * [`data`] — synthetic-data generation (uniform covariates, logistic
//!   missingness, several error laws) and CSV I/O for samples.
//! * [`harness`] — deterministic, parallel Monte Carlo drivers that
//!   tabulate the scaled mean squared error of the EDF estimators and the
//!   level/power of the normality tests.

pub mod asymptotics;
pub mod data;
pub mod edf;
pub mod gauss;
pub mod harness;
pub mod normtest;
pub mod polybasis;
pub mod quad;
pub mod smoother;

pub use edf::EdfEstimate;
pub use normtest::TestResult;
pub use smoother::{DomainBox, MarRow, MarSample, SmootherFit};
