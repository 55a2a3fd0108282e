//! Closed-form efficiency oracles for complete-case estimation of the
//! error distribution.
//!
//! The influence function of the complete-case residual EDF at `t` is
//!
//! ```text
//! b(delta, eps, t) = (delta / E[delta]) { 1[eps <= t] - F(t) + eps f(t) }
//! ```
//!
//! and its second moment, the asymptotic variance of
//! `sqrt(n) (F_hat_c(t) - F(t))`, has the closed form
//! `(F(t)(1 - F(t)) + 2 f(t) E[eps 1(eps <= t)] + f(t)^2 sigma^2) / E[delta]`.
//! More generally, the canonical gradient of a linear functional
//! `E[h(eps)]` is `(delta/E[delta]) { h(eps) - E[h] - E[l(eps) h(eps)] eps }`
//! with score `l = -f'/f`; [`CanonicalGradient`] assembles it both directly
//! and through the projection pieces `(s*, t*)` and insists the two routes
//! agree.

use crate::gauss;
use crate::quad::{self, QuadError};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AsymError {
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("E[delta] must lie in (0, 1], got {0}")]
    InvalidEDelta(f64),
    #[error("invalid error-law specification: {0}")]
    InvalidLaw(String),
    #[error("canonical-gradient routes disagree at eps = {eps}: direct {direct}, via (s*, t*) {assembled}")]
    GradientInconsistent {
        eps: f64,
        direct: f64,
        assembled: f64,
    },
}

type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

enum PartialMeanRule {
    Analytic(Fn1),
    Quadrature,
}

/// An error distribution described by the pieces the oracles need: CDF,
/// density, location score `l = -f'/f`, variance, and Fisher information
/// for location.
pub struct ErrorLawSpec {
    cdf: Fn1,
    pdf: Fn1,
    score: Fn1,
    variance: f64,
    fisher_information: f64,
    partial_mean: PartialMeanRule,
}

impl Clone for ErrorLawSpec {
    fn clone(&self) -> Self {
        Self {
            cdf: self.cdf.clone(),
            pdf: self.pdf.clone(),
            score: self.score.clone(),
            variance: self.variance,
            fisher_information: self.fisher_information,
            partial_mean: match &self.partial_mean {
                PartialMeanRule::Analytic(f) => PartialMeanRule::Analytic(f.clone()),
                PartialMeanRule::Quadrature => PartialMeanRule::Quadrature,
            },
        }
    }
}

const MOMENT_TOL: f64 = 1e-9;

impl ErrorLawSpec {
    /// The `N(0, 1)` law: score `l(z) = z`, `J = 1`.
    pub fn standard_normal() -> Self {
        Self::normal_with_variance(1.0)
    }

    /// A centered normal law with the given variance.
    pub fn normal_with_variance(variance: f64) -> Self {
        assert!(
            variance.is_finite() && variance > 0.0,
            "variance must be positive"
        );
        let sd = variance.sqrt();
        Self {
            cdf: Arc::new(move |t| gauss::cdf(t / sd)),
            pdf: Arc::new(move |t| gauss::pdf(t / sd) / sd),
            score: Arc::new(move |z| z / variance),
            variance,
            fisher_information: 1.0 / variance,
            // E[eps 1(eps <= t)] = -sigma^2 f(t) for centered normals
            partial_mean: PartialMeanRule::Analytic(Arc::new(move |t| {
                -variance * gauss::pdf(t / sd) / sd
            })),
        }
    }

    /// Build a law from user-supplied pieces. The density mass is checked
    /// and the Fisher information is computed by quadrature of `l^2 f`.
    pub fn from_parts(
        cdf: impl Fn(f64) -> f64 + Send + Sync + 'static,
        pdf: impl Fn(f64) -> f64 + Send + Sync + 'static,
        score: impl Fn(f64) -> f64 + Send + Sync + 'static,
        variance: f64,
    ) -> Result<Self, AsymError> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(AsymError::InvalidLaw(format!(
                "variance must be positive, got {variance}"
            )));
        }
        let pdf: Fn1 = Arc::new(pdf);
        let mass = {
            let pdf = pdf.clone();
            quad::integrate_real_line(move |z| pdf(z), 1e-10)?
        };
        if (mass - 1.0).abs() > 1e-8 {
            return Err(AsymError::InvalidLaw(format!(
                "density mass is {mass}, expected 1"
            )));
        }
        let score: Fn1 = Arc::new(score);
        let fisher_information = {
            let (pdf, score) = (pdf.clone(), score.clone());
            quad::integrate_real_line(move |z| score(z) * score(z) * pdf(z), MOMENT_TOL)?
        };
        if fisher_information + 1e-6 < 1.0 / variance {
            return Err(AsymError::InvalidLaw(format!(
                "information {fisher_information} below the location bound {}",
                1.0 / variance
            )));
        }
        Ok(Self {
            cdf: Arc::new(cdf),
            pdf,
            score,
            variance,
            fisher_information,
            partial_mean: PartialMeanRule::Quadrature,
        })
    }

    pub fn cdf(&self, t: f64) -> f64 {
        (self.cdf)(t)
    }

    pub fn pdf(&self, t: f64) -> f64 {
        (self.pdf)(t)
    }

    /// The location score `l(z) = -f'(z)/f(z)`.
    pub fn score(&self, z: f64) -> f64 {
        (self.score)(z)
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Fisher information for location, `J`.
    pub fn fisher_information(&self) -> f64 {
        self.fisher_information
    }

    /// The centered score `l0(z) = l(z) - z / sigma^2`.
    pub fn centered_score(&self, z: f64) -> f64 {
        self.score(z) - z / self.variance
    }

    /// `J0 = J - 1/sigma^2`, the information left after projecting out the
    /// linear direction.
    pub fn residual_information(&self) -> f64 {
        self.fisher_information - 1.0 / self.variance
    }

    /// The partial mean `E[eps 1(eps <= t)]`, analytic where known and by
    /// adaptive quadrature otherwise.
    pub fn partial_mean(&self, t: f64) -> Result<f64, AsymError> {
        match &self.partial_mean {
            PartialMeanRule::Analytic(f) => Ok(f(t)),
            PartialMeanRule::Quadrature => {
                let pdf = self.pdf.clone();
                Ok(quad::integrate_left_tail(
                    move |z| z * pdf(z),
                    t,
                    MOMENT_TOL,
                )?)
            }
        }
    }
}

/// An error law together with the observation probability `E[delta]`.
#[derive(Clone)]
pub struct EfficiencyContext {
    law: ErrorLawSpec,
    e_delta: f64,
}

impl EfficiencyContext {
    pub fn new(law: ErrorLawSpec, e_delta: f64) -> Result<Self, AsymError> {
        if !(e_delta.is_finite() && e_delta > 0.0 && e_delta <= 1.0) {
            return Err(AsymError::InvalidEDelta(e_delta));
        }
        Ok(Self { law, e_delta })
    }

    pub fn law(&self) -> &ErrorLawSpec {
        &self.law
    }

    pub fn e_delta(&self) -> f64 {
        self.e_delta
    }
}

/// The influence function of the complete-case residual EDF at `t`.
pub fn influence(ctx: &EfficiencyContext, delta: bool, eps: f64, t: f64) -> f64 {
    if !delta {
        return 0.0;
    }
    let indicator = if eps <= t { 1.0 } else { 0.0 };
    (indicator - ctx.law.cdf(t) + eps * ctx.law.pdf(t)) / ctx.e_delta
}

/// The asymptotic variance of `sqrt(n) (F_hat_c(t) - F(t))`: the second
/// moment `E[b(delta, eps, t)^2]`.
pub fn asym_variance_f(ctx: &EfficiencyContext, t: f64) -> Result<f64, AsymError> {
    let law = &ctx.law;
    let big_f = law.cdf(t);
    let f = law.pdf(t);
    let pm = law.partial_mean(t)?;
    Ok((big_f * (1.0 - big_f) + 2.0 * f * pm + f * f * law.variance()) / ctx.e_delta)
}

/// `E[delta]` for the fixed simulation design (`U(-1,1)` covariates,
/// logistic propensity): exactly one half by symmetry.
pub fn e_delta_uniform_logistic() -> f64 {
    0.5
}

/// `E[delta] = int pi dG` for a generic one-dimensional covariate density
/// `g` on `[lo, hi]`.
pub fn e_delta_numeric(
    propensity: impl Fn(f64) -> f64,
    covariate_density: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
) -> Result<f64, AsymError> {
    Ok(quad::integrate(
        |x| propensity(x) * covariate_density(x),
        lo,
        hi,
        1e-12,
    )?)
}

/// The canonical gradient of the linear functional `E[h(eps)]`.
///
/// Construction integrates the moments `E[h]`, `E[eps h]`, `E[l h]`, and —
/// on an independent route — `E[h0 l0]`, then verifies on a grid that the
/// projection assembly `delta (s*(eps) + l(eps) t*)` reproduces the direct
/// form of the gradient.
pub struct CanonicalGradient {
    law: ErrorLawSpec,
    e_delta: f64,
    h: Fn1,
    mean_h: f64,
    cross_eps_h: f64,
    cross_score_h: f64,
    cross_h0_l0: f64,
}

impl CanonicalGradient {
    pub fn new(
        ctx: &EfficiencyContext,
        h: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self, AsymError> {
        let law = ctx.law.clone();
        let h: Fn1 = Arc::new(h);
        let pdf = law.pdf.clone();
        let mean_h = {
            let (h, pdf) = (h.clone(), pdf.clone());
            quad::integrate_real_line(move |z| h(z) * pdf(z), MOMENT_TOL)?
        };
        let cross_eps_h = {
            let (h, pdf) = (h.clone(), pdf.clone());
            quad::integrate_real_line(move |z| z * h(z) * pdf(z), MOMENT_TOL)?
        };
        let cross_score_h = {
            let (h, pdf, score) = (h.clone(), pdf.clone(), law.score.clone());
            quad::integrate_real_line(move |z| score(z) * h(z) * pdf(z), MOMENT_TOL)?
        };
        // independent quadrature of E[h0 l0]; algebraically it equals
        // E[l h] - E[eps h]/sigma^2
        let cross_h0_l0 = {
            let (h, pdf, score) = (h.clone(), pdf.clone(), law.score.clone());
            let variance = law.variance;
            quad::integrate_real_line(
                move |z| {
                    let h0 = h(z) - mean_h - z / variance * cross_eps_h;
                    let l0 = score(z) - z / variance;
                    h0 * l0 * pdf(z)
                },
                MOMENT_TOL,
            )?
        };

        let gradient = Self {
            law,
            e_delta: ctx.e_delta,
            h,
            mean_h,
            cross_eps_h,
            cross_score_h,
            cross_h0_l0,
        };
        gradient.verify_assembly()?;
        Ok(gradient)
    }

    /// Direct form `(delta/E[delta]) { h(eps) - E[h] - E[l h] eps }`.
    pub fn eval(&self, delta: bool, eps: f64) -> f64 {
        if !delta {
            return 0.0;
        }
        ((self.h)(eps) - self.mean_h - self.cross_score_h * eps) / self.e_delta
    }

    /// The projection of `h` onto the error tangent directions:
    /// `h0(z) = h(z) - E[h] - (z/sigma^2) E[eps h]`.
    pub fn h0(&self, z: f64) -> f64 {
        (self.h)(z) - self.mean_h - z / self.law.variance * self.cross_eps_h
    }

    /// `s*(z) = (h0(z) + sigma^2 E[h0 l0] l0(z)) / E[delta]`.
    pub fn s_star(&self, z: f64) -> f64 {
        (self.h0(z) + self.law.variance * self.cross_h0_l0 * self.law.centered_score(z))
            / self.e_delta
    }

    /// `t*(x) = -sigma^2 E[h0 l0] / E[delta]`, constant in the covariate.
    pub fn t_star(&self, _x: &[f64]) -> f64 {
        -self.law.variance * self.cross_h0_l0 / self.e_delta
    }

    /// The gradient reassembled from the projection pieces:
    /// `delta { s*(eps) + l(eps) t* }`.
    pub fn eval_assembled(&self, delta: bool, eps: f64) -> f64 {
        if !delta {
            return 0.0;
        }
        self.s_star(eps) + self.law.score(eps) * self.t_star(&[])
    }

    pub fn mean_h(&self) -> f64 {
        self.mean_h
    }

    fn verify_assembly(&self) -> Result<(), AsymError> {
        for i in -8..=8 {
            let eps = i as f64 * 0.5;
            let direct = self.eval(true, eps);
            let assembled = self.eval_assembled(true, eps);
            if (direct - assembled).abs() > 1e-6 * (1.0 + direct.abs()) {
                return Err(AsymError::GradientInconsistent {
                    eps,
                    direct,
                    assembled,
                });
            }
        }
        Ok(())
    }
}

/// One-shot evaluation of the canonical gradient of `E[h(eps)]` at a data
/// point. The gradient does not depend on the covariate; `x` is accepted to
/// mirror the observation layout.
pub fn canonical_gradient_eh(
    ctx: &EfficiencyContext,
    h: impl Fn(f64) -> f64 + Send + Sync + 'static,
    _x: &[f64],
    delta: bool,
    eps: f64,
) -> Result<f64, AsymError> {
    Ok(CanonicalGradient::new(ctx, h)?.eval(delta, eps))
}
