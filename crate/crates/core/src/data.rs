//! Synthetic data for the simulation design, plus CSV I/O for samples.
//!
//! The design draws covariates `X ~ U(-1, 1)`, responses `Y = r(X) + eps`
//! with `r(x) = x^3 - x^2 + x + cos(3 pi x / 2)`, and observation
//! indicators `delta ~ Bernoulli(pi(X))` with logistic propensity
//! `pi(x) = 1 / (1 + e^{-x})`, so on average half the responses are
//! missing. Error laws share mean zero; all alternatives to `N(0, 1)`
//! have variance 2.
//!
//! Randomness comes from three independent ChaCha streams (covariates,
//! errors, indicators) keyed to the design seed, so the indicators can be
//! regenerated from the covariate stream alone — missingness depends on
//! the covariates only, by construction.

use crate::smoother::{MarRow, MarSample, SmootherError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Sample(#[from] SmootherError),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
}

/// Error distributions used by the simulation designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorLaw {
    /// `N(0, 1)` — the null of the normality test and the MSE-study design.
    StdNormal,
    /// `N(0, 2)`, for checking the level of the test.
    NormalVar2,
    /// `chi^2(1) - 1`: mean zero, variance 2.
    ChiSqOneCentered,
    /// Student t with 4 degrees of freedom: variance 2.
    StudentT4,
    /// Laplace with scale 1: mean zero, variance 2.
    Laplace,
}

impl ErrorLaw {
    pub const ALL: [ErrorLaw; 5] = [
        ErrorLaw::StdNormal,
        ErrorLaw::NormalVar2,
        ErrorLaw::ChiSqOneCentered,
        ErrorLaw::StudentT4,
        ErrorLaw::Laplace,
    ];

    pub fn variance(self) -> f64 {
        match self {
            ErrorLaw::StdNormal => 1.0,
            _ => 2.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ErrorLaw::StdNormal => "n01",
            ErrorLaw::NormalVar2 => "n02",
            ErrorLaw::ChiSqOneCentered => "chisq1",
            ErrorLaw::StudentT4 => "t4",
            ErrorLaw::Laplace => "laplace",
        }
    }

    pub fn parse(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|law| law.label() == label)
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            ErrorLaw::StdNormal => rng.sample(StandardNormal),
            ErrorLaw::NormalVar2 => {
                let z: f64 = rng.sample(StandardNormal);
                std::f64::consts::SQRT_2 * z
            }
            ErrorLaw::ChiSqOneCentered => {
                let z: f64 = rng.sample(StandardNormal);
                z * z - 1.0
            }
            ErrorLaw::StudentT4 => {
                // ratio construction: Z / sqrt(V/4) with V a sum of four
                // squared standard normals
                let z: f64 = rng.sample(StandardNormal);
                loop {
                    let mut v = 0.0;
                    for _ in 0..4 {
                        let w: f64 = rng.sample(StandardNormal);
                        v += w * w;
                    }
                    if v > 0.0 {
                        return z / (v / 4.0).sqrt();
                    }
                }
            }
            ErrorLaw::Laplace => loop {
                let u = rng.random::<f64>() - 0.5;
                if u > -0.5 {
                    return if u < 0.0 {
                        (1.0 + 2.0 * u).ln()
                    } else {
                        -(1.0 - 2.0 * u).ln()
                    };
                }
            },
        }
    }
}

/// One simulated dataset: `n` rows under a chosen error law, with the fixed
/// `U(-1, 1)` covariate law and logistic propensity, fully determined by
/// `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDesign {
    pub n: usize,
    pub error_law: ErrorLaw,
    pub seed: u64,
    propensity_override: Option<f64>,
}

impl SimDesign {
    pub fn new(n: usize, error_law: ErrorLaw, seed: u64) -> Self {
        assert!(n >= 1, "design needs at least one row");
        Self {
            n,
            error_law,
            seed,
            propensity_override: None,
        }
    }

    /// Replace the logistic propensity with a constant (e.g. 1.0 forces a
    /// fully observed sample). Test and diagnostic plumbing.
    pub fn with_propensity_override(mut self, p: f64) -> Result<Self, DataError> {
        if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
            return Err(DataError::InvalidDesign(format!(
                "propensity override must lie in [0, 1], got {p}"
            )));
        }
        self.propensity_override = Some(p);
        Ok(self)
    }

    pub fn propensity_override(&self) -> Option<f64> {
        self.propensity_override
    }

    /// The same design re-keyed to a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// The simulation regression function `r(x) = x^3 - x^2 + x + cos(3 pi x / 2)`.
pub fn regression_truth(x: f64) -> f64 {
    x * x * x - x * x + x + (1.5 * PI * x).cos()
}

/// Logistic propensity `pi(x) = P(delta = 1 | X = x)`.
pub fn propensity(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

const COVARIATE_STREAM: u64 = 0;
const ERROR_STREAM: u64 = 1;
const INDICATOR_STREAM: u64 = 2;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draw one sample from the design. Deterministic given the seed.
pub fn generate(design: &SimDesign) -> MarSample {
    let mut covariates = stream_rng(design.seed, COVARIATE_STREAM);
    let mut errors = stream_rng(design.seed, ERROR_STREAM);
    let mut indicators = stream_rng(design.seed, INDICATOR_STREAM);
    let mut rows = Vec::with_capacity(design.n);
    for _ in 0..design.n {
        let x: f64 = covariates.random_range(-1.0..1.0);
        let eps = design.error_law.sample(&mut errors);
        let p = design.propensity_override.unwrap_or_else(|| propensity(x));
        let observed = indicators.random::<f64>() < p;
        rows.push(MarRow::new(
            vec![x],
            observed.then(|| regression_truth(x) + eps),
        ));
    }
    MarSample::new(rows).expect("generated samples are nonempty and finite")
}

/// Replay only the covariate and indicator streams, returning the delta
/// sequence `generate` would produce. Missingness depends on the covariates
/// alone, so the error stream is never touched.
pub fn regenerate_indicators(design: &SimDesign) -> Vec<bool> {
    let mut covariates = stream_rng(design.seed, COVARIATE_STREAM);
    let mut indicators = stream_rng(design.seed, INDICATOR_STREAM);
    (0..design.n)
        .map(|_| {
            let x: f64 = covariates.random_range(-1.0..1.0);
            let p = design.propensity_override.unwrap_or_else(|| propensity(x));
            indicators.random::<f64>() < p
        })
        .collect()
}

/// Write a sample as CSV: header `x1,...,xm,y,delta`, missing responses as
/// empty fields, LF line endings.
pub fn write_mar_csv<W: Write>(sample: &MarSample, out: &mut W) -> Result<(), DataError> {
    let m = sample.dimension();
    for j in 1..=m {
        write!(out, "x{j},")?;
    }
    writeln!(out, "y,delta")?;
    for row in sample.rows() {
        for x in row.covariates() {
            write!(out, "{x},")?;
        }
        match row.response() {
            Some(y) => writeln!(out, "{y},1")?,
            None => writeln!(out, ",0")?,
        }
    }
    Ok(())
}

/// Read a sample written by [`write_mar_csv`]. Lines starting with `#` and
/// blank lines are skipped; `delta` must be consistent with the presence of
/// `y`.
pub fn read_mar_csv<R: BufRead>(input: R) -> Result<MarSample, DataError> {
    let mut rows = Vec::new();
    let mut dimension: Option<usize> = None;
    for (line_no, line) in input.lines().enumerate() {
        let line_no = line_no + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        match dimension {
            None => {
                if fields.len() < 3 {
                    return Err(DataError::Malformed {
                        line: line_no,
                        message: "header needs at least x1,y,delta".into(),
                    });
                }
                let m = fields.len() - 2;
                for (j, field) in fields.iter().take(m).enumerate() {
                    let expected = format!("x{}", j + 1);
                    if *field != expected {
                        return Err(DataError::Malformed {
                            line: line_no,
                            message: format!("expected header column {expected}, got {field}"),
                        });
                    }
                }
                if fields[m] != "y" || fields[m + 1] != "delta" {
                    return Err(DataError::Malformed {
                        line: line_no,
                        message: "header must end with y,delta".into(),
                    });
                }
                dimension = Some(m);
            }
            Some(m) => {
                if fields.len() != m + 2 {
                    return Err(DataError::Malformed {
                        line: line_no,
                        message: format!("expected {} fields, got {}", m + 2, fields.len()),
                    });
                }
                let mut covariates = Vec::with_capacity(m);
                for field in &fields[..m] {
                    let v: f64 = field.parse().map_err(|_| DataError::Malformed {
                        line: line_no,
                        message: format!("bad covariate value {field:?}"),
                    })?;
                    covariates.push(v);
                }
                let y_field = fields[m];
                let delta = match fields[m + 1] {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(DataError::Malformed {
                            line: line_no,
                            message: format!("delta must be 0 or 1, got {other:?}"),
                        })
                    }
                };
                let response = if y_field.is_empty() {
                    None
                } else {
                    Some(y_field.parse::<f64>().map_err(|_| DataError::Malformed {
                        line: line_no,
                        message: format!("bad response value {y_field:?}"),
                    })?)
                };
                if delta != response.is_some() {
                    return Err(DataError::Malformed {
                        line: line_no,
                        message: "delta = 1 iff y is present".into(),
                    });
                }
                rows.push(MarRow::new(covariates, response));
            }
        }
    }
    Ok(MarSample::new(rows)?)
}
