//! Hyperparameter domains and the learning-rate / momentum / batch-size search space.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LEARNING_RATE: &str = "learning_rate";
pub const MOMENTUM: &str = "momentum";
pub const BATCH_SIZE: &str = "batch_size";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("dimension `{0}`: lower bound must be below upper bound")]
    EmptyInterval(String),
    #[error("dimension `{0}`: log-scaled bounds must be positive")]
    NonPositiveLogBound(String),
    #[error("dimension `{0}`: categorical values must be distinct, ascending and non-empty")]
    BadCategories(String),
    #[error("duplicate dimension name `{0}`")]
    DuplicateName(String),
    #[error("missing dimension `{0}`")]
    MissingDimension(String),
}

/// Domain of a single hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    ContinuousLinear { lo: f64, hi: f64 },
    /// Sampled and modeled uniformly in log10 space.
    ContinuousLog { lo: f64, hi: f64 },
    Categorical { values: Vec<i64> },
}

impl Domain {
    fn check(&self, name: &str) -> Result<(), SpaceError> {
        match self {
            Domain::ContinuousLinear { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(SpaceError::EmptyInterval(name.into()));
                }
            }
            Domain::ContinuousLog { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(SpaceError::EmptyInterval(name.into()));
                }
                if *lo <= 0.0 {
                    return Err(SpaceError::NonPositiveLogBound(name.into()));
                }
            }
            Domain::Categorical { values } => {
                if values.is_empty() || values.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(SpaceError::BadCategories(name.into()));
                }
            }
        }
        Ok(())
    }

    /// Bounds in sampling coordinates (log10 for log domains). `None` for categoricals.
    pub fn sampling_bounds(&self) -> Option<(f64, f64)> {
        match *self {
            Domain::ContinuousLinear { lo, hi } => Some((lo, hi)),
            Domain::ContinuousLog { lo, hi } => Some((lo.log10(), hi.log10())),
            Domain::Categorical { .. } => None,
        }
    }

    pub fn to_sampling(&self, value: f64) -> f64 {
        match self {
            Domain::ContinuousLog { .. } => value.log10(),
            _ => value,
        }
    }

    pub fn from_sampling(&self, coord: f64) -> f64 {
        match *self {
            // powf can land a hair outside the bounds at the interval ends
            Domain::ContinuousLog { lo, hi } => 10f64.powf(coord).clamp(lo, hi),
            Domain::ContinuousLinear { lo, hi } => coord.clamp(lo, hi),
            Domain::Categorical { .. } => coord,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        match self {
            Domain::ContinuousLinear { lo, hi } | Domain::ContinuousLog { lo, hi } => {
                value.is_finite() && *lo <= value && value <= *hi
            }
            Domain::Categorical { values } => values.iter().any(|&v| v as f64 == value),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Domain::Categorical { values } => values[rng.random_range(0..values.len())] as f64,
            _ => {
                let (lo, hi) = self.sampling_bounds().expect("continuous");
                self.from_sampling(rng.random_range(lo..=hi))
            }
        }
    }
}

/// Ordered, uniquely named dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    dimensions: Vec<(String, Domain)>,
}

impl SearchSpace {
    pub fn new(dimensions: Vec<(String, Domain)>) -> Result<Self, SpaceError> {
        for (i, (name, domain)) in dimensions.iter().enumerate() {
            domain.check(name)?;
            if dimensions[..i].iter().any(|(n, _)| n == name) {
                return Err(SpaceError::DuplicateName(name.clone()));
            }
        }
        let space = Self { dimensions };
        for required in [LEARNING_RATE, MOMENTUM, BATCH_SIZE] {
            if space.domain(required).is_none() {
                return Err(SpaceError::MissingDimension(required.into()));
            }
        }
        Ok(space)
    }

    pub fn dimensions(&self) -> &[(String, Domain)] {
        &self.dimensions
    }

    pub fn domain(&self, name: &str) -> Option<&Domain> {
        self.dimensions
            .iter()
            .find_map(|(n, d)| (n == name).then_some(d))
    }
}

/// The space the baseline experiments tuned over: log-uniform learning rate on
/// [1e-4, 1], batch size from {4, 5, 8, 16, 32, 64}, momentum on [0.01, 0.99].
pub fn paper_search_space() -> SearchSpace {
    SearchSpace::new(vec![
        (
            LEARNING_RATE.into(),
            Domain::ContinuousLog { lo: 0.0001, hi: 1.0 },
        ),
        (
            BATCH_SIZE.into(),
            Domain::Categorical {
                values: vec![4, 5, 8, 16, 32, 64],
            },
        ),
        (
            MOMENTUM.into(),
            Domain::ContinuousLinear { lo: 0.01, hi: 0.99 },
        ),
    ])
    .expect("built-in space is valid")
}

/// One candidate configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperparameterSet {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: i64,
}

impl HyperparameterSet {
    pub fn new(learning_rate: f64, momentum: f64, batch_size: i64) -> Self {
        Self {
            learning_rate,
            momentum,
            batch_size,
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            LEARNING_RATE => Some(self.learning_rate),
            MOMENTUM => Some(self.momentum),
            BATCH_SIZE => Some(self.batch_size as f64),
            _ => None,
        }
    }

    fn set(&mut self, name: &str, value: f64) {
        match name {
            LEARNING_RATE => self.learning_rate = value,
            MOMENTUM => self.momentum = value,
            BATCH_SIZE => self.batch_size = value as i64,
            _ => {}
        }
    }

    /// Builds a set from per-dimension values; dimensions other than the three
    /// known ones are ignored.
    pub fn from_values<'a>(values: impl IntoIterator<Item = (&'a str, f64)>) -> Self {
        let mut set = Self::new(f64::NAN, f64::NAN, 0);
        for (name, v) in values {
            set.set(name, v);
        }
        set
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub dimension: String,
    pub value: f64,
    pub domain: Domain,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.domain {
            Domain::ContinuousLinear { lo, hi } | Domain::ContinuousLog { lo, hi } => {
                write!(f, "{} = {} outside [{lo}, {hi}]", self.dimension, self.value)
            }
            Domain::Categorical { values } => {
                write!(f, "{} = {} not in {values:?}", self.dimension, self.value)
            }
        }
    }
}

/// All violations of a set against a space. Empty means valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violates(&self, dimension: &str) -> bool {
        self.violations.iter().any(|v| v.dimension == dimension)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return write!(f, "valid");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

pub fn validate(set: &HyperparameterSet, space: &SearchSpace) -> ValidationReport {
    let violations = space
        .dimensions()
        .iter()
        .filter_map(|(name, domain)| {
            let value = set.get(name)?;
            (!domain.contains(value)).then(|| Violation {
                dimension: name.clone(),
                value,
                domain: domain.clone(),
            })
        })
        .collect();
    ValidationReport { violations }
}

pub fn sample_uniform<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> HyperparameterSet {
    HyperparameterSet::from_values(
        space
            .dimensions()
            .iter()
            .map(|(name, domain)| (name.as_str(), domain.sample(rng))),
    )
}
