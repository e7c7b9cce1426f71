//! Tree-structured Parzen estimator.
//!
//! Past trials are split into a "good" fraction (lowest error) and the rest.
//! Each dimension gets a density `l(x)` fitted to the good values and `g(x)`
//! fitted to the bad ones; the next suggestion is the candidate drawn from `l`
//! that maximises `l(x) / g(x)`. Dimensions are modeled independently and log
//! domains are handled entirely in log10 coordinates.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erf_inv};
use thiserror::Error;

use crate::space::{sample_uniform, Domain, HyperparameterSet, SearchSpace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TpeError {
    #[error("history is empty")]
    EmptyHistory,
    #[error("value {value} outside [{lo}, {hi}]")]
    OutOfBounds { value: f64, lo: f64, hi: f64 },
    #[error("category index {index} out of range for {n_categories} categories")]
    CategoryOutOfRange { index: usize, n_categories: usize },
    #[error("invalid config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TpeConfig {
    /// Fraction of trials treated as good.
    pub gamma: f64,
    /// Random trials before the densities are used.
    pub n_startup: usize,
    pub n_ei_candidates: usize,
    /// Minimum bandwidth as a fraction of the interval width.
    pub bandwidth_floor: f64,
    pub prior_weight: f64,
    pub seed: u64,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self {
            gamma: 0.25,
            n_startup: 10,
            n_ei_candidates: 24,
            bandwidth_floor: 0.01,
            prior_weight: 1.0,
            seed: 0,
        }
    }
}

impl TpeConfig {
    pub fn validate(&self) -> Result<(), TpeError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(TpeError::Config(format!("gamma {} outside (0, 1)", self.gamma)));
        }
        if self.n_startup < 1 {
            return Err(TpeError::Config("n_startup must be >= 1".into()));
        }
        if self.n_ei_candidates < 1 {
            return Err(TpeError::Config("n_ei_candidates must be >= 1".into()));
        }
        if !(self.bandwidth_floor > 0.0 && self.bandwidth_floor.is_finite()) {
            return Err(TpeError::Config("bandwidth_floor must be positive".into()));
        }
        if !(self.prior_weight > 0.0 && self.prior_weight.is_finite()) {
            return Err(TpeError::Config("prior_weight must be positive".into()));
        }
        Ok(())
    }
}

/// A tried configuration and its accuracy.
pub type Observation = (HyperparameterSet, f64);

/// Splits `history` into (good, bad) by ascending error `1 - accuracy`.
///
/// The good side holds the first `max(1, ceil(gamma * n))` entries; equal
/// errors keep their history order.
pub fn split_observations(
    history: &[Observation],
    gamma: f64,
) -> Result<(Vec<Observation>, Vec<Observation>), TpeError> {
    if history.is_empty() {
        return Err(TpeError::EmptyHistory);
    }
    let mut sorted = history.to_vec();
    // stable: ties stay in history order
    sorted.sort_by(|a, b| (1.0 - a.1).total_cmp(&(1.0 - b.1)));
    let n_good = ((gamma * history.len() as f64).ceil() as usize).clamp(1, history.len());
    let bad = sorted.split_off(n_good);
    Ok((sorted, bad))
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / SQRT_2))
}

fn std_normal_quantile(p: f64) -> f64 {
    SQRT_2 * erf_inv(2.0 * p - 1.0)
}

/// Mixture of Gaussians truncated to `bounds`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParzenEstimator {
    means: Vec<f64>,
    bandwidths: Vec<f64>,
    weights: Vec<f64>,
    bounds: (f64, f64),
    // per-component normalisers Φ(b) - Φ(a)
    masses: Vec<f64>,
}

impl ParzenEstimator {
    fn new(means: Vec<f64>, bandwidths: Vec<f64>, raw_weights: Vec<f64>, bounds: (f64, f64)) -> Self {
        let total: f64 = raw_weights.iter().sum();
        let weights = raw_weights.iter().map(|w| w / total).collect();
        let (lo, hi) = bounds;
        let masses = means
            .iter()
            .zip(&bandwidths)
            .map(|(m, s)| std_normal_cdf((hi - m) / s) - std_normal_cdf((lo - m) / s))
            .collect();
        Self {
            means,
            bandwidths,
            weights,
            bounds,
            masses,
        }
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    fn pdf_unchecked(&self, x: f64) -> f64 {
        let norm = 1.0 / (2.0 * PI).sqrt();
        self.means
            .iter()
            .zip(&self.bandwidths)
            .zip(self.weights.iter().zip(&self.masses))
            .map(|((m, s), (w, mass))| {
                let z = (x - m) / s;
                w * norm * (-0.5 * z * z).exp() / (s * mass)
            })
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut u: f64 = rng.random();
        let mut k = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            if u < *w {
                k = i;
                break;
            }
            u -= w;
        }
        let (lo, hi) = self.bounds;
        let (m, s) = (self.means[k], self.bandwidths[k]);
        let pa = std_normal_cdf((lo - m) / s);
        let pb = std_normal_cdf((hi - m) / s);
        let p = pa + rng.random::<f64>() * (pb - pa);
        // keep the quantile argument inside (0, 1)
        let p = p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        (m + s * std_normal_quantile(p)).clamp(lo, hi)
    }
}

/// Fits `l` or `g` for one continuous dimension. `values` and `bounds` are in
/// sampling coordinates.
///
/// Each observation contributes a component centred on it whose bandwidth is
/// the distance to its nearest neighbour in sorted order; the two outermost
/// points use their distance to the adjacent bound instead when that is larger,
/// and every bandwidth is at least `bandwidth_floor * (hi - lo)`. A prior
/// component centred on the midpoint with bandwidth `hi - lo` and weight
/// `prior_weight` is always included.
pub fn fit_continuous(
    values: &[f64],
    bounds: (f64, f64),
    config: &TpeConfig,
) -> Result<ParzenEstimator, TpeError> {
    let (lo, hi) = bounds;
    if let Some(&value) = values.iter().find(|v| !(lo..=hi).contains(*v)) {
        return Err(TpeError::OutOfBounds { value, lo, hi });
    }
    let width = hi - lo;
    let floor = config.bandwidth_floor * width;

    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut means = Vec::with_capacity(n + 1);
    let mut bandwidths = Vec::with_capacity(n + 1);
    for i in 0..n {
        let x = sorted[i];
        let left = (i > 0).then(|| x - sorted[i - 1]);
        let right = (i + 1 < n).then(|| sorted[i + 1] - x);
        let bw = match (left, right) {
            (Some(l), Some(r)) => l.min(r),
            (None, Some(r)) => r.max(x - lo),
            (Some(l), None) => l.max(hi - x),
            (None, None) => (x - lo).min(hi - x),
        };
        means.push(x);
        bandwidths.push(bw.max(floor));
    }
    means.push(0.5 * (lo + hi));
    bandwidths.push(width);
    let mut weights = vec![1.0; n];
    weights.push(config.prior_weight);
    Ok(ParzenEstimator::new(means, bandwidths, weights, bounds))
}

pub fn density(estimator: &ParzenEstimator, x: f64) -> Result<f64, TpeError> {
    let (lo, hi) = estimator.bounds;
    if !(lo..=hi).contains(&x) {
        return Err(TpeError::OutOfBounds { value: x, lo, hi });
    }
    Ok(estimator.pdf_unchecked(x))
}

/// Smoothed category frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalEstimator {
    probabilities: Vec<f64>,
}

impl CategoricalEstimator {
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let mut u: f64 = rng.random();
        for (i, p) in self.probabilities.iter().enumerate() {
            if u < *p {
                return i;
            }
            u -= p;
        }
        self.probabilities.len() - 1
    }
}

/// `p[c] = (count[c] + prior_weight) / (n + prior_weight * n_categories)`.
pub fn fit_categorical(
    values: &[usize],
    n_categories: usize,
    prior_weight: f64,
) -> Result<CategoricalEstimator, TpeError> {
    let mut counts = vec![0usize; n_categories];
    for &index in values {
        *counts
            .get_mut(index)
            .ok_or(TpeError::CategoryOutOfRange { index, n_categories })? += 1;
    }
    let denom = values.len() as f64 + prior_weight * n_categories as f64;
    Ok(CategoricalEstimator {
        probabilities: counts
            .iter()
            .map(|&c| (c as f64 + prior_weight) / denom)
            .collect(),
    })
}

fn pick_best<T: Copy>(candidates: impl Iterator<Item = (T, f64)>) -> T {
    let mut best: Option<(T, f64)> = None;
    for (c, score) in candidates {
        // strict comparison keeps the first maximum
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((c, score));
        }
    }
    best.expect("at least one candidate").0
}

/// Next configuration to evaluate given `(params, accuracy)` history.
///
/// With fewer than `n_startup` observations this is a uniform draw. History
/// values that fall outside the space are ignored by the density fits.
pub fn suggest<R: Rng + ?Sized>(
    history: &[(HyperparameterSet, f64)],
    space: &SearchSpace,
    config: &TpeConfig,
    rng: &mut R,
) -> Result<HyperparameterSet, TpeError> {
    config.validate()?;
    if history.len() < config.n_startup {
        return Ok(sample_uniform(space, rng));
    }
    let (good, bad) = split_observations(history, config.gamma)?;

    let mut values = Vec::with_capacity(space.dimensions().len());
    for (name, domain) in space.dimensions() {
        let column = |obs: &[(HyperparameterSet, f64)]| -> Vec<f64> {
            obs.iter().filter_map(|(p, _)| p.get(name)).collect()
        };
        let value = match domain {
            Domain::Categorical { values: cats } => {
                let indices = |obs: &[(HyperparameterSet, f64)]| -> Vec<usize> {
                    column(obs)
                        .into_iter()
                        .filter_map(|v| cats.iter().position(|&c| c as f64 == v))
                        .collect()
                };
                let l = fit_categorical(&indices(&good), cats.len(), config.prior_weight)?;
                let g = fit_categorical(&indices(&bad), cats.len(), config.prior_weight)?;
                let draws: Vec<usize> = (0..config.n_ei_candidates).map(|_| l.sample(rng)).collect();
                let best = pick_best(draws.into_iter().map(|c| {
                    (c, l.probabilities[c].ln() - g.probabilities[c].ln())
                }));
                cats[best] as f64
            }
            _ => {
                let bounds = domain.sampling_bounds().expect("continuous domain");
                let coords = |obs: &[(HyperparameterSet, f64)]| -> Vec<f64> {
                    column(obs)
                        .into_iter()
                        .filter(|v| domain.contains(*v))
                        .map(|v| domain.to_sampling(v).clamp(bounds.0, bounds.1))
                        .collect()
                };
                let l = fit_continuous(&coords(&good), bounds, config)?;
                let g = fit_continuous(&coords(&bad), bounds, config)?;
                let draws: Vec<f64> = (0..config.n_ei_candidates).map(|_| l.sample(rng)).collect();
                let best = pick_best(
                    draws
                        .into_iter()
                        .map(|x| (x, l.pdf_unchecked(x).ln() - g.pdf_unchecked(x).ln())),
                );
                domain.from_sampling(best)
            }
        };
        values.push((name.as_str(), value));
    }
    Ok(HyperparameterSet::from_values(values))
}
