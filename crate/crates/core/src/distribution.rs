//! Duration distributions: sampling and histogram-based best fit.

use rand::Rng;
use rand_distr::{Distribution as _, Exp, Gamma, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::Continuous;

use crate::error::{Error, Result};

/// A non-negative duration distribution, in seconds. Samples are clamped at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "distribution", rename_all = "snake_case")]
pub enum DistributionSpec {
    Fixed { value: f64 },
    Uniform { min: f64, max: f64 },
    Normal { mean: f64, std: f64 },
    Exponential { mean: f64 },
    Lognormal { mu: f64, sigma: f64 },
    Gamma { shape: f64, scale: f64 },
}

impl DistributionSpec {
    pub fn family(&self) -> &'static str {
        match self {
            DistributionSpec::Fixed { .. } => "fixed",
            DistributionSpec::Uniform { .. } => "uniform",
            DistributionSpec::Normal { .. } => "normal",
            DistributionSpec::Exponential { .. } => "exponential",
            DistributionSpec::Lognormal { .. } => "lognormal",
            DistributionSpec::Gamma { .. } => "gamma",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_pos = |x: f64| x.is_finite() && x > 0.0;
        let ok = match *self {
            DistributionSpec::Fixed { value } => value.is_finite() && value >= 0.0,
            DistributionSpec::Uniform { min, max } => min.is_finite() && max.is_finite() && min <= max,
            DistributionSpec::Normal { mean, std } => mean.is_finite() && finite_pos(std),
            DistributionSpec::Exponential { mean } => finite_pos(mean),
            DistributionSpec::Lognormal { mu, sigma } => mu.is_finite() && finite_pos(sigma),
            DistributionSpec::Gamma { shape, scale } => finite_pos(shape) && finite_pos(scale),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Model(format!("invalid parameters for {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DistributionSpec::Fixed { value } => value,
            DistributionSpec::Uniform { min, max } => (min + max) / 2.0,
            DistributionSpec::Normal { mean, .. } => mean,
            DistributionSpec::Exponential { mean } => mean,
            DistributionSpec::Lognormal { mu, sigma } => (mu + sigma * sigma / 2.0).exp(),
            DistributionSpec::Gamma { shape, scale } => shape * scale,
        }
    }

    /// Draws one value, truncated below at zero.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x = match *self {
            DistributionSpec::Fixed { value } => value,
            DistributionSpec::Uniform { min, max } => {
                if max > min {
                    rng.random_range(min..max)
                } else {
                    min
                }
            }
            DistributionSpec::Normal { mean, std } => {
                Normal::new(mean, std).expect("validated").sample(rng)
            }
            DistributionSpec::Exponential { mean } => {
                Exp::new(1.0 / mean).expect("validated").sample(rng)
            }
            DistributionSpec::Lognormal { mu, sigma } => {
                LogNormal::new(mu, sigma).expect("validated").sample(rng)
            }
            DistributionSpec::Gamma { shape, scale } => {
                Gamma::new(shape, scale).expect("validated").sample(rng)
            }
        };
        x.max(0.0)
    }

    /// Density at `x`; `None` for the point mass.
    fn pdf(&self, x: f64) -> Option<f64> {
        use statrs::distribution as sd;
        let d = match *self {
            DistributionSpec::Fixed { .. } => return None,
            DistributionSpec::Uniform { min, max } => sd::Uniform::new(min, max).ok()?.pdf(x),
            DistributionSpec::Normal { mean, std } => sd::Normal::new(mean, std).ok()?.pdf(x),
            DistributionSpec::Exponential { mean } => sd::Exp::new(1.0 / mean).ok()?.pdf(x),
            DistributionSpec::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    sd::LogNormal::new(mu, sigma).ok()?.pdf(x)
                }
            }
            DistributionSpec::Gamma { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    sd::Gamma::new(shape, 1.0 / scale).ok()?.pdf(x)
                }
            }
        };
        Some(d)
    }
}

/// Number of histogram bins used for fitting `n` samples.
pub fn bin_count(n: usize) -> usize {
    let bins = (n as f64).sqrt().ceil() as usize;
    if n >= 100 {
        bins.max(10)
    } else {
        bins.max(1)
    }
}

struct Moments {
    mean: f64,
    var: f64,
}

fn moments(samples: &[f64]) -> Moments {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Moments { mean, var }
}

/// Method-of-moments candidates for the given sample moments.
fn candidates(m: &Moments) -> Vec<DistributionSpec> {
    let std = m.var.sqrt();
    let mut out = vec![
        DistributionSpec::Uniform {
            min: m.mean - 3f64.sqrt() * std,
            max: m.mean + 3f64.sqrt() * std,
        },
        DistributionSpec::Normal { mean: m.mean, std },
    ];
    if m.mean > 0.0 {
        let sigma2 = (1.0 + m.var / (m.mean * m.mean)).ln();
        out.push(DistributionSpec::Exponential { mean: m.mean });
        out.push(DistributionSpec::Lognormal {
            mu: m.mean.ln() - sigma2 / 2.0,
            sigma: sigma2.sqrt(),
        });
        out.push(DistributionSpec::Gamma {
            shape: m.mean * m.mean / m.var,
            scale: m.var / m.mean,
        });
    }
    out.into_iter().filter(|d| d.validate().is_ok()).collect()
}

/// Sum of squared differences between the candidate density at each bin
/// centre and the normalized histogram.
fn residual(spec: &DistributionSpec, centres: &[f64], density: &[f64]) -> f64 {
    centres
        .iter()
        .zip(density)
        .map(|(&x, &h)| {
            let p = spec.pdf(x).unwrap_or(0.0);
            (p - h).powi(2)
        })
        .sum()
}

/// Fits every candidate family by the method of moments and returns the one
/// whose density best matches the sample histogram. Constant samples give a
/// fixed distribution.
pub fn best_fit_distribution(samples: &[f64]) -> Result<DistributionSpec> {
    if samples.is_empty() {
        return Err(Error::Argument("cannot fit a distribution to no samples".into()));
    }
    if samples.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Argument("samples must be finite and non-negative".into()));
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        return Ok(DistributionSpec::Fixed { value: lo });
    }
    let bins = bin_count(samples.len());
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in samples {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = samples.len() as f64;
    let density: Vec<f64> = counts.iter().map(|&c| c as f64 / (n * width)).collect();
    let centres: Vec<f64> = (0..bins).map(|i| lo + (i as f64 + 0.5) * width).collect();

    let m = moments(samples);
    let mut best: Option<(f64, DistributionSpec)> = None;
    for spec in candidates(&m) {
        let r = residual(&spec, &centres, &density);
        if !r.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|(b, _)| r < *b) {
            best = Some((r, spec));
        }
    }
    Ok(best
        .map(|(_, spec)| spec)
        .unwrap_or(DistributionSpec::Fixed { value: m.mean }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_samples_give_fixed() {
        assert_eq!(
            best_fit_distribution(&[42.0; 17]).unwrap(),
            DistributionSpec::Fixed { value: 42.0 }
        );
    }

    #[test]
    fn empty_and_negative_rejected() {
        assert!(best_fit_distribution(&[]).is_err());
        assert!(best_fit_distribution(&[1.0, -2.0]).is_err());
    }

    #[test]
    fn normal_samples_select_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = DistributionSpec::Normal { mean: 20.0, std: 5.0 };
        let xs: Vec<f64> = (0..10_000).map(|_| d.sample(&mut rng)).collect();
        match best_fit_distribution(&xs).unwrap() {
            DistributionSpec::Normal { mean, .. } => assert!((mean - 20.0).abs() < 0.5, "{mean}"),
            other => panic!("selected {other:?}"),
        }
    }

    #[test]
    fn exponential_samples_select_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = Exp::new(1.0 / 30.0).unwrap();
        let xs: Vec<f64> = (0..10_000).map(|_| d.sample(&mut rng)).collect();
        let fit = best_fit_distribution(&xs).unwrap();
        assert_eq!(fit.family(), "exponential", "{fit:?}");
    }

    #[test]
    fn bin_rule() {
        assert_eq!(bin_count(1), 1);
        assert_eq!(bin_count(10), 4);
        assert_eq!(bin_count(100), 10);
        assert_eq!(bin_count(10_000), 100);
    }

    #[test]
    fn samples_are_truncated_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = DistributionSpec::Normal { mean: 0.0, std: 10.0 };
        assert!((0..1000).all(|_| d.sample(&mut rng) >= 0.0));
    }

    #[test]
    fn serde_shape() {
        let d = DistributionSpec::Normal { mean: 25.0, std: 4.0 };
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(json, r#"{"distribution":"normal","mean":25.0,"std":4.0}"#);
    }
}
