//! Stochastic-search updates.
//!
//! Rollout costs are turned into normalised weights by a shape function, and
//! the sampling distributions are moved along the weighted score in their
//! natural parameters: the Gaussian mean for policy parameters and the logit
//! of each Bernoulli actuation probability.

use serde::{Deserialize, Serialize};

use crate::policies::{ParamTable, PolicyParams, SamplerState};
use crate::{Error, Result};

/// Offset below the worst shaped value used as the soft-elite lower bound.
pub const SOFT_ELITE_LB_OFFSET: f64 = 1e-6;
const STD_GUARD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeSpec {
    /// `S(y) = exp(lambda * y)`; gives path-integral (MPPI) weighting.
    Exponential { lambda: f64 },
    /// `S(y) = (y - y_lb) * logistic(lambda * (y - psi))` with `psi` at the
    /// `1 - elite_fraction` quantile and `lambda = sharpness / std(y)`.
    SoftElite { elite_fraction: f64, sharpness: f64 },
}

impl ShapeSpec {
    pub fn soft_elite(elite_fraction: f64) -> Self {
        ShapeSpec::SoftElite { elite_fraction, sharpness: 10.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ShapeSpec::Exponential { lambda } if !(lambda > 0.0 && lambda.is_finite()) => Err(
                Error::InvalidConfig("shape: lambda must be finite and positive".into()),
            ),
            ShapeSpec::SoftElite { elite_fraction, sharpness }
                if !(elite_fraction > 0.0 && elite_fraction < 1.0)
                    || !(sharpness > 0.0 && sharpness.is_finite()) =>
            {
                Err(Error::InvalidConfig(
                    "shape: elite_fraction must lie in (0, 1) and sharpness be positive".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

/// Nonnegative weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn uniform(m: usize) -> Self {
        WeightVector(vec![1.0 / m as f64; m])
    }

    /// Normalise `exp(log_weights)`; entries equal to `-inf` get zero weight.
    fn from_log_weights(log_weights: &[f64]) -> Result<Self> {
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::NonFiniteCosts);
        }
        let mut w: Vec<f64> = log_weights.iter().map(|&l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        Ok(WeightVector(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

pub fn shape(costs: &[f64], spec: &ShapeSpec) -> Result<WeightVector> {
    match *spec {
        ShapeSpec::Exponential { lambda } => shape_exponential(costs, lambda),
        ShapeSpec::SoftElite { .. } => shape_soft_elite(costs, spec),
    }
}

/// Softmax of `-lambda * J`. Non-finite costs get zero weight.
pub fn shape_exponential(costs: &[f64], lambda: f64) -> Result<WeightVector> {
    assert!(lambda > 0.0, "lambda must be positive");
    assert!(!costs.is_empty(), "no costs to shape");
    let logs: Vec<f64> = costs
        .iter()
        .map(|&j| if j.is_finite() { -lambda * j } else { f64::NEG_INFINITY })
        .collect();
    WeightVector::from_log_weights(&logs)
}

/// Unnormalised sigmoid shape `(y - y_lb) * logistic(lambda * (y - psi))`.
pub fn soft_elite_shape(y: f64, y_lb: f64, lambda: f64, psi: f64) -> f64 {
    (y - y_lb) * logistic(lambda * (y - psi))
}

/// Linear-interpolation quantile of ascending `sorted` data, `q` in `[0, 1]`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Soft-elite weights on `y = -J`.
///
/// The threshold sits at the empirical `1 - elite_fraction` quantile of `y`,
/// the lower bound just below `min(y)`, and the sharpness scales with
/// `1 / std(y)`, so the weighting is invariant to the cost scale. Identical
/// costs give uniform weights. Non-finite costs get zero weight.
pub fn shape_soft_elite(costs: &[f64], spec: &ShapeSpec) -> Result<WeightVector> {
    let ShapeSpec::SoftElite { elite_fraction, sharpness } = *spec else {
        panic!("shape_soft_elite called with {spec:?}");
    };
    if costs.len() < 2 {
        return Err(Error::InvalidConfig("soft-elite shaping needs at least two samples".into()));
    }
    let mut ys: Vec<f64> = costs.iter().filter(|j| j.is_finite()).map(|&j| -j).collect();
    if ys.is_empty() {
        return Err(Error::NonFiniteCosts);
    }
    ys.sort_by(f64::total_cmp);
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let std = (ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n).sqrt();

    if std == 0.0 {
        let logs: Vec<f64> =
            costs.iter().map(|j| if j.is_finite() { 0.0 } else { f64::NEG_INFINITY }).collect();
        return WeightVector::from_log_weights(&logs);
    }

    let psi = quantile(&ys, 1.0 - elite_fraction);
    let y_lb = ys[0] - SOFT_ELITE_LB_OFFSET;
    let lambda = sharpness / (std + STD_GUARD);

    // log S = ln(y - y_lb) - softplus(-lambda (y - psi)), so tiny weights do
    // not underflow before normalisation.
    let logs: Vec<f64> = costs
        .iter()
        .map(|&j| {
            if !j.is_finite() {
                return f64::NEG_INFINITY;
            }
            let y = -j;
            (y - y_lb).ln() - softplus(-lambda * (y - psi))
        })
        .collect();
    WeightVector::from_log_weights(&logs)
}

/// `mu + beta * sum_m w_m (phi_m - mu)`, elementwise per timestep.
pub fn gaussian_mean_update<'a>(
    means: &ParamTable,
    samples: impl IntoIterator<Item = &'a ParamTable>,
    weights: &WeightVector,
    beta: f64,
) -> ParamTable {
    let mu = means.values();
    let mut step = vec![0.0; mu.len()];
    let mut count = 0;
    for (sample, &w) in samples.into_iter().zip(weights.as_slice()) {
        assert!(sample.same_shape(means), "sample shape differs from the means");
        for ((acc, &phi), &m) in step.iter_mut().zip(sample.values()).zip(mu) {
            *acc += w * (phi - m);
        }
        count += 1;
    }
    assert_eq!(count, weights.len(), "sample count differs from weight count");
    let values = mu.iter().zip(&step).map(|(&m, &s)| m + beta * s).collect();
    ParamTable::from_values(means.horizon(), means.width(), values)
}

/// Logit-space ascent on the actuation probabilities, clamped to
/// `[p_min, 1 - p_min]`.
///
/// `indicator_samples[m][i]` is whether agent `i` was actuated in sample `m`.
pub fn bernoulli_update<S: AsRef<[bool]>>(
    probs: &[f64],
    indicator_samples: &[S],
    weights: &WeightVector,
    beta: f64,
    p_min: f64,
) -> Vec<f64> {
    assert!(
        probs.iter().all(|&p| p > 0.0 && p < 1.0),
        "actuation probabilities must lie strictly inside (0, 1)"
    );
    assert_eq!(indicator_samples.len(), weights.len(), "sample count differs from weight count");
    let mut grad = vec![0.0; probs.len()];
    for (sample, &w) in indicator_samples.iter().zip(weights.as_slice()) {
        let sample = sample.as_ref();
        assert_eq!(sample.len(), probs.len(), "indicator length mismatch");
        for ((g, &a), &p) in grad.iter_mut().zip(sample).zip(probs) {
            *g += w * (f64::from(u8::from(a)) - p);
        }
    }
    probs
        .iter()
        .zip(&grad)
        .map(|(&p, &g)| {
            let eta = family::Bernoulli::natural(p) + beta * g;
            family::Bernoulli::mean(eta).clamp(p_min, 1.0 - p_min)
        })
        .collect()
}

/// Rescale so the probabilities average to `active_fraction`, without
/// clamping.
pub fn scale_to_active_fraction(raw: &[f64], active_fraction: f64) -> Result<Vec<f64>> {
    let total: f64 = raw.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::ZeroProbabilityMass);
    }
    let scale = active_fraction * raw.len() as f64 / total;
    Ok(raw.iter().map(|&p| p * scale).collect())
}

/// Keep the expected active-set size at `active_fraction * N`, then clamp.
pub fn normalize_actuation(raw: &[f64], active_fraction: f64, p_min: f64) -> Result<Vec<f64>> {
    Ok(scale_to_active_fraction(raw, active_fraction)?
        .into_iter()
        .map(|p| p.clamp(p_min, 1.0 - p_min))
        .collect())
}

/// A sampled policy realisation together with its rollout result.
#[derive(Clone, Debug)]
pub struct SampleOutcome {
    pub params: PolicyParams,
    pub indicators: Vec<bool>,
    pub cost: f64,
}

#[derive(Clone, Debug)]
pub struct UpdateReport {
    pub weights: WeightVector,
    /// Mean actuation probability right after rescaling, before clamping.
    pub scaled_mean: Option<f64>,
}

/// One optimisation iteration over a batch of evaluated samples.
pub fn update_sampler(
    sampler: &SamplerState,
    batch: &[SampleOutcome],
    shape_spec: &ShapeSpec,
    beta: f64,
) -> Result<(SamplerState, UpdateReport)> {
    let costs: Vec<f64> = batch.iter().map(|s| s.cost).collect();
    let weights = shape(&costs, shape_spec)?;
    let mut next = sampler.clone();
    next.means =
        gaussian_mean_update(&sampler.means, batch.iter().map(|s| s.params.table()), &weights, beta);

    let mut scaled_mean = None;
    if let Some(probs) = &sampler.actuation_probs {
        let indicators: Vec<&[bool]> = batch.iter().map(|s| s.indicators.as_slice()).collect();
        let raw = bernoulli_update(probs, &indicators, &weights, beta, sampler.p_min);
        let scaled = scale_to_active_fraction(&raw, sampler.active_fraction)?;
        scaled_mean = Some(scaled.iter().sum::<f64>() / scaled.len() as f64);
        next.actuation_probs =
            Some(scaled.into_iter().map(|p| p.clamp(sampler.p_min, 1.0 - sampler.p_min)).collect());
    }
    Ok((next, UpdateReport { weights, scaled_mean }))
}

#[inline]
pub(crate) fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// The two exponential families the updates are built on, written in natural
/// parameters.
pub mod family {
    use super::{logistic, softplus};

    /// Scalar Gaussian with fixed standard deviation. Natural parameter
    /// `eta = mu / sd`, sufficient statistic `T(phi) = phi / sd`.
    #[derive(Clone, Copy, Debug)]
    pub struct FixedGaussian {
        pub std_dev: f64,
    }

    impl FixedGaussian {
        pub fn natural(&self, mean: f64) -> f64 {
            mean / self.std_dev
        }

        pub fn sufficient(&self, phi: f64) -> f64 {
            phi / self.std_dev
        }

        pub fn log_density(&self, phi: f64, eta: f64) -> f64 {
            let mu = eta * self.std_dev;
            let z = (phi - mu) / self.std_dev;
            -0.5 * z * z - self.std_dev.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
        }

        /// `d/d eta ln p(phi; eta) = T(phi) - E[T]`.
        pub fn score(&self, phi: f64, eta: f64) -> f64 {
            self.sufficient(phi) - eta
        }
    }

    /// Bernoulli with natural parameter `eta = logit(p)` and `T(a) = a`.
    #[derive(Clone, Copy, Debug)]
    pub struct Bernoulli;

    impl Bernoulli {
        pub fn natural(p: f64) -> f64 {
            (p / (1.0 - p)).ln()
        }

        pub fn mean(eta: f64) -> f64 {
            logistic(eta)
        }

        pub fn log_density(a: bool, eta: f64) -> f64 {
            f64::from(u8::from(a)) * eta - softplus(eta)
        }

        pub fn score(a: bool, eta: f64) -> f64 {
            f64::from(u8::from(a)) - Self::mean(eta)
        }
    }
}
