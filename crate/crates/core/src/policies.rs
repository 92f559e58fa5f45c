//! Policy parameterisations and sampling of their parameters.
//!
//! All stochastic-search policies store their parameters as a
//! `horizon x width` table:
//!
//! | policy            | width        | row `t`            | control            |
//! |-------------------|--------------|--------------------|--------------------|
//! | open loop         | `|I_A|`      | feedforward per slot | `phi[t][slot]`   |
//! | feedback          | 2            | `[gain, offset]`   | `gain * x + offset`|
//! | adaptive feedback | 1            | `[gain]`           | `gain * x`         |
//!
//! Feedback gains are shared by every actuated agent. Open-loop slots are
//! positions within the active set, counted in agent order.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Lower clamp for Bernoulli actuation probabilities (upper is `1 - P_MIN`).
pub const DEFAULT_P_MIN: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchPolicy {
    OpenLoop,
    Feedback,
    AdaptiveFeedback,
}

impl SearchPolicy {
    pub fn width(self, n_slots: usize) -> usize {
        match self {
            SearchPolicy::OpenLoop => n_slots,
            SearchPolicy::Feedback => 2,
            SearchPolicy::AdaptiveFeedback => 1,
        }
    }
}

/// Row-major `horizon x width` table of policy parameters or their means.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTable {
    horizon: usize,
    width: usize,
    values: Vec<f64>,
}

impl ParamTable {
    pub fn zeros(horizon: usize, width: usize) -> Self {
        Self { horizon, width, values: vec![0.0; horizon * width] }
    }

    pub fn from_values(horizon: usize, width: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), horizon * width, "table shape mismatch");
        Self { horizon, width, values }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.width..(t + 1) * self.width]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.values[t * self.width..(t + 1) * self.width]
    }

    pub fn same_shape(&self, other: &ParamTable) -> bool {
        self.horizon == other.horizon && self.width == other.width
    }
}

/// One realisation of a policy's parameters over the planning horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    kind: SearchPolicy,
    table: ParamTable,
}

impl PolicyParams {
    pub fn new(kind: SearchPolicy, table: ParamTable) -> Self {
        if kind != SearchPolicy::OpenLoop {
            assert_eq!(table.width(), kind.width(0), "{kind:?} table has the wrong width");
        }
        Self { kind, table }
    }

    pub fn zeros(kind: SearchPolicy, horizon: usize, n_slots: usize) -> Self {
        Self::new(kind, ParamTable::zeros(horizon, kind.width(n_slots)))
    }

    pub fn kind(&self) -> SearchPolicy {
        self.kind
    }

    pub fn table(&self) -> &ParamTable {
        &self.table
    }

    pub fn horizon(&self) -> usize {
        self.table.horizon()
    }
}

/// Control for one agent at timestep `t`. Zero whenever `actuated` is false.
#[inline]
pub fn eval_policy(
    params: &PolicyParams,
    opinion: f64,
    agent_slot: usize,
    t: usize,
    actuated: bool,
) -> f64 {
    if !actuated {
        return 0.0;
    }
    assert!(t < params.horizon(), "timestep {t} beyond the policy horizon");
    let row = params.table.row(t);
    match params.kind {
        SearchPolicy::OpenLoop => {
            assert!(agent_slot < row.len(), "agent slot {agent_slot} has no feedforward entry");
            row[agent_slot]
        }
        SearchPolicy::Feedback => row[0] * opinion + row[1],
        SearchPolicy::AdaptiveFeedback => row[0] * opinion,
    }
}

/// Hand-designed pinning-style control that moves an agent straight to the
/// target, ignoring its neighbourhood.
#[inline]
pub fn baseline_control(opinion: f64, target: f64) -> f64 {
    target - opinion
}

/// Distribution parameters under optimisation.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplerState {
    kind: SearchPolicy,
    /// Gaussian means, same layout as [`PolicyParams`].
    pub means: ParamTable,
    /// Diagonal standard deviation per parameter column. Never updated.
    std_dev: Vec<f64>,
    /// Per-agent actuation probabilities (adaptive feedback only).
    pub actuation_probs: Option<Vec<f64>>,
    pub active_fraction: f64,
    pub p_min: f64,
}

impl SamplerState {
    /// Zero-mean sampler for the open-loop or feedback policy.
    pub fn fixed_set(
        kind: SearchPolicy,
        horizon: usize,
        n_slots: usize,
        std_dev: f64,
        active_fraction: f64,
    ) -> Result<Self> {
        if kind == SearchPolicy::AdaptiveFeedback {
            return Err(Error::InvalidConfig(
                "adaptive feedback needs actuation probabilities".into(),
            ));
        }
        Self::build(kind, horizon, n_slots, std_dev, None, active_fraction, DEFAULT_P_MIN)
    }

    /// Zero-mean adaptive-feedback sampler with every actuation probability
    /// set to `initial_prob`.
    pub fn adaptive(
        horizon: usize,
        std_dev: f64,
        n_agents: usize,
        active_fraction: f64,
        initial_prob: f64,
        p_min: f64,
    ) -> Result<Self> {
        if !(0.0 < p_min && p_min < 0.5) {
            return Err(Error::InvalidConfig("p_min must lie in (0, 0.5)".into()));
        }
        if !(0.0..=1.0).contains(&initial_prob) {
            return Err(Error::InvalidConfig("initial actuation probability must lie in [0, 1]".into()));
        }
        let probs = vec![initial_prob.clamp(p_min, 1.0 - p_min); n_agents];
        Self::build(
            SearchPolicy::AdaptiveFeedback,
            horizon,
            0,
            std_dev,
            Some(probs),
            active_fraction,
            p_min,
        )
    }

    fn build(
        kind: SearchPolicy,
        horizon: usize,
        n_slots: usize,
        std_dev: f64,
        actuation_probs: Option<Vec<f64>>,
        active_fraction: f64,
        p_min: f64,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidConfig("planning horizon must be at least 1".into()));
        }
        if !(std_dev > 0.0 && std_dev.is_finite()) {
            return Err(Error::InvalidConfig("sampling std must be finite and positive".into()));
        }
        if !(active_fraction > 0.0 && active_fraction <= 1.0) {
            return Err(Error::InvalidConfig("active fraction must lie in (0, 1]".into()));
        }
        let width = kind.width(n_slots);
        Ok(Self {
            kind,
            means: ParamTable::zeros(horizon, width),
            std_dev: vec![std_dev; width],
            actuation_probs,
            active_fraction,
            p_min,
        })
    }

    pub fn kind(&self) -> SearchPolicy {
        self.kind
    }

    pub fn std_dev(&self) -> &[f64] {
        &self.std_dev
    }

    pub fn horizon(&self) -> usize {
        self.means.horizon()
    }

    /// Policy that executes the current means.
    pub fn mean_policy(&self) -> PolicyParams {
        PolicyParams::new(self.kind, self.means.clone())
    }
}

/// Draw every parameter independently from `N(mean, std^2)`, timestep-major.
pub fn sample_policy_params<R: Rng + ?Sized>(sampler: &SamplerState, rng: &mut R) -> PolicyParams {
    let means = &sampler.means;
    let width = means.width();
    let mut values = Vec::with_capacity(means.values().len());
    for t in 0..means.horizon() {
        for (&mu, &sd) in means.row(t).iter().zip(&sampler.std_dev) {
            let z: f64 = rng.sample(StandardNormal);
            values.push(mu + sd * z);
        }
    }
    PolicyParams::new(sampler.kind, ParamTable::from_values(means.horizon(), width, values))
}

/// Independent Bernoulli draws, one per agent.
pub fn sample_indicators<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Vec<bool> {
    probs
        .iter()
        .map(|&p| {
            debug_assert!((0.0..=1.0).contains(&p));
            rng.random::<f64>() < p
        })
        .collect()
}
