//! Receding-horizon stochastic-search controller.
//!
//! Each MPC step samples `M` policy realisations (and, for the adaptive
//! policy, actuation sets), rolls each one out over the planning horizon from
//! the current population, shapes the costs into weights, updates the sampling
//! distributions, executes the first step of the updated mean policy, and
//! shifts the plan by one step.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::dynamics::CostSpec;
use crate::dynamics::{rollout_cost, step, ModelParams, PopulationState, RolloutWorkspace};
use crate::experiments::{ExperimentRecord, Scenario, Trajectory};
use crate::optimizer::{update_sampler, SampleOutcome, ShapeSpec};
use crate::policies::{
    baseline_control, eval_policy, sample_indicators, sample_policy_params, ParamTable,
    SamplerState, SearchPolicy, DEFAULT_P_MIN,
};
use crate::rng::{substream, Domain, StreamRng, StreamRoot};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub planning_horizon: usize,
    pub mpc_horizon: usize,
    pub n_samples: usize,
    pub step_size: f64,
    /// Optimisation iterations per MPC step.
    pub iterations: usize,
    /// Standard deviation of every sampled policy parameter.
    pub sampling_std: f64,
    pub shape: ShapeSpec,
    pub p_min: f64,
    /// Initial actuation probability for the adaptive policy; defaults to
    /// the active fraction.
    #[serde(default)]
    pub initial_actuation_prob: Option<f64>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            planning_horizon: 10,
            mpc_horizon: 150,
            n_samples: 500,
            step_size: 1.0,
            iterations: 1,
            sampling_std: 0.3,
            shape: ShapeSpec::soft_elite(0.1),
            p_min: DEFAULT_P_MIN,
            initial_actuation_prob: None,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(format!("controller: {m}")));
        if self.planning_horizon == 0 || self.mpc_horizon == 0 {
            return fail("horizons must be at least 1");
        }
        if self.n_samples < 2 {
            return fail("n_samples must be at least 2");
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return fail("step_size must be finite and nonnegative");
        }
        if self.iterations == 0 {
            return fail("iterations must be at least 1");
        }
        if !(self.sampling_std > 0.0 && self.sampling_std.is_finite()) {
            return fail("sampling_std must be finite and positive");
        }
        if !(self.p_min > 0.0 && self.p_min < 0.5) {
            return fail("p_min must lie in (0, 0.5)");
        }
        if let Some(p) = self.initial_actuation_prob {
            if !(0.0..=1.0).contains(&p) {
                return fail("initial_actuation_prob must lie in [0, 1]");
            }
        }
        self.shape.validate()
    }
}

/// Every way of choosing controls that an experiment can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    OpenLoop,
    Feedback,
    Adaptive,
    Baseline,
    Uncontrolled,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::OpenLoop,
        PolicyKind::Feedback,
        PolicyKind::Adaptive,
        PolicyKind::Baseline,
        PolicyKind::Uncontrolled,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            PolicyKind::OpenLoop => "open-loop",
            PolicyKind::Feedback => "feedback",
            PolicyKind::Adaptive => "adaptive",
            PolicyKind::Baseline => "baseline",
            PolicyKind::Uncontrolled => "uncontrolled",
        }
    }

    pub fn search_policy(self) -> Option<SearchPolicy> {
        match self {
            PolicyKind::OpenLoop => Some(SearchPolicy::OpenLoop),
            PolicyKind::Feedback => Some(SearchPolicy::Feedback),
            PolicyKind::Adaptive => Some(SearchPolicy::AdaptiveFeedback),
            PolicyKind::Baseline | PolicyKind::Uncontrolled => None,
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        PolicyKind::ALL.into_iter().find(|k| k.slug() == s).ok_or_else(|| {
            let valid: Vec<_> = PolicyKind::ALL.iter().map(|k| k.slug()).collect();
            format!("unknown policy `{s}` (valid policies: {})", valid.join(", "))
        })
    }
}

/// Everything the controller carries from one MPC step to the next.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerState {
    pub config: ControllerConfig,
    pub model: ModelParams,
    pub cost: CostSpec,
    pub sampler: SamplerState,
    /// Active set for the open-loop and feedback policies.
    pub fixed_active_set: Option<Vec<bool>>,
}

impl ControllerState {
    /// Zero-mean controller. `fixed_active_set` is required for the open-loop
    /// and feedback policies and ignored by the adaptive one.
    pub fn new(
        policy: SearchPolicy,
        config: ControllerConfig,
        model: ModelParams,
        cost: CostSpec,
        active_fraction: f64,
        fixed_active_set: Option<Vec<bool>>,
    ) -> Result<Self> {
        config.validate()?;
        model.validate()?;
        cost.validate()?;
        let (sampler, fixed_active_set) = match policy {
            SearchPolicy::AdaptiveFeedback => {
                let p0 = config.initial_actuation_prob.unwrap_or(active_fraction);
                let sampler = SamplerState::adaptive(
                    config.planning_horizon,
                    config.sampling_std,
                    model.n_agents,
                    active_fraction,
                    p0,
                    config.p_min,
                )?;
                (sampler, None)
            }
            SearchPolicy::OpenLoop | SearchPolicy::Feedback => {
                let set = fixed_active_set.ok_or_else(|| {
                    Error::InvalidConfig(format!("{policy:?} policy needs a fixed active set"))
                })?;
                if set.len() != model.n_agents {
                    return Err(Error::InvalidConfig("active set length differs from n_agents".into()));
                }
                let slots = set.iter().filter(|&&a| a).count();
                let sampler = SamplerState::fixed_set(
                    policy,
                    config.planning_horizon,
                    slots,
                    config.sampling_std,
                    active_fraction,
                )?;
                (sampler, Some(set))
            }
        };
        Ok(Self { config, model, cost, sampler, fixed_active_set })
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    /// Controls executed on the true population; zero for non-actuated agents.
    pub controls: Vec<f64>,
    /// Agents actuated at execution.
    pub indicators: Vec<bool>,
    pub controller: ControllerState,
    /// Probabilities the execution indicators were drawn from (adaptive only).
    pub actuation_probs: Option<Vec<f64>>,
    /// Mean actuation probability after the last rescaling, before clamping.
    pub scaled_mean: Option<f64>,
}

fn standard_normals(rng: &mut StreamRng, out: &mut [f64]) {
    for w in out {
        *w = StandardNormal.sample(rng);
    }
}

fn evaluate_samples(
    ctrl: &ControllerState,
    current: &[f64],
    root: &StreamRoot,
    iteration: u32,
) -> Vec<SampleOutcome> {
    let n = current.len();
    let horizon = ctrl.config.planning_horizon;
    let noisy = ctrl.model.sigma > 0.0;
    (0..ctrl.config.n_samples as u32)
        .into_par_iter()
        .map_init(
            || (RolloutWorkspace::default(), vec![0.0; horizon * n]),
            |(ws, noise), m| {
                let mut rng = root.rollout(iteration, m);
                let indicators = match (&ctrl.fixed_active_set, &ctrl.sampler.actuation_probs) {
                    (Some(set), _) => set.clone(),
                    (None, Some(probs)) => sample_indicators(probs, &mut rng),
                    (None, None) => unreachable!("controller without an actuation set"),
                };
                let params = sample_policy_params(&ctrl.sampler, &mut rng);
                if noisy {
                    standard_normals(&mut rng, noise);
                }
                let cost = rollout_cost(
                    current,
                    &params,
                    &indicators,
                    &ctrl.model,
                    &ctrl.cost,
                    noise,
                    horizon,
                    ws,
                );
                SampleOutcome { params, indicators, cost }
            },
        )
        .collect()
}

/// One controller step from the observed population `current`.
pub fn mpc_step(
    ctrl: &ControllerState,
    current: &PopulationState,
    root: StreamRoot,
) -> Result<StepOutcome> {
    let n = current.len();
    assert_eq!(n, ctrl.model.n_agents, "population size differs from the model");
    let bounds = ctrl.model.state_bounds;
    assert!(current.opinions.iter().all(|&x| bounds.contains(x)), "opinion outside state bounds");

    let mut next = ctrl.clone();
    let mut scaled_mean = None;
    for iteration in 0..ctrl.config.iterations {
        let batch = evaluate_samples(&next, &current.opinions, &root, iteration as u32);
        let (sampler, report) =
            update_sampler(&next.sampler, &batch, &next.config.shape, next.config.step_size)?;
        next.sampler = sampler;
        scaled_mean = report.scaled_mean.or(scaled_mean);
    }

    let indicators = match (&next.fixed_active_set, &next.sampler.actuation_probs) {
        (Some(set), _) => set.clone(),
        (None, Some(probs)) => sample_indicators(probs, &mut root.execution()),
        (None, None) => unreachable!("controller without an actuation set"),
    };
    let policy = next.sampler.mean_policy();
    let mut slot = 0;
    let controls = current
        .opinions
        .iter()
        .zip(&indicators)
        .map(|(&x, &a)| {
            let u = eval_policy(&policy, x, slot, 0, a);
            slot += usize::from(a);
            u
        })
        .collect();
    let actuation_probs = next.sampler.actuation_probs.clone();
    next.sampler.means = recede(&next.sampler.means);

    Ok(StepOutcome { controls, indicators, controller: next, actuation_probs, scaled_mean })
}

/// Shift the plan one step earlier and reset the last step to zero.
pub fn recede(means: &ParamTable) -> ParamTable {
    let (horizon, width) = (means.horizon(), means.width());
    let mut values = Vec::with_capacity(horizon * width);
    values.extend_from_slice(&means.values()[width..]);
    values.resize(horizon * width, 0.0);
    ParamTable::from_values(horizon, width, values)
}

/// Exactly `floor(fraction * n)` agents, chosen uniformly.
pub fn draw_active_set(n: usize, fraction: f64, seed: u64) -> Vec<bool> {
    let k = ((fraction * n as f64) + 1e-9).floor() as usize;
    let mut rng = substream(seed, Domain::ActiveSet, 0, 0);
    let mut set = vec![false; n];
    for i in index::sample(&mut rng, n, k.min(n)) {
        set[i] = true;
    }
    set
}

/// Run a full closed-loop experiment.
///
/// The initial population, the fixed active set and the environment noise
/// depend only on the seed, so different policies run with the same seed
/// face identical conditions. Baseline and uncontrolled runs never touch the
/// optimizer.
pub fn run_controller(scenario: &Scenario, kind: PolicyKind, seed: u64) -> Result<ExperimentRecord> {
    scenario.validate()?;
    let model = &scenario.model;
    let n = model.n_agents;
    let steps = scenario.controller.mpc_horizon;

    let mut state = PopulationState::passive(scenario.sample_initial(seed));
    let fixed_set = match kind {
        PolicyKind::Adaptive => None,
        PolicyKind::Uncontrolled => Some(vec![false; n]),
        _ => Some(draw_active_set(n, scenario.active_fraction, seed)),
    };
    let mut controller = match kind.search_policy() {
        Some(policy) => Some(ControllerState::new(
            policy,
            scenario.controller.clone(),
            model.clone(),
            scenario.cost,
            scenario.active_fraction,
            fixed_set.clone(),
        )?),
        None => None,
    };

    let mut trajectory = Trajectory {
        states: vec![state.opinions.clone()],
        controls: Vec::with_capacity(steps),
        indicators: Vec::with_capacity(steps),
        actuation_probs: (kind == PolicyKind::Adaptive).then(Vec::new),
    };
    let mut noise = vec![0.0; n];
    for t in 0..steps {
        let (controls, indicators) = match controller.as_mut() {
            Some(ctrl) => {
                let outcome = mpc_step(ctrl, &state, StreamRoot::new(seed, t as u64))?;
                if let (Some(history), Some(p)) =
                    (trajectory.actuation_probs.as_mut(), outcome.actuation_probs)
                {
                    history.push(p);
                }
                *ctrl = outcome.controller;
                (outcome.controls, outcome.indicators)
            }
            None => {
                let set = fixed_set.clone().expect("non-search policies use a fixed set");
                let controls = state
                    .opinions
                    .iter()
                    .zip(&set)
                    .map(|(&x, &a)| if a { baseline_control(x, scenario.cost.target) } else { 0.0 })
                    .collect();
                (controls, set)
            }
        };

        let mut rng = substream(seed, Domain::Environment, t as u64, 0);
        standard_normals(&mut rng, &mut noise);
        state.active_mask.clone_from(&indicators);
        state = step(&state, &controls, model, &noise);

        trajectory.states.push(state.opinions.clone());
        trajectory.controls.push(controls);
        trajectory.indicators.push(indicators);
    }

    Ok(ExperimentRecord {
        scenario: scenario.name.clone(),
        policy: kind,
        seed,
        trajectory,
        config: scenario.clone(),
    })
}
