//! Bounded-confidence opinion dynamics with a passive/active agent split.
//!
//! Each agent drifts toward the mean opinion of the agents within radius
//! `epsilon` of itself (its center of bias), keeps a `1 - alpha` share of its
//! own opinion, and receives additive Gaussian noise. Actuated agents also
//! receive an additive control. Opinions are clipped into the state bounds
//! after every step.

use serde::{Deserialize, Serialize};

use crate::policies::{eval_policy, PolicyParams};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    #[inline]
    pub fn clip(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Susceptibility to the neighbourhood, in `[0, 1]`.
    pub alpha: f64,
    /// Standard deviation of the per-step opinion noise.
    pub sigma: f64,
    /// Bounded-confidence radius.
    pub epsilon: f64,
    pub n_agents: usize,
    pub state_bounds: Bounds,
    pub state_dim: usize,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(format!("model: {m}")));
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail("alpha must lie in [0, 1]");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return fail("sigma must be finite and nonnegative");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return fail("epsilon must be finite and positive");
        }
        if self.n_agents == 0 {
            return fail("n_agents must be at least 1");
        }
        let Bounds { lo, hi } = self.state_bounds;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return fail("state_bounds must satisfy lo < hi");
        }
        if self.state_dim != 1 {
            return fail("only scalar opinions (state_dim = 1) are supported");
        }
        Ok(())
    }
}

/// Quadratic tracking cost toward `target`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub q: f64,
    pub r: f64,
    pub target: f64,
}

impl CostSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.q >= 0.0 && self.r >= 0.0 && self.target.is_finite()) {
            return Err(Error::InvalidConfig(
                "cost: q and r must be nonnegative and target finite".into(),
            ));
        }
        Ok(())
    }

    /// Cost contributed by one timestep: the state term on the post-step
    /// opinions plus the control term on the controls that produced them.
    pub fn stage(&self, next_opinions: &[f64], controls: &[f64], actuated: &[bool]) -> f64 {
        let state: f64 = next_opinions
            .iter()
            .map(|&x| {
                let e = x - self.target;
                e * e
            })
            .sum();
        let effort: f64 = controls
            .iter()
            .zip(actuated)
            .filter(|(_, &a)| a)
            .map(|(&u, _)| u * u)
            .sum();
        self.q * state + self.r * effort
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationState {
    pub opinions: Vec<f64>,
    /// `true` for agents in the active (actuated) set.
    pub active_mask: Vec<bool>,
}

impl PopulationState {
    pub fn new(opinions: Vec<f64>, active_mask: Vec<bool>) -> Self {
        assert_eq!(opinions.len(), active_mask.len(), "opinions and mask differ in length");
        Self { opinions, active_mask }
    }

    pub fn passive(opinions: Vec<f64>) -> Self {
        let n = opinions.len();
        Self::new(opinions, vec![false; n])
    }

    pub fn len(&self) -> usize {
        self.opinions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opinions.is_empty()
    }
}

/// One sampled trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    /// `horizon + 1` rows of `N` opinions; row 0 is the initial state.
    pub states: Vec<Vec<f64>>,
    /// `horizon` rows of `N` controls; zero for non-actuated agents.
    pub controls: Vec<Vec<f64>>,
    pub indicators: Vec<bool>,
    pub cost: f64,
}

/// Agents `j != i` with `|x_i - x_j| <= epsilon`, by direct scan.
pub fn neighborhood(opinions: &[f64], i: usize, epsilon: f64) -> Vec<usize> {
    assert!(i < opinions.len(), "agent index {i} out of range");
    let xi = opinions[i];
    opinions
        .iter()
        .enumerate()
        .filter(|&(j, &xj)| j != i && (xi - xj).abs() <= epsilon)
        .map(|(j, _)| j)
        .collect()
}

/// Mean opinion of the neighbourhood of `i`, or `x_i` if it is empty.
pub fn center_of_bias(opinions: &[f64], i: usize, epsilon: f64) -> f64 {
    let nbrs = neighborhood(opinions, i, epsilon);
    if nbrs.is_empty() {
        return opinions[i];
    }
    nbrs.iter().map(|&j| opinions[j]).sum::<f64>() / nbrs.len() as f64
}

fn ordered_bits(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 { !b } else { b | 1 << 63 }
}

/// Sort-based neighbourhood queries for scalar opinions.
///
/// Uses the same `|x_i - x_j| <= epsilon` comparison as [`neighborhood`], so
/// the neighbour sets agree exactly. Window sums come from prefix sums over
/// the sorted opinions.
#[derive(Clone, Debug, Default)]
pub struct NeighborIndex {
    epsilon: f64,
    values: Vec<f64>,
    keys: Vec<(u64, u32)>,
    order: Vec<usize>,
    sorted: Vec<f64>,
    prefix: Vec<f64>,
    /// Window `[lo, hi)` in sorted positions for each agent; includes itself.
    window: Vec<(usize, usize)>,
}

impl NeighborIndex {
    pub fn new(opinions: &[f64], epsilon: f64) -> Self {
        let mut index = Self::default();
        index.rebuild(opinions, epsilon);
        index
    }

    pub fn rebuild(&mut self, opinions: &[f64], epsilon: f64) {
        let n = opinions.len();
        self.epsilon = epsilon;
        self.values.clear();
        self.values.extend_from_slice(opinions);

        // Sort on the bits of the opinion mapped to an integer with the same
        // order as `total_cmp`, index as tie-break.
        self.keys.clear();
        self.keys.extend(opinions.iter().enumerate().map(|(i, &x)| (ordered_bits(x), i as u32)));
        self.keys.sort_unstable();
        self.order.clear();
        self.order.extend(self.keys.iter().map(|&(_, i)| i as usize));
        let values = &self.values;
        self.sorted.clear();
        self.sorted.extend(self.order.iter().map(|&a| values[a]));

        self.prefix.clear();
        self.prefix.reserve(n + 1);
        let mut acc = 0.0;
        self.prefix.push(acc);
        for &v in &self.sorted {
            acc += v;
            self.prefix.push(acc);
        }

        // Both window ends are monotone in the query opinion, so a single
        // sweep over sorted positions finds every window.
        self.window.clear();
        self.window.resize(n, (0, 0));
        let (mut lo, mut hi) = (0usize, 0usize);
        for k in 0..n {
            let x = self.sorted[k];
            while lo < n && x - self.sorted[lo] > epsilon {
                lo += 1;
            }
            while hi < n && self.sorted[hi] - x <= epsilon {
                hi += 1;
            }
            self.window[self.order[k]] = (lo, hi);
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn neighbor_count(&self, i: usize) -> usize {
        let (lo, hi) = self.window[i];
        hi - lo - 1
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        assert!(i < self.len(), "agent index {i} out of range");
        let (lo, hi) = self.window[i];
        let mut out: Vec<usize> = self.order[lo..hi].iter().copied().filter(|&j| j != i).collect();
        out.sort_unstable();
        out
    }

    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        let (lo, hi) = self.window[i];
        let count = hi - lo - 1;
        if count == 0 {
            return self.values[i];
        }
        (self.prefix[hi] - self.prefix[lo] - self.values[i]) / count as f64
    }
}

/// Advance `current` one step into `out`. `noise` holds standard-normal draws
/// that are scaled by `sigma` here.
fn advance(
    current: &[f64],
    active: &[bool],
    controls: &[f64],
    params: &ModelParams,
    noise: &[f64],
    index: &mut NeighborIndex,
    out: &mut [f64],
) {
    index.rebuild(current, params.epsilon);
    let keep = 1.0 - params.alpha;
    for i in 0..current.len() {
        let mut x = keep * current[i] + params.alpha * index.center(i) + params.sigma * noise[i];
        if active[i] {
            x += controls[i];
        }
        out[i] = params.state_bounds.clip(x);
    }
}

/// One propagation step of the whole population.
///
/// `noise` is a vector of `N` standard-normal draws; it is multiplied by
/// `sigma` before use. Controls are only applied to agents in the active mask
/// and must be zero elsewhere.
pub fn step(
    state: &PopulationState,
    controls: &[f64],
    params: &ModelParams,
    noise: &[f64],
) -> PopulationState {
    let n = state.len();
    assert_eq!(state.active_mask.len(), n, "mask length mismatch");
    assert_eq!(controls.len(), n, "controls length mismatch");
    assert_eq!(noise.len(), n, "noise length mismatch");
    assert!(
        controls.iter().zip(&state.active_mask).all(|(&u, &a)| a || u == 0.0),
        "nonzero control on a passive agent"
    );
    let mut next = vec![0.0; n];
    let mut index = NeighborIndex::default();
    advance(&state.opinions, &state.active_mask, controls, params, noise, &mut index, &mut next);
    PopulationState { opinions: next, active_mask: state.active_mask.clone() }
}

/// Reusable buffers for repeated rollouts.
#[derive(Clone, Debug, Default)]
pub struct RolloutWorkspace {
    index: NeighborIndex,
    current: Vec<f64>,
    next: Vec<f64>,
    controls: Vec<f64>,
}

fn simulate(
    init: &[f64],
    policy: &PolicyParams,
    indicators: &[bool],
    params: &ModelParams,
    cost: &CostSpec,
    noise: &[f64],
    horizon: usize,
    ws: &mut RolloutWorkspace,
    mut observe: impl FnMut(&[f64], &[f64]),
) -> f64 {
    let n = init.len();
    assert!(horizon >= 1, "horizon must be at least 1");
    assert_eq!(indicators.len(), n, "indicator length mismatch");
    assert_eq!(noise.len(), horizon * n, "noise stream must hold horizon x N draws");
    assert!(policy.horizon() >= horizon, "policy shorter than the rollout horizon");

    ws.current.clear();
    ws.current.extend_from_slice(init);
    ws.next.resize(n, 0.0);
    ws.controls.resize(n, 0.0);

    let mut total = 0.0;
    for t in 0..horizon {
        let mut slot = 0;
        for i in 0..n {
            ws.controls[i] = eval_policy(policy, ws.current[i], slot, t, indicators[i]);
            if indicators[i] {
                slot += 1;
            }
        }
        advance(
            &ws.current,
            indicators,
            &ws.controls,
            params,
            &noise[t * n..(t + 1) * n],
            &mut ws.index,
            &mut ws.next,
        );
        total += cost.stage(&ws.next, &ws.controls, indicators);
        observe(&ws.next, &ws.controls);
        std::mem::swap(&mut ws.current, &mut ws.next);
    }
    total
}

/// Cost of one rollout without recording the trajectory.
///
/// `noise` is row-major `horizon x N` standard-normal draws.
#[allow(clippy::too_many_arguments)]
pub fn rollout_cost(
    init: &[f64],
    policy: &PolicyParams,
    indicators: &[bool],
    params: &ModelParams,
    cost: &CostSpec,
    noise: &[f64],
    horizon: usize,
    ws: &mut RolloutWorkspace,
) -> f64 {
    simulate(init, policy, indicators, params, cost, noise, horizon, ws, |_, _| {})
}

/// Propagate `horizon` steps from `init`, applying `policy` to agents whose
/// indicator is set, and accumulate the tracking cost over steps `1..=horizon`.
///
/// `noise` is row-major `horizon x N` standard-normal draws.
pub fn rollout(
    init: &PopulationState,
    policy: &PolicyParams,
    indicators: &[bool],
    params: &ModelParams,
    cost: &CostSpec,
    noise: &[f64],
    horizon: usize,
) -> Rollout {
    let mut states = Vec::with_capacity(horizon + 1);
    let mut controls = Vec::with_capacity(horizon);
    states.push(init.opinions.clone());
    let mut ws = RolloutWorkspace::default();
    let total = simulate(
        &init.opinions,
        policy,
        indicators,
        params,
        cost,
        noise,
        horizon,
        &mut ws,
        |x, u| {
            states.push(x.to_vec());
            controls.push(u.to_vec());
        },
    );
    Rollout { states, controls, indicators: indicators.to_vec(), cost: total }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::{ParamTable, SearchPolicy};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn model(alpha: f64, sigma: f64) -> ModelParams {
        ModelParams {
            alpha,
            sigma,
            epsilon: 1.0,
            n_agents: 3,
            state_bounds: Bounds::new(-3.0, 3.0),
            state_dim: 1,
        }
    }

    #[test]
    fn neighborhood_examples() {
        let x = [0.0, 0.5, 2.0];
        assert_eq!(neighborhood(&x, 0, 1.0), vec![1]);
        assert!(neighborhood(&x, 2, 1.0).is_empty());
        assert!(neighborhood(&[0.3], 0, 10.0).is_empty());
    }

    #[test]
    fn boundary_distance_counts() {
        assert_eq!(neighborhood(&[0.0, 1.0], 0, 1.0), vec![1]);
        let index = NeighborIndex::new(&[0.0, 1.0], 1.0);
        assert_eq!(index.neighbors(0), vec![1]);
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn neighborhood_index_out_of_range() {
        neighborhood(&[0.0, 1.0], 2, 1.0);
    }

    #[test]
    fn center_of_bias_examples() {
        let x = [0.0, 0.5, 2.0];
        assert_eq!(center_of_bias(&x, 0, 1.0), 0.5);
        assert_eq!(center_of_bias(&x, 2, 1.0), 2.0);
        for i in 0..3 {
            assert_eq!(center_of_bias(&[1.0, 1.0, 1.0], i, 0.5), 1.0);
        }
    }

    #[test]
    fn step_identity_without_drift_or_noise() {
        let s = PopulationState::passive(vec![-1.0, 0.2, 2.5]);
        let next = step(&s, &[0.0; 3], &model(0.0, 0.0), &[0.7, -0.3, 1.1]);
        assert_eq!(next.opinions, s.opinions);
    }

    #[test]
    fn step_two_agents_hand_evaluated() {
        let s = PopulationState::passive(vec![0.0, 0.5]);
        let next = step(&s, &[0.0; 2], &model(0.8, 0.1), &[0.0; 2]);
        assert_relative_eq!(next.opinions[0], 0.4, epsilon = 1e-15);
        assert_relative_eq!(next.opinions[1], 0.1, epsilon = 1e-15);
    }

    #[test]
    fn step_saturates_at_upper_bound() {
        // Isolated agent: drift keeps 2.9, control of 0.5 would give 3.4.
        let s = PopulationState::new(vec![2.9], vec![true]);
        let next = step(&s, &[0.5], &model(0.8, 0.0), &[0.0]);
        assert_eq!(next.opinions, vec![3.0]);
    }

    #[test]
    fn step_noise_applied_before_clipping() {
        let s = PopulationState::passive(vec![-2.95]);
        let next = step(&s, &[0.0], &model(0.5, 1.0), &[-1.0]);
        assert_eq!(next.opinions, vec![-3.0]);
    }

    #[test]
    #[should_panic(expected = "passive agent")]
    fn step_rejects_control_on_passive_agent() {
        let s = PopulationState::passive(vec![0.0]);
        step(&s, &[1.0], &model(0.8, 0.0), &[0.0]);
    }

    #[test]
    #[should_panic(expected = "length mismatch")]
    fn step_rejects_dimension_mismatch() {
        let s = PopulationState::passive(vec![0.0, 1.0]);
        step(&s, &[0.0], &model(0.8, 0.0), &[0.0, 0.0]);
    }

    fn feedforward(values: Vec<f64>, horizon: usize) -> PolicyParams {
        let width = values.len() / horizon;
        PolicyParams::new(SearchPolicy::OpenLoop, ParamTable::from_values(horizon, width, values))
    }

    #[test]
    fn rollout_single_agent_cost() {
        let init = PopulationState::new(vec![0.0], vec![true]);
        let cost = CostSpec { q: 5.0, r: 0.1, target: 2.0 };
        let r = rollout(&init, &feedforward(vec![1.0], 1), &[true], &model(0.8, 0.0), &cost, &[0.0], 1);
        assert_eq!(r.states, vec![vec![0.0], vec![1.0]]);
        assert_relative_eq!(r.cost, 5.1, epsilon = 1e-12);
    }

    #[test]
    fn rollout_at_target_costs_nothing() {
        let init = PopulationState::passive(vec![2.0; 4]);
        let cost = CostSpec { q: 5.0, r: 0.1, target: 2.0 };
        let policy = PolicyParams::zeros(SearchPolicy::Feedback, 5, 0);
        let r = rollout(&init, &policy, &[false; 4], &model(0.6, 0.0), &cost, &[0.3; 20], 5);
        assert_eq!(r.cost, 0.0);
        assert!(r.states.iter().all(|row| row == &vec![2.0; 4]));
    }

    #[test]
    fn rollout_zero_control_for_inactive_agents() {
        let init = PopulationState::passive(vec![-1.0, 0.0, 1.0]);
        let cost = CostSpec { q: 1.0, r: 1.0, target: 0.0 };
        let policy = PolicyParams::new(
            SearchPolicy::Feedback,
            ParamTable::from_values(2, 2, vec![0.5, 0.2, -0.3, 0.1]),
        );
        let ind = [true, false, true];
        let r = rollout(&init, &policy, &ind, &model(0.8, 0.1), &cost, &[0.1; 6], 2);
        for row in &r.controls {
            assert_eq!(row[1], 0.0);
            assert!(row[0] != 0.0 && row[2] != 0.0);
        }
    }

    #[test]
    fn rollout_cost_matches_recorded_rollout() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 30;
        let horizon = 6;
        let opinions: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let ind: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        let noise: Vec<f64> = (0..n * horizon).map(|_| rng.random_range(-2.0..2.0)).collect();
        let policy = PolicyParams::new(
            SearchPolicy::Feedback,
            ParamTable::from_values(horizon, 2, (0..2 * horizon).map(|k| 0.1 * k as f64 - 0.5).collect()),
        );
        let params = ModelParams { n_agents: n, ..model(0.8, 0.1) };
        let cost = CostSpec { q: 5.0, r: 0.1, target: 2.0 };
        let full = rollout(&PopulationState::passive(opinions.clone()), &policy, &ind, &params, &cost, &noise, horizon);
        let mut ws = RolloutWorkspace::default();
        let fast = rollout_cost(&opinions, &policy, &ind, &params, &cost, &noise, horizon, &mut ws);
        assert_eq!(full.cost.to_bits(), fast.to_bits());
        // recompute from the recorded trajectory
        let mut manual = 0.0;
        for t in 0..horizon {
            manual += cost.stage(&full.states[t + 1], &full.controls[t], &ind);
        }
        assert_eq!(manual, full.cost);
    }

    fn population(max_n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-3.0f64..3.0, 1..=max_n)
    }

    proptest! {
        #[test]
        fn neighborhood_is_symmetric(x in population(40), eps in 0.05f64..2.0) {
            for i in 0..x.len() {
                for j in neighborhood(&x, i, eps) {
                    prop_assert!(neighborhood(&x, j, eps).contains(&i));
                }
            }
        }

        #[test]
        fn step_is_permutation_equivariant(
            x in population(25),
            seed in any::<u64>(),
            alpha in 0.0f64..=1.0,
        ) {
            let n = x.len();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            let controls: Vec<f64> = mask.iter().map(|&a| if a { rng.random_range(-1.0..1.0) } else { 0.0 }).collect();
            let noise: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut perm: Vec<usize> = (0..n).collect();
            for k in (1..n).rev() {
                perm.swap(k, rng.random_range(0..=k));
            }
            let params = ModelParams { alpha, sigma: 0.1, epsilon: 0.7, ..model(alpha, 0.1) };
            let out = step(&PopulationState::new(x.clone(), mask.clone()), &controls, &params, &noise);
            let pick = |v: &[f64]| perm.iter().map(|&p| v[p]).collect::<Vec<_>>();
            let pmask: Vec<bool> = perm.iter().map(|&p| mask[p]).collect();
            let pout = step(&PopulationState::new(pick(&x), pmask), &pick(&controls), &params, &pick(&noise));
            for (k, &p) in perm.iter().enumerate() {
                prop_assert!((pout.opinions[k] - out.opinions[p]).abs() <= 1e-12);
            }
        }

        #[test]
        fn consensus_is_a_fixed_point(c in -3.0f64..3.0, n in 1usize..40, alpha in 0.0f64..=1.0) {
            let s = PopulationState::passive(vec![c; n]);
            let next = step(&s, &vec![0.0; n], &model(alpha, 0.1), &vec![0.0; n]);
            for x in next.opinions {
                prop_assert!((x - c).abs() <= 1e-12);
            }
        }

        #[test]
        fn opinions_stay_bounded(x in population(30), seed in any::<u64>()) {
            let n = x.len();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let noise: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
            let controls: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let s = PopulationState::new(x, vec![true; n]);
            let next = step(&s, &controls, &model(0.8, 1.0), &noise);
            prop_assert!(next.opinions.iter().all(|&v| (-3.0..=3.0).contains(&v)));
        }

        #[test]
        fn drift_is_a_convex_combination(x in population(30), alpha in 0.0f64..=1.0) {
            let n = x.len();
            let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let next = step(&PopulationState::passive(x), &vec![0.0; n], &model(alpha, 0.5), &vec![0.0; n]);
            for v in next.opinions {
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn sorted_index_matches_brute_force_on_random_populations() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
        for case in 0..1000 {
            let n = rng.random_range(1..=50);
            let eps = rng.random_range(0.01..2.0);
            // Half the cases use a coarse grid so exact ties and boundary
            // distances show up.
            let x: Vec<f64> = if case % 2 == 0 {
                (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()
            } else {
                (0..n).map(|_| rng.random_range(-12i32..=12) as f64 * 0.25).collect()
            };
            let eps = if case % 2 == 0 { eps } else { 0.25 * rng.random_range(1..4) as f64 };
            let index = NeighborIndex::new(&x, eps);
            for i in 0..n {
                let brute = neighborhood(&x, i, eps);
                assert_eq!(index.neighbors(i), brute, "case {case} agent {i}");
                assert_eq!(index.neighbor_count(i), brute.len());
                let expect = center_of_bias(&x, i, eps);
                assert!((index.center(i) - expect).abs() <= 1e-12, "case {case} agent {i}");
            }
        }
    }

    #[test]
    fn ordered_bits_follow_total_order() {
        let xs = [-3.0, -1e-300, -0.0, 0.0, 5e-324, 1e-300, 0.5, 3.0, f64::INFINITY, f64::NEG_INFINITY];
        for a in xs {
            for b in xs {
                assert_eq!(ordered_bits(a).cmp(&ordered_bits(b)), a.total_cmp(&b), "{a} {b}");
            }
        }
    }

    #[test]
    fn reused_index_tracks_new_opinions() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut index = NeighborIndex::default();
        for _ in 0..50 {
            let x: Vec<f64> = (0..40).map(|_| rng.random_range(-3.0..3.0)).collect();
            index.rebuild(&x, 0.4);
            for i in 0..x.len() {
                assert_eq!(index.neighbors(i), neighborhood(&x, i, 0.4));
            }
        }
    }
}
