//! Scenario definitions, experiment records, metrics and output files.

mod output;
mod record;

use std::path::Path;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dynamics::{Bounds, CostSpec, ModelParams};
use crate::mpc::ControllerConfig;
use crate::optimizer::ShapeSpec;
use crate::rng::{substream, Domain};
use crate::{Error, Result};

pub use output::{read_trajectory, write_outputs, OutputFiles, TRAJECTORY_HEADER};
pub use record::{compute_metrics, first_within, ExperimentRecord, Metrics, Trajectory};

pub const KNOWN_SCENARIOS: [&str; 2] = ["steering", "polarized"];

/// Default distance to the target that counts as converged.
pub const DEFAULT_THRESHOLD: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformComponent {
    pub lo: f64,
    pub hi: f64,
    pub weight: f64,
}

/// Mixture of uniform intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialDistribution {
    pub components: Vec<UniformComponent>,
    /// Assign agents to components in exact proportion to the weights
    /// instead of drawing each agent's component independently.
    #[serde(default)]
    pub exact_split: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub active_fraction: f64,
    /// Convergence threshold used by the metrics.
    pub threshold: f64,
    pub initial: InitialDistribution,
    pub model: ModelParams,
    pub cost: CostSpec,
    pub controller: ControllerConfig,
}

impl Scenario {
    fn with_defaults(name: &str, components: Vec<UniformComponent>, target: f64) -> Self {
        Scenario {
            name: name.to_owned(),
            active_fraction: 0.25,
            threshold: DEFAULT_THRESHOLD,
            initial: InitialDistribution { components, exact_split: false },
            model: ModelParams {
                alpha: 0.8,
                sigma: 0.1,
                epsilon: 1.0,
                n_agents: 200,
                state_bounds: Bounds::new(-3.0, 3.0),
                state_dim: 1,
            },
            cost: CostSpec { q: 5.0, r: 0.1, target },
            controller: ControllerConfig {
                planning_horizon: 10,
                mpc_horizon: 150,
                n_samples: 500,
                step_size: 1.0,
                shape: ShapeSpec::soft_elite(0.1),
                ..ControllerConfig::default()
            },
        }
    }

    /// Unimodal population on `[-1, 1]` steered to `+2`.
    pub fn steering() -> Self {
        Self::with_defaults(
            "steering",
            vec![UniformComponent { lo: -1.0, hi: 1.0, weight: 1.0 }],
            2.0,
        )
    }

    /// Two polarised modes on `[2, 3]` and `[-3, -2]` brought to `0`.
    pub fn polarized() -> Self {
        Self::with_defaults(
            "polarized",
            vec![
                UniformComponent { lo: 2.0, hi: 3.0, weight: 0.5 },
                UniformComponent { lo: -3.0, hi: -2.0, weight: 0.5 },
            ],
            0.0,
        )
    }

    pub fn target(&self) -> f64 {
        self.cost.target
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.cost.validate()?;
        self.controller.validate()?;
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::InvalidConfig("name must be nonempty and contain no path separators".into()));
        }
        if !(self.active_fraction > 0.0 && self.active_fraction <= 1.0) {
            return Err(Error::InvalidConfig("active_fraction must lie in (0, 1]".into()));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::InvalidConfig("threshold must be finite and positive".into()));
        }
        let comps = &self.initial.components;
        if comps.is_empty() {
            return Err(Error::InvalidConfig("initial distribution has no components".into()));
        }
        let bounds = self.model.state_bounds;
        for c in comps {
            if !(c.weight > 0.0) {
                return Err(Error::InvalidConfig("mixture weights must be positive".into()));
            }
            if !(c.lo <= c.hi && bounds.contains(c.lo) && bounds.contains(c.hi)) {
                return Err(Error::InvalidConfig(format!(
                    "component [{}, {}] must be an interval inside the state bounds",
                    c.lo, c.hi
                )));
            }
        }
        let total: f64 = comps.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(())
    }

    /// Component index for every agent.
    fn assign_components(&self, rng: &mut impl Rng) -> Vec<usize> {
        let n = self.model.n_agents;
        let comps = &self.initial.components;
        if !self.initial.exact_split {
            let pick = WeightedIndex::new(comps.iter().map(|c| c.weight))
                .expect("validated mixture weights");
            return (0..n).map(|_| pick.sample(rng)).collect();
        }
        // largest remainder apportionment, contiguous blocks
        let quotas: Vec<f64> = comps.iter().map(|c| c.weight * n as f64).collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut order: Vec<usize> = (0..comps.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - quotas[a].floor();
            let rb = quotas[b] - quotas[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let short = n - counts.iter().sum::<usize>();
        for &k in order.iter().cycle().take(short) {
            counts[k] += 1;
        }
        counts.iter().enumerate().flat_map(|(k, &c)| std::iter::repeat_n(k, c)).collect()
    }

    /// Initial opinions for `seed`, each inside its component's interval.
    pub fn sample_initial(&self, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, Domain::InitialState, 0, 0);
        let assignment = self.assign_components(&mut rng);
        assignment
            .into_iter()
            .map(|k| {
                let c = self.initial.components[k];
                if c.lo == c.hi {
                    c.lo
                } else {
                    rng.random_range(c.lo..c.hi)
                }
            })
            .collect()
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::parse(path, e))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serialises to TOML")
    }

    /// Set the field at a dotted path, e.g. `model.alpha`, from `value`.
    ///
    /// The value is read as JSON when it parses as JSON and as a bare string
    /// otherwise. Unknown paths and type mismatches are errors.
    pub fn apply_override(&mut self, path: &str, value: &str) -> Result<()> {
        let spec = format!("{path}={value}");
        let fail = |reason: String| Error::Override { spec: spec.clone(), reason };

        let mut tree = serde_json::to_value(&*self).expect("scenario serialises to JSON");
        let mut node = &mut tree;
        for key in path.split('.') {
            node = match node {
                Value::Object(map) => map
                    .get_mut(key)
                    .ok_or_else(|| fail(format!("unknown key `{key}`")))?,
                Value::Array(items) => {
                    let idx: usize = key.parse().map_err(|_| fail(format!("`{key}` is not an index")))?;
                    let len = items.len();
                    items
                        .get_mut(idx)
                        .ok_or_else(|| fail(format!("index {idx} out of range (length {len})")))?
                }
                _ => return Err(fail(format!("`{key}` goes below a scalar value"))),
            };
        }
        *node = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_owned()));
        *self = serde_json::from_value(tree).map_err(|e| fail(e.to_string()))?;
        Ok(())
    }
}

/// Split `key=value`.
pub fn parse_override(spec: &str) -> Result<(&str, &str)> {
    match spec.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim(), v.trim())),
        _ => Err(Error::Override { spec: spec.to_owned(), reason: "expected key=value".into() }),
    }
}

/// A named scenario (or a TOML config file path) with `key=value` overrides
/// applied last.
pub fn build_scenario<S: AsRef<str>>(name: &str, overrides: &[S]) -> Result<Scenario> {
    let mut scenario = match name {
        "steering" => Scenario::steering(),
        "polarized" => Scenario::polarized(),
        other => {
            let path = Path::new(other);
            if !path.is_file() {
                return Err(Error::UnknownScenario {
                    name: other.to_owned(),
                    known: KNOWN_SCENARIOS.join(", "),
                });
            }
            Scenario::from_toml_file(path)?
        }
    };
    for spec in overrides {
        let (key, value) = parse_override(spec.as_ref())?;
        scenario.apply_override(key, value)?;
    }
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steering_defaults() {
        let s = build_scenario::<&str>("steering", &[]).unwrap();
        assert_eq!(s.target(), 2.0);
        assert_eq!(s.initial.components, vec![UniformComponent { lo: -1.0, hi: 1.0, weight: 1.0 }]);
        check_shared_defaults(&s);
    }

    #[test]
    fn polarized_defaults() {
        let s = build_scenario::<&str>("polarized", &[]).unwrap();
        assert_eq!(s.target(), 0.0);
        assert_eq!(s.initial.components.len(), 2);
        assert_eq!((s.initial.components[0].lo, s.initial.components[0].hi), (2.0, 3.0));
        assert_eq!((s.initial.components[1].lo, s.initial.components[1].hi), (-3.0, -2.0));
        assert_eq!(s.initial.components[0].weight, s.initial.components[1].weight);
        check_shared_defaults(&s);
    }

    fn check_shared_defaults(s: &Scenario) {
        assert_eq!(s.model.n_agents, 200);
        assert_eq!(s.active_fraction, 0.25);
        assert_eq!(s.model.alpha, 0.8);
        assert_eq!(s.model.sigma, 0.1);
        assert_eq!(s.model.epsilon, 1.0);
        assert_eq!(s.model.state_bounds, Bounds::new(-3.0, 3.0));
        assert_eq!(s.cost.q, 5.0);
        assert_eq!(s.cost.r, 0.1);
        assert_eq!(s.controller.planning_horizon, 10);
        assert_eq!(s.controller.mpc_horizon, 150);
        assert_eq!(s.controller.n_samples, 500);
        assert_eq!(s.controller.step_size, 1.0);
        assert_eq!(s.controller.iterations, 1);
        assert!(matches!(s.controller.shape, ShapeSpec::SoftElite { elite_fraction, .. } if elite_fraction == 0.1));
    }

    #[test]
    fn active_fraction_override_changes_nothing_else() {
        let base = Scenario::polarized();
        let low = build_scenario("polarized", &["active_fraction=0.1"]).unwrap();
        assert_eq!(low.active_fraction, 0.1);
        assert_eq!(Scenario { active_fraction: 0.25, ..low }, base);
    }

    #[test]
    fn overrides_reject_unknown_paths_and_bad_values() {
        assert!(matches!(build_scenario("steering", &["model.alhpa=0.5"]), Err(Error::Override { .. })));
        assert!(matches!(build_scenario("steering", &["model.n_agents=0.5"]), Err(Error::Override { .. })));
        assert!(matches!(build_scenario("steering", &["model.alpha"]), Err(Error::Override { .. })));
        assert!(matches!(build_scenario("steering", &["model.alpha.x=1"]), Err(Error::Override { .. })));
        assert!(matches!(build_scenario("steering", &["model.alpha=2"]), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn overrides_reach_nested_and_optional_fields() {
        let s = build_scenario(
            "steering",
            &[
                "controller.initial_actuation_prob=0.5",
                "model.state_bounds.lo=-4",
                "initial.components.0.lo=-0.5",
                "controller.shape.sharpness=4",
            ],
        )
        .unwrap();
        assert_eq!(s.controller.initial_actuation_prob, Some(0.5));
        assert_eq!(s.model.state_bounds.lo, -4.0);
        assert_eq!(s.initial.components[0].lo, -0.5);
        assert_eq!(s.controller.shape, ShapeSpec::SoftElite { elite_fraction: 0.1, sharpness: 4.0 });
    }

    #[test]
    fn unknown_scenario_lists_known_ones() {
        let err = build_scenario::<&str>("sideways", &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("steering") && msg.contains("polarized"), "{msg}");
    }

    #[test]
    fn toml_config_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("custom.toml");
        let mut s = Scenario::polarized();
        s.name = "custom".into();
        s.controller.initial_actuation_prob = Some(0.3);
        std::fs::write(&path, s.to_toml()).unwrap();
        let loaded = build_scenario::<&str>(path.to_str().unwrap(), &[]).unwrap();
        assert_eq!(loaded, s);
    }

    #[test]
    fn initial_samples_stay_in_their_components() {
        let s = Scenario::polarized();
        for seed in 0..20 {
            let x = s.sample_initial(seed);
            assert_eq!(x.len(), 200);
            assert!(x.iter().all(|&v| (2.0..3.0).contains(&v) || (-3.0..-2.0).contains(&v)));
        }
        let x = Scenario::steering().sample_initial(1);
        assert!(x.iter().all(|&v| (-1.0..1.0).contains(&v)));
    }

    #[test]
    fn exact_split_halves_the_population() {
        let mut s = Scenario::polarized();
        s.initial.exact_split = true;
        s.model.n_agents = 201;
        let x = s.sample_initial(0);
        let pos = x.iter().filter(|&&v| v > 0.0).count();
        assert!(pos == 100 || pos == 101);
        assert_eq!(x.len(), 201);
    }
}
