use serde::{Deserialize, Serialize};

use super::Scenario;
use crate::mpc::PolicyKind;

/// Closed-loop history of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `T_mpc + 1` rows of `N` opinions.
    pub states: Vec<Vec<f64>>,
    /// `T_mpc` rows of executed controls.
    pub controls: Vec<Vec<f64>>,
    /// `T_mpc` rows of execution actuation indicators.
    pub indicators: Vec<Vec<bool>>,
    /// `T_mpc` rows of the probabilities the indicators were drawn from;
    /// adaptive policy only.
    pub actuation_probs: Option<Vec<Vec<f64>>>,
}

impl Trajectory {
    pub fn n_agents(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn n_steps(&self) -> usize {
        self.controls.len()
    }

    pub fn is_consistent(&self) -> bool {
        let n = self.n_agents();
        let t = self.n_steps();
        self.states.len() == t + 1
            && self.indicators.len() == t
            && self.states.iter().all(|r| r.len() == n)
            && self.controls.iter().all(|r| r.len() == n)
            && self.indicators.iter().all(|r| r.len() == n)
            && self.actuation_probs.as_ref().is_none_or(|p| p.len() == t && p.iter().all(|r| r.len() == n))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRecord {
    pub scenario: String,
    pub policy: PolicyKind,
    pub seed: u64,
    pub trajectory: Trajectory,
    /// Scenario the run was made with.
    pub config: Scenario,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub threshold: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Mean of agents whose initial opinion was `>= 0`.
    pub positive_mode_mean: Option<Vec<f64>>,
    /// Mean of agents whose initial opinion was `< 0`.
    pub negative_mode_mean: Option<Vec<f64>>,
    /// Mean of agents actuated at least once.
    pub actuated_mean: Option<Vec<f64>>,
    /// Mean of agents never actuated.
    pub unactuated_mean: Option<Vec<f64>>,
    /// First step whose population mean is within `threshold` of the target.
    pub time_to_threshold: Option<usize>,
    /// First step at which every nonempty mode mean is within `threshold` of
    /// the target.
    pub mode_time_to_threshold: Option<usize>,
    /// `sum_t sum_i r u_i^2` over executed controls.
    pub control_effort: f64,
    /// `|mean_T - target|` at the final step.
    pub terminal_distance: f64,
}

/// Index of the first entry within `threshold` of `target`.
pub fn first_within(series: &[f64], target: f64, threshold: f64) -> Option<usize> {
    series.iter().position(|&m| (m - target).abs() <= threshold)
}

fn group_mean(states: &[Vec<f64>], members: &[bool]) -> Option<Vec<f64>> {
    let count = members.iter().filter(|&&m| m).count();
    (count > 0).then(|| {
        states
            .iter()
            .map(|row| {
                row.iter().zip(members).filter(|(_, &m)| m).map(|(&x, _)| x).sum::<f64>()
                    / count as f64
            })
            .collect()
    })
}

pub fn compute_metrics(record: &ExperimentRecord, threshold: f64) -> Metrics {
    let traj = &record.trajectory;
    let target = record.config.target();
    let n = traj.n_agents() as f64;

    let mean: Vec<f64> = traj.states.iter().map(|r| r.iter().sum::<f64>() / n).collect();
    let std: Vec<f64> = traj
        .states
        .iter()
        .zip(&mean)
        .map(|(r, &m)| (r.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt())
        .collect();

    let positive: Vec<bool> = traj.states[0].iter().map(|&x| x >= 0.0).collect();
    let negative: Vec<bool> = positive.iter().map(|p| !p).collect();
    let positive_mode_mean = group_mean(&traj.states, &positive);
    let negative_mode_mean = group_mean(&traj.states, &negative);

    let mut ever = vec![false; traj.n_agents()];
    for row in &traj.indicators {
        for (e, &a) in ever.iter_mut().zip(row) {
            *e |= a;
        }
    }
    let never: Vec<bool> = ever.iter().map(|e| !e).collect();

    let modes: Vec<&Vec<f64>> =
        positive_mode_mean.iter().chain(negative_mode_mean.iter()).collect();
    let mode_time_to_threshold = (0..mean.len())
        .find(|&t| modes.iter().all(|m| (m[t] - target).abs() <= threshold));

    let control_effort = record.config.cost.r
        * traj.controls.iter().flatten().map(|u| u * u).sum::<f64>();

    Metrics {
        threshold,
        time_to_threshold: first_within(&mean, target, threshold),
        mode_time_to_threshold,
        terminal_distance: (mean.last().copied().unwrap_or(f64::NAN) - target).abs(),
        actuated_mean: group_mean(&traj.states, &ever),
        unactuated_mean: group_mean(&traj.states, &never),
        positive_mode_mean,
        negative_mode_mean,
        control_effort,
        mean,
        std,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(states: Vec<Vec<f64>>, controls: Vec<Vec<f64>>, indicators: Vec<Vec<bool>>) -> ExperimentRecord {
        ExperimentRecord {
            scenario: "steering".into(),
            policy: PolicyKind::Baseline,
            seed: 0,
            trajectory: Trajectory { states, controls, indicators, actuation_probs: None },
            config: Scenario::steering(),
        }
    }

    #[test]
    fn at_target_everywhere() {
        let r = record(vec![vec![2.0; 3]; 3], vec![vec![0.0; 3]; 2], vec![vec![false; 3]; 2]);
        let m = compute_metrics(&r, 0.2);
        assert_eq!(m.terminal_distance, 0.0);
        assert_eq!(m.time_to_threshold, Some(0));
        assert_eq!(m.mode_time_to_threshold, Some(0));
        assert_eq!(m.std, vec![0.0; 3]);
        assert!(m.actuated_mean.is_none());
    }

    #[test]
    fn uncontrolled_has_no_effort() {
        let r = record(vec![vec![0.1, -0.4]; 4], vec![vec![0.0; 2]; 3], vec![vec![false; 2]; 3]);
        assert_eq!(compute_metrics(&r, 0.2).control_effort, 0.0);
    }

    #[test]
    fn threshold_crossing_index() {
        assert_eq!(first_within(&[0.0, 1.0, 1.9, 2.0], 2.0, 0.2), Some(2));
        assert_eq!(first_within(&[0.0, 1.0], 2.0, 0.2), None);
    }

    #[test]
    fn groups_and_effort() {
        let states = vec![vec![1.0, -1.0], vec![1.5, -0.5], vec![2.0, 0.0]];
        let controls = vec![vec![1.0, 0.0], vec![0.5, 0.0]];
        let indicators = vec![vec![true, false], vec![true, false]];
        let m = compute_metrics(&record(states, controls, indicators), 0.2);
        assert_eq!(m.positive_mode_mean, Some(vec![1.0, 1.5, 2.0]));
        assert_eq!(m.negative_mode_mean, Some(vec![-1.0, -0.5, 0.0]));
        assert_eq!(m.actuated_mean, m.positive_mode_mean);
        assert_eq!(m.unactuated_mean, m.negative_mode_mean);
        assert!((m.control_effort - 0.1 * 1.25).abs() < 1e-15);
        assert_eq!(m.mean, vec![0.0, 0.5, 1.0]);
        assert_eq!(m.terminal_distance, 1.0);
        assert_eq!(m.mode_time_to_threshold, None);
    }
}
