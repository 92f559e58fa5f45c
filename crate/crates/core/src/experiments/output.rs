//! Trajectory tables and run summaries on disk.
//!
//! The trajectory table has one row per `(step, agent)` for steps
//! `0..=T_mpc`. `active`, `control` and `actuation_prob` describe the
//! transition out of that step, so they are empty on the final step;
//! `actuation_prob` is also empty for non-adaptive policies. Floats use the
//! shortest representation that parses back to the same value.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{ExperimentRecord, Metrics, Scenario, Trajectory};
use crate::mpc::PolicyKind;
use crate::{Error, Result};

pub const TRAJECTORY_HEADER: &str = "step,agent_id,opinion,active,control,actuation_prob";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputFiles {
    pub trajectory: PathBuf,
    pub summary: PathBuf,
}

#[derive(Serialize)]
struct Summary<'a> {
    scenario: &'a str,
    policy: PolicyKind,
    seed: u64,
    config: &'a Scenario,
    metrics: &'a Metrics,
}

fn stem(record: &ExperimentRecord) -> String {
    format!("{}_{}_{}", record.scenario, record.policy.slug(), record.seed)
}

fn trajectory_text(traj: &Trajectory) -> String {
    let mut out = String::with_capacity(traj.states.len() * traj.n_agents() * 48);
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    let last = traj.n_steps();
    for (t, row) in traj.states.iter().enumerate() {
        for (i, x) in row.iter().enumerate() {
            write!(out, "{t},{i},{x},").unwrap();
            if t < last {
                let active = u8::from(traj.indicators[t][i]);
                write!(out, "{active},{},", traj.controls[t][i]).unwrap();
                if let Some(p) = &traj.actuation_probs {
                    write!(out, "{}", p[t][i]).unwrap();
                }
            } else {
                out.push_str(",,");
            }
            out.push('\n');
        }
    }
    out
}

/// Write `{scenario}_{policy}_{seed}_traj.csv` and `..._summary.json` into
/// `output_dir`, creating it if needed.
pub fn write_outputs(record: &ExperimentRecord, metrics: &Metrics, output_dir: &Path) -> Result<OutputFiles> {
    assert!(record.trajectory.is_consistent(), "inconsistent trajectory dimensions");
    fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    let stem = stem(record);
    let files = OutputFiles {
        trajectory: output_dir.join(format!("{stem}_traj.csv")),
        summary: output_dir.join(format!("{stem}_summary.json")),
    };

    fs::write(&files.trajectory, trajectory_text(&record.trajectory))
        .map_err(|e| Error::io(&files.trajectory, e))?;

    let summary = Summary {
        scenario: &record.scenario,
        policy: record.policy,
        seed: record.seed,
        config: &record.config,
        metrics,
    };
    let file = fs::File::create(&files.summary).map_err(|e| Error::io(&files.summary, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &summary)
        .map_err(|e| Error::parse(&files.summary, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(&files.summary, e))?;
    Ok(files)
}

/// Parse a trajectory table written by [`write_outputs`].
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let bad = |line: usize, reason: String| Error::parse(path, format!("line {}: {reason}", line + 1));

    match lines.next() {
        Some((_, Ok(h))) if h == TRAJECTORY_HEADER => {}
        Some((_, Ok(h))) => return Err(bad(0, format!("unexpected header `{h}`"))),
        Some((_, Err(e))) => return Err(Error::io(path, e)),
        None => return Err(bad(0, "empty file".into())),
    }

    struct Row {
        step: usize,
        agent: usize,
        opinion: f64,
        transition: Option<(bool, f64, Option<f64>)>,
    }

    let mut rows = Vec::new();
    for (ln, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(bad(ln, format!("expected 6 columns, found {}", cols.len())));
        }
        let num = |k: usize, name: &str| -> Result<f64> {
            cols[k].parse().map_err(|_| bad(ln, format!("column `{name}`: cannot parse `{}`", cols[k])))
        };
        let int = |k: usize, name: &str| -> Result<usize> {
            cols[k].parse().map_err(|_| bad(ln, format!("column `{name}`: cannot parse `{}`", cols[k])))
        };
        let transition = match cols[3] {
            "" => None,
            "0" | "1" => {
                let prob = if cols[5].is_empty() { None } else { Some(num(5, "actuation_prob")?) };
                Some((cols[3] == "1", num(4, "control")?, prob))
            }
            other => return Err(bad(ln, format!("column `active`: expected 0 or 1, found `{other}`"))),
        };
        rows.push(Row { step: int(0, "step")?, agent: int(1, "agent_id")?, opinion: num(2, "opinion")?, transition });
    }

    let n = rows.iter().take_while(|r| r.step == 0).count();
    if n == 0 || rows.len() % n != 0 {
        return Err(Error::parse(path, "rows do not form a full step x agent grid"));
    }
    let steps = rows.len() / n;
    let adaptive = rows.first().and_then(|r| r.transition).is_some_and(|(_, _, p)| p.is_some());
    let mut traj = Trajectory {
        states: Vec::with_capacity(steps),
        controls: Vec::with_capacity(steps - 1),
        indicators: Vec::with_capacity(steps - 1),
        actuation_probs: adaptive.then(Vec::new),
    };
    for (t, chunk) in rows.chunks(n).enumerate() {
        let mut states = Vec::with_capacity(n);
        let mut controls = Vec::with_capacity(n);
        let mut indicators = Vec::with_capacity(n);
        let mut probs = Vec::with_capacity(n);
        for (i, row) in chunk.iter().enumerate() {
            let ln = 1 + t * n + i;
            if row.step != t || row.agent != i {
                return Err(bad(ln, format!("expected step {t} agent {i}")));
            }
            states.push(row.opinion);
            match (row.transition, t + 1 == steps) {
                (None, true) => {}
                (Some((a, u, p)), false) => {
                    if p.is_some() != adaptive {
                        return Err(bad(ln, "actuation_prob present on some rows only".into()));
                    }
                    indicators.push(a);
                    controls.push(u);
                    probs.extend(p);
                }
                (None, false) => return Err(bad(ln, "missing control columns".into())),
                (Some(_), true) => return Err(bad(ln, "final step must not carry controls".into())),
            }
        }
        traj.states.push(states);
        if t + 1 < steps {
            traj.controls.push(controls);
            traj.indicators.push(indicators);
            if let Some(history) = traj.actuation_probs.as_mut() {
                history.push(probs);
            }
        }
    }
    Ok(traj)
}
