//! `opinion-steer` command line.
//!
//! ```text
//! opinion-steer --scenario steering --policy adaptive,feedback --seeds 0..5 \
//!     --out results --set model.alpha=0.8 --jobs 4
//! ```
//!
//! Exit codes: 0 on success, 2 on usage or validation errors (nothing is
//! written), 1 on runtime failures.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;
use rayon::prelude::*;

use crate::experiments::{build_scenario, compute_metrics, write_outputs, Metrics, Scenario};
use crate::mpc::{run_controller, PolicyKind};
use crate::Result;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "opinion-steer", version, about = "Steer opinion-dynamics populations with sampling-based MPC")]
pub struct RunRequest {
    /// Scenario name (steering, polarized) or path to a TOML scenario file.
    #[arg(long)]
    pub scenario: String,

    /// Comma-separated policies: open-loop, feedback, adaptive, baseline, uncontrolled.
    #[arg(long, required = true, value_delimiter = ',', value_parser = parse_policy)]
    pub policy: Vec<PolicyKind>,

    /// Seeds as a comma-separated list and/or half-open ranges, e.g. `0,3,10..15`.
    #[arg(long, default_value = "0", value_parser = parse_seeds)]
    pub seeds: SeedList,

    /// Output directory.
    #[arg(long, env = "OPINION_STEER_OUT", default_value = "results")]
    pub out: PathBuf,

    /// Override a scenario field by dotted path, e.g. `model.alpha=0.8`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: Option<u16>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedList(pub Vec<u64>);

fn parse_policy(s: &str) -> std::result::Result<PolicyKind, String> {
    s.parse()
}

fn parse_seeds(s: &str) -> std::result::Result<SeedList, String> {
    let mut seeds = Vec::new();
    for part in s.split(',').map(str::trim) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.parse().map_err(|_| format!("bad seed range `{part}`"))?;
            let b: u64 = b.parse().map_err(|_| format!("bad seed range `{part}`"))?;
            if a >= b {
                return Err(format!("empty seed range `{part}`"));
            }
            seeds.extend(a..b);
        } else {
            seeds.push(part.parse().map_err(|_| format!("bad seed `{part}`"))?);
        }
    }
    if seeds.is_empty() {
        return Err("at least one seed is required".into());
    }
    Ok(SeedList(seeds))
}

fn run_one(scenario: &Scenario, policy: PolicyKind, seed: u64, out: &std::path::Path) -> Result<Metrics> {
    let record = run_controller(scenario, policy, seed)?;
    let metrics = compute_metrics(&record, scenario.threshold);
    write_outputs(&record, &metrics, out)?;
    Ok(metrics)
}

fn summary_line(scenario: &Scenario, policy: PolicyKind, seed: u64, m: &Metrics) -> String {
    let ttt = m.time_to_threshold.map_or("none".to_owned(), |t| t.to_string());
    format!(
        "{} {} seed={} final_mean={:.4} terminal_distance={:.4} time_to_threshold={} control_effort={:.3}",
        scenario.name,
        policy.slug(),
        seed,
        m.mean.last().copied().unwrap_or(f64::NAN),
        m.terminal_distance,
        ttt,
        m.control_effort,
    )
}

/// Parse `argv` (including the program name), run every `(policy, seed)`
/// combination, and return the process exit code.
pub fn parse_and_run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let request = match RunRequest::try_parse_from(argv) {
        Ok(r) => r,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };

    let scenario = match build_scenario(&request.scenario, &request.overrides) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = request.jobs {
        pool = pool.num_threads(usize::from(jobs));
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_FAILURE;
        }
    };

    let runs: Vec<(PolicyKind, u64)> = request
        .policy
        .iter()
        .flat_map(|&p| request.seeds.0.iter().map(move |&s| (p, s)))
        .collect();
    let results: Vec<Result<Metrics>> = pool.install(|| {
        runs.par_iter()
            .map(|&(policy, seed)| run_one(&scenario, policy, seed, &request.out))
            .collect()
    });

    let mut code = EXIT_OK;
    for ((policy, seed), result) in runs.iter().zip(results) {
        match result {
            Ok(m) => println!("{}", summary_line(&scenario, *policy, *seed, &m)),
            Err(e) => {
                eprintln!("error: {} {} seed={seed}: {e}", scenario.name, policy.slug());
                code = EXIT_FAILURE;
            }
        }
    }
    code
}
