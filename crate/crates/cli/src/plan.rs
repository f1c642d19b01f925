//! Experiment plans: the complete, replayable description of one run.
//!
//! A plan comes from a JSON file, from flags, or from both (flags win). The
//! resolved plan is embedded in every report, and `replay` accepts either a
//! plan or a report.

use std::path::Path;

use frog_core::estimation::{HorizonPolicy, ReplicaRange, TailSide, DEFAULT_BOOTSTRAP, DEFAULT_CENSORING_BUDGET};
use frog_core::truncated::DEFAULT_GAMMA;
use frog_core::ConfigLaw;
use serde::{Deserialize, Serialize};

use crate::args::PlanArgs;
use crate::CliError;

pub const PLAN_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SampleEnv,
    Passage,
    Mu,
    Tails,
    Concentration,
    Truncation,
    Percolation,
    Audit,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SampleEnv => "sample-env",
            Command::Passage => "passage",
            Command::Mu => "mu",
            Command::Tails => "tails",
            Command::Concentration => "concentration",
            Command::Truncation => "truncation",
            Command::Percolation => "percolation",
            Command::Audit => "audit",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PercolationMode {
    Hole,
    Chemical,
    White,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedPlan {
    pub master_seed: u64,
    pub experiment_tag: String,
    /// Replicas of the measured run.
    pub replicas: ReplicaRange,
    /// Replicas reserved for estimating μ̂; disjoint from `replicas`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<ReplicaRange>,
}

/// Ladders; `x` holds multiples of the direction vector.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ladders {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub k: Vec<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub x: Vec<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub t: Vec<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n: Vec<u64>,
}

/// Command-specific parameters; unset ones take the command defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<i32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_radius: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditioned: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<TailSide>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c4_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<PercolationMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_norm: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spread: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct_path_n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct_path_trials: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub json: String,
    pub csv: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub version: u32,
    pub command: Command,
    pub law: ConfigLaw,
    pub dim: usize,
    pub seed: SeedPlan,
    #[serde(default)]
    pub ladders: Ladders,
    /// Unit of the x and k ladders; ξ1 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<i32>>,
    pub horizon: HorizonPolicy,
    pub censoring_budget: f64,
    #[serde(default)]
    pub params: Params,
    pub outputs: Outputs,
}

/// Partially specified plan as read from a file, before defaults.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    version: Option<u32>,
    command: Option<Command>,
    law: Option<ConfigLaw>,
    dim: Option<usize>,
    seed: Option<SeedFile>,
    #[serde(default)]
    ladders: Ladders,
    direction: Option<Vec<i32>>,
    horizon: Option<HorizonPolicy>,
    censoring_budget: Option<f64>,
    #[serde(default)]
    params: Params,
    outputs: Option<OutputsFile>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeedFile {
    master_seed: Option<u64>,
    experiment_tag: Option<String>,
    replicas: Option<ReplicaRange>,
    calibration: Option<ReplicaRange>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputsFile {
    json: Option<String>,
    csv: Option<String>,
}

fn plan_error(name: &str, reason: impl Into<String>) -> CliError {
    CliError::Plan(format!("invalid parameter `{name}`: {}", reason.into()))
}

/// Reads a plan, or the plan embedded in a report.
pub fn load_plan(path: &Path) -> Result<ExperimentPlan, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Plan(format!("{}: {e}", path.display())))?;
    let value = match value.get("plan") {
        Some(plan) => plan.clone(),
        None => value,
    };
    let plan: ExperimentPlan =
        serde_json::from_value(value).map_err(|e| CliError::Plan(format!("{}: {e}", path.display())))?;
    plan.validated()
}

/// Resolves file, flags and defaults into a full plan; flags win over the file.
pub fn resolve(command: Command, args: &PlanArgs) -> Result<ExperimentPlan, CliError> {
    let file: PlanFile = match &args.plan {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Plan(format!("{}: {e}", path.display())))?
        }
        None => PlanFile::default(),
    };
    if let Some(v) = file.version {
        if v != PLAN_VERSION {
            return Err(plan_error("version", format!("plan version {v} is not supported (expected {PLAN_VERSION})")));
        }
    }
    if let Some(c) = file.command {
        if c != command {
            return Err(plan_error("command", format!("plan is for `{}`, not `{}`", c.name(), command.name())));
        }
    }
    let seed_file = file.seed.unwrap_or_default();
    let master_seed = args.seed.or(seed_file.master_seed).ok_or_else(|| {
        plan_error("seed", "a master seed is required (--seed or seed.master_seed in the plan)")
    })?;
    let experiment_tag = args.tag.clone().or(seed_file.experiment_tag).unwrap_or_else(|| command.name().to_string());
    let law = match &args.law {
        Some(s) => ConfigLaw::parse(s).map_err(|e| CliError::Plan(e.to_string()))?,
        None => file.law.unwrap_or_else(|| default_law(command)),
    };
    let default_count = default_replicas(command);
    let replicas = match (args.replicas, args.replica_start, seed_file.replicas) {
        (count, start, Some(r)) => ReplicaRange::new(start.unwrap_or(r.start), count.unwrap_or(r.count)),
        (count, start, None) => ReplicaRange::new(start.unwrap_or(0), count.unwrap_or(default_count)),
    };
    let calibration = match (args.calibration, seed_file.calibration) {
        (Some(count), _) => Some(replicas.next(count)),
        (None, c) => c,
    };

    let mut ladders = file.ladders;
    overlay(&mut ladders.k, &args.k);
    overlay(&mut ladders.x, &args.x);
    overlay(&mut ladders.t, &args.t);
    overlay(&mut ladders.n, &args.n);

    let mut horizon = file.horizon.unwrap_or_default();
    if let Some(h) = args.horizon {
        horizon = HorizonPolicy::Fixed { horizon: h };
    }
    if args.horizon_factor.is_some() || args.mu_guess.is_some() {
        let (factor, mu, floor) = match horizon {
            HorizonPolicy::Scaled { factor, mu, floor } => (factor, mu, floor),
            HorizonPolicy::Fixed { .. } => (3.0, 2.0, 16),
        };
        horizon = HorizonPolicy::Scaled {
            factor: args.horizon_factor.unwrap_or(factor),
            mu: args.mu_guess.unwrap_or(mu),
            floor,
        };
    }

    let mut params = file.params;
    let a = &args.params;
    macro_rules! take {
        ($($f:ident),*) => { $( if a.$f.is_some() { params.$f = a.$f.clone(); } )* };
    }
    take!(target, box_radius, oracle, epsilon, side, mu_hat, c4_hat, gamma, p, mode, per_norm, bootstrap, spread, direct_path_n, direct_path_trials);
    if a.conditioned {
        params.conditioned = Some(true);
    }
    fill_default_params(command, &mut params);
    fill_default_ladders(command, params.mode, &mut ladders);
    // μ̂ comes either from the plan or from a disjoint calibration range
    let calibration = match calibration {
        None if needs_mu_hat(command) && params.mu_hat.is_none() => Some(replicas.next(DEFAULT_CALIBRATION)),
        c => c,
    };

    let outputs_file = file.outputs.unwrap_or_default();
    let base = format!("frog-{}", command.name());
    let outputs = Outputs {
        json: args.json.clone().or(outputs_file.json).unwrap_or_else(|| format!("{base}.json")),
        csv: args.csv.clone().or(outputs_file.csv).unwrap_or_else(|| format!("{base}.csv")),
    };

    ExperimentPlan {
        version: PLAN_VERSION,
        command,
        law,
        dim: args.dim.or(file.dim).unwrap_or(2),
        seed: SeedPlan { master_seed, experiment_tag, replicas, calibration },
        ladders,
        direction: args.direction.clone().or(file.direction),
        horizon,
        censoring_budget: args.censoring_budget.or(file.censoring_budget).unwrap_or(DEFAULT_CENSORING_BUDGET),
        params,
        outputs,
    }
    .validated()
}

fn overlay(dst: &mut Vec<u64>, src: &Option<Vec<u64>>) {
    if let Some(v) = src {
        *dst = v.clone();
    }
}

fn default_law(command: Command) -> ConfigLaw {
    match command {
        Command::Concentration => ConfigLaw::Constant { k: 1 },
        Command::Audit | Command::Passage => ConfigLaw::Bernoulli { p: 0.8 },
        Command::Percolation => ConfigLaw::ExplicitPmf { table: vec![0.0, 0.0, 0.5, 0.5] },
        _ => ConfigLaw::Poisson { lambda: 1.0 },
    }
}

fn default_replicas(command: Command) -> u64 {
    match command {
        Command::SampleEnv => 1,
        Command::Passage => 20,
        Command::Concentration => 500,
        Command::Truncation => 300,
        Command::Audit => 500,
        Command::Tails => 2000,
        _ => 200,
    }
}

const DEFAULT_CALIBRATION: u64 = 200;

pub fn needs_mu_hat(command: Command) -> bool {
    matches!(command, Command::Tails | Command::Truncation)
}

fn fill_default_ladders(command: Command, mode: Option<PercolationMode>, l: &mut Ladders) {
    let set = |v: &mut Vec<u64>, d: &[u64]| {
        if v.is_empty() {
            *v = d.to_vec();
        }
    };
    match command {
        Command::Mu | Command::Tails | Command::Truncation => set(&mut l.k, &[4, 8, 16, 32]),
        _ => {}
    }
    match command {
        Command::Tails => set(&mut l.x, &[2, 4, 6, 8, 12, 16]),
        Command::Concentration => set(&mut l.x, &[10, 20, 30, 40, 50, 60]),
        Command::Truncation => set(&mut l.t, &[1, 2, 4, 8, 16]),
        Command::Percolation => match mode {
            Some(PercolationMode::Chemical) => set(&mut l.x, &[20, 30, 40, 50, 60]),
            Some(PercolationMode::White) => set(&mut l.n, &[4, 8, 12]),
            _ => {}
        },
        _ => {}
    }
}

fn fill_default_params(command: Command, p: &mut Params) {
    match command {
        Command::SampleEnv => {
            p.box_radius.get_or_insert(10);
            p.conditioned.get_or_insert(false);
        }
        Command::Passage => {
            p.target.get_or_insert_with(|| vec![4, 0]);
            p.conditioned.get_or_insert(true);
            p.oracle.get_or_insert(false);
        }
        Command::Tails => {
            p.epsilon.get_or_insert(0.5);
            p.side.get_or_insert(TailSide::Upper);
        }
        Command::Concentration => {
            p.bootstrap.get_or_insert(DEFAULT_BOOTSTRAP);
        }
        Command::Truncation => {
            p.target.get_or_insert_with(|| vec![8, 0]);
            p.gamma.get_or_insert(DEFAULT_GAMMA);
        }
        Command::Percolation => {
            let mode = *p.mode.get_or_insert(PercolationMode::Hole);
            match mode {
                PercolationMode::Hole | PercolationMode::Chemical => {
                    p.p.get_or_insert(0.8);
                    p.box_radius.get_or_insert(100);
                }
                PercolationMode::White => {}
            }
            if mode == PercolationMode::Chemical {
                p.per_norm.get_or_insert(8);
            }
        }
        Command::Audit => {
            p.spread.get_or_insert(6);
            p.direct_path_n.get_or_insert(3);
            p.direct_path_trials.get_or_insert(100_000);
        }
        Command::Mu => {}
    }
}

impl ExperimentPlan {
    /// Structural checks; semantic checks happen in the library calls.
    pub fn validated(self) -> Result<Self, CliError> {
        if self.version != PLAN_VERSION {
            return Err(plan_error("version", format!("plan version {} is not supported", self.version)));
        }
        if self.dim == 0 || self.dim > frog_core::lattice::MAX_DIM {
            return Err(plan_error("dim", format!("{} is outside 1..={}", self.dim, frog_core::lattice::MAX_DIM)));
        }
        self.law.clone().validated().map_err(|e| CliError::Plan(e.to_string()))?;
        if self.seed.replicas.count == 0 {
            return Err(plan_error("replicas", "at least one replica is needed"));
        }
        if let Some(c) = &self.seed.calibration {
            if !c.is_disjoint(&self.seed.replicas) {
                return Err(plan_error("calibration", "calibration replicas must not overlap the measured replicas"));
            }
        }
        if !(0.0..=1.0).contains(&self.censoring_budget) {
            return Err(plan_error("censoring_budget", format!("{} is not in [0, 1]", self.censoring_budget)));
        }
        for (name, v) in [("direction", &self.direction), ("target", &self.params.target)] {
            if let Some(v) = v {
                if v.len() != self.dim {
                    return Err(plan_error(name, format!("{v:?} has {} coordinates, dim is {}", v.len(), self.dim)));
                }
                if v.iter().all(|&c| c == 0) && name == "direction" {
                    return Err(plan_error(name, "must be nonzero"));
                }
            }
        }
        if self.command == Command::Tails {
            // the library admits ε = 0 for path-wise checks; experiments need ε > 0
            let eps = self.params.epsilon.unwrap_or(0.0);
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(plan_error("epsilon", format!("{eps} must be positive")));
            }
        }
        if let Some(mu) = self.params.mu_hat {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(plan_error("mu_hat", format!("{mu} must be positive")));
            }
        }
        if self.outputs.json == self.outputs.csv {
            return Err(plan_error("outputs", "json and csv outputs must be different files"));
        }
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plans always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::args::{Cli, CommandArgs};
    use clap::Parser;

    fn resolved(argv: &[&str]) -> Result<ExperimentPlan, CliError> {
        let cli = Cli::try_parse_from(std::iter::once("frog").chain(argv.iter().copied())).unwrap();
        let (command, args) = match cli.command {
            CommandArgs::Mu(a) => (Command::Mu, a),
            CommandArgs::Tails(a) => (Command::Tails, a),
            CommandArgs::Percolation(a) => (Command::Percolation, a),
            other => panic!("unexpected {other:?}"),
        };
        resolve(command, &args.plan)
    }

    #[test]
    fn defaults_are_written_into_the_plan() {
        let p = resolved(&["mu", "--seed", "4"]).unwrap();
        assert_eq!(p.ladders.k, vec![4, 8, 16, 32]);
        assert_eq!(p.law, ConfigLaw::Poisson { lambda: 1.0 });
        assert_eq!(p.seed.experiment_tag, "mu");
        assert_eq!(p.outputs, Outputs { json: "frog-mu.json".into(), csv: "frog-mu.csv".into() });
        assert_eq!(p.seed.calibration, None);
    }

    #[test]
    fn tails_without_mu_hat_reserve_a_disjoint_calibration_range() {
        let p = resolved(&["tails", "--seed", "4", "--replicas", "300"]).unwrap();
        let cal = p.seed.calibration.unwrap();
        assert!(cal.is_disjoint(&p.seed.replicas));
        assert_eq!(cal.start, 300);
        let p = resolved(&["tails", "--seed", "4", "--mu-hat", "2.5"]).unwrap();
        assert_eq!(p.seed.calibration, None);
    }

    #[test]
    fn overlapping_calibration_is_rejected() {
        let mut p = resolved(&["mu", "--seed", "4", "--replicas", "10"]).unwrap();
        p.seed.calibration = Some(ReplicaRange::new(5, 10));
        assert!(matches!(p.validated(), Err(CliError::Plan(m)) if m.contains("`calibration`")));
    }

    #[test]
    fn flags_beat_the_plan_file() {
        let dir = std::env::temp_dir().join(format!("frog-plan-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("p.json");
        std::fs::write(&path, r#"{"seed": {"master_seed": 9}, "ladders": {"k": [2, 3]}, "dim": 3}"#).unwrap();
        let p = resolved(&["mu", "--plan", path.to_str().unwrap(), "--k", "5,6"]).unwrap();
        assert_eq!(p.seed.master_seed, 9);
        assert_eq!(p.ladders.k, vec![5, 6]);
        assert_eq!(p.dim, 3);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn plans_round_trip_through_json() {
        let p = resolved(&["percolation", "--seed", "1", "--mode", "chemical", "--p", "0.7"]).unwrap();
        assert_eq!(p.ladders.x, vec![20, 30, 40, 50, 60]);
        let back: ExperimentPlan = serde_json::from_str(&p.to_json()).unwrap();
        assert_eq!(back, p);
    }
}
