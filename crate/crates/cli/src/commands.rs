//! One runner per subcommand: plan in, (result JSON, CSV table, summary) out.

use frog_core::estimation::{
    analytic_lower_bounds, concentration_experiment, deviation_tail_experiment, direct_path_event_check,
    estimate_time_constant, exact_radius, replica_env, replicate, subadditivity_audit, AnalyticBounds,
    DirectPathCheck, RunConfig, SubadditivityReport, TailSide, TimeConstantEstimate,
};
use frog_core::passage::{oracle_passage_time, passage_from, DEFAULT_ORACLE_CAP};
use frog_core::percolation::{chemical_ratio_experiment, hole_tail_experiment, white_marginal_curve};
use frog_core::truncated::agreement_experiment;
use frog_core::{BoxPolicy, Environment, FrogError, Point, SeedSpec};
use serde::Serialize;
use serde_json::Value;

use crate::plan::{Command, ExperimentPlan, PercolationMode};
use crate::report::{fmt_f64, fmt_opt, fmt_point, Table};
use crate::CliError;

pub struct Outcome {
    pub result: Value,
    pub table: Table,
    pub summary: String,
}

fn outcome<T: Serialize>(result: &T, table: Table, summary: String) -> Result<Outcome, CliError> {
    let result = serde_json::to_value(result).map_err(|e| CliError::Io(format!("serializing result: {e}")))?;
    Ok(Outcome { result, table, summary })
}

fn missing(name: &'static str) -> CliError {
    CliError::Plan(format!("invalid parameter `{name}`: required by this command"))
}

pub fn execute(plan: &ExperimentPlan, threads: Option<usize>) -> Result<Outcome, CliError> {
    let ctx = Ctx::new(plan, threads)?;
    match plan.command {
        Command::SampleEnv => sample_env(&ctx),
        Command::Passage => passage(&ctx),
        Command::Mu => mu(&ctx),
        Command::Tails => tails(&ctx),
        Command::Concentration => concentration(&ctx),
        Command::Truncation => truncation(&ctx),
        Command::Percolation => percolation(&ctx),
        Command::Audit => audit(&ctx),
    }
}

struct Ctx<'a> {
    plan: &'a ExperimentPlan,
    seed: SeedSpec,
    direction: Point,
    threads: Option<usize>,
}

impl<'a> Ctx<'a> {
    fn new(plan: &'a ExperimentPlan, threads: Option<usize>) -> Result<Self, CliError> {
        let direction = match &plan.direction {
            Some(v) => Point::try_new(v)?,
            None => Point::unit(plan.dim, 0),
        };
        Ok(Ctx { plan, seed: SeedSpec::new(plan.seed.master_seed, plan.seed.experiment_tag.clone()), direction, threads })
    }

    fn cfg(&self) -> RunConfig {
        RunConfig { horizon: self.plan.horizon.clone(), censoring_budget: self.plan.censoring_budget, threads: self.threads }
    }

    fn ladder_points(&self) -> Vec<Point> {
        self.plan.ladders.x.iter().map(|&m| m as i32 * self.direction).collect()
    }

    fn target(&self) -> Result<Point, CliError> {
        Ok(Point::try_new(self.plan.params.target.as_ref().ok_or_else(|| missing("target"))?)?)
    }

    /// μ̂ along the direction: the plan's value, or an estimate on the
    /// calibration replicas.
    fn mu_hat(&self) -> Result<(f64, Option<TimeConstantEstimate>), CliError> {
        if let Some(mu) = self.plan.params.mu_hat {
            return Ok((mu, None));
        }
        let range = self.plan.seed.calibration.ok_or_else(|| missing("mu_hat"))?;
        let est = estimate_time_constant(&self.plan.law, &self.direction, &self.plan.ladders.k, range, &self.seed, &self.cfg())?;
        Ok((est.mu_hat, Some(est)))
    }
}

fn sample_env(ctx: &Ctx) -> Result<Outcome, CliError> {
    let p = ctx.plan;
    let radius = p.params.box_radius.ok_or_else(|| missing("box_radius"))?;
    let env = replica_env(&p.law, p.dim, radius, &ctx.seed, p.seed.replicas.start, p.params.conditioned.unwrap_or(false))?;
    let mut table = Table::new(&["site", "count"]);
    let sites = env.occupied_sites();
    let mut frogs = 0u64;
    for x in &sites {
        let w = env.omega(x);
        frogs += w as u64;
        table.push(vec![fmt_point(x.coords()), w.to_string()]);
    }
    let summary = format!("sample-env: {} occupied sites, {frogs} frogs, box radius {radius}", sites.len());
    outcome(&env.to_document(), table, summary)
}

#[derive(Serialize)]
struct PassageRow {
    replica: u64,
    source: Point,
    target: Point,
    time: Option<u64>,
    censored: bool,
    relays: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<Option<u64>>,
}

#[derive(Serialize)]
struct PassageResult {
    target: Point,
    horizon: u64,
    box_radius: u64,
    policy: BoxPolicy,
    measure: &'static str,
    rows: Vec<PassageRow>,
    censored: u64,
    oracle_mismatches: u64,
    bound_violations: u64,
}

fn passage(ctx: &Ctx) -> Result<Outcome, CliError> {
    let p = ctx.plan;
    let x = ctx.target()?;
    if x.dim() != p.dim {
        return Err(FrogError::DimensionMismatch { expected: p.dim, found: x.dim() }.into());
    }
    let conditioned = p.params.conditioned.unwrap_or(true);
    let horizon = p.horizon.horizon(x.l1_norm());
    // an explicit box makes the box the whole world
    let (radius, policy) = match p.params.box_radius {
        Some(r) => (r, BoxPolicy::Truncated),
        None => (exact_radius(horizon, x.l1_norm()), BoxPolicy::Exact),
    };
    let oracle = p.params.oracle.unwrap_or(false);
    if oracle && policy == BoxPolicy::Exact {
        return Err(CliError::Plan("invalid parameter `oracle`: needs an explicit box_radius".into()));
    }
    let rows = replicate(p.seed.replicas, ctx.threads, |r| {
        let env = replica_env(&p.law, p.dim, radius, &ctx.seed, r, conditioned)?;
        let (s, t) = endpoints(&env, &x, conditioned)?;
        let out = passage_from(&env, &s, &t, horizon, policy)?;
        let oracle = if oracle {
            Some(oracle_passage_time(&env, &s, &t, horizon, DEFAULT_ORACLE_CAP)?.value.finite())
        } else {
            None
        };
        Ok(PassageRow {
            replica: r,
            source: s,
            target: t,
            time: out.value.finite(),
            censored: !out.value.is_finite(),
            relays: out.witness.map(|w| w.len()),
            oracle,
        })
    })?;
    let censored = rows.iter().filter(|r| r.censored).count() as u64;
    let oracle_mismatches = rows
        .iter()
        .filter(|r| matches!(r.oracle, Some(o) if o.is_some() && r.time.is_some() && o != r.time))
        .count() as u64;
    let bound_violations =
        rows.iter().filter(|r| matches!(r.time, Some(k) if k < r.source.l1_dist(&r.target))).count() as u64;
    let rate = censored as f64 / rows.len() as f64;
    if rate > p.censoring_budget {
        return Err(FrogError::CensoringBudget { label: format!("x = {x}"), rate, budget: p.censoring_budget, horizon }.into());
    }

    let mut header = vec!["replica", "source", "target", "time", "censored", "relays"];
    if oracle {
        header.push("oracle");
    }
    let mut table = Table::new(&header);
    for r in &rows {
        let mut row = vec![
            r.replica.to_string(),
            fmt_point(r.source.coords()),
            fmt_point(r.target.coords()),
            r.time.map(|k| k.to_string()).unwrap_or_default(),
            r.censored.to_string(),
            r.relays.map(|k| k.to_string()).unwrap_or_default(),
        ];
        if oracle {
            row.push(r.oracle.flatten().map(|k| k.to_string()).unwrap_or_default());
        }
        table.push(row);
    }
    let finite: Vec<u64> = rows.iter().filter_map(|r| r.time).collect();
    let mean = finite.iter().sum::<u64>() as f64 / finite.len().max(1) as f64;
    let summary = format!(
        "passage: {} replicas to {x}, mean {} over {} finite, {censored} censored at {horizon}{}",
        rows.len(),
        fmt_f64(mean),
        finite.len(),
        if oracle { format!(", {oracle_mismatches} oracle mismatches") } else { String::new() }
    );
    let result = PassageResult {
        target: x,
        horizon,
        box_radius: radius,
        policy,
        measure: if conditioned { "conditioned" } else { "unconditioned" },
        rows,
        censored,
        oracle_mismatches,
        bound_violations,
    };
    outcome(&result, table, summary)
}

/// (0, x) under the conditioned measure, (0*, x*) otherwise.
fn endpoints(env: &Environment, x: &Point, conditioned: bool) -> frog_core::Result<(Point, Point)> {
    let o = Point::origin(env.dim());
    if conditioned {
        Ok((o, *x))
    } else {
        Ok((env.star(&o, None)?, env.star(x, None)?))
    }
}

fn mu(ctx: &Ctx) -> Result<Outcome, CliError> {
    let p = ctx.plan;
    let est = estimate_time_constant(&p.law, &ctx.direction, &p.ladders.k, p.seed.replicas, &ctx.seed, &ctx.cfg())?;
    let mut table = Table::new(&["k", "horizon", "n", "censored", "mean", "std", "ci_lo", "ci_hi"]);
    for kp in &est.per_k {
        let s = &kp.stats;
        table.push(vec![
            kp.k.to_string(),
            kp.horizon.to_string(),
            s.n.to_string(),
            s.censored_count.to_string(),
            fmt_f64(s.mean),
            fmt_f64(s.std),
            fmt_f64(s.ci_lo),
            fmt_f64(s.ci_hi),
        ]);
    }
    let summary = format!(
        "mu: mu_hat({}) = {} from {} replicas, k ladder {:?}",
        ctx.direction,
        fmt_f64(est.mu_hat),
        p.seed.replicas.count,
        p.ladders.k
    );
    outcome(&est, table, summary)
}

#[derive(Serialize)]
struct TailsResult {
    calibration: Option<TimeConstantEstimate>,
    curve: frog_core::estimation::TailCurve,
    analytic: AnalyticBounds,
}

fn tails(ctx: &Ctx) -> Result<Outcome, CliError> {
    let p = ctx.plan;
    let (mu_hat, calibration) = ctx.mu_hat()?;
    let eps = p.params.epsilon.ok_or_else(|| missing("epsilon"))?;
    let side = p.params.side.unwrap_or(TailSide::Upper);
    let curve =
        deviation_tail_experiment(&p.law, eps, side, &ctx.ladder_points(), p.seed.replicas, mu_hat, &ctx.seed, ctx.threads)?;
    let analytic = analytic_lower_bounds(&p.law, eps, mu_hat, p.dim)?;
    let mut table = Table::new(&["norm", "threshold", "replicas", "hits", "phat", "ci_lo", "ci_hi"]);
    for pt in &curve.points {
        table.push(vec![
            pt.norm.to_string(),
            fmt_f64(pt.threshold),
            pt.replicas.to_string(),
            pt.hits.to_string(),
            fmt_f64(pt.phat),
            fmt_f64(pt.ci_lo),
            fmt_f64(pt.ci_hi),
        ]);
    }
    let summary = format!(
        "tails: {:?} eps {} mu_hat {}, log slope {}, best alpha {}",
        side,
        fmt_f64(eps),
        fmt_f64(mu_hat),
        curve.fitted_log_slope.map(fmt_f64).unwrap_or_else(|| "n/a".into()),
        curve.fitted_exponent_alpha.map(fmt_f64).unwrap_or_else(|| "n/a".into()),
    )
    .to_lowercase();
    outcome(&TailsResult { calibration, curve, analytic }, table, summary)
}

fn concentration(ctx: &Ctx) -> Result<Outcome, CliError> {
    let p = ctx.plan;
    let bootstrap = p.params.bootstrap.ok_or_else(|| missing("bootstrap"))?;
    let rep = concentration_experiment(&p.law, &ctx.ladder_points(), p.seed.replicas, &ctx.seed, &ctx.cfg(), bootstrap)?;
    let mut table =
        Table::new(&["norm", "horizon", "n", "censored", "mean", "std", "std_ci_lo", "std_ci_hi", "ratio"]);
    for r in &rep.rows {
        table.push(vec![
            r.norm.to_string(),
            r.horizon.to_string(),
            r.n.to_string(),
            r.censored.to_string(),
            fmt_f64(r.mean),
            fmt_f64(r.std),
            fmt_f64(r.std_ci_lo),
            fmt_f64(r.std_ci_hi),
            fmt_f64(r.ratio),
        ]);
    }
    let summary = format!(
        "concentration: {} norms, fitted slope of log std vs log norm {}",
        rep.rows.len(),
        rep.fitted_slope.map(fmt_f64).unwrap_or_else(|| "n/a".into())
    );
    outcome(&rep, table, summary)
}

#[derive(Serialize)]
struct TruncationResult {
    calibration: Option<TimeConstantEstimate>,
    mu_hat: f64,
    report: frog_core::truncated::AgreementReport,
}

fn truncation(ctx: &Ctx) -> Result<Outcome, CliError> {
    let p = ctx.plan;
    let x = ctx.target()?;
    let (mu_hat, calibration) = match p.params.c4_hat {
        Some(_) => (p.params.mu_hat.unwrap_or(f64::NAN), None),
        None => ctx.mu_hat()?,
    };
    // the linear-tail constant is unknown; a multiple of μ̂ stands in for it
    let c4_hat = p.params.c4_hat.unwrap_or(5.0 * mu_hat);
    let gamma = p.params.gamma.ok_or_else(|| missing("gamma"))?;
    let horizon = p.horizon.horizon(x.l1_norm());
    let report =
        agreement_experiment(&p.law, &x, &p.ladders.t, p.seed.replicas, horizon, c4_hat, gamma, &ctx.seed, ctx.threads)?;
    let mut table = Table::new(&["t", "replicas", "disagreements", "phat", "ci_lo", "ci_hi"]);
    for r in &report.rows {
        table.push(vec![
            r.t.to_string(),
            r.replicas.to_string(),
            r.disagreements.to_string(),
            fmt_f64(r.phat),
            fmt_f64(r.ci_lo),
            fmt_f64(r.ci_hi),
        ]);
    }
    let summary = format!(
        "truncation: x = {x}, c4_hat {}, disagreements {:?}",
        fmt_f64(c4_hat),
        report.rows.iter().map(|r| r.disagreements).collect::<Vec<_>>()
    );
    outcome(&TruncationResult { calibration, mu_hat, report }, table, summary)
}

fn percolation(ctx: &Ctx) -> Result<Outcome, CliError> {
    let p = ctx.plan;
    let mode = p.params.mode.ok_or_else(|| missing("mode"))?;
    let bernoulli = || -> Result<(f64, u64), CliError> {
        Ok((p.params.p.ok_or_else(|| missing("p"))?, p.params.box_radius.ok_or_else(|| missing("box_radius"))?))
    };
    match mode {
        PercolationMode::Hole => {
            let (prob, radius) = bernoulli()?;
            let rep = hole_tail_experiment(prob, p.dim, radius, p.seed.replicas, &ctx.seed, ctx.threads)?;
            let mut table = Table::new(&["t", "hits", "phat", "ci_lo", "ci_hi"]);
            for r in &rep.rows {
                table.push(vec![r.t.to_string(), r.hits.to_string(), fmt_f64(r.phat), fmt_f64(r.ci_lo), fmt_f64(r.ci_hi)]);
            }
            let summary = format!(
                "percolation hole: p {}, largest hole {}, log slope {}",
                fmt_f64(prob),
                rep.rows.last().map(|r| r.t).unwrap_or(0),
                fmt_opt(rep.fitted_log_slope)
            );
            outcome(&rep, table, summary)
        }
        PercolationMode::Chemical => {
            let (prob, radius) = bernoulli()?;
            let per_norm = p.params.per_norm.ok_or_else(|| missing("per_norm"))?;
            let rep = chemical_ratio_experiment(
                prob,
                p.dim,
                radius,
                &p.ladders.x,
                per_norm,
                p.seed.replicas,
                &ctx.seed,
                ctx.threads,
            )?;
            let mut table = Table::new(&["norm", "pairs", "connected", "mean_ratio", "max_ratio"]);
            for r in &rep.rows {
                table.push(vec![
                    r.norm.to_string(),
                    r.pairs.to_string(),
                    r.connected.to_string(),
                    fmt_f64(r.mean_ratio),
                    fmt_f64(r.max_ratio),
                ]);
            }
            let summary = format!("percolation chemical: p {}, max ratio {}", fmt_f64(prob), fmt_f64(rep.max_ratio));
            outcome(&rep, table, summary)
        }
        PercolationMode::White => {
            let curve = white_marginal_curve(&p.law, p.dim, &p.ladders.n, p.seed.replicas, &ctx.seed, ctx.threads)?;
            let mut table = Table::new(&["n", "replicas", "ones", "phat", "ci_lo", "ci_hi"]);
            for r in &curve.rows {
                table.push(vec![
                    r.n.to_string(),
                    r.replicas.to_string(),
                    r.ones.to_string(),
                    fmt_f64(r.phat),
                    fmt_f64(r.ci_lo),
                    fmt_f64(r.ci_hi),
                ]);
            }
            let summary = format!(
                "percolation white: P(white) {:?}",
                curve.rows.iter().map(|r| fmt_f64(r.phat)).collect::<Vec<_>>()
            );
            outcome(&curve, table, summary)
        }
    }
}

#[derive(Serialize)]
struct AuditResult {
    horizon: u64,
    subadditivity: SubadditivityReport,
    direct_path: DirectPathCheck,
    direct_path_within_3_sigma: bool,
    lower_tail_rate_lb: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    analytic: Option<AnalyticBounds>,
}

fn audit(ctx: &Ctx) -> Result<Outcome, CliError> {
    let p = ctx.plan;
    let spread = p.params.spread.ok_or_else(|| missing("spread"))?;
    let horizon = p.horizon.horizon(2 * p.dim as u64 * spread);
    let sub = subadditivity_audit(&p.law, p.dim, spread, p.seed.replicas, horizon, &ctx.seed, ctx.threads)?;
    let n = p.params.direct_path_n.ok_or_else(|| missing("direct_path_n"))?;
    let trials = p.params.direct_path_trials.ok_or_else(|| missing("direct_path_trials"))?;
    let direct = direct_path_event_check(p.dim, n, trials, &SeedSpec::new(p.seed.master_seed, format!("{}/direct", p.seed.experiment_tag)))?;
    let eps = p.params.epsilon.unwrap_or(0.5);
    // the lower-tail rate does not involve μ̂
    let lower_tail_rate_lb = analytic_lower_bounds(&p.law, eps, 1.0, p.dim)?.lower_tail_rate_lb;
    let analytic = p.params.mu_hat.map(|mu| analytic_lower_bounds(&p.law, eps, mu, p.dim)).transpose()?;

    let mut table = Table::new(&["check", "n", "count", "estimate", "target"]);
    table.push(vec!["subadditivity".into(), sub.checked.to_string(), sub.violations.to_string(), String::new(), "0".into()]);
    table.push(vec![
        "subadditivity_star".into(),
        sub.checked_star.to_string(),
        sub.violations_star.to_string(),
        String::new(),
        "0".into(),
    ]);
    table.push(vec!["lower_bound".into(), sub.triples.to_string(), sub.bound_violations.to_string(), String::new(), "0".into()]);
    table.push(vec![
        "direct_path".into(),
        direct.trials.to_string(),
        direct.hits.to_string(),
        fmt_f64(direct.stats.mean),
        fmt_f64(direct.target),
    ]);
    table.push(vec!["lower_tail_rate_lb".into(), String::new(), String::new(), fmt_f64(lower_tail_rate_lb), String::new()]);
    let summary = format!(
        "audit: {} + {} triangle violations over {} triples, direct path {} vs {}, lower tail rate {}",
        sub.violations,
        sub.violations_star,
        sub.triples,
        fmt_f64(direct.stats.mean),
        fmt_f64(direct.target),
        fmt_f64(lower_tail_rate_lb)
    );
    let result = AuditResult {
        horizon,
        direct_path_within_3_sigma: direct.within_sigmas(3.0),
        subadditivity: sub,
        direct_path: direct,
        lower_tail_rate_lb,
        analytic,
    };
    outcome(&result, table, summary)
}
