//! End-to-end drivers: guess `U`, pick branches, round, finalize, keep the best.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::check::{CheckTally, InvariantLog};
use crate::error::{Error, Result};
use crate::finalize::{assemble_original, pseudo_solution, to_integral};
use crate::io::InstanceBundle;
use crate::iterround::{
    build_strong_lp, check_state, check_split, default_tau, discretize, init_iter_state, iterate, offset_grid, sample_offset,
    split_facilities, IterBudget, IterState, Strengthening, TraceEntry,
};
use crate::lp::{count_fractional, solve_vertex};
use crate::model::{nearest_vector_pair, solution_cost, Budget, ClusteringInstance, Solution};
use crate::oracle::{brute_force, Constraint, OracleResult};
use crate::preprocess::{
    check_r_hat_sparsity, check_radius_sparsity, check_reconnect_bound, check_sparse, construct_r, enumerate_sparse_instances_where,
    sparsify_with_oracle, u_grid, EnumerationCaps, GuessBranch, RadiusBounds, SparsityParams,
};
use crate::rational::Rational;
use crate::variants::{knapsack_median, matroid_median, sparsify_knapsack, KnapsackConstraint};

/// `τ` and the offsets to try on every branch.
#[derive(Debug, Clone)]
pub struct RoundingConfig {
    pub tau: Rational,
    pub offsets: Vec<Rational>,
}

impl RoundingConfig {
    pub fn single(tau: Rational, a: Rational) -> Self {
        RoundingConfig { tau, offsets: vec![a] }
    }

    pub fn grid(tau: Rational, n: usize) -> Self {
        let offsets = offset_grid(n.max(1), &tau);
        RoundingConfig { tau, offsets }
    }

    pub fn seeded(tau: Rational, seed: u64) -> Self {
        let a = sample_offset(seed, &tau);
        RoundingConfig { tau, offsets: vec![a] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Finish {
    /// Convert to an integral solution within the budget.
    Integral,
    /// Round every fractional copy up.
    Pseudo,
}

/// One offset's run on one branch.
#[derive(Debug, Clone)]
pub struct Attempt {
    pub offset: Rational,
    /// Solution on the branch instance.
    pub solution: Solution,
    pub strong_value: Rational,
    pub fractional: usize,
    pub iterations: usize,
    pub trace: Vec<TraceEntry>,
    pub state: IterState,
}

fn iter_budget(inst: &ClusteringInstance, budget: &Budget) -> IterBudget {
    match budget {
        Budget::Cardinality(k) => IterBudget::Cardinality { k: *k, m: inst.m() },
        Budget::Partition(pm) => IterBudget::Partition(pm.clone()),
        Budget::Knapsack(kn) => IterBudget::Knapsack(kn.clone()),
    }
}

/// Strong LP, splitting, then for every offset discretization, the rounding
/// loop and finalization.
pub fn round_branch(
    inst: &ClusteringInstance,
    budget: &Budget,
    strength: &Strengthening,
    cfg: &RoundingConfig,
    finish: Finish,
    log: &mut InvariantLog,
) -> Result<Vec<Attempt>> {
    let strong = build_strong_lp(inst, budget, strength);
    let vertex = solve_vertex(&strong.lp)?;
    let frac = strong.extract(&vertex);
    let split = split_facilities(inst, &frac);
    check_split(inst, &split, &frac, budget, &strong, log)?;
    let mut attempts = Vec::with_capacity(cfg.offsets.len());
    for a in &cfg.offsets {
        let disc = discretize(inst, &cfg.tau, a);
        let mut state = init_iter_state(inst, &split, &disc, iter_budget(inst, budget), &strong.pre_opened, strength.radius());
        let outcome = iterate(&mut state, log)?;
        let solution = match finish {
            Finish::Integral => to_integral(&state, inst, log)?.0,
            Finish::Pseudo => pseudo_solution(&state, inst)?,
        };
        attempts.push(Attempt {
            offset: a.clone(),
            solution,
            strong_value: frac.objective.clone(),
            fractional: count_fractional(&state.y).0,
            iterations: outcome.iterations,
            trace: outcome.trace,
            state,
        });
    }
    Ok(attempts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    RkMed,
    RkMeans,
    MatMed,
    KnapMed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Full,
    Pseudo,
    OracleGuided,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: Problem,
    pub mode: Mode,
    pub epsilon: Rational,
    pub rho: Rational,
    pub delta: Rational,
    pub tau: Option<Rational>,
    pub seed: u64,
    pub offsets: Option<usize>,
    pub caps: EnumerationCaps,
    pub oracle_cap: usize,
    pub trace: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: Problem::RkMed,
            mode: Mode::OracleGuided,
            epsilon: Rational::new(1, 2),
            rho: Rational::new(1, 10),
            delta: Rational::new(1, 4),
            tau: None,
            seed: 0,
            offsets: None,
            caps: EnumerationCaps::default(),
            oracle_cap: crate::oracle::DEFAULT_CAP,
            trace: false,
        }
    }
}

impl RunConfig {
    fn exponent(&self) -> u32 {
        if self.problem == Problem::RkMeans {
            2
        } else {
            1
        }
    }

    fn rounding(&self) -> RoundingConfig {
        let tau = self.tau.clone().unwrap_or_else(|| default_tau(self.exponent()));
        match self.offsets {
            Some(n) => RoundingConfig::grid(tau, n),
            None => RoundingConfig::seeded(tau, self.seed),
        }
    }

    fn params(&self, u: Rational) -> Result<SparsityParams> {
        SparsityParams::new(self.rho.clone(), self.delta.clone(), u)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_positive() {
            return Err(Error::BadParams("epsilon must be positive".into()));
        }
        if let Some(t) = &self.tau {
            if *t <= Rational::one() {
                return Err(Error::BadParams("tau must exceed 1".into()));
            }
        }
        if self.mode == Mode::Pseudo && matches!(self.problem, Problem::MatMed | Problem::KnapMed) {
            return Err(Error::BadParams("pseudo mode applies to rkmed and rkmeans only".into()));
        }
        self.params(Rational::zero()).map(|_| ())
    }
}

/// Final output of a run.
#[derive(Debug, Clone, Serialize)]
pub struct SolutionReport {
    pub problem: Problem,
    pub mode: Mode,
    pub open: Vec<String>,
    pub served: Vec<String>,
    pub cost: Rational,
    pub branch_id: String,
    #[serde(rename = "U")]
    pub u: Option<Rational>,
    pub offset_a: Rational,
    pub fractional_count: usize,
    pub iterations: usize,
    pub attempts: usize,
    pub failed_branches: usize,
    pub strong_lp_value: Rational,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub opt: Option<Rational>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEntry>>,
    pub invariant_log: Vec<CheckTally>,
    #[serde(skip)]
    pub solution: Solution,
    /// Lifted cost of every attempt that produced a valid solution.
    #[serde(skip)]
    pub attempt_costs: Vec<Rational>,
    #[serde(skip)]
    pub traces: Vec<Vec<TraceEntry>>,
    #[serde(skip)]
    pub terminal_states: Vec<IterState>,
}

struct Best {
    solution: Solution,
    branch_id: String,
    u: Option<Rational>,
    attempt: Attempt,
}

#[derive(Default)]
struct Tracker {
    best: Option<Best>,
    attempts: usize,
    failed: usize,
    costs: Vec<Rational>,
    traces: Vec<Vec<TraceEntry>>,
    states: Vec<IterState>,
}

impl Tracker {
    /// Lifts every attempt to the original instance and keeps the cheapest.
    fn offer(&mut self, original: &ClusteringInstance, branch: &GuessBranch, u: Option<Rational>, attempts: Vec<Attempt>) -> Result<()> {
        for attempt in attempts {
            self.attempts += 1;
            self.traces.push(attempt.trace.clone());
            self.states.push(attempt.state.clone());
            let lifted = match assemble_original(&attempt.solution, original, branch) {
                Ok(s) => s,
                Err(Error::NotEnoughClients { .. }) => {
                    self.failed += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let solution = solution_cost(original, &lifted.open)?;
            self.costs.push(solution.cost.clone());
            if self.best.as_ref().is_none_or(|b| solution.cost < b.solution.cost) {
                self.best = Some(Best { solution, branch_id: branch.id(), u: u.clone(), attempt });
            }
        }
        Ok(())
    }

    fn cost(&self) -> Option<&Rational> {
        self.best.as_ref().map(|b| &b.solution.cost)
    }
}

fn is_branch_failure(e: &Error) -> bool {
    matches!(e, Error::Infeasible | Error::NotEnoughClients { .. } | Error::EmptyOpenSet | Error::InfeasiblePreopen | Error::BudgetOutOfRange(_))
}

fn report(bundle: &InstanceBundle, cfg: &RunConfig, tracker: Tracker, opt: Option<Rational>, log: &InvariantLog) -> Result<SolutionReport> {
    let inst = &bundle.instance;
    let Tracker { best, attempts, failed, costs, traces, states } = tracker;
    let best = best.ok_or(Error::NoFeasibleSolution)?;
    let ratio = opt.as_ref().map(|o| if o.is_zero() { if best.solution.cost.is_zero() { 1.0 } else { f64::INFINITY } } else { (&best.solution.cost / o).to_f64() });
    Ok(SolutionReport {
        problem: cfg.problem,
        mode: cfg.mode,
        open: best.solution.open.iter().map(|&i| inst.facility_ids()[i].clone()).collect(),
        served: best.solution.served.iter().map(|&j| inst.client_ids()[j].clone()).collect(),
        cost: best.solution.cost.clone(),
        branch_id: best.branch_id,
        u: best.u,
        offset_a: best.attempt.offset.clone(),
        fractional_count: best.attempt.fractional,
        iterations: best.attempt.iterations,
        attempts,
        failed_branches: failed,
        strong_lp_value: best.attempt.strong_value.clone(),
        opt,
        ratio,
        trace: cfg.trace.then(|| best.attempt.trace.clone()),
        invariant_log: log.tallies(),
        solution: best.solution,
        attempt_costs: costs,
        traces,
        terminal_states: states,
    })
}

fn prepared_instance(bundle: &InstanceBundle, cfg: &RunConfig) -> Result<ClusteringInstance> {
    let inst = bundle.instance.with_exponent(cfg.exponent())?;
    match cfg.problem {
        Problem::RkMed | Problem::RkMeans => {
            if inst.k().is_none() {
                return Err(Error::BadInstance("rkmed and rkmeans need k".into()));
            }
            Ok(inst)
        }
        Problem::MatMed | Problem::KnapMed => inst.with_budget(None, inst.num_clients()),
    }
}

/// Guesses of `U` around a known optimum, zero when the optimum is zero.
fn guesses_near(inst: &ClusteringInstance, opt: &Rational, epsilon: &Rational) -> Vec<Rational> {
    if opt.is_zero() {
        return vec![Rational::zero()];
    }
    let hi = opt * (Rational::one() + epsilon);
    u_grid(inst, epsilon).into_iter().filter(|u| u >= opt && *u <= hi).collect()
}

/// Strong LP value is at most the oracle cost. Checked only when the oracle
/// solution respects the radius caps and star bounds, so it is feasible there.
fn check_strong_value(branch: &GuessBranch, opt: &OracleResult, params: &SparsityParams, radius: &RadiusBounds, strong_value: &Rational, log: &mut InvariantLog) -> Result<()> {
    let inst = &branch.instance;
    let q = inst.q();
    let pair = nearest_vector_pair(inst, &opt.best_open)?;
    let served: Vec<usize> = branch.kept.iter().enumerate().filter(|(_, j)| opt.best_served.contains(j)).map(|(p, _)| p).collect();
    let cap = &params.rho * params.u_tilde(q);
    let respects_r = served.iter().all(|&j| pair.c[inst.client_point(j)] <= radius.r[j]);
    let respects_star = opt.best_open.iter().filter(|i| !branch.pre_opened.contains(i)).all(|&i| {
        let star: Rational = served.iter().filter(|&&j| pair.kappa[inst.client_point(j)] == i).map(|&j| pair.c[inst.client_point(j)].pow(q)).sum();
        star <= cap && served.iter().filter(|&&j| pair.kappa[inst.client_point(j)] == i).all(|&j| pair.c[inst.client_point(j)].pow(q) <= cap)
    });
    let k_ok = inst.k().is_some_and(|k| opt.best_open.len() <= k) && inst.pre_opened().iter().all(|i| opt.best_open.contains(i));
    if respects_r && respects_star && k_ok {
        let cost: Rational = served.iter().map(|&j| pair.c[inst.client_point(j)].pow(q)).sum();
        let bound = (Rational::one() + &params.delta / Rational::from_int(2)).pow(q) * &cost;
        log.record("strong-lp-value", "oracle branch", *strong_value <= bound, || format!("LP value {strong_value} > {bound}"))?;
    }
    Ok(())
}

fn run_robust_oracle(bundle: &InstanceBundle, inst: &ClusteringInstance, cfg: &RunConfig, log: &mut InvariantLog) -> Result<SolutionReport> {
    let k = inst.k().expect("checked in prepared_instance");
    let opt = brute_force(inst, &Constraint::Cardinality, cfg.oracle_cap)?;
    let rounding = cfg.rounding();
    let mut tracker = Tracker::default();
    for u in guesses_near(inst, &opt.opt_cost, &cfg.epsilon) {
        let params = cfg.params(u.clone())?;
        let (branch, report) = sparsify_with_oracle(inst, &opt.best_open, &opt.best_served, &params)?;
        let step = format!("U = {u}");
        let one = Rational::one();
        let limit = &one / (&params.rho * (&one - &params.delta).pow(inst.q())) + &one / &params.rho;
        log.record("sparsify-iterations", &step, Rational::from(report.iterations) < limit, || format!("{} iterations", report.iterations))?;
        let local: Vec<usize> = branch.kept.iter().enumerate().filter(|(_, j)| opt.best_served.contains(j)).map(|(p, _)| p).collect();
        log.record_result("sparse-instance", &step, check_sparse(&branch, &opt.best_open, &local, &params))?;
        log.record_result("sparse-reconnect", &step, check_reconnect_bound(inst, &branch, &opt.best_open, &opt.best_served, &params))?;
        let radius = construct_r(&branch, &params);
        log.record_result("radius-greedy-sparsity", &step, check_r_hat_sparsity(&branch.instance, &radius, &params))?;
        log.record_result("radius-sparsity", &step, check_radius_sparsity(&branch.instance, &radius, &params))?;
        let strength = Strengthening::Robust { params: &params, radius: &radius };
        match round_branch(&branch.instance, &Budget::Cardinality(k), &strength, &rounding, Finish::Integral, log) {
            Ok(attempts) => {
                if let Some(a) = attempts.first() {
                    check_strong_value(&branch, &opt, &params, &radius, &a.strong_value, log)?;
                }
                tracker.offer(inst, &branch, Some(u.clone()), attempts)?;
            }
            Err(e) if is_branch_failure(&e) => tracker.failed += 1,
            Err(e) => return Err(e),
        }
    }
    report(bundle, cfg, tracker, Some(opt.opt_cost), log)
}

fn run_robust_full(bundle: &InstanceBundle, inst: &ClusteringInstance, cfg: &RunConfig, log: &mut InvariantLog) -> Result<SolutionReport> {
    let k = inst.k().expect("checked in prepared_instance");
    let rounding = cfg.rounding();
    let alpha = crate::alpha(inst.q());
    let mut tracker = Tracker::default();
    let mut guesses = vec![Rational::zero()];
    guesses.extend(u_grid(inst, &cfg.epsilon));
    'scan: for u in guesses {
        let params = cfg.params(u.clone())?;
        let target = &alpha * (Rational::one() + &cfg.epsilon) * &u;
        let m = inst.m();
        let admissible = move |removed: &BTreeSet<usize>, pre: &[usize], m_prime: usize| m_prime <= m && m - m_prime <= removed.len() && pre.len() <= k;
        for branch in enumerate_sparse_instances_where(inst, &params, cfg.caps, admissible) {
            let radius = construct_r(&branch, &params);
            let reachable = (0..branch.instance.num_clients())
                .filter(|&j| (0..inst.num_facilities()).any(|i| *branch.instance.d_fc(i, j) <= radius.r[j]))
                .count();
            if reachable < branch.m_prime {
                tracker.failed += 1;
                continue;
            }
            let strength = Strengthening::Robust { params: &params, radius: &radius };
            match round_branch(&branch.instance, &Budget::Cardinality(k), &strength, &rounding, Finish::Integral, log) {
                Ok(attempts) => tracker.offer(inst, &branch, Some(u.clone()), attempts)?,
                Err(e) if is_branch_failure(&e) => tracker.failed += 1,
                Err(e) => return Err(e),
            }
            if tracker.cost().is_some_and(|c| *c <= target) {
                break 'scan;
            }
        }
    }
    report(bundle, cfg, tracker, None, log)
}

fn run_pseudo(bundle: &InstanceBundle, inst: &ClusteringInstance, cfg: &RunConfig, log: &mut InvariantLog) -> Result<SolutionReport> {
    let k = inst.k().expect("checked in prepared_instance");
    let inst = inst.with_pre_opened(vec![])?;
    let attempts = round_branch(&inst, &Budget::Cardinality(k), &Strengthening::None, &cfg.rounding(), Finish::Pseudo, log)?;
    let mut tracker = Tracker::default();
    tracker.offer(&inst, &GuessBranch::identity(&inst), None, attempts)?;
    report(bundle, cfg, tracker, None, log)
}

fn run_matroid(bundle: &InstanceBundle, inst: &ClusteringInstance, cfg: &RunConfig, log: &mut InvariantLog) -> Result<SolutionReport> {
    let pm = bundle.partition.as_ref().ok_or_else(|| Error::BadInstance("matmed needs a partition".into()))?;
    let run = matroid_median(inst, pm, &cfg.rounding(), log)?;
    let opt = if cfg.mode == Mode::OracleGuided { Some(brute_force(inst, &Constraint::Partition(pm), cfg.oracle_cap)?.opt_cost) } else { None };
    let mut tracker = Tracker::default();
    tracker.offer(inst, &GuessBranch::identity(inst), None, run.attempts)?;
    report(bundle, cfg, tracker, opt, log)
}

fn knapsack_of(bundle: &InstanceBundle) -> Result<&KnapsackConstraint> {
    bundle.knapsack.as_ref().ok_or_else(|| Error::BadInstance("knapmed needs weights".into()))
}

/// Lifts knapsack attempts, all clients served on the original instance.
fn offer_knapsack(tracker: &mut Tracker, inst: &ClusteringInstance, branch: &GuessBranch, u: &Rational, attempts: Vec<crate::pipeline::Attempt>) -> Result<()> {
    let lifted = GuessBranch { m_prime: branch.kept.len(), ..branch.clone() };
    tracker.offer(inst, &lifted, Some(u.clone()), attempts)
}

fn run_knapsack(bundle: &InstanceBundle, inst: &ClusteringInstance, cfg: &RunConfig, log: &mut InvariantLog) -> Result<SolutionReport> {
    let kn = knapsack_of(bundle)?;
    let rounding = cfg.rounding();
    let mut tracker = Tracker::default();
    let run_branch = |branch: &GuessBranch, params: &SparsityParams, tracker: &mut Tracker, log: &mut InvariantLog| -> Result<()> {
        match knapsack_median(inst, branch, kn, params, &rounding, log) {
            Ok(run) => offer_knapsack(tracker, inst, branch, &params.u, run.attempts),
            Err(e) if is_branch_failure(&e) => {
                tracker.failed += 1;
                Ok(())
            }
            Err(e) => Err(e),
        }
    };
    if cfg.mode == Mode::OracleGuided {
        let opt = brute_force(inst, &Constraint::Knapsack(kn), cfg.oracle_cap)?;
        for u in guesses_near(inst, &opt.opt_cost, &cfg.epsilon) {
            let params = cfg.params(u.clone())?;
            let (branch, _) = sparsify_knapsack(inst, &opt.best_open, &params)?;
            let all_local: Vec<usize> = (0..branch.kept.len()).collect();
            log.record_result("knapsack-sparse-instance", &format!("U = {u}"), check_sparse(&branch, &opt.best_open, &all_local, &params))?;
            run_branch(&branch, &params, &mut tracker, log)?;
        }
        return report(bundle, cfg, tracker, Some(opt.opt_cost), log);
    }
    let alpha = crate::alpha(1);
    let mut guesses = vec![Rational::zero()];
    guesses.extend(u_grid(inst, &cfg.epsilon));
    'scan: for u in guesses {
        let params = cfg.params(u.clone())?;
        let slack = Rational::from_int(10) * &params.rho / &params.delta * &u;
        let target = &alpha * (Rational::one() + &cfg.epsilon) * &u + slack;
        let nc = inst.num_clients();
        let admissible = move |removed: &BTreeSet<usize>, pre: &[usize], m_prime: usize| m_prime + removed.len() == nc && kn.weight_of(pre) <= kn.budget;
        for branch in enumerate_sparse_instances_where(inst, &params, cfg.caps, admissible) {
            run_branch(&branch, &params, &mut tracker, log)?;
            if tracker.cost().is_some_and(|c| *c <= target) {
                break 'scan;
            }
        }
    }
    report(bundle, cfg, tracker, None, log)
}

/// Runs the configured pipeline with strict invariant checking.
pub fn run(bundle: &InstanceBundle, cfg: &RunConfig) -> Result<SolutionReport> {
    let mut log = InvariantLog::strict();
    run_with_log(bundle, cfg, &mut log)
}

pub fn run_with_log(bundle: &InstanceBundle, cfg: &RunConfig, log: &mut InvariantLog) -> Result<SolutionReport> {
    cfg.validate()?;
    let inst = prepared_instance(bundle, cfg)?;
    let result = match (cfg.problem, cfg.mode) {
        (Problem::MatMed, _) => run_matroid(bundle, &inst, cfg, log),
        (Problem::KnapMed, _) => run_knapsack(bundle, &inst, cfg, log),
        (_, Mode::Pseudo) => run_pseudo(bundle, &inst, cfg, log),
        (_, Mode::OracleGuided) => run_robust_oracle(bundle, &inst, cfg, log),
        (_, Mode::Full) => run_robust_full(bundle, &inst, cfg, log),
    };
    // Branch-level infeasibility is absorbed by the drivers; what reaches
    // here concerns the whole instance.
    match result {
        Err(Error::Infeasible) => Err(Error::NoFeasibleSolution),
        other => other,
    }
}

/// Deliberate corruption applied after a run to exercise the checker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Perturb the inner ball of the first full client.
    InnerBall,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub invariants: Vec<CheckTally>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<Rational>,
}

/// Runs with every check enabled and reports per-invariant tallies.
pub fn verify(bundle: &InstanceBundle, cfg: &RunConfig, fault: Option<Fault>) -> VerifyReport {
    let mut log = InvariantLog::strict();
    let outcome = run_with_log(bundle, cfg, &mut log);
    let (mut failure, cost, states) = match outcome {
        Ok(rep) => (None, Some(rep.cost.clone()), rep.terminal_states),
        Err(e) => (Some(e.to_string()), None, vec![]),
    };
    if let (Some(Fault::InnerBall), None) = (fault, &failure) {
        let target = states.into_iter().find_map(|s| s.full_clients().first().copied().map(|j| (s, j)));
        match target {
            Some((mut state, j)) => {
                match (0..state.num_copies()).find(|c| !state.b[j].contains(c)) {
                    Some(c) => {
                        state.b[j].push(c);
                        state.b[j].sort_unstable();
                    }
                    None => {
                        state.b[j].pop();
                    }
                }
                if let Err(e) = check_state(&state, "fault injection", &mut log) {
                    failure = Some(e.to_string());
                }
            }
            None => failure = Some("fault injection found no full client".into()),
        }
    }
    VerifyReport { passed: failure.is_none() && log.all_passed(), failure, invariants: log.tallies(), cost }
}

/// One row of a ratio benchmark.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub seed: u64,
    pub q: u32,
    pub opt: Rational,
    pub cost: Rational,
    pub ratio: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub max_ratio: f64,
    pub mean_ratio: f64,
    pub all_within_bound: bool,
}

/// Oracle-guided runs on seeded random metrics.
pub fn bench(spec: &crate::generate::RandomSpec, seeds: std::ops::Range<u64>, cfg: &RunConfig) -> Result<BenchReport> {
    use rayon::prelude::*;
    let rows: Vec<Result<BenchRow>> = seeds
        .into_par_iter()
        .map(|seed| {
            let inst = crate::generate::random_metric(spec, seed)?;
            let mut c = cfg.clone();
            c.problem = if spec.q == 2 { Problem::RkMeans } else { Problem::RkMed };
            c.mode = Mode::OracleGuided;
            c.seed = seed;
            let rep = run(&InstanceBundle::plain(inst), &c)?;
            let opt = rep.opt.clone().expect("oracle mode reports opt");
            let bound = (crate::alpha(spec.q) * (Rational::one() + &cfg.epsilon)).to_f64();
            Ok(BenchRow { seed, q: spec.q, opt, cost: rep.cost.clone(), ratio: rep.ratio.unwrap_or(1.0), bound })
        })
        .collect();
    let rows: Vec<BenchRow> = rows.into_iter().collect::<Result<_>>()?;
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let mean_ratio = if rows.is_empty() { 0.0 } else { rows.iter().map(|r| r.ratio).sum::<f64>() / rows.len() as f64 };
    let all_within_bound = rows.iter().all(|r| r.ratio <= r.bound);
    Ok(BenchReport { rows, max_ratio, mean_ratio, all_within_bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate;

    #[test]
    fn pseudo_on_gap_a() {
        let fx = generate::gap_a(3).unwrap();
        let cfg = RunConfig { mode: Mode::Pseudo, ..RunConfig::default() };
        let rep = run(&InstanceBundle::plain(fx.instance), &cfg).unwrap();
        assert!(rep.open.len() <= 2);
        assert!(rep.cost <= crate::alpha(1) * fx.lp_value);
    }

    #[test]
    fn collocated_instance_costs_zero() {
        let fx = generate::gap_b(2).unwrap();
        let inst = fx.instance.with_budget(Some(1), 4).unwrap();
        let rep = run(&InstanceBundle::plain(inst), &RunConfig::default()).unwrap();
        assert_eq!(rep.cost, Rational::zero());
    }

    #[test]
    fn oracle_guided_is_deterministic_and_bounded() {
        let spec = generate::RandomSpec { facilities: 4, clients: 7, k: 2, m: 5, q: 1, max_weight: 10 };
        let inst = generate::random_metric(&spec, 11).unwrap();
        let cfg = RunConfig { seed: 3, ..RunConfig::default() };
        let a = run(&InstanceBundle::plain(inst.clone()), &cfg).unwrap();
        let b = run(&InstanceBundle::plain(inst), &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let opt = a.opt.clone().unwrap();
        assert!(a.cost <= crate::alpha(1) * Rational::new(3, 2) * opt);
    }

    #[test]
    fn pseudo_rejected_for_variants() {
        let cfg = RunConfig { problem: Problem::MatMed, mode: Mode::Pseudo, ..RunConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn fault_injection_is_reported() {
        let spec = generate::RandomSpec { facilities: 4, clients: 7, k: 2, m: 5, q: 1, max_weight: 10 };
        let inst = generate::random_metric(&spec, 1).unwrap();
        let clean = verify(&InstanceBundle::plain(inst.clone()), &RunConfig::default(), None);
        assert!(clean.passed, "{:?}", clean.failure);
        let broken = verify(&InstanceBundle::plain(inst), &RunConfig::default(), Some(Fault::InnerBall));
        assert!(!broken.passed);
        assert!(broken.failure.unwrap().contains("inner-ball"));
    }
}
