//! Partition-matroid median and knapsack median.

use serde::{Deserialize, Serialize};

use crate::check::InvariantLog;
use crate::error::{Error, Result};
use crate::finalize::assemble_original;
use crate::iterround::Strengthening;
use crate::model::{Budget, ClusteringInstance, Solution};
use crate::pipeline::{round_branch, Attempt, Finish, RoundingConfig};
use crate::preprocess::{knapsack_r, sparsify, GuessBranch, SparsifyReport, SparsityParams};
use crate::rational::Rational;

/// Facilities partitioned into classes with per-class opening capacities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionMatroid {
    pub classes: Vec<Vec<usize>>,
    pub capacities: Vec<usize>,
}

impl PartitionMatroid {
    pub fn new(classes: Vec<Vec<usize>>, capacities: Vec<usize>, num_facilities: usize) -> Result<Self> {
        if classes.len() != capacities.len() {
            return Err(Error::BadInstance(format!("{} classes but {} capacities", classes.len(), capacities.len())));
        }
        let mut seen = vec![false; num_facilities];
        for &i in classes.iter().flatten() {
            if i >= num_facilities || seen[i] {
                return Err(Error::BadInstance(format!("facility {i} is out of range or in two classes")));
            }
            seen[i] = true;
        }
        if let Some(i) = seen.iter().position(|&s| !s) {
            return Err(Error::BadInstance(format!("facility {i} is in no class")));
        }
        Ok(PartitionMatroid { classes, capacities })
    }

    /// Class index of every facility.
    pub fn class_of(&self) -> Vec<usize> {
        let n = self.classes.iter().flatten().copied().max().map_or(0, |m| m + 1);
        let mut out = vec![usize::MAX; n];
        for (g, class) in self.classes.iter().enumerate() {
            for &i in class {
                out[i] = g;
            }
        }
        out
    }

    pub fn rank(&self, set: &[usize]) -> usize {
        self.classes
            .iter()
            .zip(&self.capacities)
            .map(|(class, &cap)| set.iter().filter(|i| class.contains(i)).count().min(cap))
            .sum()
    }

    pub fn is_independent(&self, set: &[usize]) -> bool {
        self.rank(set) == set.len()
    }
}

/// Facility weights `w` and the budget `W`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnapsackConstraint {
    pub weights: Vec<Rational>,
    pub budget: Rational,
}

impl KnapsackConstraint {
    pub fn new(weights: Vec<Rational>, budget: Rational) -> Result<Self> {
        if budget.is_negative() || weights.iter().any(Rational::is_negative) {
            return Err(Error::BadInstance("knapsack weights and budget must be nonnegative".into()));
        }
        Ok(KnapsackConstraint { weights, budget })
    }

    pub fn weight_of(&self, set: &[usize]) -> Rational {
        set.iter().map(|&i| &self.weights[i]).sum()
    }
}

/// Best solution of a variant run with every attempt kept.
#[derive(Debug, Clone)]
pub struct VariantRun {
    pub best: Solution,
    pub best_attempt: usize,
    pub attempts: Vec<Attempt>,
}

fn pick_best(attempts: Vec<Attempt>, lift: impl Fn(&Solution) -> Result<Solution>) -> Result<VariantRun> {
    let mut best: Option<(usize, Solution)> = None;
    for (idx, a) in attempts.iter().enumerate() {
        let sol = lift(&a.solution)?;
        if best.as_ref().is_none_or(|(_, b)| sol.cost < b.cost) {
            best = Some((idx, sol));
        }
    }
    let (best_attempt, best) = best.ok_or(Error::NoFeasibleSolution)?;
    Ok(VariantRun { best, best_attempt, attempts })
}

/// Matroid median under a partition matroid: every client served, no
/// preprocessing, and the terminal vertex is integral.
pub fn matroid_median(inst: &ClusteringInstance, matroid: &PartitionMatroid, cfg: &RoundingConfig, log: &mut InvariantLog) -> Result<VariantRun> {
    if inst.q() != 1 {
        return Err(Error::BadParams("matroid median needs q = 1".into()));
    }
    let all = inst.with_budget(None, inst.num_clients())?.with_pre_opened(vec![])?;
    if all.num_clients() > 0 && matroid.capacities.iter().sum::<usize>() == 0 {
        return Err(Error::Infeasible);
    }
    let attempts = round_branch(&all, &Budget::Partition(matroid.clone()), &Strengthening::None, cfg, Finish::Integral, log)?;
    pick_best(attempts, |s| Ok(s.clone()))
}

/// Knapsack sparsification against `S*` serving every client (`q = 1`).
pub fn sparsify_knapsack(inst: &ClusteringInstance, s_star: &[usize], params: &SparsityParams) -> Result<(GuessBranch, SparsifyReport)> {
    let all = inst.with_budget(None, inst.num_clients())?;
    let clients: Vec<usize> = (0..all.num_clients()).collect();
    sparsify(&all, s_star, &clients, params, false)
}

/// Knapsack median on one guessed branch, lifted back to `original`.
pub fn knapsack_median(
    original: &ClusteringInstance,
    branch: &GuessBranch,
    knapsack: &KnapsackConstraint,
    params: &SparsityParams,
    cfg: &RoundingConfig,
    log: &mut InvariantLog,
) -> Result<VariantRun> {
    if original.q() != 1 {
        return Err(Error::BadParams("knapsack median needs q = 1".into()));
    }
    let inst = branch.instance.with_budget(None, branch.instance.num_clients())?;
    let radius = knapsack_r(&inst, params);
    let strength = Strengthening::Knapsack { params, radius: &radius };
    let attempts = round_branch(&inst, &Budget::Knapsack(knapsack.clone()), &strength, cfg, Finish::Integral, log)?;
    let everyone = original.with_budget(None, original.num_clients())?;
    let lifted = GuessBranch { m_prime: inst.num_clients(), instance: inst, ..branch.clone() };
    pick_best(attempts, |s| assemble_original(s, &everyone, &lifted))
}
