//! Turning the terminal vertex into an integral solution and lifting branch
//! solutions back to the original instance.

use std::collections::BTreeSet;

use crate::check::InvariantLog;
use crate::error::{Error, Result};
use crate::iterround::{coverage_factor, IterBudget, IterState};
use crate::lp::count_fractional;
use crate::model::{client_costs, solution_cost, ClusteringInstance, Solution};
use crate::preprocess::GuessBranch;
use crate::rational::Rational;

/// The two fractional copies and the partial clients that see only one of them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConversionContext {
    pub i1: usize,
    pub i2: usize,
    pub c1: Vec<usize>,
    pub c2: Vec<usize>,
}

impl ConversionContext {
    /// Orients the pair so that `|C1| ≥ |C2|`, keeping the lower copy on ties.
    pub fn new(state: &IterState, a: usize, b: usize) -> Self {
        let (a, b) = (a.min(b), a.max(b));
        let only = |x: usize, y: usize| -> Vec<usize> {
            state
                .partial_clients()
                .into_iter()
                .filter(|&j| state.f[j].binary_search(&x).is_ok() && state.f[j].binary_search(&y).is_err())
                .collect()
        };
        let (ca, cb) = (only(a, b), only(b, a));
        if ca.len() >= cb.len() {
            ConversionContext { i1: a, i2: b, c1: ca, c2: cb }
        } else {
            ConversionContext { i1: b, i2: a, c1: cb, c2: ca }
        }
    }
}

/// Integral copies plus the conversion decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rounded {
    pub open_copies: Vec<usize>,
    pub context: Option<ConversionContext>,
}

fn origins(state: &IterState, copies: &[usize]) -> Vec<usize> {
    let set: BTreeSet<usize> = copies.iter().map(|&c| state.origin[c]).collect();
    set.into_iter().collect()
}

fn round_copies(state: &IterState) -> Result<Rounded> {
    let (count, frac) = count_fractional(&state.y);
    if count > 2 {
        return Err(Error::NotAlmostIntegral(count));
    }
    let mut open: Vec<usize> = (0..state.num_copies()).filter(|&c| state.y[c].is_one()).collect();
    let mut context = None;
    match &state.budget {
        IterBudget::Cardinality { k, .. } => match frac.as_slice() {
            [] => {}
            [c] => {
                let mut with = open.clone();
                with.push(*c);
                if origins(state, &with).len() <= *k {
                    open = with;
                }
            }
            [a, b] => {
                let mut with = open.clone();
                with.extend([*a, *b]);
                if origins(state, &with).len() <= *k {
                    open = with;
                } else {
                    let ctx = ConversionContext::new(state, *a, *b);
                    open.push(ctx.i1);
                    context = Some(ctx);
                }
            }
            _ => unreachable!("count checked above"),
        },
        IterBudget::Knapsack(kn) => {
            // One fractional copy closes; of two, the lighter one opens.
            if let [a, b] = frac.as_slice() {
                let (wa, wb) = (&kn.weights[state.origin[*a]], &kn.weights[state.origin[*b]]);
                open.push(if wb < wa { *b } else { *a });
            }
        }
        IterBudget::Partition(_) => {
            if count != 0 {
                return Err(Error::NotAlmostIntegral(count));
            }
        }
    }
    open.sort_unstable();
    Ok(Rounded { open_copies: open, context })
}

/// Integral solution on the branch instance, with its checks.
pub fn to_integral(state: &IterState, inst: &ClusteringInstance, log: &mut InvariantLog) -> Result<(Solution, Rounded)> {
    let step = "conversion";
    let rounded = round_copies(state)?;
    let mut open = origins(state, &rounded.open_copies);
    let open_copy_set: BTreeSet<usize> = rounded.open_copies.iter().copied().collect();
    match &state.budget {
        IterBudget::Cardinality { k, m } => {
            let covered = (0..state.num_real).filter(|&j| state.full[j] || state.f[j].iter().any(|c| open_copy_set.contains(c))).count();
            log.record("integral-coverage", step, covered >= *m, || format!("{covered} clients covered, need {m}"))?;
            log.record("integral-budget", step, open.len() <= *k, || format!("{} facilities open, k = {k}", open.len()))?;
            if !open.is_empty() {
                let factor = coverage_factor(&state.disc.tau);
                let costs = client_costs(inst, &open)?;
                for j in state.full_clients() {
                    let reach = (&factor * state.disc.value(state.ell[j])).pow(inst.q());
                    log.record("integral-full-radius", step, costs[j] <= reach, || format!("client {j} pays {} > {reach}", costs[j]))?;
                }
            }
            for i in 0..inst.num_facilities() {
                if open.len() >= *k {
                    break;
                }
                if open.binary_search(&i).is_err() {
                    open.push(i);
                    open.sort_unstable();
                }
            }
        }
        IterBudget::Knapsack(kn) => {
            let w = kn.weight_of(&open);
            log.record("knapsack-weight", step, w <= kn.budget, || format!("weight {w} exceeds {}", kn.budget))?;
        }
        IterBudget::Partition(pm) => {
            log.record("matroid-independent", step, pm.is_independent(&open), || format!("{open:?} violates a class capacity"))?;
        }
    }
    let pre_ok = inst.pre_opened().iter().all(|i| open.binary_search(i).is_ok());
    log.record("integral-preopen", step, pre_ok, || format!("{open:?} misses a pre-opened facility"))?;
    if open.is_empty() {
        return Err(Error::EmptyOpenSet);
    }
    Ok((solution_cost(inst, &open)?, rounded))
}

/// Rounds every fractional copy up; at most one facility over budget.
pub fn pseudo_solution(state: &IterState, inst: &ClusteringInstance) -> Result<Solution> {
    let (count, _) = count_fractional(&state.y);
    if count > 2 {
        return Err(Error::NotAlmostIntegral(count));
    }
    let copies: Vec<usize> = (0..state.num_copies()).filter(|&c| state.y[c].is_positive()).collect();
    solution_cost(inst, &origins(state, &copies))
}

/// Serves the branch clients as in `branch_solution` plus the `m − m′`
/// cheapest removed clients, costed on the original instance.
pub fn assemble_original(branch_solution: &Solution, original: &ClusteringInstance, branch: &GuessBranch) -> Result<Solution> {
    let needed = original.m().saturating_sub(branch.m_prime);
    if needed > branch.removed.len() {
        return Err(Error::NotEnoughClients { needed, available: branch.removed.len() });
    }
    if !original.pre_opened().iter().all(|i| branch_solution.open.contains(i)) {
        return Err(Error::InfeasiblePreopen);
    }
    let costs = client_costs(original, &branch_solution.open)?;
    let mut extra = branch.removed.clone();
    extra.sort_by(|&a, &b| costs[a].cmp(&costs[b]).then(a.cmp(&b)));
    let mut served: Vec<usize> = branch_solution.served.iter().map(|&local| branch.kept[local]).collect();
    served.extend(extra.into_iter().take(needed));
    served.sort_unstable();
    let cost: Rational = served.iter().map(|&j| &costs[j]).sum();
    Ok(Solution { open: branch_solution.open.clone(), served, cost })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate;
    use crate::iterround::{discretize, init_iter_state, split_facilities, FractionalSolution};
    use crate::preprocess::GuessBranch;

    fn r(n: i64) -> Rational {
        Rational::from_int(n)
    }

    /// Copies with prescribed `y` on gap-b(2); client sets given explicitly.
    fn state_with(y: Vec<Rational>, origin: Vec<usize>, f_sets: Vec<Vec<usize>>, k: usize, m: usize) -> (ClusteringInstance, IterState) {
        let inst = generate::gap_b(2).unwrap().instance.with_budget(Some(k), m).unwrap();
        let split = crate::iterround::SplitSolution { y, origin, f_sets };
        let disc = discretize(&inst, &crate::iterround::default_tau(1), &Rational::one());
        let state = init_iter_state(&inst, &split, &disc, IterBudget::Cardinality { k, m }, &[], None);
        (inst, state)
    }

    #[test]
    fn integral_vertex_passes_through() {
        let inst = generate::gap_b(2).unwrap().instance;
        let frac = FractionalSolution { y: vec![r(1), r(0), r(1)], x: vec![(0, 0, r(1))], objective: r(0) };
        let split = split_facilities(&inst, &frac);
        let disc = discretize(&inst, &crate::iterround::default_tau(1), &Rational::one());
        let state = init_iter_state(&inst, &split, &disc, IterBudget::Cardinality { k: 2, m: 9 }, &[], None);
        let mut log = InvariantLog::lenient();
        let (sol, rounded) = to_integral(&state, &inst, &mut log).unwrap();
        assert_eq!(sol.open, vec![0, 2]);
        assert_eq!(rounded.open_copies, vec![0, 1]);
        assert!(rounded.context.is_none());
        assert_eq!(sol, solution_cost(&inst, &[0, 2]).unwrap());
    }

    /// Copies: 0 at f0 (open), 1 at f1 (1/2), 2 at f2 (1/2), `k = 2`.
    /// Partial clients: three see only copy 1, one sees only copy 2, so copy 1 opens.
    #[test]
    fn larger_side_is_kept() {
        let half = Rational::new(1, 2);
        let mut f_sets = vec![vec![]; 10];
        f_sets[..4].fill(vec![0]);
        f_sets[4..7].fill(vec![1]);
        f_sets[8] = vec![2];
        let (inst, mut state) = state_with(vec![r(1), half.clone(), half], vec![0, 1, 2], f_sets, 2, 7);
        state.full[..4].fill(true);
        let ctx = ConversionContext::new(&state, 1, 2);
        assert_eq!((ctx.i1, ctx.i2), (1, 2));
        assert_eq!(ctx.c1, vec![4, 5, 6]);
        assert_eq!(ctx.c2, vec![8]);
        let mut log = InvariantLog::lenient();
        let (sol, _) = to_integral(&state, &inst, &mut log).unwrap();
        assert_eq!(sol.open, vec![0, 1]);
        assert!(sol.open.len() <= 2);
        assert_eq!(log.get("integral-coverage").unwrap().failures, 0);
    }

    #[test]
    fn three_fractionals_are_rejected() {
        let third = Rational::new(1, 3);
        let (inst, state) = state_with(vec![third.clone(), third.clone(), third], vec![0, 1, 2], vec![vec![]; 10], 1, 0);
        let mut log = InvariantLog::lenient();
        assert!(matches!(to_integral(&state, &inst, &mut log), Err(Error::NotAlmostIntegral(3))));
    }

    #[test]
    fn pseudo_rounds_up() {
        let half = Rational::new(1, 2);
        let (inst, state) = state_with(vec![r(1), half.clone(), half], vec![0, 1, 2], vec![vec![]; 10], 2, 5);
        let sol = pseudo_solution(&state, &inst).unwrap();
        assert_eq!(sol.open, vec![0, 1, 2]);
    }

    #[test]
    fn assembly_adds_cheapest_removed() {
        let inst = generate::gap_b(2).unwrap().instance.with_budget(Some(2), 8).unwrap();
        // Drop clients 4..8 (at f1) and keep the rest with m′ = 6.
        let kept: Vec<usize> = (0..10).filter(|j| !(4..8).contains(j)).collect();
        let removed = vec![4, 5, 6, 7];
        let sub = inst.restrict_clients(&kept, 6, vec![]).unwrap();
        let branch = GuessBranch { kept, removed, pre_opened: vec![], m_prime: 6, balls: vec![], instance: sub.clone() };
        let local = solution_cost(&sub, &[0, 2]).unwrap();
        let full = assemble_original(&local, &inst, &branch).unwrap();
        assert_eq!(full.served.len(), 8);
        assert!(full.served.contains(&4) && full.served.contains(&5));
        let recomputed: Rational = full.served.iter().map(|&j| inst.dq_fc(0, j).clone().min(inst.dq_fc(2, j).clone())).sum();
        assert_eq!(full.cost, recomputed);
        let short = GuessBranch { m_prime: 1, ..branch };
        assert!(matches!(assemble_original(&local, &inst, &short), Err(Error::NotEnoughClients { needed: 7, available: 4 })));
    }

    #[test]
    fn identity_branch_assembles_to_itself() {
        let inst = generate::gap_b(2).unwrap().instance;
        let branch = GuessBranch::identity(&inst);
        let sol = solution_cost(&inst, &[0, 2]).unwrap();
        assert_eq!(assemble_original(&sol, &inst, &branch).unwrap(), sol);
    }
}
