//! Exhaustive ground truth over facility subsets.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::iterround::{build_strong_lp, Strengthening};
use crate::lp::solve_vertex;
use crate::model::{solution_cost, Budget, ClusteringInstance};
use crate::rational::Rational;
use crate::variants::{KnapsackConstraint, PartitionMatroid};

pub const DEFAULT_CAP: usize = 15;

/// Which subsets are feasible.
#[derive(Debug, Clone, Copy)]
pub enum Constraint<'a> {
    /// At most `k` facilities, `k` taken from the instance.
    Cardinality,
    Partition(&'a PartitionMatroid),
    Knapsack(&'a KnapsackConstraint),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OracleResult {
    pub best_open: Vec<usize>,
    pub best_served: Vec<usize>,
    pub opt_cost: Rational,
    pub enumerated: usize,
}

fn members(mask: u64, n: usize) -> Vec<usize> {
    (0..n).filter(|&i| mask >> i & 1 == 1).collect()
}

/// Minimum-cost feasible open set; ties go to the lexicographically smallest set.
pub fn brute_force(inst: &ClusteringInstance, constraint: &Constraint, cap: usize) -> Result<OracleResult> {
    let nf = inst.num_facilities();
    if nf > cap || nf >= 63 {
        return Err(Error::TooLarge { facilities: nf, cap });
    }
    let k = match constraint {
        Constraint::Cardinality => Some(inst.k().ok_or_else(|| Error::BadParams("cardinality oracle needs k".into()))?),
        _ => None,
    };
    let pre_mask: u64 = inst.pre_opened().iter().map(|&i| 1u64 << i).sum();
    let feasible = |mask: u64| -> bool {
        if mask & pre_mask != pre_mask {
            return false;
        }
        if let Some(k) = k {
            if mask.count_ones() as usize > k {
                return false;
            }
        }
        let set = members(mask, nf);
        match constraint {
            Constraint::Cardinality => true,
            Constraint::Partition(pm) => pm.is_independent(&set),
            Constraint::Knapsack(kn) => kn.weight_of(&set) <= kn.budget,
        }
    };
    let results: Vec<(Rational, Vec<usize>, Vec<usize>)> = (1u64..(1u64 << nf))
        .into_par_iter()
        .filter(|&mask| feasible(mask))
        .map(|mask| {
            let sol = solution_cost(inst, &members(mask, nf)).expect("nonempty set containing S0");
            (sol.cost, sol.open, sol.served)
        })
        .collect();
    let enumerated = results.len();
    let best = results
        .into_iter()
        .min_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
        .ok_or(Error::Infeasible)?;
    Ok(OracleResult { best_open: best.1, best_served: best.2, opt_cost: best.0, enumerated })
}

/// Optimum of the basic relaxation (cardinality budget, serve at least `m`).
pub fn lp_basic_value(inst: &ClusteringInstance) -> Result<Rational> {
    let k = inst.k().ok_or_else(|| Error::BadParams("the basic relaxation needs k".into()))?;
    let strong = build_strong_lp(inst, &Budget::Cardinality(k), &Strengthening::None);
    Ok(solve_vertex(&strong.lp)?.objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gap_fixture_optima() {
        let a = generate::gap_a(3).unwrap();
        let res = brute_force(&a.instance, &Constraint::Cardinality, DEFAULT_CAP).unwrap();
        assert_eq!(res.opt_cost, Rational::from_int(30));
        assert_eq!(res.best_open, vec![1]);
        let b = generate::gap_b(4).unwrap();
        let res = brute_force(&b.instance, &Constraint::Cardinality, DEFAULT_CAP).unwrap();
        assert_eq!(res.opt_cost, Rational::from_int(5));
        assert_eq!(res.best_open, vec![0, 2]);
    }

    #[test]
    fn gap_fixture_lp_values() {
        assert_eq!(lp_basic_value(&generate::gap_a(3).unwrap().instance).unwrap(), Rational::from_int(12));
        assert_eq!(lp_basic_value(&generate::gap_b(4).unwrap().instance).unwrap(), Rational::from_int(2));
    }

    #[test]
    fn all_open_is_sum_of_smallest() {
        let spec = generate::RandomSpec { facilities: 4, clients: 7, k: 4, m: 5, q: 1, max_weight: 9 };
        let inst = generate::random_metric(&spec, 2).unwrap();
        let res = brute_force(&inst, &Constraint::Cardinality, DEFAULT_CAP).unwrap();
        let mut nearest: Vec<Rational> = (0..7).map(|j| (0..4).map(|i| inst.dq_fc(i, j).clone()).min().unwrap()).collect();
        nearest.sort();
        assert_eq!(res.opt_cost, nearest.into_iter().take(5).sum::<Rational>());
    }

    #[test]
    fn too_large_is_rejected() {
        let spec = generate::RandomSpec { facilities: 5, clients: 2, k: 1, m: 1, q: 1, max_weight: 3 };
        let inst = generate::random_metric(&spec, 0).unwrap();
        assert!(matches!(brute_force(&inst, &Constraint::Cardinality, 4), Err(Error::TooLarge { facilities: 5, cap: 4 })));
    }

    #[test]
    fn optimum_beats_random_sets_and_lp_bounds_it() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..10 {
            let spec = generate::RandomSpec { facilities: 6, clients: 9, k: 3, m: 7, q: 1 + (seed % 2) as u32, max_weight: 15 };
            let inst = generate::random_metric(&spec, seed).unwrap();
            let res = brute_force(&inst, &Constraint::Cardinality, DEFAULT_CAP).unwrap();
            for _ in 0..10 {
                let size = rng.gen_range(1..=3);
                let mut set: Vec<usize> = (0..6).collect();
                while set.len() > size {
                    set.remove(rng.gen_range(0..set.len()));
                }
                assert!(res.opt_cost <= solution_cost(&inst, &set).unwrap().cost);
            }
            assert!(lp_basic_value(&inst).unwrap() <= res.opt_cost);
        }
    }
}
