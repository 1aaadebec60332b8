//! Instances and exact solution costs.
//!
//! Points of `F ∪ C` are indexed facilities first: facility `i` is point `i`,
//! client `j` is point `|F| + j`. The metric is an explicit symmetric matrix
//! over all points.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::rational::Rational;
use crate::variants::{KnapsackConstraint, PartitionMatroid};

/// Objective exponent: `1` for k-median, `2` for k-means.
pub type Exponent = u32;

#[derive(Debug, Clone)]
pub struct ClusteringInstance {
    facility_ids: Vec<String>,
    client_ids: Vec<String>,
    dist: Vec<Rational>,
    dist_q: Vec<Rational>,
    k: Option<usize>,
    m: usize,
    q: Exponent,
    pre_opened: Vec<usize>,
}

/// A facility set paired with the clients it serves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution {
    pub open: Vec<usize>,
    pub served: Vec<usize>,
    pub cost: Rational,
}

/// Nearest open facility and its distance, for every point of `F ∪ C`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NearestFacilityVectorPair {
    pub kappa: Vec<usize>,
    pub c: Vec<Rational>,
}

/// Constraint on which facility sets may be opened.
#[derive(Debug, Clone)]
pub enum Budget {
    Cardinality(usize),
    Partition(PartitionMatroid),
    Knapsack(KnapsackConstraint),
}

impl Budget {
    pub fn admits(&self, open: &[usize]) -> bool {
        match self {
            Budget::Cardinality(k) => open.len() <= *k,
            Budget::Partition(p) => p.is_independent(open),
            Budget::Knapsack(kn) => kn.weight_of(open) <= kn.budget,
        }
    }
}

impl ClusteringInstance {
    /// Builds and validates an instance from a full `(F ∪ C)²` matrix.
    pub fn new(
        facility_ids: Vec<String>,
        client_ids: Vec<String>,
        matrix: Vec<Vec<Rational>>,
        k: Option<usize>,
        m: usize,
        q: Exponent,
        pre_opened: Vec<usize>,
    ) -> Result<Self> {
        let n = facility_ids.len() + client_ids.len();
        if matrix.len() != n || matrix.iter().any(|row| row.len() != n) {
            return Err(Error::BadMetric(format!("expected a {n}x{n} matrix")));
        }
        let inst = Self::from_parts_unchecked(facility_ids, client_ids, matrix.into_iter().flatten().collect(), k, m, q, pre_opened);
        validate_instance(&inst)?;
        Ok(inst)
    }

    fn from_parts_unchecked(
        facility_ids: Vec<String>,
        client_ids: Vec<String>,
        dist: Vec<Rational>,
        k: Option<usize>,
        m: usize,
        q: Exponent,
        mut pre_opened: Vec<usize>,
    ) -> Self {
        let dist_q = dist.iter().map(|d| d.pow(q)).collect();
        pre_opened.sort_unstable();
        pre_opened.dedup();
        ClusteringInstance { facility_ids, client_ids, dist, dist_q, k, m, q, pre_opened }
    }

    /// Indexed ids `f0..` / `c0..` for generated instances.
    pub fn default_ids(num_facilities: usize, num_clients: usize) -> (Vec<String>, Vec<String>) {
        (
            (0..num_facilities).map(|i| format!("f{i}")).collect(),
            (0..num_clients).map(|j| format!("c{j}")).collect(),
        )
    }

    pub fn num_facilities(&self) -> usize {
        self.facility_ids.len()
    }

    pub fn num_clients(&self) -> usize {
        self.client_ids.len()
    }

    pub fn num_points(&self) -> usize {
        self.num_facilities() + self.num_clients()
    }

    pub fn client_point(&self, j: usize) -> usize {
        self.num_facilities() + j
    }

    pub fn facility_ids(&self) -> &[String] {
        &self.facility_ids
    }

    pub fn client_ids(&self) -> &[String] {
        &self.client_ids
    }

    pub fn k(&self) -> Option<usize> {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> Exponent {
        self.q
    }

    pub fn pre_opened(&self) -> &[usize] {
        &self.pre_opened
    }

    /// Distance between two points of `F ∪ C`.
    pub fn d(&self, p: usize, r: usize) -> &Rational {
        &self.dist[p * self.num_points() + r]
    }

    /// Facility-to-client distance.
    pub fn d_fc(&self, i: usize, j: usize) -> &Rational {
        self.d(i, self.client_point(j))
    }

    /// Facility-to-client distance raised to `q`.
    pub fn dq_fc(&self, i: usize, j: usize) -> &Rational {
        &self.dist_q[i * self.num_points() + self.client_point(j)]
    }

    pub fn dq(&self, p: usize, r: usize) -> &Rational {
        &self.dist_q[p * self.num_points() + r]
    }

    pub fn with_budget(&self, k: Option<usize>, m: usize) -> Result<Self> {
        let mut out = self.clone();
        out.k = k;
        out.m = m;
        check_budgets(&out)?;
        Ok(out)
    }

    /// Same metric under another objective exponent.
    pub fn with_exponent(&self, q: Exponent) -> Result<Self> {
        let mut out = self.clone();
        out.q = q;
        out.dist_q = out.dist.iter().map(|d| d.pow(q)).collect();
        check_budgets(&out)?;
        Ok(out)
    }

    pub fn with_pre_opened(&self, pre_opened: Vec<usize>) -> Result<Self> {
        let mut out = self.clone();
        out.pre_opened = pre_opened;
        out.pre_opened.sort_unstable();
        out.pre_opened.dedup();
        check_budgets(&out)?;
        Ok(out)
    }

    /// Same facilities, only the listed clients (in the given order), new `m` and `S0`.
    pub fn restrict_clients(&self, keep: &[usize], m: usize, pre_opened: Vec<usize>) -> Result<Self> {
        let nf = self.num_facilities();
        let points: Vec<usize> = (0..nf).chain(keep.iter().map(|&j| nf + j)).collect();
        let mut dist = Vec::with_capacity(points.len() * points.len());
        for &p in &points {
            for &r in &points {
                dist.push(self.d(p, r).clone());
            }
        }
        let client_ids = keep.iter().map(|&j| self.client_ids[j].clone()).collect();
        let out = Self::from_parts_unchecked(self.facility_ids.clone(), client_ids, dist, self.k, m, self.q, pre_opened);
        check_budgets(&out)?;
        Ok(out)
    }

    /// Largest facility-client distance (0 for empty instances).
    pub fn max_fc_distance(&self) -> Rational {
        let mut best = Rational::zero();
        for i in 0..self.num_facilities() {
            for j in 0..self.num_clients() {
                if *self.d_fc(i, j) > best {
                    best = self.d_fc(i, j).clone();
                }
            }
        }
        best
    }

    /// Sorted distinct nonzero facility-client distances.
    pub fn fc_distance_set(&self) -> Vec<Rational> {
        let set: BTreeSet<Rational> = (0..self.num_facilities())
            .flat_map(|i| (0..self.num_clients()).map(move |j| (i, j)))
            .map(|(i, j)| self.d_fc(i, j).clone())
            .filter(|d| !d.is_zero())
            .collect();
        set.into_iter().collect()
    }

    /// Clients within distance `r` of point `p` (closed ball).
    pub fn client_ball(&self, p: usize, r: &Rational) -> Vec<usize> {
        (0..self.num_clients()).filter(|&j| self.d(p, self.client_point(j)) <= r).collect()
    }
}

fn check_budgets(inst: &ClusteringInstance) -> Result<()> {
    if inst.q != 1 && inst.q != 2 {
        return Err(Error::BudgetOutOfRange(format!("q must be 1 or 2, got {}", inst.q)));
    }
    if inst.m > inst.num_clients() {
        return Err(Error::BudgetOutOfRange(format!("m = {} exceeds |C| = {}", inst.m, inst.num_clients())));
    }
    if let Some(k) = inst.k {
        if k > inst.num_facilities() {
            return Err(Error::BudgetOutOfRange(format!("k = {k} exceeds |F| = {}", inst.num_facilities())));
        }
    }
    if let Some(&i) = inst.pre_opened.iter().find(|&&i| i >= inst.num_facilities()) {
        return Err(Error::BudgetOutOfRange(format!("pre-opened facility {i} is not in F")));
    }
    Ok(())
}

/// Checks the metric axioms exactly (all triples) plus budget ranges.
pub fn validate_instance(inst: &ClusteringInstance) -> Result<()> {
    let n = inst.num_points();
    for p in 0..n {
        if !inst.d(p, p).is_zero() {
            return Err(Error::BadMetric(format!("d({p},{p}) is not 0")));
        }
        for r in 0..n {
            if inst.d(p, r).is_negative() {
                return Err(Error::BadMetric(format!("d({p},{r}) is negative")));
            }
            if inst.d(p, r) != inst.d(r, p) {
                return Err(Error::BadMetric(format!("d({p},{r}) != d({r},{p})")));
            }
        }
    }
    for a in 0..inst.num_facilities() {
        for b in (a + 1)..inst.num_facilities() {
            if inst.d(a, b).is_zero() {
                return Err(Error::DuplicateFacilityLocation(a, b));
            }
        }
    }
    for a in 0..n {
        for c in 0..n {
            let direct = inst.d(a, c);
            for b in 0..n {
                if *direct > inst.d(a, b) + inst.d(b, c) {
                    return Err(Error::TriangleViolation(a, b, c));
                }
            }
        }
    }
    check_budgets(inst)
}

/// Nearest facility of `open` for every point; ties go to the lowest index.
pub fn nearest_vector_pair(inst: &ClusteringInstance, open: &[usize]) -> Result<NearestFacilityVectorPair> {
    let mut sorted = open.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let Some(&first) = sorted.first() else {
        return Err(Error::EmptyOpenSet);
    };
    let n = inst.num_points();
    let mut kappa = vec![first; n];
    let mut c: Vec<Rational> = (0..n).map(|p| inst.d(p, first).clone()).collect();
    for &i in &sorted[1..] {
        for p in 0..n {
            if *inst.d(p, i) < c[p] {
                c[p] = inst.d(p, i).clone();
                kappa[p] = i;
            }
        }
    }
    Ok(NearestFacilityVectorPair { kappa, c })
}

/// `d^q(j, S)` for every client.
pub fn client_costs(inst: &ClusteringInstance, open: &[usize]) -> Result<Vec<Rational>> {
    let pair = nearest_vector_pair(inst, open)?;
    Ok((0..inst.num_clients())
        .map(|j| inst.dq(pair.kappa[inst.client_point(j)], inst.client_point(j)).clone())
        .collect())
}

/// Greedy optimal assignment for a fixed open set: the `m` cheapest clients.
pub fn solution_cost(inst: &ClusteringInstance, open: &[usize]) -> Result<Solution> {
    let mut open_sorted = open.to_vec();
    open_sorted.sort_unstable();
    open_sorted.dedup();
    if open_sorted.is_empty() {
        return Err(Error::EmptyOpenSet);
    }
    if !inst.pre_opened().iter().all(|i| open_sorted.binary_search(i).is_ok()) {
        return Err(Error::InfeasiblePreopen);
    }
    let costs = client_costs(inst, &open_sorted)?;
    let mut order: Vec<usize> = (0..inst.num_clients()).collect();
    order.sort_by(|&a, &b| costs[a].cmp(&costs[b]).then(a.cmp(&b)));
    let mut served: Vec<usize> = order.into_iter().take(inst.m()).collect();
    let cost = served.iter().map(|&j| &costs[j]).sum();
    served.sort_unstable();
    Ok(Solution { open: open_sorted, served, cost })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate;

    fn r(n: i64) -> Rational {
        Rational::from_int(n)
    }

    /// Two facilities at distance 4, clients at 1 and 3 from f0 on the segment and one off it.
    fn small() -> ClusteringInstance {
        let rows = vec![
            vec![r(0), r(4), r(1), r(3), r(2)],
            vec![r(4), r(0), r(3), r(1), r(2)],
            vec![r(1), r(3), r(0), r(2), r(3)],
            vec![r(3), r(1), r(2), r(0), r(3)],
            vec![r(2), r(2), r(3), r(3), r(0)],
        ];
        let (f, c) = ClusteringInstance::default_ids(2, 3);
        ClusteringInstance::new(f, c, rows, Some(1), 2, 1, vec![]).unwrap()
    }

    #[test]
    fn valid_metric_is_accepted() {
        assert!(validate_instance(&small()).is_ok());
    }

    #[test]
    fn triangle_violation_is_reported() {
        let mut rows = vec![vec![r(0), r(1), r(5)], vec![r(1), r(0), r(1)], vec![r(5), r(1), r(0)]];
        rows[0][2] = r(5);
        let (f, c) = ClusteringInstance::default_ids(1, 2);
        let err = ClusteringInstance::new(f, c, rows, Some(1), 1, 1, vec![]).unwrap_err();
        assert!(matches!(err, Error::TriangleViolation(_, _, _)));
    }

    #[test]
    fn collocated_facilities_are_rejected() {
        let rows = vec![vec![r(0), r(0), r(1)], vec![r(0), r(0), r(1)], vec![r(1), r(1), r(0)]];
        let (f, c) = ClusteringInstance::default_ids(2, 1);
        let err = ClusteringInstance::new(f, c, rows, Some(1), 1, 1, vec![]).unwrap_err();
        assert_eq!(err, Error::DuplicateFacilityLocation(0, 1));
    }

    #[test]
    fn budget_ranges_are_checked() {
        let inst = small();
        assert!(matches!(inst.with_budget(Some(3), 1), Err(Error::BudgetOutOfRange(_))));
        assert!(matches!(inst.with_budget(Some(1), 4), Err(Error::BudgetOutOfRange(_))));
    }

    #[test]
    fn singleton_open_set() {
        let inst = small();
        let pair = nearest_vector_pair(&inst, &[1]).unwrap();
        for p in 0..inst.num_points() {
            assert_eq!(pair.kappa[p], 1);
            assert_eq!(&pair.c[p], inst.d(p, 1));
        }
        assert!(matches!(nearest_vector_pair(&inst, &[]), Err(Error::EmptyOpenSet)));
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let inst = small();
        let pair = nearest_vector_pair(&inst, &[1, 0]).unwrap();
        // client c2 is at distance 2 from both facilities.
        assert_eq!(pair.kappa[inst.client_point(2)], 0);
    }

    #[test]
    fn collocated_client_costs_zero() {
        let inst = generate::gap_b(2).unwrap().instance;
        let pair = nearest_vector_pair(&inst, &[0]).unwrap();
        assert!(pair.c[inst.client_point(0)].is_zero());
    }

    #[test]
    fn greedy_serves_m_cheapest() {
        let inst = small();
        let sol = solution_cost(&inst, &[0]).unwrap();
        assert_eq!(sol.served, vec![0, 2]);
        assert_eq!(sol.cost, r(3));
    }

    #[test]
    fn gap_a_cost_of_far_facility() {
        let inst = generate::gap_a(3).unwrap().instance;
        let sol = solution_cost(&inst, &[1]).unwrap();
        assert_eq!(sol.cost, r(30));
    }

    #[test]
    fn facility_with_m_collocated_clients_costs_zero() {
        let inst = generate::gap_b(3).unwrap().instance.with_budget(Some(1), 6).unwrap();
        assert!(solution_cost(&inst, &[0]).unwrap().cost.is_zero());
    }

    #[test]
    fn missing_preopen_is_infeasible() {
        let inst = small().with_pre_opened(vec![1]).unwrap();
        assert_eq!(solution_cost(&inst, &[0]).unwrap_err(), Error::InfeasiblePreopen);
    }
}
