//! Reduction to sparse extended instances and per-client radius bounds.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::model::{nearest_vector_pair, ClusteringInstance};
use crate::rational::Rational;

/// `ρ`, `δ` and the guessed cost bound `U`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityParams {
    pub rho: Rational,
    pub delta: Rational,
    pub u: Rational,
}

impl SparsityParams {
    pub fn new(rho: Rational, delta: Rational, u: Rational) -> Result<Self> {
        let half = Rational::new(1, 2);
        if !rho.is_positive() || rho >= half {
            return Err(Error::BadParams(format!("rho must lie in (0, 1/2), got {rho}")));
        }
        if !delta.is_positive() || delta >= half {
            return Err(Error::BadParams(format!("delta must lie in (0, 1/2), got {delta}")));
        }
        if u.is_negative() {
            return Err(Error::BadParams(format!("U must be nonnegative, got {u}")));
        }
        Ok(SparsityParams { rho, delta, u })
    }

    pub fn with_u(&self, u: Rational) -> Self {
        SparsityParams { u, ..self.clone() }
    }

    pub fn rho_u(&self) -> Rational {
        &self.rho * &self.u
    }

    /// `(1 + δ/2)^q · U`.
    pub fn u_tilde(&self, q: u32) -> Rational {
        (Rational::one() + &self.delta / Rational::from_int(2)).pow(q) * &self.u
    }
}

/// Final radius caps `r` and the pre-inflation values `r_hat`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RadiusBounds {
    pub r: Vec<Rational>,
    pub r_hat: Vec<Rational>,
}

/// One guessed extended instance with its kept clients and pre-opened facilities.
#[derive(Debug, Clone)]
pub struct GuessBranch {
    /// Original indices of the clients in `C′`, ascending.
    pub kept: Vec<usize>,
    /// Original indices of the removed clients, ascending.
    pub removed: Vec<usize>,
    pub pre_opened: Vec<usize>,
    pub m_prime: usize,
    /// Removed balls as (point, radius) in the original instance.
    pub balls: Vec<(usize, Rational)>,
    /// The extended instance on `C′` with budget `m′` and `S0 = pre_opened`.
    pub instance: ClusteringInstance,
}

impl GuessBranch {
    /// The original instance itself, pre-opening its own `S0`.
    pub fn identity(inst: &ClusteringInstance) -> Self {
        let kept: Vec<usize> = (0..inst.num_clients()).collect();
        GuessBranch {
            kept,
            removed: vec![],
            pre_opened: inst.pre_opened().to_vec(),
            m_prime: inst.m(),
            balls: vec![],
            instance: inst.clone(),
        }
    }

    fn build(inst: &ClusteringInstance, removed: &BTreeSet<usize>, pre_opened: Vec<usize>, m_prime: usize, balls: Vec<(usize, Rational)>) -> Result<Self> {
        let kept: Vec<usize> = (0..inst.num_clients()).filter(|j| !removed.contains(j)).collect();
        let mut pre_opened = pre_opened;
        pre_opened.sort_unstable();
        pre_opened.dedup();
        let instance = inst.restrict_clients(&kept, m_prime, pre_opened.clone())?;
        Ok(GuessBranch { kept, removed: removed.iter().copied().collect(), pre_opened, m_prime, balls, instance })
    }

    pub fn id(&self) -> String {
        let balls: Vec<String> = self.balls.iter().map(|(p, r)| format!("{p}@{r}")).collect();
        let pre: Vec<String> = self.pre_opened.iter().map(|i| i.to_string()).collect();
        format!("balls[{}] pre[{}] m'={}", balls.join(","), pre.join(","), self.m_prime)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsifyReport {
    pub star_preopened: Vec<usize>,
    pub iterations: usize,
}

fn ball(inst: &ClusteringInstance, p: usize, r: &Rational, within: &BTreeSet<usize>) -> Vec<usize> {
    within.iter().copied().filter(|&j| inst.d(p, inst.client_point(j)) <= r).collect()
}

/// Constructive sparsification given a solution `(S*, C*)` of cost at most `U`.
///
/// With `robust = false` the knapsack conditions apply: every client is served
/// and the ball test counts all of `C′`.
pub(crate) fn sparsify(
    inst: &ClusteringInstance,
    s_star: &[usize],
    c_star: &[usize],
    params: &SparsityParams,
    robust: bool,
) -> Result<(GuessBranch, SparsifyReport)> {
    let q = inst.q();
    let pair = nearest_vector_pair(inst, s_star)?;
    let cq = |p: usize| pair.c[p].pow(q);
    let cost: Rational = c_star.iter().map(|&j| cq(inst.client_point(j))).sum();
    if cost > params.u {
        return Err(Error::SolutionCostExceedsU { cost: cost.to_string(), bound: params.u.to_string() });
    }
    let rho_u = params.rho_u();
    let c_star_set: BTreeSet<usize> = c_star.iter().copied().collect();
    let mut pre: BTreeSet<usize> = inst.pre_opened().iter().copied().collect();
    let mut star_preopened = Vec::new();
    for &i in s_star {
        let star: Rational = c_star.iter().filter(|&&j| pair.kappa[inst.client_point(j)] == i).map(|&j| cq(inst.client_point(j))).sum();
        if star > rho_u {
            star_preopened.push(i);
            pre.insert(i);
        }
    }
    let mut kept: BTreeSet<usize> = (0..inst.num_clients()).collect();
    let mut balls = Vec::new();
    let mut iterations = 0;
    loop {
        let counted: BTreeSet<usize> = if robust { kept.intersection(&c_star_set).copied().collect() } else { kept.clone() };
        let violator = (0..inst.num_points()).find(|&p| {
            let radius = &params.delta * &pair.c[p];
            let n = ball(inst, p, &radius, &counted).len();
            Rational::from(n) * cq(p) > rho_u
        });
        let Some(p) = violator else { break };
        iterations += 1;
        let radius = &params.delta * &pair.c[p];
        pre.insert(pair.kappa[p]);
        for j in ball(inst, p, &radius, &kept) {
            kept.remove(&j);
        }
        balls.push((p, radius));
    }
    let removed: BTreeSet<usize> = (0..inst.num_clients()).filter(|j| !kept.contains(j)).collect();
    let m_prime = if robust { kept.intersection(&c_star_set).count() } else { kept.len() };
    let mut branch = GuessBranch::build(inst, &removed, pre.into_iter().collect(), m_prime, balls)?;
    if !robust {
        branch.instance = branch.instance.with_budget(None, m_prime)?;
    }
    Ok((branch, SparsifyReport { star_preopened, iterations }))
}

/// Sparsifies against a robust solution `(S*, C*)`.
pub fn sparsify_with_oracle(
    inst: &ClusteringInstance,
    s_star: &[usize],
    c_star: &[usize],
    params: &SparsityParams,
) -> Result<(GuessBranch, SparsifyReport)> {
    sparsify(inst, s_star, c_star, params, true)
}

/// Exhaustive check of the sparsity conditions of `branch` w.r.t. `S*` and the
/// branch-local served set (indices into `branch.instance` clients).
pub fn check_sparse(branch: &GuessBranch, s_star: &[usize], c_star_local: &[usize], params: &SparsityParams) -> std::result::Result<(), String> {
    let inst = &branch.instance;
    let q = inst.q();
    let pair = nearest_vector_pair(inst, s_star).map_err(|e| e.to_string())?;
    let rho_u = params.rho_u();
    let served: BTreeSet<usize> = c_star_local.iter().copied().collect();
    for &i in s_star {
        if branch.pre_opened.contains(&i) {
            continue;
        }
        let star: Rational = served
            .iter()
            .filter(|&&j| pair.kappa[inst.client_point(j)] == i)
            .map(|&j| pair.c[inst.client_point(j)].pow(q))
            .sum();
        if star > rho_u {
            return Err(format!("facility {i} has star cost {star} > {rho_u}"));
        }
    }
    for p in 0..inst.num_points() {
        let radius = &params.delta * &pair.c[p];
        let n = ball(inst, p, &radius, &served).len();
        let load = Rational::from(n) * pair.c[p].pow(q);
        if load > rho_u {
            return Err(format!("point {p} has ball load {load} > {rho_u}"));
        }
    }
    Ok(())
}

/// Reconnection bound: `(1−δ)^q/(1+δ)^q · Σ_{C*∖C′} d^q(j,S0) + Σ_{C*∩C′} d^q(j,S*) ≤ U`.
pub fn check_reconnect_bound(inst: &ClusteringInstance, branch: &GuessBranch, s_star: &[usize], c_star: &[usize], params: &SparsityParams) -> std::result::Result<(), String> {
    let q = inst.q();
    let star = nearest_vector_pair(inst, s_star).map_err(|e| e.to_string())?;
    let mut lhs = Rational::zero();
    let removed: BTreeSet<usize> = branch.removed.iter().copied().collect();
    let s0 = if branch.pre_opened.is_empty() { None } else { Some(nearest_vector_pair(inst, &branch.pre_opened).map_err(|e| e.to_string())?) };
    let shrink = ((Rational::one() - &params.delta) / (Rational::one() + &params.delta)).pow(q);
    for &j in c_star {
        let p = inst.client_point(j);
        if removed.contains(&j) {
            let Some(s0) = &s0 else {
                return Err(format!("client {j} removed with no pre-opened facility"));
            };
            lhs += &shrink * s0.c[p].pow(q);
        } else {
            lhs += star.c[p].pow(q);
        }
    }
    if lhs > params.u {
        return Err(format!("reconnection bound {lhs} exceeds U = {}", params.u));
    }
    Ok(())
}

/// Branch caps for exhaustive guessing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationCaps {
    pub max_balls: usize,
    pub max_preopen: usize,
}

impl Default for EnumerationCaps {
    fn default() -> Self {
        EnumerationCaps { max_balls: 2, max_preopen: 2 }
    }
}

/// Removed clients with the balls that removed them.
type Removal = (BTreeSet<usize>, Vec<(usize, Rational)>);

fn subsets_up_to<T: Clone>(items: &[T], cap: usize) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = vec![vec![]];
    let mut frontier: Vec<(Vec<T>, usize)> = vec![(vec![], 0)];
    for _ in 0..cap {
        let mut next = Vec::new();
        for (set, start) in &frontier {
            for (idx, item) in items.iter().enumerate().skip(*start) {
                let mut s = set.clone();
                s.push(item.clone());
                next.push((s, idx + 1));
            }
        }
        out.extend(next.iter().map(|(s, _)| s.clone()));
        frontier = next;
    }
    out
}

/// Every branch obtained by removing at most `max_balls` client balls
/// `Ball_C(p, δr)` (`r` a nonzero facility-point distance), pre-opening at most
/// `max_preopen` extra facilities, and every `m′ ∈ 0..=|C′|`.
///
/// Ordered by number of balls, then ball indices, then pre-open set size and
/// members, then `m′`. Identical removal sets are produced once.
pub fn enumerate_sparse_instances<'a>(
    inst: &'a ClusteringInstance,
    params: &SparsityParams,
    caps: EnumerationCaps,
) -> impl Iterator<Item = GuessBranch> + 'a {
    enumerate_sparse_instances_where(inst, params, caps, |_, _, _| true)
}

/// Same order as [`enumerate_sparse_instances`], building only the branches
/// for which `keep(removed, pre_opened, m′)` holds.
pub fn enumerate_sparse_instances_where<'a>(
    inst: &'a ClusteringInstance,
    params: &SparsityParams,
    caps: EnumerationCaps,
    keep: impl Fn(&BTreeSet<usize>, &[usize], usize) -> bool + Clone + 'a,
) -> impl Iterator<Item = GuessBranch> + 'a {
    let nf = inst.num_facilities();
    let radii: BTreeSet<Rational> = (0..nf)
        .flat_map(|i| (0..inst.num_points()).map(move |p| (i, p)))
        .map(|(i, p)| inst.d(i, p).clone())
        .filter(|d| d.is_positive())
        .map(|d| &params.delta * d)
        .collect();
    let all: BTreeSet<usize> = (0..inst.num_clients()).collect();
    let mut distinct: Vec<(usize, Rational, BTreeSet<usize>)> = Vec::new();
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    for p in 0..inst.num_points() {
        for r in &radii {
            let members = ball(inst, p, r, &all);
            if !members.is_empty() && seen.insert(members.clone()) {
                distinct.push((p, r.clone(), members.into_iter().collect()));
            }
        }
    }
    let mut removals: Vec<Removal> = Vec::new();
    let mut seen_unions: BTreeSet<Vec<usize>> = BTreeSet::new();
    for combo in subsets_up_to(&(0..distinct.len()).collect::<Vec<_>>(), caps.max_balls) {
        let mut union = BTreeSet::new();
        for &b in &combo {
            union.extend(distinct[b].2.iter().copied());
        }
        if seen_unions.insert(union.iter().copied().collect()) {
            removals.push((union, combo.iter().map(|&b| (distinct[b].0, distinct[b].1.clone())).collect()));
        }
    }
    let base_pre = inst.pre_opened().to_vec();
    let optional: Vec<usize> = (0..nf).filter(|i| !base_pre.contains(i)).collect();
    let pre_sets: Vec<Vec<usize>> = subsets_up_to(&optional, caps.max_preopen)
        .into_iter()
        .map(|mut s| {
            s.extend(base_pre.iter().copied());
            s.sort_unstable();
            s
        })
        .collect();
    removals.into_iter().flat_map(move |(removed, balls)| {
        let pre_sets = pre_sets.clone();
        let kept = inst.num_clients() - removed.len();
        let keep = keep.clone();
        pre_sets.into_iter().flat_map(move |pre| {
            let removed = removed.clone();
            let balls = balls.clone();
            let keep = keep.clone();
            let (removed_k, pre_k) = (removed.clone(), pre.clone());
            (0..=kept)
                .filter(move |&m_prime| keep(&removed_k, &pre_k, m_prime))
                .filter_map(move |m_prime| GuessBranch::build(inst, &removed, pre.clone(), m_prime, balls.clone()).ok())
        })
    })
}

/// Greedy radius construction over the nonzero facility-client distances in
/// decreasing order; clients visited in ascending index.
pub fn construct_r(branch: &GuessBranch, params: &SparsityParams) -> RadiusBounds {
    let inst = &branch.instance;
    let q = inst.q();
    let nc = inst.num_clients();
    let one = Rational::one();
    let four = Rational::from_int(4);
    let shrink = (&one - &params.delta / &four).pow(q);
    let rho_u = params.rho_u();
    let mut r_hat = vec![Rational::zero(); nc];
    let mut levels = inst.fc_distance_set();
    levels.reverse();
    for t in &levels {
        let radius = &params.delta * t / &four;
        let weight = &shrink * t.pow(q);
        // Tightness threshold: a ball may hold at most `cap` clients with R̂ ≥ t.
        let members: Vec<Vec<usize>> = (0..nc)
            .map(|j| (0..inst.num_points()).filter(|&p| inst.d(p, inst.client_point(j)) <= &radius).collect())
            .collect();
        let mut count = vec![0usize; inst.num_points()];
        for j in 0..nc {
            if r_hat[j].is_positive() {
                for &p in &members[j] {
                    count[p] += 1;
                }
            }
        }
        for j in 0..nc {
            if r_hat[j].is_positive() {
                continue;
            }
            let fits = members[j].iter().all(|&p| Rational::from(count[p] + 1) * &weight <= rho_u);
            if fits {
                r_hat[j] = t.clone();
                for &p in &members[j] {
                    count[p] += 1;
                }
            }
        }
    }
    let inflate = &one + Rational::new(3, 4) * &params.delta;
    let r = r_hat.iter().map(|v| v * &inflate).collect();
    RadiusBounds { r, r_hat }
}

/// Pre-inflation sparsity of `R̂` at every `t` in the distance set and every point.
pub fn check_r_hat_sparsity(inst: &ClusteringInstance, bounds: &RadiusBounds, params: &SparsityParams) -> std::result::Result<(), String> {
    let q = inst.q();
    let shrink = (Rational::one() - &params.delta / Rational::from_int(4)).pow(q);
    for t in inst.fc_distance_set() {
        let radius = &params.delta * &t / Rational::from_int(4);
        for p in 0..inst.num_points() {
            let n = (0..inst.num_clients())
                .filter(|&j| bounds.r_hat[j] >= t && inst.d(p, inst.client_point(j)) <= &radius)
                .count();
            if Rational::from(n) * &shrink * t.pow(q) > params.rho_u() {
                return Err(format!("{n} clients with R̂ ≥ {t} near point {p}"));
            }
        }
    }
    Ok(())
}

/// Final-radius sparsity at every `t ∈ {R_j > 0} ∪ distance set` and every point.
pub fn check_radius_sparsity(inst: &ClusteringInstance, bounds: &RadiusBounds, params: &SparsityParams) -> std::result::Result<(), String> {
    let q = inst.q();
    let one = Rational::one();
    let quarter_delta = &params.delta / Rational::from_int(4);
    let three_quarter_delta = Rational::new(3, 4) * &params.delta;
    let shrink = (&one - &quarter_delta).pow(q);
    let cap = &params.rho * (&one + &three_quarter_delta).pow(q) * &params.u;
    let denom = Rational::from_int(4) + Rational::from_int(3) * &params.delta;
    let mut ts: BTreeSet<Rational> = inst.fc_distance_set().into_iter().collect();
    ts.extend(bounds.r.iter().filter(|r| r.is_positive()).cloned());
    for t in ts {
        let radius = &params.delta * &t / &denom;
        for p in 0..inst.num_points() {
            let n = (0..inst.num_clients())
                .filter(|&j| bounds.r[j] >= t && inst.d(p, inst.client_point(j)) <= &radius)
                .count();
            if Rational::from(n) * &shrink * t.pow(q) > cap {
                return Err(format!("{n} clients with R ≥ {t} near point {p}"));
            }
        }
    }
    Ok(())
}

/// Largest `R` with `|Ball_C(j, δR)| · R ≤ ρU`, taken as the supremum: the
/// largest candidate `c ∈ {ρU/s} ∪ {d(j,j′)/δ}` whose open ball satisfies the
/// bound.
pub fn knapsack_r(inst: &ClusteringInstance, params: &SparsityParams) -> RadiusBounds {
    let nc = inst.num_clients();
    let rho_u = params.rho_u();
    let mut r = vec![Rational::zero(); nc];
    if rho_u.is_positive() {
        for (j, rj) in r.iter_mut().enumerate() {
            let pj = inst.client_point(j);
            let mut candidates: BTreeSet<Rational> = (1..=nc).map(|s| &rho_u / Rational::from(s)).collect();
            for j2 in 0..nc {
                let d = inst.d(pj, inst.client_point(j2));
                if d.is_positive() {
                    candidates.insert(d / &params.delta);
                }
            }
            for c in candidates.into_iter().rev() {
                let reach = &params.delta * &c;
                let inside = (0..nc).filter(|&j2| *inst.d(pj, inst.client_point(j2)) < reach).count();
                if Rational::from(inside) * &c <= rho_u {
                    *rj = c;
                    break;
                }
            }
        }
    }
    RadiusBounds { r_hat: r.clone(), r }
}

/// Geometric guesses `L·(1+ε)^t` from the smallest nonzero `d^q` up to the
/// first value covering `Σ_j max_i d^q(i,j)`. Zero is probed separately.
pub fn u_grid(inst: &ClusteringInstance, epsilon: &Rational) -> Vec<Rational> {
    let q = inst.q();
    let Some(low) = inst.fc_distance_set().first().map(|d| d.pow(q)) else {
        return vec![];
    };
    let high: Rational = (0..inst.num_clients())
        .map(|j| (0..inst.num_facilities()).map(|i| inst.dq_fc(i, j).clone()).max().unwrap_or_default())
        .sum();
    let step = Rational::one() + epsilon;
    let mut out = vec![low];
    while *out.last().expect("grid is nonempty") < high {
        let next = out.last().expect("grid is nonempty") * &step;
        out.push(next);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate;
    use crate::oracle;
    use proptest::prelude::*;

    fn r(n: i64) -> Rational {
        Rational::from_int(n)
    }

    fn params(u: Rational) -> SparsityParams {
        SparsityParams::new(Rational::new(1, 10), Rational::new(1, 4), u).unwrap()
    }

    fn one_client(dist: i64) -> ClusteringInstance {
        let rows = vec![vec![r(0), r(dist)], vec![r(dist), r(0)]];
        let (f, c) = ClusteringInstance::default_ids(1, 1);
        ClusteringInstance::new(f, c, rows, Some(1), 1, 1, vec![]).unwrap()
    }

    #[test]
    fn params_are_validated() {
        assert!(SparsityParams::new(Rational::new(1, 2), Rational::new(1, 4), r(1)).is_err());
        assert!(SparsityParams::new(Rational::new(1, 10), r(0), r(1)).is_err());
        assert!(SparsityParams::new(Rational::new(1, 10), Rational::new(1, 4), r(-1)).is_err());
    }

    #[test]
    fn sparse_input_is_unchanged() {
        let fx = generate::gap_b(2).unwrap();
        let opt = oracle::brute_force(&fx.instance, &oracle::Constraint::Cardinality, 15).unwrap();
        let p = SparsityParams::new(Rational::new(1, 10), Rational::new(1, 4), r(1_000_000)).unwrap();
        let (branch, report) = sparsify_with_oracle(&fx.instance, &opt.best_open, &opt.best_served, &p).unwrap();
        assert!(branch.removed.is_empty());
        assert!(branch.pre_opened.is_empty());
        assert_eq!(report.iterations, 0);
        assert_eq!(branch.m_prime, fx.instance.m());
    }

    #[test]
    fn cost_above_u_is_rejected() {
        let fx = generate::gap_b(2).unwrap();
        let opt = oracle::brute_force(&fx.instance, &oracle::Constraint::Cardinality, 15).unwrap();
        let err = sparsify_with_oracle(&fx.instance, &opt.best_open, &opt.best_served, &params(r(1))).unwrap_err();
        assert!(matches!(err, Error::SolutionCostExceedsU { .. }));
    }

    /// Hand run on gap-b(2) (clients c0..c3 at f0, c4..c7 at f1, c8, c9 at f2)
    /// with `S* = {f0, f2}`, `C*` = the six collocated clients plus c4, c5, and `U = 3`.
    ///
    /// `ρU = 3/10`. Stars: f0 serves c4, c5 at distance 1, cost 2 > ρU, so f0 is
    /// pre-opened; f2 costs 0. Ball test: point f1 has `c* = 1` and its ball of
    /// radius 1/4 holds c4..c7, two of them in `C*`, load 2 > ρU: remove c4..c7 and
    /// pre-open `κ*(f1) = f0`. Point c4 is then examined but its ball is already gone.
    #[test]
    fn dense_cluster_is_removed() {
        let fx = generate::gap_b(2).unwrap();
        let inst = fx.instance.with_budget(Some(2), 8).unwrap();
        let c_star = vec![0, 1, 2, 3, 4, 5, 8, 9];
        let (branch, report) = sparsify_with_oracle(&inst, &[0, 2], &c_star, &params(r(3))).unwrap();
        assert_eq!(report.star_preopened, vec![0]);
        assert_eq!(branch.removed, vec![4, 5, 6, 7]);
        assert_eq!(branch.pre_opened, vec![0]);
        assert_eq!(branch.balls, vec![(1, Rational::new(1, 4))]);
        assert_eq!(branch.m_prime, 6);
        assert_eq!(report.iterations, 1);
    }

    #[test]
    fn iteration_count_bound() {
        for seed in 0..8 {
            let spec = generate::RandomSpec { facilities: 4, clients: 8, k: 2, m: 6, q: 1 + (seed % 2) as u32, max_weight: 10 };
            let inst = generate::random_metric(&spec, seed).unwrap();
            let opt = oracle::brute_force(&inst, &oracle::Constraint::Cardinality, 15).unwrap();
            let p = params(opt.opt_cost.clone());
            let (branch, report) = sparsify_with_oracle(&inst, &opt.best_open, &opt.best_served, &p).unwrap();
            let one = Rational::one();
            let bound = &one / (&p.rho * (&one - &p.delta).pow(inst.q())) + &one / &p.rho;
            assert!(Rational::from(report.iterations) < bound);
            let local: Vec<usize> = branch
                .kept
                .iter()
                .enumerate()
                .filter(|(_, j)| opt.best_served.contains(j))
                .map(|(pos, _)| pos)
                .collect();
            check_sparse(&branch, &opt.best_open, &local, &p).unwrap();
            check_reconnect_bound(&inst, &branch, &opt.best_open, &opt.best_served, &p).unwrap();
        }
    }

    #[test]
    fn zero_caps_yield_original_only() {
        let inst = generate::gap_b(2).unwrap().instance;
        let caps = EnumerationCaps { max_balls: 0, max_preopen: 0 };
        let branches: Vec<GuessBranch> = enumerate_sparse_instances(&inst, &params(r(5)), caps).collect();
        assert_eq!(branches.len(), inst.num_clients() + 1);
        assert!(branches.iter().all(|b| b.removed.is_empty() && b.pre_opened.is_empty()));
        let m_values: Vec<usize> = branches.iter().map(|b| b.m_prime).collect();
        assert_eq!(m_values, (0..=inst.num_clients()).collect::<Vec<_>>());
    }

    #[test]
    fn enumeration_contains_oracle_branch_and_respects_count_bound() {
        let rows = vec![
            vec![r(0), r(3), r(1), r(2), r(3)],
            vec![r(3), r(0), r(2), r(1), r(1)],
            vec![r(1), r(2), r(0), r(2), r(3)],
            vec![r(2), r(1), r(2), r(0), r(1)],
            vec![r(3), r(1), r(3), r(1), r(0)],
        ];
        let (f, c) = ClusteringInstance::default_ids(2, 3);
        let inst = ClusteringInstance::new(f, c, rows, Some(1), 2, 1, vec![]).unwrap();
        let opt = oracle::brute_force(&inst, &oracle::Constraint::Cardinality, 15).unwrap();
        let p = params(opt.opt_cost.clone());
        let (target, _) = sparsify_with_oracle(&inst, &opt.best_open, &opt.best_served, &p).unwrap();
        // Target: f1 pre-opened (star 2 > ρU), then singleton balls at c1 and c2.
        assert_eq!(target.removed, vec![1, 2]);
        assert_eq!(target.pre_opened, vec![1]);
        let caps = EnumerationCaps { max_balls: target.balls.len(), max_preopen: target.pre_opened.len() };
        let branches: Vec<GuessBranch> = enumerate_sparse_instances(&inst, &p, caps).collect();
        assert!(branches
            .iter()
            .any(|b| b.removed == target.removed && b.pre_opened == target.pre_opened && b.m_prime == target.m_prime));
        let caps = EnumerationCaps { max_balls: 1, max_preopen: 1 };
        let branches: Vec<GuessBranch> = enumerate_sparse_instances(&inst, &p, caps).collect();
        let distset = 3; // {1, 2, 3}
        let bound = inst.num_points() * distset * inst.num_facilities() * (inst.num_clients() + 1);
        assert!(branches.len() <= bound);
    }

    #[test]
    fn huge_budget_gives_max_radius() {
        let fx = generate::gap_b(2).unwrap();
        let branch = GuessBranch::identity(&fx.instance);
        let dmax = fx.instance.max_fc_distance();
        let u = Rational::from(fx.instance.num_clients()) * &dmax * Rational::from_int(100);
        let bounds = construct_r(&branch, &params(u));
        let inflate = Rational::one() + Rational::new(3, 16);
        for j in 0..fx.instance.num_clients() {
            assert_eq!(bounds.r_hat[j], dmax);
            assert_eq!(bounds.r[j], &dmax * &inflate);
        }
    }

    /// One client at distance 5, `ρU = 3`: `1 · (15/16) · 5 > 3`, so `R̂` stays 0.
    #[test]
    fn single_client_radius_stays_zero() {
        let inst = one_client(5);
        let branch = GuessBranch::identity(&inst);
        let bounds = construct_r(&branch, &params(r(30)));
        assert_eq!(bounds.r_hat, vec![r(0)]);
        assert_eq!(bounds.r, vec![r(0)]);
        // With ρU = 5 the same check passes: 15/16 · 5 ≤ 5.
        let bounds = construct_r(&branch, &params(r(50)));
        assert_eq!(bounds.r_hat, vec![r(5)]);
    }

    #[test]
    fn knapsack_radius_rules() {
        let inst = one_client(5);
        let p = params(r(20));
        assert_eq!(knapsack_r(&inst, &p).r, vec![r(2)]);
        // Three collocated clients: any ball holds all three, so R = ρU/3.
        let rows = vec![vec![r(0), r(1), r(1), r(1)], vec![r(1), r(0), r(0), r(0)], vec![r(1), r(0), r(0), r(0)], vec![r(1), r(0), r(0), r(0)]];
        let (f, c) = ClusteringInstance::default_ids(1, 3);
        let inst = ClusteringInstance::new(f, c, rows, None, 3, 1, vec![]).unwrap();
        let bounds = knapsack_r(&inst, &params(r(30)));
        assert_eq!(bounds.r, vec![r(1); 3]);
    }

    #[test]
    fn grid_is_geometric() {
        // Distances 1 and 8 from a single facility.
        let rows = vec![vec![r(0), r(1), r(7)], vec![r(1), r(0), r(7)], vec![r(7), r(7), r(0)]];
        let (f, c) = ClusteringInstance::default_ids(1, 2);
        let inst = ClusteringInstance::new(f, c, rows, Some(1), 1, 1, vec![]).unwrap();
        assert_eq!(u_grid(&inst, &r(1)), vec![r(1), r(2), r(4), r(8)]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn radius_bounds_are_sparse_and_monotone(seed in 0u64..1000, u1 in 1i64..40, extra in 0i64..40, q in 1u32..3) {
            let spec = generate::RandomSpec { facilities: 3, clients: 7, k: 2, m: 5, q, max_weight: 6 };
            let inst = generate::random_metric(&spec, seed).unwrap();
            let branch = GuessBranch::identity(&inst);
            let lo = construct_r(&branch, &params(r(u1)));
            let hi = construct_r(&branch, &params(r(u1 + extra)));
            prop_assert!(check_r_hat_sparsity(&inst, &lo, &params(r(u1))).is_ok());
            prop_assert!(check_radius_sparsity(&inst, &lo, &params(r(u1))).is_ok());
            let inflate = Rational::one() + Rational::new(3, 16);
            let distset = inst.fc_distance_set();
            for j in 0..inst.num_clients() {
                prop_assert!(lo.r[j] <= hi.r[j]);
                prop_assert_eq!(&lo.r[j], &(&lo.r_hat[j] * &inflate));
                prop_assert!(lo.r_hat[j].is_zero() || distset.contains(&lo.r_hat[j]));
            }
        }
    }
}
