//! Strengthened LP and facility splitting feed a randomly discretized metric
//! into the iterative rounding loop, which ends at an almost-integral vertex.
//!
//! Facility copies are indexed `0..copies`; every copy remembers the original
//! facility it sits on. Clients `0..num_real` are the instance clients, the
//! remaining ones are virtual clients standing for pre-opened facilities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::check::InvariantLog;
use crate::error::{Error, Result};
use crate::lp::{count_fractional, solve_vertex, LinearProgram, Relation, VertexSolution};
use crate::model::{Budget, ClusteringInstance};
use crate::preprocess::{RadiusBounds, SparsityParams};
use crate::rational::Rational;

/// Default `τ` for the given exponent.
pub fn default_tau(q: u32) -> Rational {
    match q {
        1 => Rational::new(23603, 10000),
        _ => Rational::new(224434, 100000),
    }
}

/// Extra constraint families on top of the basic relaxation.
#[derive(Debug, Clone, Copy)]
pub enum Strengthening<'a> {
    /// The basic relaxation only (`S0 = ∅`, no radius caps, `Ũ = ∞`).
    None,
    /// Radius caps and star rows at `ρŨ`. Pre-opened facilities are fixed open.
    Robust { params: &'a SparsityParams, radius: &'a RadiusBounds },
    /// Radius caps and star rows at `ρU` (`q = 1`). Pre-opened facilities are fixed open.
    Knapsack { params: &'a SparsityParams, radius: &'a RadiusBounds },
}

impl Strengthening<'_> {
    /// Bound on one star: `ρŨ` or `ρU`; `None` when unbounded.
    pub fn star_cap(&self, q: u32) -> Option<Rational> {
        match self {
            Strengthening::None => None,
            Strengthening::Robust { params, .. } => Some(&params.rho * params.u_tilde(q)),
            Strengthening::Knapsack { params, .. } => Some(params.rho_u()),
        }
    }

    pub fn radius(&self) -> Option<&RadiusBounds> {
        match self {
            Strengthening::None => None,
            Strengthening::Robust { radius, .. } | Strengthening::Knapsack { radius, .. } => Some(radius),
        }
    }
}

/// Strengthened LP with the variable map back to `(i, j)` pairs.
#[derive(Debug, Clone)]
pub struct StrongLp {
    pub lp: LinearProgram,
    pub y_vars: Vec<usize>,
    /// `(i, j, var)` for every connection variable, in `(i, j)` order.
    pub x_vars: Vec<(usize, usize, usize)>,
    pub pre_opened: Vec<usize>,
    pub star_cap: Option<Rational>,
}

/// An LP solution in facility/connection form.
#[derive(Debug, Clone)]
pub struct FractionalSolution {
    pub y: Vec<Rational>,
    /// Positive connections `(i, j, x_ij)` in `(i, j)` order.
    pub x: Vec<(usize, usize, Rational)>,
    pub objective: Rational,
}

impl StrongLp {
    pub fn extract(&self, sol: &VertexSolution) -> FractionalSolution {
        let y = self.y_vars.iter().map(|&v| sol.values[v].clone()).collect();
        let x = self
            .x_vars
            .iter()
            .filter(|&&(_, _, v)| sol.values[v].is_positive())
            .map(|&(i, j, v)| (i, j, sol.values[v].clone()))
            .collect();
        FractionalSolution { y, x, objective: sol.objective.clone() }
    }
}

fn push_budget_rows(lp: &mut LinearProgram, budget: &Budget, vars: &[(usize, usize)]) {
    // `vars` lists (variable, facility) pairs.
    match budget {
        Budget::Cardinality(k) => {
            let coeffs = vars.iter().map(|&(v, _)| (v, Rational::one())).collect();
            lp.add_constraint("budget", coeffs, Relation::Le, Rational::from(*k));
        }
        Budget::Partition(pm) => {
            for (g, class) in pm.classes.iter().enumerate() {
                let coeffs: Vec<(usize, Rational)> = vars.iter().filter(|(_, i)| class.contains(i)).map(|&(v, _)| (v, Rational::one())).collect();
                lp.add_constraint(format!("class_{g}"), coeffs, Relation::Le, Rational::from(pm.capacities[g]));
            }
        }
        Budget::Knapsack(kn) => {
            let coeffs = vars.iter().map(|&(v, i)| (v, kn.weights[i].clone())).collect();
            lp.add_constraint("knapsack", coeffs, Relation::Le, kn.budget.clone());
        }
    }
}

/// Builds the relaxation. A cardinality budget keeps the outlier model (serve at
/// least `m`); matroid and knapsack budgets serve every client exactly once.
pub fn build_strong_lp(inst: &ClusteringInstance, budget: &Budget, strength: &Strengthening) -> StrongLp {
    let nf = inst.num_facilities();
    let nc = inst.num_clients();
    let q = inst.q();
    let pre_opened: Vec<usize> = match strength {
        Strengthening::None => vec![],
        _ => inst.pre_opened().to_vec(),
    };
    let star_cap = strength.star_cap(q);
    let radius = strength.radius();
    let mut lp = LinearProgram::new();
    let y_vars: Vec<usize> = (0..nf).map(|i| lp.add_var(format!("y_{i}"), Rational::zero(), Some(Rational::one()))).collect();
    let mut x_vars = Vec::new();
    for i in 0..nf {
        let pre = pre_opened.contains(&i);
        for j in 0..nc {
            if let Some(rb) = radius {
                if *inst.d_fc(i, j) > rb.r[j] {
                    continue;
                }
            }
            if let (Some(cap), false) = (&star_cap, pre) {
                if inst.dq_fc(i, j) > cap {
                    continue;
                }
            }
            let v = lp.add_var(format!("x_{i}_{j}"), inst.dq_fc(i, j).clone(), None);
            x_vars.push((i, j, v));
        }
    }
    let pairs: Vec<(usize, usize)> = y_vars.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    push_budget_rows(&mut lp, budget, &pairs);
    for &(i, j, v) in &x_vars {
        lp.add_constraint(format!("open_{i}_{j}"), vec![(v, Rational::one()), (y_vars[i], -Rational::one())], Relation::Le, Rational::zero());
    }
    let full_cover = !matches!(budget, Budget::Cardinality(_));
    for j in 0..nc {
        let coeffs: Vec<(usize, Rational)> = x_vars.iter().filter(|t| t.1 == j).map(|&(_, _, v)| (v, Rational::one())).collect();
        let rel = if full_cover { Relation::Eq } else { Relation::Le };
        lp.add_constraint(format!("assign_{j}"), coeffs, rel, Rational::one());
    }
    if !full_cover {
        let coeffs = x_vars.iter().map(|&(_, _, v)| (v, Rational::one())).collect();
        lp.add_constraint("coverage", coeffs, Relation::Ge, Rational::from(inst.m()));
    }
    for &i in &pre_opened {
        lp.add_constraint(format!("preopen_{i}"), vec![(y_vars[i], Rational::one())], Relation::Eq, Rational::one());
    }
    if let Some(cap) = &star_cap {
        for i in (0..nf).filter(|i| !pre_opened.contains(i)) {
            let mut coeffs: Vec<(usize, Rational)> = x_vars.iter().filter(|t| t.0 == i).map(|&(_, j, v)| (v, inst.dq_fc(i, j).clone())).collect();
            coeffs.push((y_vars[i], -cap.clone()));
            lp.add_constraint(format!("star_{i}"), coeffs, Relation::Le, Rational::zero());
        }
    }
    StrongLp { lp, y_vars, x_vars, pre_opened, star_cap }
}

/// `y*` over facility copies with the per-client copy sets `F_j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSolution {
    pub y: Vec<Rational>,
    pub origin: Vec<usize>,
    /// Sorted copy indices per client.
    pub f_sets: Vec<Vec<usize>>,
}

impl SplitSolution {
    pub fn num_copies(&self) -> usize {
        self.y.len()
    }

    /// `Σ_{j: c ∈ F_j} d^q(origin(c), j)`.
    pub fn star_cost(&self, inst: &ClusteringInstance, c: usize) -> Rational {
        self.f_sets
            .iter()
            .enumerate()
            .filter(|(_, f)| f.binary_search(&c).is_ok())
            .map(|(j, _)| inst.dq_fc(self.origin[c], j).clone())
            .sum()
    }

    pub fn mass(&self, set: &[usize]) -> Rational {
        set.iter().map(|&c| &self.y[c]).sum()
    }
}

/// Splits facilities into collocated copies so that every positive `x_ij`
/// equals the total `y*` of the copies placed in `F_j`.
pub fn split_facilities(inst: &ClusteringInstance, frac: &FractionalSolution) -> SplitSolution {
    let nf = inst.num_facilities();
    let mut y: Vec<Rational> = Vec::new();
    let mut origin: Vec<usize> = Vec::new();
    let mut star: Vec<Rational> = Vec::new();
    let mut member_of: Vec<Vec<usize>> = Vec::new();
    let mut by_facility: Vec<Vec<usize>> = vec![vec![]; nf];
    let mut f_sets: Vec<Vec<usize>> = vec![vec![]; inst.num_clients()];
    for (i, yi) in frac.y.iter().enumerate() {
        if yi.is_positive() {
            by_facility[i].push(y.len());
            y.push(yi.clone());
            origin.push(i);
            star.push(Rational::zero());
            member_of.push(vec![]);
        }
    }
    for (i, j, xij) in &frac.x {
        let (i, j) = (*i, *j);
        let mut order = by_facility[i].clone();
        order.sort_by(|&a, &b| star[a].cmp(&star[b]).then(a.cmp(&b)));
        let mut need = xij.clone();
        let mut chosen = Vec::new();
        for c in order {
            if !need.is_positive() {
                break;
            }
            if y[c] <= need {
                need -= &y[c];
            } else {
                let rest = &y[c] - &need;
                y[c] = need.clone();
                let twin = y.len();
                y.push(rest);
                origin.push(i);
                star.push(star[c].clone());
                member_of.push(member_of[c].clone());
                for &j2 in &member_of[c] {
                    f_sets[j2].push(twin);
                }
                by_facility[i].push(twin);
                need = Rational::zero();
            }
            chosen.push(c);
        }
        for c in chosen {
            f_sets[j].push(c);
            member_of[c].push(j);
            star[c] += inst.dq_fc(i, j);
        }
    }
    for f in &mut f_sets {
        f.sort_unstable();
    }
    SplitSolution { y, origin, f_sets }
}

/// Checks the splitting guarantees against the source solution.
pub fn check_split(
    inst: &ClusteringInstance,
    split: &SplitSolution,
    frac: &FractionalSolution,
    budget: &Budget,
    strong: &StrongLp,
    log: &mut InvariantLog,
) -> Result<()> {
    let step = "split";
    let one = Rational::one();
    for (j, f) in split.f_sets.iter().enumerate() {
        let m = split.mass(f);
        log.record("split-client-bound", step, m <= one, || format!("client {j} has y*(F_j) = {m}"))?;
        if !matches!(budget, Budget::Cardinality(_)) {
            log.record("split-coverage", step, m.is_one(), || format!("client {j} has y*(F_j) = {m}"))?;
        }
    }
    let opened: Vec<(usize, Rational)> = split.origin.iter().zip(&split.y).map(|(&i, v)| (i, v.clone())).collect();
    let budget_ok = match budget {
        Budget::Cardinality(k) => split.y.iter().sum::<Rational>() <= Rational::from(*k),
        Budget::Partition(pm) => pm.classes.iter().zip(&pm.capacities).all(|(class, &cap)| {
            opened.iter().filter(|(i, _)| class.contains(i)).map(|(_, v)| v).sum::<Rational>() <= Rational::from(cap)
        }),
        Budget::Knapsack(kn) => opened.iter().map(|(i, v)| &kn.weights[*i] * v).sum::<Rational>() <= kn.budget,
    };
    log.record("split-budget", step, budget_ok, || "copies exceed the facility budget".into())?;
    if matches!(budget, Budget::Cardinality(_)) {
        let cover: Rational = split.f_sets.iter().map(|f| split.mass(f)).sum();
        log.record("split-coverage", step, cover >= Rational::from(inst.m()), || format!("coverage {cover} < m = {}", inst.m()))?;
    }
    let cost: Rational = split
        .f_sets
        .iter()
        .enumerate()
        .flat_map(|(j, f)| f.iter().map(move |&c| (j, c)))
        .map(|(j, c)| inst.dq_fc(split.origin[c], j) * &split.y[c])
        .sum();
    log.record("split-cost", step, cost <= frac.objective, || format!("split cost {cost} > LP value {}", frac.objective))?;
    for &i in &strong.pre_opened {
        let mass: Rational = (0..split.num_copies()).filter(|&c| split.origin[c] == i).map(|c| &split.y[c]).sum();
        log.record("split-preopen", step, mass.is_one(), || format!("copies of pre-opened {i} sum to {mass}"))?;
    }
    if let Some(cap) = &strong.star_cap {
        let bound = Rational::from_int(2) * cap;
        for c in 0..split.num_copies() {
            if strong.pre_opened.contains(&split.origin[c]) {
                continue;
            }
            let s = split.star_cost(inst, c);
            log.record("split-star", step, s <= bound, || format!("copy {c} has star cost {s} > {bound}"))?;
        }
    }
    Ok(())
}

/// Offset `a = e^{u ln τ}` rounded to `bits` binary digits and clamped to `[1, τ)`.
pub fn offset_from_unit(u: f64, tau: &Rational, bits: u32) -> Rational {
    let raw = (u * tau.to_f64().ln()).exp();
    let a = Rational::approx_f64(raw, bits).unwrap_or_else(Rational::one);
    if a < Rational::one() {
        return Rational::one();
    }
    if a >= *tau {
        let step = Rational::from_big(1.into(), num_bigint::BigInt::from(1u8) << bits as usize);
        return tau - step;
    }
    a
}

/// Seeded offset draw with `ln a` uniform on `[0, ln τ)`.
pub fn sample_offset(seed: u64, tau: &Rational) -> Rational {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: f64 = rng.gen();
    offset_from_unit(u, tau, 40)
}

/// Offsets with `ln a` on the grid `k/n · ln τ`, `k = 0..n`.
pub fn offset_grid(n: usize, tau: &Rational) -> Vec<Rational> {
    (0..n).map(|k| offset_from_unit(k as f64 / n as f64, tau, 40)).collect()
}

/// Levels `D_ℓ = unit · a · τ^ℓ` and the level of every facility-client pair.
///
/// `unit` is the smaller of 1 and the least nonzero facility-client distance,
/// so every nonzero distance is at least `unit` and `d′ ≤ τ·d` holds.
#[derive(Debug, Clone)]
pub struct DiscretizedMetric {
    pub tau: Rational,
    pub a: Rational,
    pub unit: Rational,
    values: Vec<Rational>,
    values_q: Vec<Rational>,
    levels: Vec<i64>,
    num_clients: usize,
    q: u32,
}

impl DiscretizedMetric {
    /// `D_ℓ` for `ℓ ≥ −2`.
    pub fn value(&self, level: i64) -> Rational {
        match level {
            -2 => -Rational::one(),
            -1 => Rational::zero(),
            l => self.values[l as usize].clone(),
        }
    }

    /// `D_ℓ^q` for `ℓ ≥ −1`.
    pub fn value_q(&self, level: i64) -> Rational {
        if level < 0 {
            Rational::zero()
        } else {
            self.values_q[level as usize].clone()
        }
    }

    pub fn level(&self, i: usize, j: usize) -> i64 {
        self.levels[i * self.num_clients + j]
    }

    pub fn d_prime(&self, i: usize, j: usize) -> Rational {
        self.value(self.level(i, j))
    }

    pub fn d_prime_q(&self, i: usize, j: usize) -> Rational {
        self.value_q(self.level(i, j))
    }

    pub fn max_level(&self) -> i64 {
        self.values.len() as i64 - 1
    }
}

/// Smallest `ℓ ≥ −1` with `d ≤ D_ℓ`, extending `values` as needed.
fn level_of(d: &Rational, values: &mut Vec<Rational>, tau: &Rational) -> i64 {
    if d.is_zero() {
        return -1;
    }
    while values.last().expect("level 0 present") < d {
        let next = values.last().expect("level 0 present") * tau;
        values.push(next);
    }
    values.partition_point(|v| v < d) as i64
}

pub fn discretize(inst: &ClusteringInstance, tau: &Rational, a: &Rational) -> DiscretizedMetric {
    let unit = inst.fc_distance_set().first().cloned().unwrap_or_else(Rational::one).min(Rational::one());
    let mut values = vec![&unit * a];
    let (nf, nc) = (inst.num_facilities(), inst.num_clients());
    let mut levels = Vec::with_capacity(nf * nc);
    for i in 0..nf {
        for j in 0..nc {
            levels.push(level_of(inst.d_fc(i, j), &mut values, tau));
        }
    }
    let values_q = values.iter().map(|v| v.pow(inst.q())).collect();
    DiscretizedMetric { tau: tau.clone(), a: a.clone(), unit, values, values_q, levels, num_clients: nc, q: inst.q() }
}

impl DiscretizedMetric {
    /// Level of an arbitrary distance on this scale, for standalone use.
    pub fn level_of_distance(&self, d: &Rational) -> i64 {
        let mut values = self.values.clone();
        level_of(d, &mut values, &self.tau)
    }

    /// `D_ℓ` beyond the precomputed range.
    pub fn value_extended(&self, level: i64) -> Rational {
        if level < self.values.len() as i64 {
            return self.value(level);
        }
        let mut v = self.values.last().expect("level 0 present").clone();
        for _ in self.values.len() as i64..=level {
            v = &v * &self.tau;
        }
        v
    }

    pub fn exponent(&self) -> u32 {
        self.q
    }
}

/// Budget rows of the iterated LP.
#[derive(Debug, Clone)]
pub enum IterBudget {
    /// `y(F) ≤ k` with coverage `≥ m`.
    Cardinality { k: usize, m: usize },
    /// Per-class capacities; every client fully served.
    Partition(crate::variants::PartitionMatroid),
    /// `Σ w y ≤ W`; every client fully served.
    Knapsack(crate::variants::KnapsackConstraint),
}

impl IterBudget {
    fn full_cover(&self) -> bool {
        !matches!(self, IterBudget::Cardinality { .. })
    }
}

/// State of the rounding loop.
#[derive(Debug, Clone)]
pub struct IterState {
    pub budget: IterBudget,
    pub disc: DiscretizedMetric,
    pub num_real: usize,
    pub origin: Vec<usize>,
    /// Facility behind each virtual client `num_real + v`.
    pub virtual_of: Vec<usize>,
    /// Indexed by real client.
    pub full: Vec<bool>,
    /// Indexed by real and virtual client.
    pub in_cstar: Vec<bool>,
    pub f: Vec<Vec<usize>>,
    pub b: Vec<Vec<usize>>,
    pub ell: Vec<i64>,
    pub y: Vec<Rational>,
    /// Radius caps `R_j`; `None` when unbounded.
    pub radius: Option<Vec<Rational>>,
    /// Distances `d(origin(c), j)` for real clients, indexed `[c][j]`.
    dist: Vec<Vec<Rational>>,
}

impl IterState {
    pub fn num_copies(&self) -> usize {
        self.origin.len()
    }

    pub fn num_clients_total(&self) -> usize {
        self.f.len()
    }

    /// Level of `d′(c, j)`; virtual clients see their own copies at level −1.
    pub fn copy_level(&self, c: usize, j: usize) -> i64 {
        if j < self.num_real {
            self.disc.level(self.origin[c], j)
        } else {
            -1
        }
    }

    pub fn copy_distance(&self, c: usize, j: usize) -> &Rational {
        &self.dist[c][j]
    }

    pub fn mass(&self, set: &[usize]) -> Rational {
        set.iter().map(|&c| &self.y[c]).sum()
    }

    fn inner_ball(&self, j: usize) -> Vec<usize> {
        let cut = self.ell[j];
        self.f[j].iter().copied().filter(|&c| self.copy_level(c, j) < cut).collect()
    }

    pub fn full_clients(&self) -> Vec<usize> {
        (0..self.num_real).filter(|&j| self.full[j]).collect()
    }

    pub fn partial_clients(&self) -> Vec<usize> {
        (0..self.num_real).filter(|&j| !self.full[j]).collect()
    }

    pub fn cstar(&self) -> Vec<usize> {
        (0..self.num_clients_total()).filter(|&j| self.in_cstar[j]).collect()
    }
}

pub fn init_iter_state(
    inst: &ClusteringInstance,
    split: &SplitSolution,
    disc: &DiscretizedMetric,
    budget: IterBudget,
    pre_opened: &[usize],
    radius: Option<&RadiusBounds>,
) -> IterState {
    let nc = inst.num_clients();
    let mut f = split.f_sets.clone();
    let mut ell: Vec<i64> = (0..nc)
        .map(|j| split.f_sets[j].iter().map(|&c| disc.level(split.origin[c], j)).max().unwrap_or(-1))
        .collect();
    for &s in pre_opened {
        f.push((0..split.num_copies()).filter(|&c| split.origin[c] == s).collect());
        ell.push(-1);
    }
    let total = f.len();
    let mut in_cstar = vec![false; total];
    for flag in in_cstar.iter_mut().skip(nc) {
        *flag = true;
    }
    let dist = split.origin.iter().map(|&i| (0..nc).map(|j| inst.d_fc(i, j).clone()).collect()).collect();
    IterState {
        budget,
        disc: disc.clone(),
        num_real: nc,
        origin: split.origin.clone(),
        virtual_of: pre_opened.to_vec(),
        full: vec![false; nc],
        in_cstar,
        f,
        b: vec![vec![]; total],
        ell,
        y: split.y.clone(),
        radius: radius.map(|r| r.r.clone()),
        dist,
    }
}

pub fn build_iter_lp(state: &IterState) -> LinearProgram {
    let mut lp = LinearProgram::new();
    let n = state.num_copies();
    let mut cost = vec![Rational::zero(); n];
    let mut offset = Rational::zero();
    for j in 0..state.num_real {
        if state.full[j] {
            let dl = state.disc.value_q(state.ell[j]);
            for &c in &state.b[j] {
                cost[c] += state.disc.d_prime_q(state.origin[c], j) - &dl;
            }
            offset += dl;
        } else {
            for &c in &state.f[j] {
                cost[c] += state.disc.d_prime_q(state.origin[c], j);
            }
        }
    }
    for (c, w) in cost.into_iter().enumerate() {
        lp.add_var(format!("y_{c}"), w, Some(Rational::one()));
    }
    lp.offset = offset;
    let ones = |set: &[usize]| -> Vec<(usize, Rational)> { set.iter().map(|&c| (c, Rational::one())).collect() };
    match &state.budget {
        IterBudget::Cardinality { k, .. } => {
            lp.add_constraint("budget", ones(&(0..n).collect::<Vec<_>>()), Relation::Le, Rational::from(*k));
        }
        IterBudget::Partition(pm) => {
            let class_of = pm.class_of();
            for (g, &cap) in pm.capacities.iter().enumerate() {
                let members: Vec<usize> = (0..n).filter(|&c| class_of[state.origin[c]] == g).collect();
                lp.add_constraint(format!("class_{g}"), ones(&members), Relation::Le, Rational::from(cap));
            }
        }
        IterBudget::Knapsack(kn) => {
            let coeffs = (0..n).map(|c| (c, kn.weights[state.origin[c]].clone())).collect();
            lp.add_constraint("knapsack", coeffs, Relation::Le, kn.budget.clone());
        }
    }
    for j in state.cstar() {
        lp.add_constraint(format!("star_{j}"), ones(&state.f[j]), Relation::Eq, Rational::one());
    }
    let full_cover = state.budget.full_cover();
    for j in 0..state.num_real {
        if state.full[j] {
            if !state.b[j].is_empty() {
                lp.add_constraint(format!("inner_{j}"), ones(&state.b[j]), Relation::Le, Rational::one());
            }
        } else if full_cover {
            lp.add_constraint(format!("part_{j}"), ones(&state.f[j]), Relation::Eq, Rational::one());
        } else if !state.f[j].is_empty() {
            lp.add_constraint(format!("part_{j}"), ones(&state.f[j]), Relation::Le, Rational::one());
        }
    }
    if let IterBudget::Cardinality { m, .. } = &state.budget {
        let nfull = state.full.iter().filter(|&&b| b).count();
        let mut coeffs: Vec<(usize, Rational)> = Vec::new();
        for j in state.partial_clients() {
            coeffs.extend(ones(&state.f[j]));
        }
        let need = Rational::from(*m as i64 - nfull as i64);
        lp.add_constraint("coverage", coeffs, Relation::Ge, need);
    }
    lp
}

fn intersects(a: &[usize], b: &[usize]) -> bool {
    let (mut p, mut q) = (0, 0);
    while p < a.len() && q < b.len() {
        match a[p].cmp(&b[q]) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// Adds `j` to `C*` unless some member with level `≤ ℓ_j` overlaps `F_j`; on
/// success every overlapping member is dropped.
pub fn update_cstar(state: &mut IterState, j: usize) {
    let blocked = (0..state.num_clients_total())
        .any(|j2| j2 != j && state.in_cstar[j2] && state.ell[j2] <= state.ell[j] && intersects(&state.f[j], &state.f[j2]));
    if blocked {
        return;
    }
    for j2 in 0..state.num_clients_total() {
        if j2 != j && state.in_cstar[j2] && intersects(&state.f[j], &state.f[j2]) {
            state.in_cstar[j2] = false;
        }
    }
    state.in_cstar[j] = true;
}

/// Structural state invariants that must hold after every step.
pub fn check_state(state: &IterState, step: &str, log: &mut InvariantLog) -> Result<()> {
    let total = state.num_clients_total();
    let part_ok = (state.num_real..total).all(|v| state.in_cstar[v]) && (0..state.num_real).all(|j| !state.in_cstar[j] || state.full[j]);
    log.record("partition", step, part_ok, || "C* holds a partial client or misses a virtual one".into())?;
    let cstar = state.cstar();
    let mut disjoint = true;
    for (p, &a) in cstar.iter().enumerate() {
        for &b in &cstar[p + 1..] {
            if intersects(&state.f[a], &state.f[b]) {
                disjoint = false;
            }
        }
    }
    log.record("cstar-disjoint", step, disjoint, || "two C* members share a facility copy".into())?;
    for j in state.full_clients() {
        let want = state.inner_ball(j);
        log.record("inner-ball", step, want == state.b[j], || format!("client {j}: B_j = {:?}, expected {want:?}", state.b[j]))?;
    }
    for j in 0..total {
        let ok = state.f[j].iter().all(|&c| state.copy_level(c, j) <= state.ell[j]);
        log.record("level-cap", step, ok, || format!("client {j} has a copy above level {}", state.ell[j]))?;
        log.record("level-floor", step, state.ell[j] >= -1, || format!("client {j} has level {}", state.ell[j]))?;
    }
    if let Some(r) = &state.radius {
        for (j, rj) in r.iter().enumerate().take(state.num_real) {
            let dl = state.disc.value(state.ell[j]);
            let cap = &state.disc.tau * rj;
            log.record("radius-cap", step, dl <= cap, || format!("client {j}: D_l = {dl} > tau R_j = {cap}"))?;
        }
    }
    Ok(())
}

/// Per-iteration record of the rounding loop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub objective: Rational,
    pub fractional: usize,
    pub full: usize,
    pub cstar: usize,
}

#[derive(Debug, Clone)]
pub struct IterOutcome {
    pub trace: Vec<TraceEntry>,
    pub iterations: usize,
}

/// Ball radius factor `(3τ−1)/(τ−1)`.
pub fn coverage_factor(tau: &Rational) -> Rational {
    (Rational::from_int(3) * tau - Rational::one()) / (tau - Rational::one())
}

/// Runs the rounding loop to its terminal vertex, checking every invariant.
pub fn iterate(state: &mut IterState, log: &mut InvariantLog) -> Result<IterOutcome> {
    let levels: i64 = state.ell.iter().map(|&l| l + 2).sum();
    let bound = state.num_real + levels.max(0) as usize + 1;
    check_state(state, "init", log)?;
    let mut lp = build_iter_lp(state);
    log.record_result("iter-feasible", "init", lp.check_feasible(&state.y))?;
    let mut carried = lp.objective_value(&state.y);
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > bound {
            return Err(Error::NoProgress(iterations - 1));
        }
        let sol = solve_vertex(&lp)?;
        let step = format!("iteration {iterations}");
        log.record("objective-monotone", &step, sol.objective <= carried, || format!("{} > {carried}", sol.objective))?;
        state.y = sol.values;
        trace.push(TraceEntry {
            iteration: iterations,
            objective: sol.objective.clone(),
            fractional: count_fractional(&state.y).0,
            full: state.full.iter().filter(|&&b| b).count(),
            cstar: state.in_cstar.iter().filter(|&&b| b).count(),
        });
        let promote = (0..state.num_real).find(|&j| !state.full[j] && state.mass(&state.f[j]).is_one());
        if let Some(j) = promote {
            state.full[j] = true;
            state.b[j] = state.inner_ball(j);
            update_cstar(state, j);
        } else if let Some(j) = (0..state.num_real).find(|&j| state.full[j] && !state.b[j].is_empty() && state.mass(&state.b[j]).is_one()) {
            state.ell[j] -= 1;
            state.f[j] = std::mem::take(&mut state.b[j]);
            state.b[j] = state.inner_ball(j);
            update_cstar(state, j);
        } else {
            break;
        }
        check_state(state, &step, log)?;
        lp = build_iter_lp(state);
        log.record_result("iter-feasible", &step, lp.check_feasible(&state.y))?;
        carried = lp.objective_value(&state.y);
        log.record("objective-preserved", &step, carried == sol.objective, || format!("{carried} != {}", sol.objective))?;
    }
    check_terminal(state, log)?;
    Ok(IterOutcome { trace, iterations })
}

/// Ball coverage and fractionality of the terminal vertex.
pub fn check_terminal(state: &IterState, log: &mut InvariantLog) -> Result<()> {
    let step = "terminal";
    let factor = coverage_factor(&state.disc.tau);
    for j in state.full_clients() {
        let reach = &factor * state.disc.value(state.ell[j]);
        let mass: Rational = (0..state.num_copies()).filter(|&c| *state.copy_distance(c, j) <= reach).map(|c| &state.y[c]).sum();
        log.record("ball-coverage", step, mass >= Rational::one(), || format!("client {j} has {mass} within {reach}"))?;
    }
    let (count, idx) = count_fractional(&state.y);
    log.record("almost-integral", step, count <= 2, || format!("{count} fractional copies"))?;
    if count == 2 {
        let pair_sum = &state.y[idx[0]] + &state.y[idx[1]];
        let tight = match &state.budget {
            IterBudget::Cardinality { k, .. } => state.y.iter().sum::<Rational>() == Rational::from(*k),
            IterBudget::Knapsack(kn) => (0..state.num_copies()).map(|c| &kn.weights[state.origin[c]] * &state.y[c]).sum::<Rational>() == kn.budget,
            IterBudget::Partition(_) => false,
        };
        if tight {
            log.record("fractional-pair", step, pair_sum.is_one(), || format!("fractional pair sums to {pair_sum}"))?;
        }
    }
    if state.budget.full_cover() {
        let all_full = state.full.iter().all(|&b| b);
        log.record("all-full", step, all_full, || "a client is still partial".into())?;
    }
    if matches!(state.budget, IterBudget::Partition(_)) {
        log.record("matroid-integral", step, count == 0, || format!("{count} fractional copies"))?;
    }
    Ok(())
}
