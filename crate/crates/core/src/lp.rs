//! Exact two-phase simplex over a dense rational tableau.
//!
//! Variables are nonnegative with an optional finite upper bound. Upper bounds
//! become explicit rows. Pricing follows Bland's rule in both phases.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::rational::Rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(usize, Rational)>,
    pub relation: Relation,
    pub rhs: Rational,
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub cost: Rational,
    pub upper: Option<Rational>,
}

/// `min c·x + offset` subject to rows and `0 ≤ x ≤ upper`.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub vars: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub offset: Rational,
}

/// One constraint active at a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tight {
    Lower(usize),
    Upper(usize),
    Row(usize),
}

#[derive(Debug, Clone)]
pub struct VertexSolution {
    pub values: Vec<Rational>,
    pub objective: Rational,
    /// Exactly `vars.len()` linearly independent active constraints.
    pub basis_certificate: Vec<Tight>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, cost: Rational, upper: Option<Rational>) -> usize {
        self.vars.push(Variable { name: name.into(), cost, upper });
        self.vars.len() - 1
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(usize, Rational)>,
        relation: Relation,
        rhs: Rational,
    ) -> usize {
        self.constraints.push(Constraint { name: name.into(), coeffs, relation, rhs });
        self.constraints.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn objective_value(&self, values: &[Rational]) -> Rational {
        let mut total = self.offset.clone();
        for (v, x) in self.vars.iter().zip(values) {
            if !x.is_zero() && !v.cost.is_zero() {
                total += &v.cost * x;
            }
        }
        total
    }

    pub fn row_activity(&self, c: usize, values: &[Rational]) -> Rational {
        self.constraints[c].coeffs.iter().map(|(v, a)| a * &values[*v]).sum()
    }

    /// First violated constraint or bound, described.
    pub fn check_feasible(&self, values: &[Rational]) -> std::result::Result<(), String> {
        if values.len() != self.vars.len() {
            return Err(format!("expected {} values, got {}", self.vars.len(), values.len()));
        }
        for (v, x) in self.vars.iter().zip(values) {
            if x.is_negative() {
                return Err(format!("{} = {x} < 0", v.name));
            }
            if let Some(u) = &v.upper {
                if x > u {
                    return Err(format!("{} = {x} > {u}", v.name));
                }
            }
        }
        for (c, con) in self.constraints.iter().enumerate() {
            let lhs = self.row_activity(c, values);
            let ok = match con.relation {
                Relation::Le => lhs <= con.rhs,
                Relation::Eq => lhs == con.rhs,
                Relation::Ge => lhs >= con.rhs,
            };
            if !ok {
                return Err(format!("row {} has activity {lhs}, rhs {}", con.name, con.rhs));
            }
        }
        Ok(())
    }

    pub fn is_tight(&self, t: Tight, values: &[Rational]) -> bool {
        match t {
            Tight::Lower(v) => values[v].is_zero(),
            Tight::Upper(v) => self.vars[v].upper.as_ref() == Some(&values[v]),
            Tight::Row(c) => self.row_activity(c, values) == self.constraints[c].rhs,
        }
    }

    fn certificate_row(&self, t: Tight) -> Vec<Rational> {
        let mut row = vec![Rational::zero(); self.vars.len()];
        match t {
            Tight::Lower(v) | Tight::Upper(v) => row[v] = Rational::one(),
            Tight::Row(c) => {
                for (v, a) in &self.constraints[c].coeffs {
                    row[*v] += a;
                }
            }
        }
        row
    }

    /// Certificate is active at `values` and has full column rank.
    pub fn verify_certificate(&self, sol: &VertexSolution) -> bool {
        if sol.basis_certificate.len() != self.vars.len() {
            return false;
        }
        if !sol.basis_certificate.iter().all(|&t| self.is_tight(t, &sol.values)) {
            return false;
        }
        let rows: Vec<Vec<Rational>> = sol.basis_certificate.iter().map(|&t| self.certificate_row(t)).collect();
        rank(rows) == self.vars.len()
    }

    /// CPLEX LP text, coefficients printed as decimals.
    pub fn to_lp_format(&self) -> String {
        fn term(out: &mut String, first: &mut bool, a: &Rational, name: &str) {
            let f = a.to_f64();
            if *first {
                let _ = write!(out, " {f} {name}");
            } else if f < 0.0 {
                let _ = write!(out, " - {} {name}", -f);
            } else {
                let _ = write!(out, " + {f} {name}");
            }
            *first = false;
        }
        let mut out = String::from("Minimize\n obj:");
        let mut first = true;
        for v in &self.vars {
            if !v.cost.is_zero() {
                term(&mut out, &mut first, &v.cost, &v.name);
            }
        }
        if first {
            out.push_str(" 0");
        }
        out.push_str("\nSubject To\n");
        for con in &self.constraints {
            let _ = write!(out, " {}:", con.name);
            let mut first = true;
            for (v, a) in &con.coeffs {
                term(&mut out, &mut first, a, &self.vars[*v].name);
            }
            if first {
                out.push_str(" 0");
            }
            let rel = match con.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
                Relation::Ge => ">=",
            };
            let _ = writeln!(out, " {rel} {}", con.rhs.to_f64());
        }
        out.push_str("Bounds\n");
        for v in &self.vars {
            match &v.upper {
                Some(u) => {
                    let _ = writeln!(out, " 0 <= {} <= {}", v.name, u.to_f64());
                }
                None => {
                    let _ = writeln!(out, " {} >= 0", v.name);
                }
            }
        }
        out.push_str("End\n");
        out
    }
}

/// Rank by exact Gaussian elimination.
pub fn rank(mut rows: Vec<Vec<Rational>>) -> usize {
    let ncols = rows.first().map_or(0, Vec::len);
    let mut r = 0;
    for col in 0..ncols {
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][col].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        let (head, tail) = rows.split_at_mut(r + 1);
        let pivot_row = &head[r];
        for row in tail.iter_mut() {
            if row[col].is_zero() {
                continue;
            }
            let f = &row[col] / &pivot_row[col];
            for (dst, src) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                if !src.is_zero() {
                    *dst -= &f * src;
                }
            }
        }
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    r
}

/// Strictly fractional entries of a `[0,1]` vector.
pub fn count_fractional(values: &[Rational]) -> (usize, Vec<usize>) {
    let idx: Vec<usize> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_strictly_fractional_unit())
        .map(|(i, _)| i)
        .collect();
    (idx.len(), idx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Column {
    Structural(usize),
    Slack(usize),
    Artificial,
}

/// Origin of a tableau row.
#[derive(Debug, Clone, Copy)]
enum RowSource {
    Constraint(usize),
    UpperBound(usize),
}

struct Tableau {
    /// `rows × (cols + 1)`; the last entry of each row is the rhs.
    a: Vec<Vec<Rational>>,
    /// Reduced costs followed by the negated objective value.
    obj: Vec<Rational>,
    basis: Vec<usize>,
    kinds: Vec<Column>,
    /// Standard-form index of each surviving row.
    origin: Vec<usize>,
}

impl Tableau {
    fn width(&self) -> usize {
        self.kinds.len()
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width();
        let inv = Rational::one() / &self.a[r][c];
        if !inv.is_one() {
            for j in 0..=w {
                if !self.a[r][j].is_zero() {
                    self.a[r][j] *= &inv;
                }
            }
        }
        let nz: Vec<usize> = (0..=w).filter(|&j| !self.a[r][j].is_zero()).collect();
        let (before, rest) = self.a.split_at_mut(r);
        let (prow, after) = rest.split_first_mut().expect("pivot row exists");
        for row in before.iter_mut().chain(after.iter_mut()).chain(std::iter::once(&mut self.obj)) {
            if row[c].is_zero() {
                continue;
            }
            let f = row[c].clone();
            for &j in &nz {
                let delta = &f * &prow[j];
                row[j] -= delta;
            }
        }
        self.basis[r] = c;
    }

    /// Bland's rule: lowest-index improving column, lowest-index leaving basic variable.
    fn optimize(&mut self, allowed: impl Fn(Column) -> bool) -> Result<()> {
        let w = self.width();
        loop {
            let Some(c) = (0..w).find(|&j| allowed(self.kinds[j]) && self.obj[j].is_negative()) else {
                return Ok(());
            };
            let mut best: Option<(usize, Rational)> = None;
            for r in 0..self.a.len() {
                if !self.a[r][c].is_positive() {
                    continue;
                }
                let ratio = &self.a[r][w] / &self.a[r][c];
                let better = match &best {
                    None => true,
                    Some((br, bv)) => ratio < *bv || (ratio == *bv && self.basis[r] < self.basis[*br]),
                };
                if better {
                    best = Some((r, ratio));
                }
            }
            let Some((r, _)) = best else {
                return Err(Error::Unbounded);
            };
            self.pivot(r, c);
        }
    }
}

type StandardRow = (Vec<(usize, Rational)>, Relation, Rational, RowSource);

/// Optimal basic feasible solution of `lp`.
pub fn solve_vertex(lp: &LinearProgram) -> Result<VertexSolution> {
    let n = lp.vars.len();
    // Rows in standard form: coefficients, relation, rhs, provenance.
    let mut rows: Vec<StandardRow> = Vec::new();
    for (c, con) in lp.constraints.iter().enumerate() {
        let mut merged: std::collections::BTreeMap<usize, Rational> = std::collections::BTreeMap::new();
        for (v, a) in &con.coeffs {
            *merged.entry(*v).or_default() += a;
        }
        let coeffs = merged.into_iter().filter(|(_, a)| !a.is_zero()).collect();
        rows.push((coeffs, con.relation, con.rhs.clone(), RowSource::Constraint(c)));
    }
    for (v, var) in lp.vars.iter().enumerate() {
        if let Some(u) = &var.upper {
            if u.is_negative() {
                return Err(Error::Infeasible);
            }
            rows.push((vec![(v, Rational::one())], Relation::Le, u.clone(), RowSource::UpperBound(v)));
        }
    }
    for row in &mut rows {
        if row.2.is_negative() {
            for (_, a) in &mut row.0 {
                *a = -&*a;
            }
            row.2 = -&row.2;
            row.1 = match row.1 {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
    }

    let mut kinds: Vec<Column> = (0..n).map(Column::Structural).collect();
    let mut slack_col = vec![None; rows.len()];
    for (r, row) in rows.iter().enumerate() {
        if row.1 != Relation::Eq {
            slack_col[r] = Some(kinds.len());
            kinds.push(Column::Slack(r));
        }
    }
    let mut art_col = vec![None; rows.len()];
    for (r, row) in rows.iter().enumerate() {
        if row.1 != Relation::Le {
            art_col[r] = Some(kinds.len());
            kinds.push(Column::Artificial);
        }
    }
    let w = kinds.len();
    let mut a = Vec::with_capacity(rows.len());
    let mut basis = Vec::with_capacity(rows.len());
    let sources: Vec<RowSource> = rows.iter().map(|row| row.3).collect();
    for (r, (coeffs, rel, rhs, _)) in rows.into_iter().enumerate() {
        let mut line = vec![Rational::zero(); w + 1];
        for (v, c) in coeffs {
            line[v] = c;
        }
        if let Some(s) = slack_col[r] {
            line[s] = if rel == Relation::Le { Rational::one() } else { -Rational::one() };
        }
        match art_col[r] {
            Some(ac) => {
                line[ac] = Rational::one();
                basis.push(ac);
            }
            None => basis.push(slack_col[r].expect("Le rows have a slack")),
        }
        line[w] = rhs;
        a.push(line);
    }

    // Phase 1: minimize the sum of artificials.
    let mut obj = vec![Rational::zero(); w + 1];
    for (r, line) in a.iter().enumerate() {
        if art_col[r].is_some() {
            for j in 0..=w {
                if !line[j].is_zero() && (j == w || kinds[j] != Column::Artificial) {
                    obj[j] -= &line[j];
                }
            }
        }
    }
    let origin = (0..a.len()).collect();
    let mut t = Tableau { a, obj, basis, kinds, origin };
    t.optimize(|_| true)?;
    if !t.obj[w].is_zero() {
        return Err(Error::Infeasible);
    }
    // Drive zero-level artificials out; rows where that fails are redundant.
    let mut r = 0;
    while r < t.a.len() {
        if t.kinds[t.basis[r]] == Column::Artificial {
            match (0..w).find(|&j| t.kinds[j] != Column::Artificial && !t.a[r][j].is_zero()) {
                Some(c) => {
                    t.pivot(r, c);
                    r += 1;
                }
                None => {
                    t.a.remove(r);
                    t.basis.remove(r);
                    t.origin.remove(r);
                }
            }
        } else {
            r += 1;
        }
    }

    // Phase 2 on the true objective, artificials barred from entering.
    let mut obj = vec![Rational::zero(); w + 1];
    for (v, var) in lp.vars.iter().enumerate() {
        obj[v] = var.cost.clone();
    }
    for (r, &b) in t.basis.iter().enumerate() {
        if obj[b].is_zero() {
            continue;
        }
        let f = obj[b].clone();
        for (o, a) in obj.iter_mut().zip(&t.a[r]) {
            if !a.is_zero() {
                *o -= &f * a;
            }
        }
    }
    t.obj = obj;
    t.optimize(|k| k != Column::Artificial)?;

    let mut values = vec![Rational::zero(); n];
    let mut basic = vec![false; w];
    for (r, &b) in t.basis.iter().enumerate() {
        basic[b] = true;
        if let Column::Structural(v) = t.kinds[b] {
            values[v] = t.a[r][w].clone();
        }
    }
    let mut certificate: Vec<Tight> = (0..n).filter(|&v| !basic[v]).map(Tight::Lower).collect();
    for &r in &t.origin {
        let active = match slack_col[r] {
            Some(s) => !basic[s],
            None => true,
        };
        if active {
            certificate.push(match sources[r] {
                RowSource::Constraint(c) => Tight::Row(c),
                RowSource::UpperBound(v) => Tight::Upper(v),
            });
        }
    }

    let objective = lp.objective_value(&values);
    let sol = VertexSolution { values, objective, basis_certificate: certificate };
    if let Err(detail) = lp.check_feasible(&sol.values) {
        return Err(Error::InvariantFailure { name: "lp-feasibility".into(), step: "solve_vertex".into(), detail });
    }
    if !lp.verify_certificate(&sol) {
        return Err(Error::InvariantFailure {
            name: "lp-vertex".into(),
            step: "solve_vertex".into(),
            detail: format!("certificate of size {} does not have rank {n}", sol.basis_certificate.len()),
        });
    }
    Ok(sol)
}
