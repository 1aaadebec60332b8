//! Simplex results against exhaustive vertex enumeration.

use proptest::prelude::*;
use robust_median::lp::{rank, solve_vertex, LinearProgram, Relation};
use robust_median::{Error, Rational};

/// Solves a square system by Gauss-Jordan elimination; `None` when singular.
fn solve_square(mut a: Vec<Vec<Rational>>, mut b: Vec<Rational>) -> Option<Vec<Rational>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, piv);
        b.swap(col, piv);
        let p = a[col][col].clone();
        for v in a[col].iter_mut() {
            *v = &*v / &p;
        }
        b[col] = &b[col] / &p;
        let pivot_row = a[col].clone();
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for (dst, src) in a[r].iter_mut().zip(&pivot_row) {
                    *dst = &*dst - &(&f * src);
                }
                let sub = &f * &b[col];
                b[r] = &b[r] - &sub;
            }
        }
    }
    Some(b)
}

/// Minimum objective over all vertices, found by trying every choice of `n`
/// tight constraints among the rows and variable bounds.
fn brute_force_min(lp: &LinearProgram) -> Option<Rational> {
    let n = lp.num_vars();
    let mut planes: Vec<(Vec<Rational>, Rational)> = Vec::new();
    for c in &lp.constraints {
        let mut row = vec![Rational::zero(); n];
        for (j, v) in &c.coeffs {
            row[*j] = &row[*j] + v;
        }
        planes.push((row, c.rhs.clone()));
    }
    for j in 0..n {
        let unit: Vec<Rational> = (0..n).map(|i| if i == j { Rational::one() } else { Rational::zero() }).collect();
        planes.push((unit.clone(), Rational::zero()));
        if let Some(u) = &lp.vars[j].upper {
            planes.push((unit, u.clone()));
        }
    }
    let mut best: Option<Rational> = None;
    let mut choice = Vec::new();
    fn rec(start: usize, n: usize, planes: &[(Vec<Rational>, Rational)], choice: &mut Vec<usize>, lp: &LinearProgram, best: &mut Option<Rational>) {
        if choice.len() == n {
            let a: Vec<Vec<Rational>> = choice.iter().map(|&p| planes[p].0.clone()).collect();
            if rank(a.clone()) < n {
                return;
            }
            let b: Vec<Rational> = choice.iter().map(|&p| planes[p].1.clone()).collect();
            if let Some(x) = solve_square(a, b) {
                if lp.check_feasible(&x).is_ok() {
                    let v = lp.objective_value(&x);
                    if best.as_ref().is_none_or(|b| v < *b) {
                        *best = Some(v);
                    }
                }
            }
            return;
        }
        for p in start..planes.len() {
            choice.push(p);
            rec(p + 1, n, planes, choice, lp, best);
            choice.pop();
        }
    }
    rec(0, n, &planes, &mut choice, lp, &mut best);
    best
}

fn relation(tag: u8) -> Relation {
    match tag % 3 {
        0 => Relation::Le,
        1 => Relation::Ge,
        _ => Relation::Eq,
    }
}

prop_compose! {
    fn bounded_lp()(n in 1usize..5, rows in 1usize..5)(
        costs in prop::collection::vec(-5i64..6, n),
        uppers in prop::collection::vec(1i64..5, n),
        coeffs in prop::collection::vec(prop::collection::vec(-3i64..4, n), rows),
        rels in prop::collection::vec(0u8..3, rows),
        rhs in prop::collection::vec(-2i64..7, rows),
        denom in 1i64..4,
    ) -> LinearProgram {
        let mut lp = LinearProgram::new();
        for (j, (c, u)) in costs.iter().zip(&uppers).enumerate() {
            lp.add_var(format!("x{j}"), Rational::new(*c, denom), Some(Rational::from_int(*u)));
        }
        for (r, ((row, rel), b)) in coeffs.iter().zip(&rels).zip(&rhs).enumerate() {
            let terms = row.iter().enumerate().filter(|(_, v)| **v != 0).map(|(j, v)| (j, Rational::from_int(*v))).collect();
            lp.add_constraint(format!("r{r}"), terms, relation(*rel), Rational::new(*b, denom));
        }
        lp
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn simplex_finds_the_best_vertex(lp in bounded_lp()) {
        match (solve_vertex(&lp), brute_force_min(&lp)) {
            (Ok(sol), Some(best)) => {
                prop_assert!(lp.check_feasible(&sol.values).is_ok());
                prop_assert_eq!(&sol.objective, &best);
                prop_assert_eq!(lp.objective_value(&sol.values), best);
                prop_assert!(lp.verify_certificate(&sol));
            }
            (Err(Error::Infeasible), None) => {}
            (got, want) => prop_assert!(false, "solver {:?} vs enumeration {:?}", got.map(|s| s.objective), want),
        }
    }
}
