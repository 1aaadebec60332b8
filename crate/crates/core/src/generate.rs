//! Instance generators: the two integrality-gap fixtures, random graph metrics
//! and Euclidean point sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{ClusteringInstance, Exponent};
use crate::rational::Rational;

/// A generated instance together with its known optimum and LP value.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub instance: ClusteringInstance,
    pub opt: Rational,
    pub lp_value: Rational,
}

fn from_int_matrix(nf: usize, nc: usize, d: &[Vec<i64>], k: usize, m: usize, q: Exponent) -> Result<ClusteringInstance> {
    let (f, c) = ClusteringInstance::default_ids(nf, nc);
    let rows = d.iter().map(|row| row.iter().map(|&v| Rational::from_int(v)).collect()).collect();
    ClusteringInstance::new(f, c, rows, Some(k), m, q, vec![])
}

/// Builds a matrix from per-point "site" labels: points on the same site are at
/// distance `own[site]` from the site facility, otherwise `between(a, b)`.
fn sited_matrix(sites: &[usize], own: &[i64], between: impl Fn(usize, usize) -> i64, facility: &[bool]) -> Vec<Vec<i64>> {
    let n = sites.len();
    let mut d = vec![vec![0; n]; n];
    for p in 0..n {
        for r in 0..n {
            if p == r {
                continue;
            }
            let (sp, sr) = (sites[p], sites[r]);
            d[p][r] = if sp == sr {
                // Two non-facility points share the site at radius `own`.
                if facility[p] || facility[r] {
                    own[sp]
                } else {
                    2 * own[sp]
                }
            } else {
                between(sp, sr) + if facility[p] { 0 } else { own[sp] } + if facility[r] { 0 } else { own[sr] }
            };
        }
    }
    d
}

/// Two far clusters: `t³` clients on facility `f0`, `t³ + t²` clients at
/// distance 1 from `f1`; `k = 1`, `m = t³ + t`.
pub fn gap_a(t: usize) -> Result<Fixture> {
    if t < 2 {
        return Err(Error::BadParams(format!("gap-a needs t >= 2, got {t}")));
    }
    let t3 = t * t * t;
    let far = 10 * t3 as i64;
    let nc = t3 + (t3 + t * t);
    let mut sites = vec![0, 1];
    let mut facility = vec![true, true];
    sites.extend(std::iter::repeat_n(0, t3));
    sites.extend(std::iter::repeat_n(1, t3 + t * t));
    facility.extend(std::iter::repeat_n(false, nc));
    let d = sited_matrix(&sites, &[0, 1], |_, _| far, &facility);
    let instance = from_int_matrix(2, nc, &d, 1, t3 + t, 1)?;
    let t = t as i64;
    Ok(Fixture { instance, opt: Rational::from_int(t * t * t + t), lp_value: Rational::from_int(t * t + t) })
}

/// Three collocated groups of sizes `2t, 2t, t` on `f0, f1, f2`, with
/// `d(f0, f1) = 1` and `f2` far; `k = 2`, `m = 4t + 1`.
pub fn gap_b(t: usize) -> Result<Fixture> {
    if t < 2 {
        return Err(Error::BadParams(format!("gap-b needs t >= 2, got {t}")));
    }
    let far = 10 * t as i64;
    let nc = 5 * t;
    let mut sites = vec![0, 1, 2];
    let mut facility = vec![true, true, true];
    for (site, count) in [(0, 2 * t), (1, 2 * t), (2, t)] {
        sites.extend(std::iter::repeat_n(site, count));
    }
    facility.extend(std::iter::repeat_n(false, nc));
    let between = |a: usize, b: usize| if a.max(b) == 2 { far } else { 1 };
    let d = sited_matrix(&sites, &[0, 0, 0], between, &facility);
    let instance = from_int_matrix(3, nc, &d, 2, 4 * t + 1, 1)?;
    Ok(Fixture { instance, opt: Rational::from_int(t as i64 + 1), lp_value: Rational::from_int(2) })
}

#[derive(Debug, Clone)]
pub struct RandomSpec {
    pub facilities: usize,
    pub clients: usize,
    pub k: usize,
    pub m: usize,
    pub q: Exponent,
    pub max_weight: i64,
}

/// Shortest-path closure of a random complete graph with integer weights in
/// `1..=max_weight`. About a quarter of the clients sit on a facility.
#[allow(clippy::needless_range_loop)]
pub fn random_metric(spec: &RandomSpec, seed: u64) -> Result<ClusteringInstance> {
    let RandomSpec { facilities: nf, clients: nc, k, m, q, max_weight } = *spec;
    if nf == 0 || max_weight < 1 {
        return Err(Error::BadParams("random-metric needs at least one facility and max_weight >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = nf + nc;
    let mut d = vec![vec![0i64; n]; n];
    for p in 0..n {
        for r in (p + 1)..n {
            let w = rng.gen_range(1..=max_weight);
            d[p][r] = w;
            d[r][p] = w;
        }
    }
    for j in 0..nc {
        if rng.gen_bool(0.25) {
            let i = rng.gen_range(0..nf);
            d[i][nf + j] = 0;
            d[nf + j][i] = 0;
        }
    }
    floyd_warshall(&mut d);
    from_int_matrix(nf, nc, &d, k, m, q)
}

fn floyd_warshall(d: &mut [Vec<i64>]) {
    let n = d.len();
    for b in 0..n {
        for a in 0..n {
            for c in 0..n {
                let via = d[a][b] + d[b][c];
                if via < d[a][c] {
                    d[a][c] = via;
                }
            }
        }
    }
}

/// Rounded Euclidean distances, closed under shortest paths so the result is
/// an exact metric. Both the distance and its `q`-th power come from the
/// rounded value.
pub fn metric_from_points(coords: &[Vec<f64>], precision_bits: u32) -> Result<Vec<Vec<Rational>>> {
    let n = coords.len();
    let mut d = vec![vec![Rational::zero(); n]; n];
    for p in 0..n {
        for r in (p + 1)..n {
            if coords[p].len() != coords[r].len() {
                return Err(Error::BadMetric("points have different dimensions".into()));
            }
            let sq: f64 = coords[p].iter().zip(&coords[r]).map(|(a, b)| (a - b) * (a - b)).sum();
            let v = Rational::approx_f64(sq.sqrt(), precision_bits)
                .ok_or_else(|| Error::BadMetric("non-finite coordinate".into()))?;
            d[p][r] = v.clone();
            d[r][p] = v;
        }
    }
    for b in 0..n {
        for a in 0..n {
            for c in 0..n {
                let via = &d[a][b] + &d[b][c];
                if via < d[a][c] {
                    d[a][c] = via;
                }
            }
        }
    }
    Ok(d)
}

/// Facilities and clients drawn uniformly from an integer grid `[0, 100)^dim`.
pub fn euclidean(nf: usize, nc: usize, dim: usize, k: usize, m: usize, q: Exponent, seed: u64) -> Result<(ClusteringInstance, Vec<Vec<f64>>)> {
    if nf == 0 || dim == 0 {
        return Err(Error::BadParams("euclidean needs at least one facility and dim >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords: Vec<Vec<f64>> = Vec::with_capacity(nf + nc);
    while coords.len() < nf {
        let p: Vec<f64> = (0..dim).map(|_| rng.gen_range(0..100) as f64).collect();
        if !coords.contains(&p) {
            coords.push(p);
        }
    }
    for _ in 0..nc {
        coords.push((0..dim).map(|_| rng.gen_range(0..100) as f64).collect());
    }
    let rows = metric_from_points(&coords, 20)?;
    let (f, c) = ClusteringInstance::default_ids(nf, nc);
    Ok((ClusteringInstance::new(f, c, rows, Some(k), m, q, vec![])?, coords))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_instance;

    #[test]
    fn gap_a_shape() {
        let fx = gap_a(3).unwrap();
        let inst = &fx.instance;
        assert_eq!((inst.num_facilities(), inst.num_clients()), (2, 63));
        assert_eq!((inst.k(), inst.m()), (Some(1), 30));
        assert_eq!(fx.opt, Rational::from_int(30));
        assert_eq!(fx.lp_value, Rational::from_int(12));
    }

    #[test]
    fn gap_b_shape() {
        let fx = gap_b(4).unwrap();
        let inst = &fx.instance;
        assert_eq!((inst.num_facilities(), inst.num_clients()), (3, 20));
        assert_eq!((inst.k(), inst.m()), (Some(2), 17));
        assert_eq!(*inst.d(0, 1), Rational::one());
        assert_eq!(*inst.d(0, 2), Rational::from_int(40));
    }

    #[test]
    fn small_t_is_rejected() {
        assert!(matches!(gap_a(1), Err(Error::BadParams(_))));
        assert!(matches!(gap_b(0), Err(Error::BadParams(_))));
    }

    #[test]
    fn random_metrics_validate() {
        for seed in 0..20 {
            let spec = RandomSpec { facilities: 5, clients: 8, k: 2, m: 6, q: 1 + (seed % 2) as u32, max_weight: 20 };
            let inst = random_metric(&spec, seed).unwrap();
            validate_instance(&inst).unwrap();
        }
    }

    #[test]
    fn random_metric_is_deterministic() {
        let spec = RandomSpec { facilities: 4, clients: 6, k: 2, m: 4, q: 1, max_weight: 20 };
        let a = random_metric(&spec, 9).unwrap();
        let b = random_metric(&spec, 9).unwrap();
        for p in 0..a.num_points() {
            for r in 0..a.num_points() {
                assert_eq!(a.d(p, r), b.d(p, r));
            }
        }
    }

    #[test]
    fn euclidean_points_form_a_metric() {
        let (inst, _) = euclidean(4, 6, 2, 2, 5, 2, 3).unwrap();
        validate_instance(&inst).unwrap();
        assert_eq!(*inst.dq(0, 4), inst.d(0, 4).pow(2));
    }
}
