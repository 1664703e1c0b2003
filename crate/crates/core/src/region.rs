//! Relevance-rate region: λ-sweeps, concave hulls, and the two oracles used
//! to check them (the binary BSC family and exhaustive grid search).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{self, Encoder, JointXYZ};
use crate::solver::{self, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    pub lambda: f64,
    pub rate: f64,
    pub relevance: f64,
    pub f_value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Points sorted by rate, plus the upper concave nondecreasing envelope of
/// the converged ones and the origin.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionCurve {
    pub points: Vec<RegionPoint>,
    pub hull: Vec<(f64, f64)>,
}

impl RegionCurve {
    fn from_points(mut points: Vec<RegionPoint>) -> Self {
        points.sort_by(|a, b| a.rate.total_cmp(&b.rate).then(a.lambda.total_cmp(&b.lambda)));
        let mut pts: Vec<(f64, f64)> = vec![(0.0, 0.0)];
        pts.extend(points.iter().filter(|p| p.converged).map(|p| (p.rate, p.relevance)));
        RegionCurve {
            hull: upper_hull(&pts),
            points,
        }
    }

    /// Hull relevance at `rate`.
    pub fn relevance_at(&self, rate: f64) -> f64 {
        hull_value_at(&self.hull, rate)
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Upper concave nondecreasing envelope of `points` (monotone chain).
///
/// The returned vertices run from the smallest rate to the first point of
/// maximal relevance; the envelope is flat beyond the last vertex.
pub fn upper_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for &p in pts.iter().rev() {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.reverse();
    // drop vertices sharing a rate with a higher one, then the decreasing tail
    hull.dedup_by(|later, earlier| {
        if later.0 == earlier.0 {
            earlier.1 = earlier.1.max(later.1);
            true
        } else {
            false
        }
    });
    if let Some(top) = hull
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |acc, (i, p)| match acc {
            Some((_, best)) if p.1 <= best => acc,
            _ => Some((i, p.1)),
        })
        .map(|(i, _)| i)
    {
        hull.truncate(top + 1);
    }
    hull
}

/// Piecewise-linear evaluation of a hull, constant past its last vertex and
/// zero before its first.
pub fn hull_value_at(hull: &[(f64, f64)], rate: f64) -> f64 {
    match hull {
        [] => 0.0,
        [.., last] if rate >= last.0 => last.1,
        [first, ..] if rate <= first.0 => {
            if rate == first.0 {
                first.1
            } else {
                0.0
            }
        }
        _ => {
            let i = hull.partition_point(|p| p.0 <= rate);
            let (a, b) = (hull[i - 1], hull[i]);
            a.1 + (b.1 - a.1) * (rate - a.0) / (b.0 - a.0)
        }
    }
}

/// `n` points uniform on `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![hi],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// `n` values of λ in `[lo, hi]` whose hyperplane slopes `(1-λ)/λ` are
/// geometrically spaced, with the last point exactly `hi`. This packs points
/// near λ = 1 where the boundary bends.
pub fn slope_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && lo <= hi && hi <= 1.0);
    if n <= 1 {
        return vec![hi; n];
    }
    let s_hi = (1.0 - lo) / lo;
    let s_lo = ((1.0 - hi) / hi).max(s_hi * 1e-4);
    let mut out: Vec<f64> = (0..n - 1)
        .map(|i| {
            let t = i as f64 / (n - 2).max(1) as f64;
            let s = s_hi * (s_lo / s_hi).powf(t);
            1.0 / (1.0 + s)
        })
        .collect();
    out.push(hi);
    out.dedup();
    out
}

/// Solves at every λ of `lambdas` and builds the curve and its hull.
pub fn sweep(joint: &JointXYZ, lambdas: &[f64], config: &SolverConfig) -> Result<RegionCurve> {
    let results: Vec<solver::SolverResult> = lambdas
        .par_iter()
        .map(|&lambda| {
            solver::solve(
                joint,
                &SolverConfig {
                    lambda,
                    ..config.clone()
                },
            )
        })
        .collect::<Result<_>>()?;
    Ok(RegionCurve::from_points(results.iter().map(point_of).collect()))
}

/// Like [`sweep`] but also returns the full solver result of every λ.
pub fn sweep_detailed(
    joint: &JointXYZ,
    lambdas: &[f64],
    config: &SolverConfig,
) -> Result<(RegionCurve, Vec<solver::SolverResult>)> {
    let results: Vec<solver::SolverResult> = lambdas
        .par_iter()
        .map(|&lambda| {
            solver::solve(
                joint,
                &SolverConfig {
                    lambda,
                    ..config.clone()
                },
            )
        })
        .collect::<Result<_>>()?;
    let curve = RegionCurve::from_points(results.iter().map(point_of).collect());
    Ok((curve, results))
}

fn point_of(r: &solver::SolverResult) -> RegionPoint {
    RegionPoint {
        lambda: r.lambda,
        rate: r.rate,
        relevance: r.relevance,
        f_value: r.f_value,
        iterations: r.iterations,
        converged: r.converged,
    }
}

/// Uniform binary `X`, `Z` = `X` through BSC(p) and `Y` = `X` through BSC(q).
pub fn binary_source(p: f64, q: f64) -> Result<JointXYZ> {
    for v in [p, q] {
        if !(v > 0.0 && v < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "crossover {v} outside (0, 0.5)"
            )));
        }
    }
    JointXYZ::from_fn((2, 2, 2), |x, y, z| {
        let pz = if z == x { 1.0 - p } else { p };
        let py = if y == x { 1.0 - q } else { q };
        0.5 * pz * py
    })
}

/// One member of the BSC encoder family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OraclePoint {
    pub r: f64,
    pub rate: f64,
    pub relevance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCurve {
    pub points: Vec<OraclePoint>,
    pub hull: Vec<(f64, f64)>,
}

impl OracleCurve {
    pub fn relevance_at(&self, rate: f64) -> f64 {
        hull_value_at(&self.hull, rate)
    }
}

/// Exact `(I(X;U|Z), I(Y;U|Z))` for `P(u|x) = BSC(r)` over `r_grid`, with
/// the convex hull of the resulting region.
pub fn binary_oracle(p: f64, q: f64, r_grid: &[f64]) -> Result<OracleCurve> {
    let joint = binary_source(p, q)?;
    let mut points = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        if !(0.0..=0.5).contains(&r) {
            return Err(Error::InvalidConfig(format!("r = {r} outside [0, 0.5]")));
        }
        let enc = Encoder::bsc(r);
        points.push(OraclePoint {
            r,
            rate: prob::rate(&joint, &enc),
            relevance: prob::relevance(&joint, &enc),
        });
    }
    let mut pts = vec![(0.0, 0.0)];
    pts.extend(points.iter().map(|p| (p.rate, p.relevance)));
    Ok(OracleCurve {
        hull: upper_hull(&pts),
        points,
    })
}

/// Default cap on the number of encoders [`brute_force_best_f`] enumerates.
pub const ENUMERATION_BUDGET: u128 = 50_000_000;

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// All compositions of `resolution` into `parts` nonnegative parts, scaled to
/// probability vectors.
fn simplex_grid(parts: usize, resolution: usize) -> Vec<Vec<f64>> {
    fn rec(parts: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(parts - 1, left - k, cur, out);
            cur.pop();
        }
    }
    let mut raw = Vec::new();
    rec(parts, resolution, &mut Vec::new(), &mut raw);
    raw.into_iter()
        .map(|c| c.into_iter().map(|k| k as f64 / resolution as f64).collect())
        .collect()
}

/// Exhaustive maximum of `f(λ, ·)` over encoders whose rows lie on the
/// simplex grid with `resolution` steps.
pub fn brute_force_best_f(
    joint: &JointXYZ,
    cardinality_u: usize,
    lambda: f64,
    resolution: usize,
) -> Result<(f64, Encoder)> {
    brute_force_best_f_with_budget(joint, cardinality_u, lambda, resolution, ENUMERATION_BUDGET)
}

pub fn brute_force_best_f_with_budget(
    joint: &JointXYZ,
    cardinality_u: usize,
    lambda: f64,
    resolution: usize,
    budget: u128,
) -> Result<(f64, Encoder)> {
    let nx = joint.nx();
    let nu = cardinality_u;
    if nu == 0 || resolution == 0 {
        return Err(Error::InvalidConfig("cardinality and resolution must be positive".into()));
    }
    let per_row = binomial((resolution + nu - 1) as u128, (nu - 1) as u128);
    let points = per_row
        .checked_pow(nx as u32)
        .unwrap_or(u128::MAX);
    if points > budget {
        return Err(Error::InstanceTooLarge { points, budget });
    }
    let grid = simplex_grid(nu, resolution);

    // parallel over the first row, odometer over the rest
    let best = (0..grid.len())
        .into_par_iter()
        .map(|first| {
            let mut idx = vec![0usize; nx];
            idx[0] = first;
            let mut rows = vec![0.0; nx * nu];
            let mut best = (f64::NEG_INFINITY, Vec::new());
            loop {
                for (x, &i) in idx.iter().enumerate() {
                    rows[x * nu..(x + 1) * nu].copy_from_slice(&grid[i]);
                }
                let enc = Encoder::from_rows_unchecked(nx, nu, rows.clone());
                let f = solver::objective_f(joint, &enc, lambda);
                if f > best.0 {
                    best = (f, idx.clone());
                }
                let mut k = nx;
                loop {
                    if k == 1 {
                        return best;
                    }
                    k -= 1;
                    idx[k] += 1;
                    if idx[k] < grid.len() {
                        break;
                    }
                    idx[k] = 0;
                }
            }
        })
        .reduce(
            || (f64::NEG_INFINITY, Vec::new()),
            |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
        );
    let mut rows = Vec::with_capacity(nx * nu);
    for &i in &best.1 {
        rows.extend_from_slice(&grid[i]);
    }
    Ok((best.0, Encoder::from_rows_unchecked(nx, nu, rows)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::h2;
    use crate::testutil::random_joint;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn binary_source_cells() {
        let j = binary_source(0.1, 0.4).unwrap();
        assert_abs_diff_eq!(j.p(0, 0, 0), 0.27, epsilon = 1e-15);
        for (p, q) in [(0.1, 0.4), (0.3, 0.2), (0.05, 0.45)] {
            let j = binary_source(p, q).unwrap();
            assert_abs_diff_eq!(j.p_y()[0], 0.5, epsilon = 1e-15);
        }
        assert!(binary_source(0.0, 0.4).is_err());
        assert!(binary_source(0.1, 0.5).is_err());
    }

    #[test]
    fn oracle_endpoints() {
        let c = binary_oracle(0.1, 0.4, &[0.0, 0.5]).unwrap();
        assert_abs_diff_eq!(c.points[1].rate, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.points[1].relevance, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.points[0].rate, h2(0.1), epsilon = 1e-12);
        assert_abs_diff_eq!(c.points[0].relevance, h2(0.42) - h2(0.4), epsilon = 1e-12);
        assert_abs_diff_eq!(c.points[0].rate, 0.468_995_593_589_281_2, epsilon = 1e-12);
        assert_abs_diff_eq!(c.points[0].relevance, 0.010_503_300_578_984_905, epsilon = 1e-12);
    }

    #[test]
    fn oracle_is_monotone_in_r() {
        let grid = uniform_grid(0.0, 0.5, 501);
        let c = binary_oracle(0.1, 0.4, &grid).unwrap();
        for w in c.points.windows(2) {
            assert!(w[1].rate <= w[0].rate + 1e-15);
            assert!(w[1].relevance <= w[0].relevance + 1e-15);
        }
    }

    #[test]
    fn hull_is_concave_and_flat_past_the_top() {
        let pts = [(0.0, 0.0), (1.0, 0.5), (2.0, 0.6), (1.5, 0.2), (3.0, 0.55), (0.5, 0.1)];
        let h = upper_hull(&pts);
        assert_eq!(h, vec![(0.0, 0.0), (1.0, 0.5), (2.0, 0.6)]);
        for w in h.windows(3) {
            let s1 = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            let s2 = (w[2].1 - w[1].1) / (w[2].0 - w[1].0);
            assert!(s2 <= s1);
        }
        assert_abs_diff_eq!(hull_value_at(&h, 0.5), 0.25);
        assert_abs_diff_eq!(hull_value_at(&h, 5.0), 0.6);
        assert_eq!(upper_hull(&[(0.0, 0.0), (0.0, 0.0)]), vec![(0.0, 0.0)]);
    }

    #[test]
    fn independent_y_gives_flat_hull() {
        let j = JointXYZ::from_fn((2, 2, 1), |x, y, _| [0.3, 0.7][x] * [0.6, 0.4][y]).unwrap();
        let cfg = SolverConfig {
            restarts: 2,
            ..Default::default()
        };
        let c = sweep(&j, &[0.6, 0.8, 1.0], &cfg).unwrap();
        assert!(c.points.iter().all(|p| p.relevance.abs() < 1e-9));
        assert!(c.hull.iter().all(|p| p.1.abs() < 1e-9));
    }

    #[test]
    fn copy_source_hull_reaches_one_bit() {
        let j = JointXYZ::from_fn((2, 2, 1), |x, y, _| if x == y { 0.5 } else { 0.0 }).unwrap();
        let cfg = SolverConfig {
            restarts: 3,
            seed: 5,
            ..Default::default()
        };
        let c = sweep(&j, &[0.6, 0.75, 0.9, 1.0], &cfg).unwrap();
        let last = *c.hull.last().unwrap();
        assert!((last.0 - 1.0).abs() < 1e-3 && (last.1 - 1.0).abs() < 1e-3, "{last:?}");
        for p in &c.points {
            assert!(p.relevance <= p.rate + 1e-9);
        }
    }

    #[test]
    fn single_lambda_sweep_is_point_plus_origin() {
        let j = binary_source(0.1, 0.4).unwrap();
        let c = sweep(&j, &[0.99], &SolverConfig { restarts: 2, ..Default::default() }).unwrap();
        assert_eq!(c.points.len(), 1);
        assert_eq!(c.hull.first(), Some(&(0.0, 0.0)));
        assert!(c.hull.len() <= 2);
    }

    #[test]
    fn grids() {
        let g = uniform_grid(0.51, 1.0, 26);
        assert_eq!(g.len(), 26);
        assert_abs_diff_eq!(g[25], 1.0);
        let s = slope_grid(0.51, 1.0, 26);
        assert_eq!(s.len(), 26);
        assert_abs_diff_eq!(s[0], 0.51, epsilon = 1e-12);
        assert!(s.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn brute_force_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let j = random_joint(&mut rng, (2, 2, 1));
        let (f, _) = brute_force_best_f(&j, 2, 0.4, 20).unwrap();
        assert_abs_diff_eq!(f, 0.0, epsilon = 1e-15);

        let (g100, _) = brute_force_best_f(&j, 2, 0.9, 100).unwrap();
        let cfg = SolverConfig {
            lambda: 0.9,
            cardinality_u: Some(2),
            ..Default::default()
        };
        let r = solver::solve(&j, &cfg).unwrap();
        assert!(r.f_value >= g100 - 1e-2);

        let (g50, _) = brute_force_best_f(&j, 2, 0.9, 50).unwrap();
        let (g200, _) = brute_force_best_f(&j, 2, 0.9, 200).unwrap();
        assert!(g100 >= g50 - 1e-15 && g200 >= g100 - 1e-15);

        assert!(matches!(
            brute_force_best_f_with_budget(&j, 3, 0.9, 100, 1000),
            Err(Error::InstanceTooLarge { .. })
        ));
    }

    #[test]
    fn simplex_grid_counts() {
        assert_eq!(simplex_grid(2, 100).len(), 101);
        assert_eq!(simplex_grid(3, 4).len() as u128, binomial(6, 2));
        assert!(simplex_grid(3, 4).iter().all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-12));
    }
}
