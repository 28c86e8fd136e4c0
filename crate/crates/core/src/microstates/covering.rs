use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::Serialize;

use super::torus::{torus_dist, Exponent, InnerNorm};
use crate::error::{Error, Result};
use crate::linalg::Budget;

/// Default cap on the number of points in a brute-force covering.
pub const DEFAULT_POINT_LIMIT: usize = 20_000;

/// Points of `(T^r)^k`: `k` blocks of `r` torus coordinates each.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusPointSet {
    pub blocks: usize,
    pub width: usize,
    pub points: Vec<Vec<f64>>,
}

impl TorusPointSet {
    pub fn new(blocks: usize, width: usize, points: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| p.len() != blocks * width) {
            return Err(Error::Dimension(format!(
                "point {i} has {} coordinates, expected {}",
                points[i].len(),
                blocks * width
            )));
        }
        Ok(Self { blocks, width, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `ρ_p(x, y) = ((1/k) Σ_j ρ(x_j, y_j)^p)^{1/p}` with `ρ` the inner norm
    /// of torus distances inside a block.
    pub fn distance(&self, a: usize, b: usize, inner: InnerNorm, p: Exponent) -> f64 {
        let (x, y) = (&self.points[a], &self.points[b]);
        let w = self.width;
        p.mean((0..self.blocks).map(|j| inner.combine((0..w).map(|c| torus_dist(x[j * w + c], y[j * w + c])))))
    }
}

/// `lower ≤ S_ε ≤ upper` on the sampled set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CoveringBounds {
    /// Size of a greedy maximal `2ε`-separated subset.
    pub lower: usize,
    /// Size of a greedy `ε`-cover by points of the set.
    pub upper: usize,
}

/// Slack in distance comparisons: `d < ε` is tested as `d < ε − TOL` and
/// `d ≥ 2ε` as `d ≥ 2ε − TOL`, which keeps both bounds valid while making
/// ties on lattices independent of rounding.
pub const DISTANCE_TOLERANCE: f64 = 1e-12;

/// The exponents tried when tightening bounds across metrics.
pub const EXPONENT_LADDER: [f64; 3] = [1.0, 2.0, f64::INFINITY];

fn separated_greedy(set: &TorusPointSet, inner: InnerNorm, p: Exponent, radius: f64) -> usize {
    let mut chosen: Vec<usize> = Vec::new();
    for i in 0..set.len() {
        if chosen
            .iter()
            .all(|&c| set.distance(i, c, inner, p) >= radius - DISTANCE_TOLERANCE)
        {
            chosen.push(i);
        }
    }
    chosen.len()
}

#[derive(PartialEq, Eq)]
struct Candidate {
    gain: usize,
    index: usize,
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // larger gain first, then smaller index
        self.gain.cmp(&other.gain).then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn cover_greedy(set: &TorusPointSet, inner: InnerNorm, p: Exponent, eps: f64, budget: &Budget) -> usize {
    let n = set.len();
    let neighbors: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .filter(|&j| set.distance(i, j, inner, p) < eps - DISTANCE_TOLERANCE)
                .map(|j| j as u32)
                .collect()
        })
        .collect();
    let edges: usize = neighbors.iter().map(Vec::len).sum();
    if edges.saturating_mul(4) > budget.max_bytes {
        return cover_sequential(set, inner, p, eps);
    }
    let mut covered = vec![false; n];
    let mut remaining = n;
    let mut heap: BinaryHeap<Candidate> = neighbors
        .iter()
        .enumerate()
        .map(|(index, nb)| Candidate { gain: nb.len(), index })
        .collect();
    let mut centers = 0;
    while remaining > 0 {
        let Some(top) = heap.pop() else { break };
        let gain = neighbors[top.index].iter().filter(|&&j| !covered[j as usize]).count();
        if gain < top.gain {
            heap.push(Candidate { gain, index: top.index });
            continue;
        }
        if gain == 0 {
            continue;
        }
        centers += 1;
        for &j in &neighbors[top.index] {
            if !covered[j as usize] {
                covered[j as usize] = true;
                remaining -= 1;
            }
        }
    }
    centers
}

fn cover_sequential(set: &TorusPointSet, inner: InnerNorm, p: Exponent, eps: f64) -> usize {
    let n = set.len();
    let mut covered = vec![false; n];
    let mut centers = 0;
    for i in 0..n {
        if covered[i] {
            continue;
        }
        centers += 1;
        for j in i..n {
            if !covered[j] && set.distance(i, j, inner, p) < eps - DISTANCE_TOLERANCE {
                covered[j] = true;
            }
        }
    }
    centers
}

fn check_inputs(set: &TorusPointSet, eps: f64, limit: usize) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::validation("eps", format!("{eps} must be positive")));
    }
    if set.len() > limit {
        return Err(Error::budget(
            "point_limit",
            format!("{} points exceed the brute-force limit {limit}", set.len()),
        ));
    }
    Ok(())
}

/// Covering bounds of a finite point set under `ρ_p`.
///
/// The upper bound is the smallest greedy cover found under `ρ_p` and the
/// larger exponents of [`EXPONENT_LADDER`] (those metrics dominate `ρ_p`);
/// the lower bound is the largest greedy separated set under `ρ_p` and the
/// smaller exponents (dominated by `ρ_p`).
pub fn covering_number_bruteforce(
    set: &TorusPointSet,
    inner: InnerNorm,
    p: Exponent,
    eps: f64,
    limit: usize,
    budget: &Budget,
) -> Result<CoveringBounds> {
    check_inputs(set, eps, limit)?;
    if set.is_empty() {
        return Ok(CoveringBounds { lower: 0, upper: 0 });
    }
    let mut exps: Vec<f64> = EXPONENT_LADDER.to_vec();
    if !exps.contains(&p.0) {
        exps.push(p.0);
    }
    let upper = exps
        .iter()
        .filter(|&&q| q >= p.0)
        .map(|&q| cover_greedy(set, inner, Exponent(q), eps, budget))
        .min()
        .expect("p itself is in the ladder");
    let lower = exps
        .iter()
        .filter(|&&q| q <= p.0)
        .map(|&q| separated_greedy(set, inner, Exponent(q), 2.0 * eps))
        .max()
        .expect("p itself is in the ladder");
    Ok(CoveringBounds { lower, upper })
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CoveringCell {
    pub p: String,
    pub eps: f64,
    pub lower: usize,
    pub upper: usize,
}

/// Covering bounds over a grid of exponents and radii; an `ε'`-cover with
/// `ε' ≤ ε` is reused at `ε`, so upper bounds are nonincreasing in `ε`.
pub fn covering_table(
    set: &TorusPointSet,
    inner: InnerNorm,
    ps: &[Exponent],
    eps: &[f64],
    limit: usize,
    budget: &Budget,
) -> Result<Vec<CoveringCell>> {
    let mut cells = Vec::new();
    for &p in ps {
        let mut row: Vec<(f64, CoveringBounds)> = eps
            .iter()
            .map(|&e| Ok((e, covering_number_bruteforce(set, inner, p, e, limit, budget)?)))
            .collect::<Result<_>>()?;
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&a, &b| row[a].0.total_cmp(&row[b].0));
        let mut best = usize::MAX;
        for &i in &order {
            best = best.min(row[i].1.upper);
            row[i].1.upper = best;
        }
        let mut best_lower = 0;
        for &i in order.iter().rev() {
            best_lower = best_lower.max(row[i].1.lower);
            row[i].1.lower = best_lower.min(row[i].1.upper);
        }
        for (e, b) in row {
            cells.push(CoveringCell {
                p: p.to_string(),
                eps: e,
                lower: b.lower,
                upper: b.upper,
            });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(n: usize) -> TorusPointSet {
        TorusPointSet::new(1, 1, (0..n).map(|k| vec![k as f64 / n as f64]).collect()).unwrap()
    }

    #[test]
    fn trivial_sets() {
        let b = Budget::default();
        let one = TorusPointSet::new(2, 1, vec![vec![0.3, 0.7]]).unwrap();
        let r = covering_number_bruteforce(&one, InnerNorm::L2, Exponent(2.0), 0.1, 10, &b).unwrap();
        assert_eq!(r, CoveringBounds { lower: 1, upper: 1 });
        let two = TorusPointSet::new(1, 1, vec![vec![0.1], vec![0.15]]).unwrap();
        let r = covering_number_bruteforce(&two, InnerNorm::L2, Exponent(2.0), 0.1, 10, &b).unwrap();
        assert_eq!(r, CoveringBounds { lower: 1, upper: 1 });
    }

    #[test]
    fn circle_grid_cover() {
        let r = covering_number_bruteforce(
            &circle(100),
            InnerNorm::L2,
            Exponent(2.0),
            0.1,
            1000,
            &Budget::default(),
        )
        .unwrap();
        assert!(r.upper <= 6, "{r:?}");
        assert!(r.lower <= r.upper);
        assert!(r.lower >= 4);
    }

    #[test]
    fn point_limit_is_enforced() {
        let err = covering_number_bruteforce(&circle(50), InnerNorm::L2, Exponent(2.0), 0.1, 10, &Budget::default())
            .unwrap_err();
        assert!(!err.is_validation());
    }

    #[test]
    fn sequential_fallback_is_a_cover() {
        let set = circle(60);
        let seq = cover_sequential(&set, InnerNorm::L2, Exponent(2.0), 0.1);
        let greedy = cover_greedy(&set, InnerNorm::L2, Exponent(2.0), 0.1, &Budget::default());
        assert!(greedy <= seq);
        assert!(seq <= 60);
    }
}
