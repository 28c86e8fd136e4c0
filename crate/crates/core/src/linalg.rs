//! Numerical kernels shared by the spectral and rank modules: the memory
//! guard, dense symmetric eigensolves, exact rank over prime fields, and
//! eigenvalue counting by Sylvester inertia.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Environment variable capping dense allocations, in MiB.
pub const BUDGET_ENV: &str = "SOFICRANK_BUDGET_MB";
pub const DEFAULT_BUDGET_MB: usize = 1024;
/// Largest degree routed to the dense eigensolver by default.
pub const DEFAULT_DENSE_DEGREE_GUARD: usize = 65536;

/// Caps on dense work, read from the environment or set explicitly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budget {
    pub max_bytes: usize,
    pub dense_degree_guard: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            max_bytes: DEFAULT_BUDGET_MB << 20,
            dense_degree_guard: DEFAULT_DENSE_DEGREE_GUARD,
        }
    }
}

impl Budget {
    pub fn from_env() -> Self {
        let mut b = Self::default();
        if let Some(mb) = std::env::var(BUDGET_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
        {
            b.max_bytes = mb.saturating_mul(1 << 20);
        }
        b
    }

    pub fn with_megabytes(mb: usize) -> Self {
        Self {
            max_bytes: mb.saturating_mul(1 << 20),
            ..Self::default()
        }
    }

    /// Bytes of a dense `rows × cols` f64 matrix.
    pub fn dense_bytes(rows: usize, cols: usize) -> usize {
        rows.saturating_mul(cols).saturating_mul(8)
    }

    pub fn check_dense(&self, rows: usize, cols: usize, what: &str) -> Result<()> {
        let bytes = Self::dense_bytes(rows, cols);
        if bytes > self.max_bytes {
            return Err(Error::budget(
                BUDGET_ENV,
                format!(
                    "{what} needs a dense {rows}x{cols} matrix ({} MiB) over the {} MiB budget",
                    bytes >> 20,
                    self.max_bytes >> 20
                ),
            ));
        }
        Ok(())
    }

    pub fn allows_dense(&self, n: usize) -> bool {
        Self::dense_bytes(n, n) <= self.max_bytes
    }
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn symmetric_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut values: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Ascending eigenpairs of a symmetric matrix; eigenvectors are columns.
pub fn symmetric_eigenpairs(m: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    let original = m.clone();
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 1_000_000).ok_or(Error::Eigen { residual: f64::NAN })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    let residual = (&original * &vectors - &vectors * DMatrix::from_diagonal(&DVector::from_vec(values.clone())))
        .abs()
        .max();
    let scale = original.abs().max().max(1.0);
    if !residual.is_finite() || residual > 1e-6 * scale {
        return Err(Error::Eigen { residual });
    }
    Ok((values, vectors))
}

const PRIMES: [u64; 2] = [2_305_843_009_213_693_951, 4_611_686_018_427_387_847];

fn mulmod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

fn powmod(mut a: u64, mut e: u64, p: u64) -> u64 {
    let mut acc = 1u64;
    while e > 0 {
        if e & 1 == 1 {
            acc = mulmod(acc, a, p);
        }
        a = mulmod(a, a, p);
        e >>= 1;
    }
    acc
}

fn invmod(a: u64, p: u64) -> u64 {
    powmod(a, p - 2, p)
}

/// Rank of an integer matrix over `Z/p` by sparse row echelon insertion.
fn rank_mod_p(rows: &[Vec<(usize, i64)>], p: u64, fill_cap: usize) -> Option<usize> {
    let reduce = |v: i64| v.rem_euclid(p as i64) as u64;
    // pivot rows keyed by leading column; each stored with leading coefficient 1
    let mut pivots: std::collections::HashMap<usize, Vec<(usize, u64)>> = Default::default();
    let mut stored = 0usize;
    for row in rows {
        let mut cur: Vec<(usize, u64)> = row
            .iter()
            .map(|&(c, v)| (c, reduce(v)))
            .filter(|&(_, v)| v != 0)
            .collect();
        cur.sort_unstable_by_key(|&(c, _)| c);
        loop {
            let Some(&(lead, coef)) = cur.first() else { break };
            match pivots.get(&lead) {
                Some(piv) => {
                    // cur -= coef * piv
                    let mut merged = Vec::with_capacity(cur.len() + piv.len());
                    let (mut i, mut j) = (0, 0);
                    while i < cur.len() || j < piv.len() {
                        let take_cur = j >= piv.len() || (i < cur.len() && cur[i].0 < piv[j].0);
                        let take_piv = i >= cur.len() || (j < piv.len() && piv[j].0 < cur[i].0);
                        if take_cur {
                            merged.push(cur[i]);
                            i += 1;
                        } else if take_piv {
                            let v = (p - mulmod(coef, piv[j].1, p)) % p;
                            if v != 0 {
                                merged.push((piv[j].0, v));
                            }
                            j += 1;
                        } else {
                            let v = (cur[i].1 + p - mulmod(coef, piv[j].1, p)) % p;
                            if v != 0 {
                                merged.push((cur[i].0, v));
                            }
                            i += 1;
                            j += 1;
                        }
                    }
                    cur = merged;
                }
                None => {
                    let inv = invmod(coef, p);
                    for e in cur.iter_mut() {
                        e.1 = mulmod(e.1, inv, p);
                    }
                    stored += cur.len();
                    if stored > fill_cap {
                        return None;
                    }
                    pivots.insert(lead, cur);
                    break;
                }
            }
        }
    }
    Some(pivots.len())
}

fn dense_rank_mod_p(rows: &[Vec<(usize, i64)>], ncols: usize, p: u64) -> usize {
    let mut m: Vec<Vec<u64>> = rows
        .iter()
        .map(|r| {
            let mut dense = vec![0u64; ncols];
            for &(c, v) in r {
                dense[c] = (dense[c] + v.rem_euclid(p as i64) as u64) % p;
            }
            dense
        })
        .collect();
    let mut rank = 0;
    for col in 0..ncols {
        let Some(pr) = (rank..m.len()).find(|&r| m[r][col] != 0) else {
            continue;
        };
        m.swap(rank, pr);
        let inv = invmod(m[rank][col], p);
        let pivot: Vec<u64> = m[rank].iter().map(|&v| mulmod(v, inv, p)).collect();
        for r in rank + 1..m.len() {
            let f = m[r][col];
            if f != 0 {
                for c in col..ncols {
                    m[r][c] = (m[r][c] + p - mulmod(f, pivot[c], p)) % p;
                }
            }
        }
        m[rank] = pivot;
        rank += 1;
    }
    rank
}

/// Rank over `Q` of an integer matrix given by sparse rows, computed as the
/// maximum of its ranks modulo two 61/62-bit primes.
///
/// Every modular rank is a lower bound for the rational rank; the two agree
/// unless both primes divide every nonzero maximal minor.
pub fn integer_rank(rows: &[Vec<(usize, i64)>], ncols: usize, budget: &Budget) -> Result<usize> {
    let fill_cap = budget.max_bytes / 16;
    let mut best = 0;
    for &p in &PRIMES {
        let r = match rank_mod_p(rows, p, fill_cap) {
            Some(r) => r,
            None => {
                budget.check_dense(rows.len(), ncols, "modular elimination")?;
                dense_rank_mod_p(rows, ncols, p)
            }
        };
        best = best.max(r);
    }
    Ok(best)
}

/// Eigenvalue counts of a sparse symmetric matrix by LDLᵀ inertia on its
/// envelope after reverse Cuthill–McKee reordering.
#[derive(Clone, Debug)]
pub struct InertiaCounter {
    n: usize,
    /// `first[i]`: first column stored in permuted row `i`.
    first: Vec<usize>,
    /// Row `i` occupies `offsets[i]..offsets[i+1]`, columns `first[i]..=i`.
    offsets: Vec<usize>,
    values: Vec<f64>,
    scale: f64,
    gershgorin: f64,
}

/// Count of eigenvalues below a threshold, with the number of pivots that
/// were too small to classify reliably.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InertiaCount {
    pub below: usize,
    pub uncertain: usize,
}

fn rcm_order(n: usize, adj: &[Vec<usize>]) -> Vec<usize> {
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs_last = |start: usize, visited_base: &[bool]| -> usize {
        let mut seen = visited_base.to_vec();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut last = start;
        while let Some(u) = queue.pop_front() {
            last = u;
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        last
    };
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (adj[v].len(), v));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = bfs_last(bfs_last(seed, &visited), &visited);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut next: Vec<usize> = adj[u].iter().copied().filter(|&v| !visited[v]).collect();
            next.sort_by_key(|&v| (adj[v].len(), v));
            for v in next {
                visited[v] = true;
                queue.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

impl InertiaCounter {
    /// `entries` are `(row, col, value)` of a symmetric matrix; either
    /// triangle (or both) may be given, duplicates are summed once per
    /// stored position.
    pub fn new(n: usize, entries: &[(usize, usize, f64)], budget: &Budget) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        let mut lower: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for &(r, c, v) in entries {
            if v == 0.0 {
                continue;
            }
            let (i, j) = if r >= c { (r, c) } else { (c, r) };
            lower.push((i, j, v));
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        // keep one copy per position: callers pass full symmetric triplets
        lower.sort_by_key(|a| (a.0, a.1));
        let full_symmetric = entries.iter().any(|&(r, c, v)| r < c && v != 0.0);
        let mut merged: Vec<(usize, usize, f64)> = Vec::new();
        for (i, j, v) in lower {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => merged.push((i, j, v)),
            }
        }
        if full_symmetric {
            for e in merged.iter_mut() {
                if e.0 != e.1 {
                    e.2 /= 2.0;
                }
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        let order = rcm_order(n, &adj);
        let mut position = vec![0usize; n];
        for (new, &old) in order.iter().enumerate() {
            position[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        let permuted: Vec<(usize, usize, f64)> = merged
            .iter()
            .map(|&(i, j, v)| {
                let (a, b) = (position[i], position[j]);
                if a >= b {
                    (a, b, v)
                } else {
                    (b, a, v)
                }
            })
            .collect();
        for &(a, b, _) in &permuted {
            first[a] = first[a].min(b);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0usize);
        for i in 0..n {
            offsets.push(offsets[i] + (i - first[i] + 1));
        }
        let total = offsets[n];
        if total.saturating_mul(8) > budget.max_bytes {
            return Err(Error::budget(
                BUDGET_ENV,
                format!("envelope of {total} entries exceeds the dense budget"),
            ));
        }
        let mut values = vec![0.0; total];
        let mut row_abs = vec![0.0f64; n];
        let mut diag = vec![0.0f64; n];
        for &(a, b, v) in &permuted {
            values[offsets[a] + (b - first[a])] += v;
            if a == b {
                diag[a] += v;
            } else {
                row_abs[a] += v.abs();
                row_abs[b] += v.abs();
            }
        }
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let gershgorin = (0..n).map(|i| diag[i] + row_abs[i]).fold(0.0, f64::max);
        Ok(Self {
            n,
            first,
            offsets,
            values,
            scale,
            gershgorin,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Upper bound on the largest eigenvalue.
    pub fn gershgorin_bound(&self) -> f64 {
        self.gershgorin
    }

    pub fn profile_len(&self) -> usize {
        self.values.len()
    }

    /// Number of eigenvalues strictly below `t`.
    pub fn count_below(&self, t: f64) -> InertiaCount {
        let n = self.n;
        let mut w = self.values.clone();
        let mut d = vec![0.0f64; n];
        let tol = 1e-13 * self.scale.max(t.abs());
        let mut below = 0;
        let mut uncertain = 0;
        for i in 0..n {
            let fi = self.first[i];
            let oi = self.offsets[i];
            // u_ij = a_ij - Σ_k u_ik l_jk for j < i
            for j in fi..i {
                let fj = self.first[j];
                let oj = self.offsets[j];
                let k0 = fi.max(fj);
                let mut s = w[oi + (j - fi)];
                for k in k0..j {
                    s -= w[oi + (k - fi)] * w[oj + (k - fj)];
                }
                w[oi + (j - fi)] = s;
            }
            let mut di = w[oi + (i - fi)] - t;
            for k in fi..i {
                let u = w[oi + (k - fi)];
                let l = u / d[k];
                di -= u * l;
                w[oi + (k - fi)] = l;
            }
            if di.abs() < tol {
                uncertain += 1;
                di = if di < 0.0 { -tol } else { tol };
            }
            if di < 0.0 {
                below += 1;
            }
            d[i] = di;
        }
        InertiaCount { below, uncertain }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_rank_of_incidence_rows() {
        // rows e_{k+1} - e_k on a 5-cycle: rank 4
        let rows: Vec<Vec<(usize, i64)>> = (0..5).map(|k| vec![(k, -1), ((k + 1) % 5, 1)]).collect();
        assert_eq!(integer_rank(&rows, 5, &Budget::default()).unwrap(), 4);
        let dense = dense_rank_mod_p(&rows, 5, PRIMES[0]);
        assert_eq!(dense, 4);
    }

    #[test]
    fn integer_rank_detects_dependent_rows() {
        let rows = vec![vec![(0, 2), (1, 4)], vec![(0, 1), (1, 2)], vec![(2, 3)]];
        assert_eq!(integer_rank(&rows, 3, &Budget::default()).unwrap(), 2);
    }

    #[test]
    fn inertia_matches_dense_eigenvalues() {
        // path-graph Laplacian plus a diagonal shift
        let n = 12;
        let mut entries = Vec::new();
        for i in 0..n {
            entries.push((i, i, 2.0 + 0.1 * i as f64));
            if i + 1 < n {
                entries.push((i, i + 1, -1.0));
                entries.push((i + 1, i, -1.0));
            }
        }
        let dense = DMatrix::from_fn(n, n, |r, c| {
            entries
                .iter()
                .filter(|e| e.0 == r && e.1 == c)
                .map(|e| e.2)
                .sum::<f64>()
        });
        let eig = symmetric_eigenvalues(dense);
        let counter = InertiaCounter::new(n, &entries, &Budget::default()).unwrap();
        for t in [0.05, 0.5, 1.0, 2.2, 3.3, 4.5, 10.0] {
            let expected = eig.iter().filter(|&&v| v < t).count();
            let got = counter.count_below(t);
            assert_eq!(got.below, expected, "threshold {t}");
        }
        assert!(counter.gershgorin_bound() >= *eig.last().unwrap());
    }

    #[test]
    fn budget_guard_trips() {
        let b = Budget::with_megabytes(1);
        assert!(b.check_dense(1000, 1000, "test").is_err());
        assert!(b.check_dense(100, 100, "test").is_ok());
    }
}
