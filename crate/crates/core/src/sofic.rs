//! Matrix representations `σ_i(f)` of group-ring matrices at a sofic level.
//!
//! Each block of `σ_i(f)` is kept as a weighted sum of permutation matrices
//! `Σ_g f̂(g) P(σ_i(g))`, where `P(π) e_k = e_{π(k)}`. Vectors live in
//! `R^{n·d}` with block-major layout: component `l` occupies
//! `l·d .. (l+1)·d`.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::group::{GroupElement, Permutation, SoficLevel};
use crate::linalg::Budget;
use crate::ring::{Coeff, GroupRingMatrix};

/// Largest integer coefficient stored exactly in an `f64`.
pub const EXACT_INTEGER_LIMIT: i64 = 1 << 53;

/// Label for the normalization used by [`SoficMatrix::normalized_hs_norm`].
pub const HS_CONVENTION: &str = "sqrt(sum of squared entries / (cols * degree))";

/// One term `weight · P(perm)` of a block.
#[derive(Clone, Debug, PartialEq)]
pub struct PermTerm {
    pub weight: f64,
    pub perm: Arc<Permutation>,
}

/// `σ_i(f)` for an `m × n` group-ring matrix `f`, as an `(m·d) × (n·d)`
/// matrix whose blocks are sums of weighted permutations.
#[derive(Clone, Debug)]
pub struct SoficMatrix {
    level_index: usize,
    rows: usize,
    cols: usize,
    degree: usize,
    blocks: Vec<Vec<PermTerm>>,
    integral: bool,
}

fn push_term(block: &mut Vec<PermTerm>, weight: f64, perm: Arc<Permutation>) {
    if weight == 0.0 {
        return;
    }
    if let Some(t) = block
        .iter_mut()
        .find(|t| Arc::ptr_eq(&t.perm, &perm) || *t.perm == *perm)
    {
        t.weight += weight;
    } else {
        block.push(PermTerm { weight, perm });
    }
}

fn prune(block: &mut Vec<PermTerm>) {
    block.retain(|t| t.weight != 0.0);
}

/// Computes `σ_i(f)` blockwise.
pub fn represent<C: Coeff>(level: &SoficLevel, f: &GroupRingMatrix<C>) -> Result<SoficMatrix> {
    if **f.group() != *level.group() {
        return Err(Error::GroupMismatch(format!(
            "matrix over {} at a level of {}",
            f.group().describe(),
            level.group().describe()
        )));
    }
    let d = level.degree();
    let mut cache: HashMap<GroupElement, Arc<Permutation>> = HashMap::new();
    let mut blocks = Vec::with_capacity(f.rows() * f.cols());
    for entry in f.entries() {
        let mut block = Vec::new();
        for (g, c) in entry.terms() {
            let weight = if C::INTEGRAL {
                match c.to_i64_exact() {
                    Some(v) if v.abs() <= EXACT_INTEGER_LIMIT => v as f64,
                    _ => return Err(Error::Overflow(c.to_string())),
                }
            } else {
                c.to_f64()
            };
            let perm = match cache.get(g) {
                Some(p) => p.clone(),
                None => {
                    let p = Arc::new(level.permutation(g)?);
                    cache.insert(g.clone(), p.clone());
                    p
                }
            };
            push_term(&mut block, weight, perm);
        }
        prune(&mut block);
        blocks.push(block);
    }
    Ok(SoficMatrix {
        level_index: level.index(),
        rows: f.rows(),
        cols: f.cols(),
        degree: d,
        blocks,
        integral: C::INTEGRAL,
    })
}

impl SoficMatrix {
    /// Builds a matrix directly from blocks of weighted permutations.
    pub fn from_blocks(
        level_index: usize,
        rows: usize,
        cols: usize,
        degree: usize,
        blocks: Vec<Vec<PermTerm>>,
    ) -> Result<Self> {
        if blocks.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} blocks for a {rows}x{cols} block shape",
                blocks.len()
            )));
        }
        if blocks.iter().flatten().any(|t| t.perm.degree() != degree) {
            return Err(Error::Dimension(format!("permutation degree differs from {degree}")));
        }
        let integral = blocks.iter().flatten().all(|t| t.weight.fract() == 0.0);
        Ok(Self {
            level_index,
            rows,
            cols,
            degree,
            blocks,
            integral,
        })
    }

    pub fn level_index(&self) -> usize {
        self.level_index
    }

    /// Block rows `m`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Block columns `n`.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Scalar dimensions `(m·d, n·d)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.rows * self.degree, self.cols * self.degree)
    }

    /// Whether all weights are integers (exact in `f64`).
    pub fn is_integral(&self) -> bool {
        self.integral
    }

    pub fn block(&self, r: usize, c: usize) -> &[PermTerm] {
        &self.blocks[r * self.cols + c]
    }

    pub fn normalization(&self) -> &'static str {
        HS_CONVENTION
    }

    /// Upper bound on nonzeros in any scalar row.
    pub fn max_row_terms(&self) -> usize {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.block(r, c).len()).sum::<usize>())
            .max()
            .unwrap_or(0)
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.degree;
        assert_eq!(x.len(), self.cols * d, "vector length");
        let mut y = vec![0.0; self.rows * d];
        for r in 0..self.rows {
            let out = &mut y[r * d..(r + 1) * d];
            for c in 0..self.cols {
                let inp = &x[c * d..(c + 1) * d];
                for t in self.block(r, c) {
                    for (k, &img) in t.perm.images().iter().enumerate() {
                        out[img as usize] += t.weight * inp[k];
                    }
                }
            }
        }
        y
    }

    /// `y = Aᵀ x`.
    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        let d = self.degree;
        assert_eq!(x.len(), self.rows * d, "vector length");
        let mut y = vec![0.0; self.cols * d];
        for r in 0..self.rows {
            let inp = &x[r * d..(r + 1) * d];
            for c in 0..self.cols {
                let out = &mut y[c * d..(c + 1) * d];
                for t in self.block(r, c) {
                    for (k, &img) in t.perm.images().iter().enumerate() {
                        out[k] += t.weight * inp[img as usize];
                    }
                }
            }
        }
        y
    }

    pub fn transpose(&self) -> SoficMatrix {
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                blocks.push(
                    self.block(r, c)
                        .iter()
                        .map(|t| PermTerm {
                            weight: t.weight,
                            perm: Arc::new(t.perm.inverse()),
                        })
                        .collect(),
                );
            }
        }
        SoficMatrix {
            level_index: self.level_index,
            rows: self.cols,
            cols: self.rows,
            degree: self.degree,
            blocks,
            integral: self.integral,
        }
    }

    /// Symbolic product; `P(π)P(ρ) = P(π∘ρ)`.
    pub fn mul(&self, other: &SoficMatrix) -> Result<SoficMatrix> {
        if self.cols != other.rows || self.degree != other.degree {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} (degree {}) by {}x{} (degree {})",
                self.rows, self.cols, self.degree, other.rows, other.cols, other.degree
            )));
        }
        let mut blocks = Vec::with_capacity(self.rows * other.cols);
        for r in 0..self.rows {
            for c in 0..other.cols {
                let mut block = Vec::new();
                for k in 0..self.cols {
                    for a in self.block(r, k) {
                        for b in other.block(k, c) {
                            push_term(&mut block, a.weight * b.weight, Arc::new(a.perm.compose(&b.perm)));
                        }
                    }
                }
                prune(&mut block);
                blocks.push(block);
            }
        }
        Ok(SoficMatrix {
            level_index: self.level_index,
            rows: self.rows,
            cols: other.cols,
            degree: self.degree,
            blocks,
            integral: self.integral && other.integral,
        })
    }

    /// `Aᵀ A`, kept as weighted permutations `P(π₁⁻¹∘π₂)`.
    pub fn gram(&self, budget: &Budget) -> Result<SoficMatrix> {
        let terms: usize = (0..self.cols)
            .map(|a| {
                (0..self.cols)
                    .map(|b| {
                        (0..self.rows)
                            .map(|r| self.block(r, a).len() * self.block(r, b).len())
                            .sum::<usize>()
                    })
                    .sum::<usize>()
            })
            .sum();
        let bytes = terms.saturating_mul(self.degree).saturating_mul(4);
        if bytes > budget.max_bytes {
            return Err(Error::budget(
                crate::linalg::BUDGET_ENV,
                format!(
                    "gram with {terms} permutation terms of degree {} exceeds the budget",
                    self.degree
                ),
            ));
        }
        self.transpose().mul(self)
    }

    /// `A - B`.
    pub fn sub(&self, other: &SoficMatrix) -> Result<SoficMatrix> {
        if (self.rows, self.cols, self.degree) != (other.rows, other.cols, other.degree) {
            return Err(Error::Dimension("shape mismatch in subtraction".into()));
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| {
                let mut block = a.clone();
                for t in b {
                    push_term(&mut block, -t.weight, t.perm.clone());
                }
                prune(&mut block);
                block
            })
            .collect();
        Ok(SoficMatrix {
            level_index: self.level_index,
            rows: self.rows,
            cols: self.cols,
            degree: self.degree,
            blocks,
            integral: self.integral && other.integral,
        })
    }

    /// Merged `(row, col, value)` entries, sorted, zeros removed.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let d = self.degree;
        let mut out = Vec::new();
        for r in 0..self.rows {
            let mut row_entries: Vec<(usize, usize, f64)> = Vec::new();
            for c in 0..self.cols {
                for t in self.block(r, c) {
                    for (k, &img) in t.perm.images().iter().enumerate() {
                        row_entries.push((r * d + img as usize, c * d + k, t.weight));
                    }
                }
            }
            row_entries.sort_by_key(|a| (a.0, a.1));
            let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(row_entries.len());
            for (i, j, v) in row_entries {
                match merged.last_mut() {
                    Some(last) if last.0 == i && last.1 == j => last.2 += v,
                    _ => merged.push((i, j, v)),
                }
            }
            out.extend(merged.into_iter().filter(|e| e.2 != 0.0));
        }
        out
    }

    pub fn to_dense(&self, budget: &Budget) -> Result<DMatrix<f64>> {
        let (m, n) = self.shape();
        budget.check_dense(m, n, "dense materialization")?;
        let mut out = DMatrix::zeros(m, n);
        for (i, j, v) in self.triplets() {
            out[(i, j)] += v;
        }
        Ok(out)
    }

    /// Sum of squared entries.
    pub fn squared_frobenius(&self) -> f64 {
        self.triplets().iter().map(|e| e.2 * e.2).sum()
    }

    /// `sqrt((1/(n·d)) Σ entries²)`.
    pub fn normalized_hs_norm(&self) -> f64 {
        let denom = (self.cols * self.degree) as f64;
        if denom == 0.0 {
            return 0.0;
        }
        (self.squared_frobenius() / denom).sqrt()
    }

    /// Upper bound on the operator norm: the largest absolute row or column
    /// sum, combined as `sqrt(‖A‖₁‖A‖∞)`.
    pub fn operator_norm_bound(&self) -> f64 {
        let (m, n) = self.shape();
        let mut row = vec![0.0f64; m];
        let mut col = vec![0.0f64; n];
        for (i, j, v) in self.triplets() {
            row[i] += v.abs();
            col[j] += v.abs();
        }
        let r = row.into_iter().fold(0.0, f64::max);
        let c = col.into_iter().fold(0.0, f64::max);
        (r * c).sqrt()
    }

    /// Writes `row col value` lines (0-based).
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, j, v) in self.triplets() {
            if self.integral {
                writeln!(w, "{i} {j} {}", v as i64)?;
            } else {
                writeln!(w, "{i} {j} {v:e}")?;
            }
        }
        Ok(())
    }
}

/// `‖A - B‖₂` in the normalized Hilbert–Schmidt norm.
pub fn normalized_hs_distance(a: &SoficMatrix, b: &SoficMatrix) -> Result<f64> {
    Ok(a.sub(b)?.normalized_hs_norm())
}
