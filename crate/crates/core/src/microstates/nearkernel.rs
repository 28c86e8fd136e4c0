use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{GroupElement, Permutation, SoficLevel};
use crate::linalg::{symmetric_eigenpairs, Budget};
use crate::ring::ModulePresentation;
use crate::sofic::represent;

/// Largest number of relation tuples `F^{k+1}` examined in approximate mode.
pub const MAX_RELATION_TUPLES: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelMode {
    /// Homomorphic level: only the relator Gram is cut off.
    Exact,
    /// Relator Gram plus multiplicativity defects, cut off at `δ/#constraints`.
    Approximate,
}

/// Span of the eigenvectors of the constraint operator below a threshold.
#[derive(Clone, Debug)]
pub struct NearKernelSubspace {
    pub level_index: usize,
    pub degree: usize,
    pub rank: usize,
    pub delta: f64,
    pub relators: usize,
    pub relation_set: Vec<GroupElement>,
    pub power_bound: usize,
    pub mode: KernelMode,
    /// Number of nonzero constraint operators summed.
    pub constraints: usize,
    /// Threshold applied to the eigenvalues of the summed operator.
    pub threshold: f64,
    /// Orthonormal columns, `n·d` rows.
    pub basis: DMatrix<f64>,
    /// Eigenvalues of the summed operator on the basis columns.
    pub eigenvalues: Vec<f64>,
    pub warnings: Vec<String>,
}

impl NearKernelSubspace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// `dim W / d_i`.
    pub fn normalized_dim(&self) -> f64 {
        self.dim() as f64 / self.degree as f64
    }

    /// Largest deviation of `BᵀB` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let k = self.dim();
        let g = self.basis.transpose() * &self.basis;
        (g - DMatrix::<f64>::identity(k, k)).abs().max()
    }
}

fn add_defect(s: &mut DMatrix<f64>, p: &Permutation, q: &Permutation, n: usize) {
    // (P - Q)ᵀ(P - Q) = 2I - PᵀQ - QᵀP, placed on every diagonal block
    let d = p.degree();
    let (pinv, qinv) = (p.inverse(), q.inverse());
    for l in 0..n {
        let o = l * d;
        for k in 0..d {
            s[(o + k, o + k)] += 2.0;
            // (PᵀQ)_{k, j} = 1 iff p(k) = q(j)
            s[(o + k, o + qinv.apply(p.apply(k)))] -= 1.0;
            s[(o + k, o + pinv.apply(q.apply(k)))] -= 1.0;
        }
    }
}

fn tuples(set: &[GroupElement], len: usize) -> Vec<Vec<GroupElement>> {
    let mut out: Vec<Vec<GroupElement>> = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|t| {
                set.iter().map(move |g| {
                    let mut t = t.clone();
                    t.push(g.clone());
                    t
                })
            })
            .collect();
    }
    out
}

/// `W_{F,m}(δ, i)`: near-kernel subspace of the first `m` relators.
///
/// On exact levels this is the span of eigenvectors of
/// `Σ_{j ≤ m} σ(b̃_j)ᵀσ(b̃_j)` with eigenvalue `< δ`. On other levels the
/// multiplicativity defects `|σ(g₁)⋯σ(g_{k+1}) − σ(g₁⋯g_{k+1})|²` over
/// `F^{k+1}` are added and the cutoff becomes `δ / #constraints`.
pub fn near_kernel(
    level: &SoficLevel,
    pres: &ModulePresentation,
    m: usize,
    delta: f64,
    relation_set: &[GroupElement],
    power_bound: usize,
    budget: &Budget,
) -> Result<NearKernelSubspace> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::validation("delta", format!("{delta} must be positive")));
    }
    let n = pres.rank();
    let d = level.degree();
    let dim = n * d;
    budget.check_dense(dim, dim, "near-kernel operator")?;
    let f = pres.relator_matrix(m)?;
    let mut s = if m == 0 {
        DMatrix::zeros(dim, dim)
    } else {
        let a = represent(level, &f)?;
        a.gram(budget)?.to_dense(budget)?
    };
    let mut constraints = usize::from(m > 0);
    let mode = if level.is_exact() {
        KernelMode::Exact
    } else {
        KernelMode::Approximate
    };
    let mut warnings = Vec::new();
    if mode == KernelMode::Approximate && !relation_set.is_empty() {
        let count = relation_set.len().checked_pow(power_bound as u32 + 1);
        if count.is_none_or(|c| c > MAX_RELATION_TUPLES) {
            return Err(Error::budget(
                "relation_tuples",
                format!(
                    "{}^{} relation tuples exceed {MAX_RELATION_TUPLES}",
                    relation_set.len(),
                    power_bound + 1
                ),
            ));
        }
        let group = level.group();
        for t in tuples(relation_set, power_bound + 1) {
            let mut product = Permutation::identity(d);
            let mut g = group.identity();
            for x in &t {
                product = product.compose(&level.permutation(x)?);
                g = group.mul(&g, x)?;
            }
            let q = level.permutation(&g)?;
            if product != q {
                add_defect(&mut s, &product, &q, n);
                constraints += 1;
            }
        }
    }
    let threshold = delta / constraints.max(1) as f64;
    if constraints == 0 {
        return Ok(NearKernelSubspace {
            level_index: level.index(),
            degree: d,
            rank: n,
            delta,
            relators: m,
            relation_set: relation_set.to_vec(),
            power_bound,
            mode,
            constraints,
            threshold,
            basis: DMatrix::identity(dim, dim),
            eigenvalues: vec![0.0; dim],
            warnings,
        });
    }
    let (values, vectors) = symmetric_eigenpairs(s)?;
    let top = values.last().copied().unwrap_or(0.0);
    let keep: Vec<usize> = if threshold > top || dim == 0 {
        if dim > 0 && constraints > 0 {
            warnings.push(format!(
                "threshold {threshold} exceeds the largest eigenvalue {top}; returning the full space"
            ));
        }
        (0..dim).collect()
    } else {
        (0..dim).filter(|&i| values[i] < threshold).collect()
    };
    let basis = if keep.len() == dim {
        DMatrix::identity(dim, dim)
    } else {
        DMatrix::from_fn(dim, keep.len(), |r, c| vectors[(r, keep[c])])
    };
    let eigenvalues = keep.iter().map(|&i| values[i].max(0.0)).collect();
    Ok(NearKernelSubspace {
        level_index: level.index(),
        degree: d,
        rank: n,
        delta,
        relators: m,
        relation_set: relation_set.to_vec(),
        power_bound,
        mode,
        constraints,
        threshold,
        basis,
        eigenvalues,
        warnings,
    })
}
