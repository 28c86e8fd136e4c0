//! Exact arithmetic in the group ring and in matrices over it.
//!
//! An element `f = Σ f̂(g) g` is a finite map from group elements to
//! coefficients, kept without zero entries and ordered by the group
//! element's normal form so that iteration and printing are stable.

mod coeff;
mod parse;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;

use crate::error::{Error, Result};
use crate::group::{GroupElement, GroupSpec};

pub use coeff::Coeff;
pub use parse::{parse_element, parse_matrix};

#[derive(Clone, Debug)]
pub struct GroupRingElement<C: Coeff = BigInt> {
    group: Arc<GroupSpec>,
    terms: BTreeMap<GroupElement, C>,
}

fn same_group(a: &Arc<GroupSpec>, b: &Arc<GroupSpec>) -> Result<()> {
    if Arc::ptr_eq(a, b) || a == b {
        Ok(())
    } else {
        Err(Error::GroupMismatch(format!("{a} vs {b}")))
    }
}

impl<C: Coeff> PartialEq for GroupRingElement<C> {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.group, &other.group) || self.group == other.group) && self.terms == other.terms
    }
}

impl<C: Coeff> GroupRingElement<C> {
    pub fn zero(group: Arc<GroupSpec>) -> Self {
        Self {
            group,
            terms: BTreeMap::new(),
        }
    }

    pub fn one(group: Arc<GroupSpec>) -> Self {
        let e = group.identity();
        Self::monomial(group, e, C::one())
    }

    pub fn monomial(group: Arc<GroupSpec>, g: GroupElement, c: C) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(g, c);
        }
        Self { group, terms }
    }

    /// Builds an element from `(g, coefficient)` pairs, merging repeats.
    pub fn from_terms(group: Arc<GroupSpec>, terms: impl IntoIterator<Item = (GroupElement, C)>) -> Result<Self> {
        let mut out = Self::zero(group);
        for (g, c) in terms {
            out.group.check(&g)?;
            out.add_term(g, c);
        }
        Ok(out)
    }

    fn add_term(&mut self, g: GroupElement, c: C) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(g) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = o.get().clone() + c;
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn group(&self) -> &Arc<GroupSpec> {
        &self.group
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// `f̂(g)`, zero off the support.
    pub fn coefficient(&self, g: &GroupElement) -> C {
        self.terms.get(g).cloned().unwrap_or_else(C::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&GroupElement, &C)> {
        self.terms.iter()
    }

    pub fn support_len(&self) -> usize {
        self.terms.len()
    }

    /// Largest radius (sup norm or word length) over the support.
    pub fn support_radius(&self) -> u64 {
        self.terms.keys().map(|g| self.group.radius(g)).max().unwrap_or(0)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        same_group(&self.group, &other.group)?;
        let mut out = self.clone();
        for (g, c) in &other.terms {
            out.add_term(g.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.scale(&-C::one())
    }

    pub fn scale(&self, s: &C) -> Self {
        let mut out = Self::zero(self.group.clone());
        for (g, c) in &self.terms {
            out.add_term(g.clone(), c.clone() * s.clone());
        }
        out
    }

    /// Convolution: `(xy)^(g) = Σ_h x̂(h) ŷ(h⁻¹g)`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        same_group(&self.group, &other.group)?;
        let mut out = Self::zero(self.group.clone());
        for (g, a) in &self.terms {
            for (h, b) in &other.terms {
                out.add_term(self.group.mul_unchecked(g, h), a.clone() * b.clone());
            }
        }
        Ok(out)
    }

    pub fn pow(&self, k: u32) -> Result<Self> {
        let mut acc = Self::one(self.group.clone());
        for _ in 0..k {
            acc = acc.mul(self)?;
        }
        Ok(acc)
    }

    /// `(Σ α_g g)* = Σ conj(α_{g⁻¹}) g`.
    pub fn star(&self) -> Self {
        let mut out = Self::zero(self.group.clone());
        for (g, c) in &self.terms {
            out.add_term(self.group.inverse_unchecked(g), c.conj());
        }
        out
    }

    pub fn map_coeffs<D: Coeff>(&self, f: impl Fn(&C) -> D) -> GroupRingElement<D> {
        let mut out = GroupRingElement::zero(self.group.clone());
        for (g, c) in &self.terms {
            out.add_term(g.clone(), f(c));
        }
        out
    }
}

/// Free-function form of [`GroupRingElement::mul`].
pub fn ring_mul<C: Coeff>(x: &GroupRingElement<C>, y: &GroupRingElement<C>) -> Result<GroupRingElement<C>> {
    x.mul(y)
}

/// Free-function form of [`GroupRingElement::star`].
pub fn star<C: Coeff>(x: &GroupRingElement<C>) -> GroupRingElement<C> {
    x.star()
}

impl<C: Coeff> fmt::Display for GroupRingElement<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        let mut first = true;
        for (g, c) in &self.terms {
            let text = c.to_string();
            let (negative, magnitude) = match text.strip_prefix('-') {
                Some(rest) => (true, rest.to_string()),
                None => (false, text),
            };
            if first {
                if negative {
                    f.write_str("-")?;
                }
            } else {
                f.write_str(if negative { " - " } else { " + " })?;
            }
            first = false;
            let label = self.group.format_element(g);
            match (magnitude == "1", label == "1") {
                (true, true) => f.write_str("1")?,
                (true, false) => f.write_str(&label)?,
                (false, true) => f.write_str(&magnitude)?,
                (false, false) => write!(f, "{magnitude}*{label}")?,
            }
        }
        Ok(())
    }
}

/// An `m × n` matrix over the group ring, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupRingMatrix<C: Coeff = BigInt> {
    group: Arc<GroupSpec>,
    rows: usize,
    cols: usize,
    entries: Vec<GroupRingElement<C>>,
}

impl<C: Coeff> GroupRingMatrix<C> {
    pub fn zeros(group: Arc<GroupSpec>, rows: usize, cols: usize) -> Self {
        Self {
            entries: vec![GroupRingElement::zero(group.clone()); rows * cols],
            group,
            rows,
            cols,
        }
    }

    pub fn identity(group: Arc<GroupSpec>, n: usize) -> Self {
        let mut m = Self::zeros(group.clone(), n, n);
        for i in 0..n {
            m.entries[i * n + i] = GroupRingElement::one(group.clone());
        }
        m
    }

    pub fn from_rows(group: Arc<GroupSpec>, rows: Vec<Vec<GroupRingElement<C>>>) -> Result<Self> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("rows of unequal length".into()));
        }
        let n_rows = rows.len();
        let entries: Vec<_> = rows.into_iter().flatten().collect();
        for e in &entries {
            same_group(&group, e.group())?;
        }
        Ok(Self {
            group,
            rows: n_rows,
            cols,
            entries,
        })
    }

    /// A `0 × cols` matrix: the empty relation set.
    pub fn empty(group: Arc<GroupSpec>, cols: usize) -> Self {
        Self::zeros(group, 0, cols)
    }

    pub fn scalar(x: GroupRingElement<C>) -> Self {
        Self {
            group: x.group().clone(),
            rows: 1,
            cols: 1,
            entries: vec![x],
        }
    }

    pub fn group(&self) -> &Arc<GroupSpec> {
        &self.group
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &GroupRingElement<C> {
        &self.entries[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, x: GroupRingElement<C>) -> Result<()> {
        same_group(&self.group, x.group())?;
        self.entries[r * self.cols + c] = x;
        Ok(())
    }

    pub fn entries(&self) -> &[GroupRingElement<C>] {
        &self.entries
    }

    pub fn is_integral(&self) -> bool {
        C::INTEGRAL
    }

    pub fn total_support(&self) -> usize {
        self.entries.iter().map(GroupRingElement::support_len).sum()
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        same_group(&self.group, &other.group)?;
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.group.clone(), self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = GroupRingElement::zero(self.group.clone());
                for k in 0..self.cols {
                    acc = acc.add(&self.get(i, k).mul(other.get(k, j))?)?;
                }
                out.entries[i * other.cols + j] = acc;
            }
        }
        Ok(out)
    }

    /// Conjugate transpose with `*` applied entrywise.
    pub fn star(&self) -> Self {
        let mut out = Self::zeros(self.group.clone(), self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.entries[j * self.rows + i] = self.get(i, j).star();
            }
        }
        out
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn stack(&self, other: &Self) -> Result<Self> {
        same_group(&self.group, &other.group)?;
        if self.cols != other.cols {
            return Err(Error::Dimension("stacked matrices need equal column counts".into()));
        }
        let mut entries = self.entries.clone();
        entries.extend(other.entries.iter().cloned());
        Ok(Self {
            group: self.group.clone(),
            rows: self.rows + other.rows,
            cols: self.cols,
            entries,
        })
    }

    pub fn map_coeffs<D: Coeff>(&self, f: impl Fn(&C) -> D + Copy) -> GroupRingMatrix<D> {
        GroupRingMatrix {
            group: self.group.clone(),
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|e| e.map_coeffs(f)).collect(),
        }
    }

    /// Support elements of every entry, deduplicated and sorted.
    pub fn support(&self) -> Vec<GroupElement> {
        let mut all: Vec<GroupElement> = self
            .entries
            .iter()
            .flat_map(|e| e.terms().map(|(g, _)| g.clone()))
            .collect();
        all.sort();
        all.dedup();
        all
    }
}

impl<C: Coeff> fmt::Display for GroupRingMatrix<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for i in 0..self.rows {
            if i > 0 {
                f.write_str("; ")?;
            }
            for j in 0..self.cols {
                if j > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{}", self.get(i, j))?;
            }
        }
        f.write_str("]")
    }
}

/// `x̃ = [x_1 x_2 .. x_n]`: the column transposed without conjugation.
pub fn partial_adjoint<C: Coeff>(group: Arc<GroupSpec>, column: &[GroupRingElement<C>]) -> Result<GroupRingMatrix<C>> {
    GroupRingMatrix::from_rows(group, vec![column.to_vec()])
}

/// `Σ_j ((f*f)^k)_jj` read at the identity: the `2k`-th moment of the
/// spectral measure of `|f|` under `Tr ⊗ τ`.
pub fn trace_moment<C: Coeff>(f: &GroupRingMatrix<C>, k: u32) -> Result<C> {
    let gram = f.star().mul(f)?;
    let n = gram.rows();
    let mut power = GroupRingMatrix::identity(f.group().clone(), n);
    for _ in 0..k {
        power = power.mul(&gram)?;
    }
    let e = f.group().identity();
    let mut total = C::zero();
    for j in 0..n {
        total = total + power.get(j, j).coefficient(&e);
    }
    Ok(total)
}

/// `A = Z(Γ)^n / B` with `B` generated by the listed relators.
///
/// Each relator is a column in `Z(Γ)^n`; only a finite prefix of a
/// generating sequence is ever stored.
#[derive(Clone, Debug)]
pub struct ModulePresentation {
    group: Arc<GroupSpec>,
    rank: usize,
    relators: Vec<Vec<GroupRingElement>>,
}

impl ModulePresentation {
    pub fn new(group: Arc<GroupSpec>, rank: usize, relators: Vec<Vec<GroupRingElement>>) -> Result<Self> {
        if rank == 0 {
            return Err(Error::validation("module_rank", "rank must be at least 1"));
        }
        for (i, r) in relators.iter().enumerate() {
            if r.len() != rank {
                return Err(Error::validation(
                    format!("relators[{i}]"),
                    format!("relator has {} entries, module rank is {rank}", r.len()),
                ));
            }
            for x in r {
                same_group(&group, x.group())?;
            }
        }
        Ok(Self { group, rank, relators })
    }

    /// The free module `Z(Γ)^n`.
    pub fn free(group: Arc<GroupSpec>, rank: usize) -> Result<Self> {
        Self::new(group, rank, Vec::new())
    }

    pub fn group(&self) -> &Arc<GroupSpec> {
        &self.group
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn relators(&self) -> &[Vec<GroupRingElement>] {
        &self.relators
    }

    /// The `k × n` matrix whose rows are the partial adjoints of the first
    /// `k` relators.
    pub fn relator_matrix(&self, k: usize) -> Result<GroupRingMatrix> {
        if k > self.relators.len() {
            return Err(Error::validation(
                "relator_cutoff",
                format!("cutoff {k} exceeds the {} available relators", self.relators.len()),
            ));
        }
        let mut m = GroupRingMatrix::empty(self.group.clone(), self.rank);
        for r in &self.relators[..k] {
            m = m.stack(&partial_adjoint(self.group.clone(), r)?)?;
        }
        Ok(m)
    }
}
