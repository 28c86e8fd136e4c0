//! Finitely generated groups with computable normal forms.
//!
//! Four kinds are supported: free abelian groups `Z^d`, free groups `F_r`,
//! finite groups given by a multiplication table, and direct products of
//! these. Elements are always stored in normal form so that equality of
//! elements is equality of their representations.

mod level;
mod perm;

use std::fmt;

use crate::error::{Error, Result};

pub use level::{
    defect_statistics, folner_levels, quotient_chain, sofic_permutation, CatalogKind, DefectReport, FolnerBox,
    PairDefect, Provenance, QuotientSchedule, SoficLevel,
};
pub use perm::Permutation;

/// A finite group given by its multiplication table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteTable {
    table: Vec<Vec<usize>>,
    identity: usize,
    inverse: Vec<usize>,
    generators: Vec<usize>,
}

impl FiniteTable {
    /// Validates `table[g][h] = gh` as a group table by enumeration.
    ///
    /// `generators` lists the element indices used as generators.
    pub fn new(table: Vec<Vec<usize>>, generators: Vec<usize>) -> Result<Self> {
        let order = table.len();
        if order == 0 {
            return Err(Error::InvalidGroup("empty multiplication table".into()));
        }
        for (g, row) in table.iter().enumerate() {
            if row.len() != order {
                return Err(Error::InvalidGroup(format!(
                    "row {g} has length {} but the table has {order} rows",
                    row.len()
                )));
            }
            if let Some(&bad) = row.iter().find(|&&x| x >= order) {
                return Err(Error::InvalidGroup(format!("entry {bad} out of range in row {g}")));
            }
        }
        let identity = (0..order)
            .find(|&e| (0..order).all(|g| table[e][g] == g && table[g][e] == g))
            .ok_or_else(|| Error::InvalidGroup("no identity element".into()))?;
        for a in 0..order {
            for b in 0..order {
                for c in 0..order {
                    if table[table[a][b]][c] != table[a][table[b][c]] {
                        return Err(Error::InvalidGroup(format!("not associative at ({a}, {b}, {c})")));
                    }
                }
            }
        }
        let mut inverse = Vec::with_capacity(order);
        for g in 0..order {
            let inv = (0..order)
                .find(|&h| table[g][h] == identity && table[h][g] == identity)
                .ok_or_else(|| Error::InvalidGroup(format!("element {g} has no inverse")))?;
            inverse.push(inv);
        }
        if let Some(&bad) = generators.iter().find(|&&g| g >= order) {
            return Err(Error::InvalidGroup(format!("generator index {bad} out of range")));
        }
        Ok(Self {
            table,
            identity,
            inverse,
            generators,
        })
    }

    pub fn order(&self) -> usize {
        self.table.len()
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    pub fn product(&self, g: usize, h: usize) -> usize {
        self.table[g][h]
    }

    pub fn inverse_of(&self, g: usize) -> usize {
        self.inverse[g]
    }

    pub fn generators(&self) -> &[usize] {
        &self.generators
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GroupKind {
    FreeAbelian(usize),
    Free(usize),
    Finite(FiniteTable),
    DirectProduct(Vec<GroupSpec>),
}

/// A finitely generated group together with labels for its generators.
///
/// For a direct product the generator list is the concatenation of the
/// factors' generators, each embedded in its own coordinate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupSpec {
    kind: GroupKind,
    generators: Vec<String>,
}

/// Group element in normal form.
///
/// Free-group words are stored as nonzero letters: `+(i+1)` is generator
/// `i` and `-(i+1)` its inverse, with no letter adjacent to its inverse.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum GroupElement {
    Abelian(Vec<i64>),
    Word(Vec<i32>),
    Finite(usize),
    Product(Vec<GroupElement>),
}

// Words are ordered shortlex with letters `a < a^-1 < b < b^-1 < ..`.
fn letter_key(l: i32) -> u32 {
    l.unsigned_abs() * 2 + u32::from(l < 0)
}

impl Ord for GroupElement {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use GroupElement::*;
        match (self, other) {
            (Abelian(a), Abelian(b)) => a.cmp(b),
            (Word(a), Word(b)) => a
                .len()
                .cmp(&b.len())
                .then_with(|| a.iter().map(|&l| letter_key(l)).cmp(b.iter().map(|&l| letter_key(l)))),
            (Finite(a), Finite(b)) => a.cmp(b),
            (Product(a), Product(b)) => a.cmp(b),
            _ => self.variant_rank().cmp(&other.variant_rank()),
        }
    }
}

impl PartialOrd for GroupElement {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl GroupElement {
    fn variant_rank(&self) -> u8 {
        match self {
            GroupElement::Abelian(_) => 0,
            GroupElement::Word(_) => 1,
            GroupElement::Finite(_) => 2,
            GroupElement::Product(_) => 3,
        }
    }
}

fn default_labels(prefix: &[&str], fallback: char, count: usize) -> Vec<String> {
    if count <= prefix.len() {
        prefix[..count].iter().map(|s| s.to_string()).collect()
    } else {
        (1..=count).map(|i| format!("{fallback}{i}")).collect()
    }
}

impl GroupSpec {
    pub fn free_abelian(d: usize) -> Result<Self> {
        Self::free_abelian_with(d, default_labels(&["x", "y", "z", "w"], 'x', d))
    }

    pub fn free_abelian_with(d: usize, generators: Vec<String>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidGroup("free abelian rank must be at least 1".into()));
        }
        Self::with_labels(GroupKind::FreeAbelian(d), generators, d)
    }

    pub fn free(r: usize) -> Result<Self> {
        Self::free_with(r, default_labels(&["a", "b", "c", "d"], 'a', r))
    }

    pub fn free_with(r: usize, generators: Vec<String>) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidGroup("free group rank must be at least 1".into()));
        }
        Self::with_labels(GroupKind::Free(r), generators, r)
    }

    pub fn finite(table: FiniteTable, generators: Vec<String>) -> Result<Self> {
        let count = table.generators().len();
        Self::with_labels(GroupKind::Finite(table), generators, count)
    }

    pub fn direct_product(factors: Vec<GroupSpec>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidGroup("direct product needs at least one factor".into()));
        }
        let generators: Vec<String> = factors.iter().flat_map(|f| f.generators.iter().cloned()).collect();
        let count = generators.len();
        Self::with_labels(GroupKind::DirectProduct(factors), generators, count)
    }

    fn with_labels(kind: GroupKind, generators: Vec<String>, expected: usize) -> Result<Self> {
        if generators.len() != expected {
            return Err(Error::InvalidGroup(format!(
                "expected {expected} generator labels, got {}",
                generators.len()
            )));
        }
        for (i, label) in generators.iter().enumerate() {
            let valid = label
                .chars()
                .next()
                .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !valid {
                return Err(Error::InvalidGroup(format!("invalid generator label `{label}`")));
            }
            if generators[..i].contains(label) {
                return Err(Error::InvalidGroup(format!("duplicate generator label `{label}`")));
            }
        }
        Ok(Self { kind, generators })
    }

    pub fn kind(&self) -> &GroupKind {
        &self.kind
    }

    pub fn generator_labels(&self) -> &[String] {
        &self.generators
    }

    pub fn num_generators(&self) -> usize {
        self.generators.len()
    }

    pub fn generator_index(&self, label: &str) -> Option<usize> {
        self.generators.iter().position(|g| g == label)
    }

    pub fn identity(&self) -> GroupElement {
        match &self.kind {
            GroupKind::FreeAbelian(d) => GroupElement::Abelian(vec![0; *d]),
            GroupKind::Free(_) => GroupElement::Word(Vec::new()),
            GroupKind::Finite(t) => GroupElement::Finite(t.identity()),
            GroupKind::DirectProduct(fs) => GroupElement::Product(fs.iter().map(GroupSpec::identity).collect()),
        }
    }

    /// The `i`-th generator as an element.
    pub fn generator(&self, i: usize) -> Result<GroupElement> {
        if i >= self.num_generators() {
            return Err(Error::InvalidGroup(format!("generator index {i} out of range")));
        }
        Ok(match &self.kind {
            GroupKind::FreeAbelian(d) => {
                let mut v = vec![0; *d];
                v[i] = 1;
                GroupElement::Abelian(v)
            }
            GroupKind::Free(_) => GroupElement::Word(vec![i as i32 + 1]),
            GroupKind::Finite(t) => GroupElement::Finite(t.generators()[i]),
            GroupKind::DirectProduct(fs) => {
                let mut offset = 0;
                let mut parts: Vec<GroupElement> = fs.iter().map(GroupSpec::identity).collect();
                for (k, f) in fs.iter().enumerate() {
                    if i < offset + f.num_generators() {
                        parts[k] = f.generator(i - offset)?;
                        break;
                    }
                    offset += f.num_generators();
                }
                GroupElement::Product(parts)
            }
        })
    }

    /// Checks that `g` is a normal-form element of this group.
    pub fn check(&self, g: &GroupElement) -> Result<()> {
        let ok = match (&self.kind, g) {
            (GroupKind::FreeAbelian(d), GroupElement::Abelian(v)) => v.len() == *d,
            (GroupKind::Free(r), GroupElement::Word(w)) => {
                w.iter().all(|&l| l != 0 && l.unsigned_abs() as usize <= *r) && w.windows(2).all(|p| p[0] != -p[1])
            }
            (GroupKind::Finite(t), GroupElement::Finite(i)) => *i < t.order(),
            (GroupKind::DirectProduct(fs), GroupElement::Product(ps)) => {
                if ps.len() != fs.len() {
                    false
                } else {
                    for (f, p) in fs.iter().zip(ps) {
                        f.check(p)?;
                    }
                    true
                }
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::GroupMismatch(format!(
                "{g:?} is not an element of {}",
                self.describe()
            )))
        }
    }

    /// Normal form of `gh`.
    pub fn mul(&self, g: &GroupElement, h: &GroupElement) -> Result<GroupElement> {
        self.check(g)?;
        self.check(h)?;
        Ok(self.mul_unchecked(g, h))
    }

    pub(crate) fn mul_unchecked(&self, g: &GroupElement, h: &GroupElement) -> GroupElement {
        match (&self.kind, g, h) {
            (GroupKind::FreeAbelian(_), GroupElement::Abelian(a), GroupElement::Abelian(b)) => {
                GroupElement::Abelian(a.iter().zip(b).map(|(x, y)| x + y).collect())
            }
            (GroupKind::Free(_), GroupElement::Word(a), GroupElement::Word(b)) => {
                let mut out = a.clone();
                for &l in b {
                    if out.last() == Some(&-l) {
                        out.pop();
                    } else {
                        out.push(l);
                    }
                }
                GroupElement::Word(out)
            }
            (GroupKind::Finite(t), GroupElement::Finite(a), GroupElement::Finite(b)) => {
                GroupElement::Finite(t.product(*a, *b))
            }
            (GroupKind::DirectProduct(fs), GroupElement::Product(a), GroupElement::Product(b)) => {
                GroupElement::Product(
                    fs.iter()
                        .zip(a.iter().zip(b))
                        .map(|(f, (x, y))| f.mul_unchecked(x, y))
                        .collect(),
                )
            }
            _ => unreachable!("operands checked against the group"),
        }
    }

    pub fn inverse(&self, g: &GroupElement) -> Result<GroupElement> {
        self.check(g)?;
        Ok(self.inverse_unchecked(g))
    }

    pub(crate) fn inverse_unchecked(&self, g: &GroupElement) -> GroupElement {
        match (&self.kind, g) {
            (GroupKind::FreeAbelian(_), GroupElement::Abelian(a)) => {
                GroupElement::Abelian(a.iter().map(|x| -x).collect())
            }
            (GroupKind::Free(_), GroupElement::Word(w)) => GroupElement::Word(w.iter().rev().map(|l| -l).collect()),
            (GroupKind::Finite(t), GroupElement::Finite(a)) => GroupElement::Finite(t.inverse_of(*a)),
            (GroupKind::DirectProduct(fs), GroupElement::Product(ps)) => {
                GroupElement::Product(fs.iter().zip(ps).map(|(f, p)| f.inverse_unchecked(p)).collect())
            }
            _ => unreachable!("operand checked against the group"),
        }
    }

    /// `g^k` for any integer `k`.
    pub fn pow(&self, g: &GroupElement, k: i64) -> Result<GroupElement> {
        self.check(g)?;
        let base = if k < 0 { self.inverse_unchecked(g) } else { g.clone() };
        let mut acc = self.identity();
        for _ in 0..k.unsigned_abs() {
            acc = self.mul_unchecked(&acc, &base);
        }
        Ok(acc)
    }

    pub fn is_identity(&self, g: &GroupElement) -> bool {
        *g == self.identity()
    }

    /// Size of `g`: the sup norm for `Z^d`, the word length for `F_r`,
    /// zero for finite groups and the maximum over product factors.
    pub fn radius(&self, g: &GroupElement) -> u64 {
        match (&self.kind, g) {
            (_, GroupElement::Abelian(v)) => v.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0),
            (_, GroupElement::Word(w)) => w.len() as u64,
            (_, GroupElement::Finite(_)) => 0,
            (GroupKind::DirectProduct(fs), GroupElement::Product(ps)) => {
                fs.iter().zip(ps).map(|(f, p)| f.radius(p)).max().unwrap_or(0)
            }
            _ => 0,
        }
    }

    /// Short human-readable description, e.g. `Z^2` or `F_2`.
    pub fn describe(&self) -> String {
        match &self.kind {
            GroupKind::FreeAbelian(1) => "Z".to_string(),
            GroupKind::FreeAbelian(d) => format!("Z^{d}"),
            GroupKind::Free(r) => format!("F_{r}"),
            GroupKind::Finite(t) => format!("finite group of order {}", t.order()),
            GroupKind::DirectProduct(fs) => fs.iter().map(GroupSpec::describe).collect::<Vec<_>>().join(" x "),
        }
    }

    /// Renders `g` using the generator labels, `1` for the identity.
    pub fn format_element(&self, g: &GroupElement) -> String {
        fn power(label: &str, k: i64) -> String {
            if k == 1 {
                label.to_string()
            } else {
                format!("{label}^{k}")
            }
        }
        match (&self.kind, g) {
            (GroupKind::FreeAbelian(_), GroupElement::Abelian(v)) => {
                let parts: Vec<String> = v
                    .iter()
                    .enumerate()
                    .filter(|(_, &k)| k != 0)
                    .map(|(i, &k)| power(&self.generators[i], k))
                    .collect();
                if parts.is_empty() {
                    "1".into()
                } else {
                    parts.join("*")
                }
            }
            (GroupKind::Free(_), GroupElement::Word(w)) => {
                if w.is_empty() {
                    return "1".into();
                }
                let mut parts = Vec::new();
                let mut i = 0;
                while i < w.len() {
                    let mut j = i;
                    while j < w.len() && w[j] == w[i] {
                        j += 1;
                    }
                    let label = &self.generators[w[i].unsigned_abs() as usize - 1];
                    let run = (j - i) as i64;
                    parts.push(power(label, if w[i] < 0 { -run } else { run }));
                    i = j;
                }
                parts.join("*")
            }
            (GroupKind::Finite(t), GroupElement::Finite(i)) => {
                if *i == t.identity() {
                    "1".into()
                } else if let Some(k) = t.generators().iter().position(|x| x == i) {
                    self.generators[k].clone()
                } else {
                    format!("#{i}")
                }
            }
            (GroupKind::DirectProduct(fs), GroupElement::Product(ps)) => {
                let parts: Vec<String> = fs.iter().zip(ps).map(|(f, p)| f.format_element(p)).collect();
                format!("({})", parts.join(", "))
            }
            _ => format!("{g:?}"),
        }
    }
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z2() -> GroupSpec {
        GroupSpec::free_abelian(2).unwrap()
    }

    fn f2() -> GroupSpec {
        GroupSpec::free(2).unwrap()
    }

    fn cyclic_table(n: usize) -> Vec<Vec<usize>> {
        (0..n).map(|a| (0..n).map(|b| (a + b) % n).collect()).collect()
    }

    #[test]
    fn abelian_addition() {
        let g = z2();
        let p = g
            .mul(&GroupElement::Abelian(vec![1, 0]), &GroupElement::Abelian(vec![0, 1]))
            .unwrap();
        assert_eq!(p, GroupElement::Abelian(vec![1, 1]));
    }

    #[test]
    fn free_reduction() {
        let g = f2();
        let a = g.generator(0).unwrap();
        let b = g.generator(1).unwrap();
        let a_inv = g.inverse(&a).unwrap();
        assert_eq!(g.mul(&a, &a_inv).unwrap(), g.identity());

        // (ab)(b^-1 a) = a^2
        let ab = g.mul(&a, &b).unwrap();
        let binv_a = g.mul(&g.inverse(&b).unwrap(), &a).unwrap();
        assert_eq!(g.mul(&ab, &binv_a).unwrap(), g.pow(&a, 2).unwrap());
        assert_eq!(g.format_element(&g.pow(&a, 2).unwrap()), "a^2");
    }

    #[test]
    fn mismatched_groups_are_rejected() {
        let g = f2();
        let err = g.mul(&GroupElement::Abelian(vec![1]), &g.identity());
        assert!(matches!(err, Err(Error::GroupMismatch(_))));
        assert!(g.check(&GroupElement::Word(vec![1, -1])).is_err());
        assert!(g.check(&GroupElement::Word(vec![3])).is_err());
    }

    #[test]
    fn finite_table_validation() {
        let t = FiniteTable::new(cyclic_table(5), vec![1]).unwrap();
        assert_eq!(t.identity(), 0);
        assert_eq!(t.inverse_of(2), 3);

        let mut bad = cyclic_table(3);
        bad[1][1] = 1;
        assert!(FiniteTable::new(bad, vec![1]).is_err());
    }

    #[test]
    fn product_generators_embed() {
        let c3 = GroupSpec::finite(FiniteTable::new(cyclic_table(3), vec![1]).unwrap(), vec!["t".into()]).unwrap();
        let g = GroupSpec::direct_product(vec![GroupSpec::free_abelian(1).unwrap(), c3]).unwrap();
        assert_eq!(g.generator_labels(), ["x", "t"]);
        let t = g.generator(1).unwrap();
        let cube = g.pow(&t, 3).unwrap();
        assert!(g.is_identity(&cube));
        assert_eq!(g.format_element(&t), "(1, t)");
    }

    #[test]
    fn labels_must_be_distinct() {
        assert!(GroupSpec::free_with(2, vec!["a".into(), "a".into()]).is_err());
        assert!(GroupSpec::free_with(1, vec!["2a".into()]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn word(r: i32) -> impl Strategy<Value = Vec<i32>> {
            prop::collection::vec((1..=r).prop_flat_map(|g| prop_oneof![Just(g), Just(-g)]), 0..8)
        }

        fn reduce(g: &GroupSpec, letters: &[i32]) -> GroupElement {
            letters.iter().fold(g.identity(), |acc, &l| {
                g.mul_unchecked(&acc, &GroupElement::Word(vec![l]))
            })
        }

        proptest! {
            #[test]
            fn free_mul_associative(a in word(2), b in word(2), c in word(2)) {
                let g = f2();
                let (a, b, c) = (reduce(&g, &a), reduce(&g, &b), reduce(&g, &c));
                let left = g.mul(&g.mul(&a, &b).unwrap(), &c).unwrap();
                let right = g.mul(&a, &g.mul(&b, &c).unwrap()).unwrap();
                prop_assert_eq!(left, right);
            }

            #[test]
            fn free_inverse_two_sided(a in word(3)) {
                let g = GroupSpec::free(3).unwrap();
                let a = reduce(&g, &a);
                let inv = g.inverse(&a).unwrap();
                prop_assert!(g.is_identity(&g.mul(&a, &inv).unwrap()));
                prop_assert!(g.is_identity(&g.mul(&inv, &a).unwrap()));
                prop_assert_eq!(g.inverse(&inv).unwrap(), a.clone());
                prop_assert_eq!(g.mul(&g.identity(), &a).unwrap(), a);
            }

            #[test]
            fn abelian_mul_associative(a in prop::collection::vec(-5i64..5, 2),
                                       b in prop::collection::vec(-5i64..5, 2),
                                       c in prop::collection::vec(-5i64..5, 2)) {
                let g = z2();
                let (a, b, c) = (GroupElement::Abelian(a), GroupElement::Abelian(b), GroupElement::Abelian(c));
                let left = g.mul(&g.mul(&a, &b).unwrap(), &c).unwrap();
                let right = g.mul(&a, &g.mul(&b, &c).unwrap()).unwrap();
                prop_assert_eq!(left, right);
            }
        }
    }
}
