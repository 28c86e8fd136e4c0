//! Sofic approximation levels: maps from a group into finite symmetric groups.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FiniteTable, GroupElement, GroupKind, GroupSpec, Permutation};
use crate::error::{Error, Result};

/// A box `[0, N_1) × .. × [0, N_d)` in `Z^d`, used as a Følner set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FolnerBox {
    sides: Vec<usize>,
}

impl FolnerBox {
    pub fn new(group: &GroupSpec, sides: Vec<usize>) -> Result<Self> {
        let GroupKind::FreeAbelian(d) = group.kind() else {
            return Err(Error::Unsupported(format!(
                "Følner boxes need a free abelian group, got {group}"
            )));
        };
        if sides.len() != *d {
            return Err(Error::Dimension(format!(
                "box has {} sides but the group has rank {d}",
                sides.len()
            )));
        }
        if sides.contains(&0) {
            return Err(Error::InvalidGroup("box side lengths must be at least 1".into()));
        }
        Ok(Self { sides })
    }

    pub fn sides(&self) -> &[usize] {
        &self.sides
    }

    pub fn len(&self) -> usize {
        self.sides.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Lexicographic index of a point, first coordinate most significant.
    fn index_of(&self, point: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for (&c, &n) in point.iter().zip(&self.sides) {
            if c < 0 || c as usize >= n {
                return None;
            }
            idx = idx * n + c as usize;
        }
        Some(idx)
    }

    fn point_of(&self, mut idx: usize, out: &mut [i64]) {
        for (slot, &n) in out.iter_mut().zip(&self.sides).rev() {
            *slot = (idx % n) as i64;
            idx /= n;
        }
    }

    /// Translation by `g` on `F ∩ g⁻¹F`, completed on the boundary by the
    /// order-preserving bijection `F ∖ g⁻¹F → F ∖ gF`.
    fn translation(&self, g: &[i64]) -> Permutation {
        let total = self.len();
        let mut images = vec![u32::MAX; total];
        let mut hit = vec![false; total];
        let mut point = vec![0i64; self.sides.len()];
        let mut shifted = vec![0i64; self.sides.len()];
        let mut unmapped = Vec::new();
        for k in 0..total {
            self.point_of(k, &mut point);
            for ((s, p), d) in shifted.iter_mut().zip(&point).zip(g) {
                *s = p + d;
            }
            match self.index_of(&shifted) {
                Some(j) => {
                    images[k] = j as u32;
                    hit[j] = true;
                }
                None => unmapped.push(k),
            }
        }
        let free_targets = (0..total).filter(|&j| !hit[j]);
        for (k, j) in unmapped.into_iter().zip(free_targets) {
            images[k] = j as u32;
        }
        Permutation::from_images_unchecked(images)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Provenance {
    FiniteQuotient { chain_index: usize },
    FolnerSet { sides: Vec<usize> },
    ExplicitTable,
}

#[derive(Clone, Debug)]
enum Action {
    /// `(Z/N)^d` acting on itself by translation.
    Torus {
        modulus: usize,
        dim: usize,
    },
    Box(FolnerBox),
    /// One permutation per generator, extended multiplicatively.
    Generators {
        perms: Vec<Permutation>,
        inverses: Vec<Permutation>,
    },
    Regular(FiniteTable),
    Product {
        factors: Vec<(GroupSpec, Action)>,
        degrees: Vec<usize>,
    },
}

fn perm_pow(p: &Permutation, inv: &Permutation, k: i64) -> Permutation {
    let mut base = if k < 0 { inv.clone() } else { p.clone() };
    let mut e = k.unsigned_abs();
    let mut acc = Permutation::identity(p.degree());
    while e > 0 {
        if e & 1 == 1 {
            acc = acc.compose(&base);
        }
        base = base.compose(&base);
        e >>= 1;
    }
    acc
}

impl Action {
    fn permutation(&self, group: &GroupSpec, g: &GroupElement, degree: usize) -> Result<Permutation> {
        let not_expressible = |reason: &str| Error::NotExpressible {
            element: format!("{g:?}"),
            reason: reason.to_string(),
        };
        match (self, g) {
            (Action::Torus { modulus, dim }, GroupElement::Abelian(v)) if v.len() == *dim => {
                let n = *modulus as i64;
                let mut images = Vec::with_capacity(degree);
                let mut coords = vec![0i64; *dim];
                for k in 0..degree {
                    let mut rest = k;
                    for c in coords.iter_mut().rev() {
                        *c = (rest % *modulus) as i64;
                        rest /= *modulus;
                    }
                    let mut idx = 0i64;
                    for (c, shift) in coords.iter().zip(v) {
                        idx = idx * n + (c + shift).rem_euclid(n);
                    }
                    images.push(idx as u32);
                }
                Ok(Permutation::from_images_unchecked(images))
            }
            (Action::Box(b), GroupElement::Abelian(v)) if v.len() == b.sides.len() => Ok(b.translation(v)),
            (Action::Generators { perms, inverses }, GroupElement::Word(w)) => {
                let mut acc = Permutation::identity(degree);
                // σ(s_1 .. s_n) = σ(s_1) ∘ .. ∘ σ(s_n)
                for &letter in w {
                    let i = letter.unsigned_abs() as usize - 1;
                    let p = if letter > 0 { perms.get(i) } else { inverses.get(i) };
                    let p = p.ok_or_else(|| not_expressible("generator has no permutation"))?;
                    acc = acc.compose(p);
                }
                Ok(acc)
            }
            (Action::Generators { perms, inverses }, GroupElement::Abelian(v)) if v.len() == perms.len() => {
                let mut acc = Permutation::identity(degree);
                for ((p, inv), &k) in perms.iter().zip(inverses).zip(v) {
                    if k != 0 {
                        acc = acc.compose(&perm_pow(p, inv, k));
                    }
                }
                Ok(acc)
            }
            (Action::Regular(t), GroupElement::Finite(i)) if *i < t.order() => {
                let images = (0..t.order()).map(|k| t.product(*i, k) as u32).collect();
                Ok(Permutation::from_images_unchecked(images))
            }
            (Action::Product { factors, degrees }, GroupElement::Product(parts)) if parts.len() == factors.len() => {
                let factor_perms = factors
                    .iter()
                    .zip(parts)
                    .zip(degrees)
                    .map(|(((spec, act), part), &d)| act.permutation(spec, part, d))
                    .collect::<Result<Vec<_>>>()?;
                let mut images = Vec::with_capacity(degree);
                let mut digits = vec![0usize; degrees.len()];
                for k in 0..degree {
                    let mut rest = k;
                    for (slot, &d) in digits.iter_mut().zip(degrees).rev() {
                        *slot = rest % d;
                        rest /= d;
                    }
                    let mut idx = 0usize;
                    for ((p, &digit), &d) in factor_perms.iter().zip(&digits).zip(degrees) {
                        idx = idx * d + p.apply(digit);
                    }
                    images.push(idx as u32);
                }
                Ok(Permutation::from_images_unchecked(images))
            }
            _ => {
                group
                    .check(g)
                    .map_err(|_| not_expressible("element of a different group"))?;
                Err(not_expressible("unsupported element form for this level"))
            }
        }
    }
}

/// One sofic approximation level `σ_i : Γ → Sym(d_i)`.
#[derive(Clone, Debug)]
pub struct SoficLevel {
    index: usize,
    degree: usize,
    provenance: Provenance,
    group: GroupSpec,
    action: Action,
}

impl SoficLevel {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn group(&self) -> &GroupSpec {
        &self.group
    }

    /// True when the level is an exact homomorphism (zero defect).
    pub fn is_exact(&self) -> bool {
        !matches!(self.provenance, Provenance::FolnerSet { .. })
    }

    pub fn permutation(&self, g: &GroupElement) -> Result<Permutation> {
        self.group.check(g).map_err(|e| Error::NotExpressible {
            element: format!("{g:?}"),
            reason: e.to_string(),
        })?;
        self.action.permutation(&self.group, g, self.degree)
    }

    /// Permutations assigned to the generators, in generator order.
    pub fn generator_permutations(&self) -> Result<Vec<Permutation>> {
        (0..self.group.num_generators())
            .map(|i| self.permutation(&self.group.generator(i)?))
            .collect()
    }

    pub fn describe(&self) -> String {
        match &self.provenance {
            Provenance::FiniteQuotient { chain_index } => {
                format!("quotient level {chain_index} of degree {}", self.degree)
            }
            Provenance::FolnerSet { sides } => format!("Følner box {sides:?}"),
            Provenance::ExplicitTable => format!("explicit table of degree {}", self.degree),
        }
    }
}

/// `σ_i(g)` at the given level.
pub fn sofic_permutation(level: &SoficLevel, g: &GroupElement) -> Result<Permutation> {
    level.permutation(g)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CatalogKind {
    /// Generator `i` acts as the cyclic shift by `i + 1`.
    CyclicCommuting,
    /// Generator 0 is a uniformly random `d`-cycle (so the action is
    /// transitive), the others uniformly random permutations.
    RandomTransitive { seed: u64 },
}

#[derive(Clone, Debug)]
pub enum QuotientSchedule {
    /// Congruence quotients `(Z/N)^d` of `Z^d`.
    Congruence(Vec<usize>),
    /// Built-in permutation actions of a free group.
    Catalog { kind: CatalogKind, degrees: Vec<usize> },
    /// One entry per level, one permutation per generator.
    Explicit(Vec<Vec<Permutation>>),
    /// The left regular action of a finite group on itself.
    Regular,
    /// One schedule per factor of a direct product, zipped level by level.
    Product(Vec<QuotientSchedule>),
}

fn check_degree(d: Option<usize>, what: &str) -> Result<usize> {
    match d {
        Some(d) if d <= u32::MAX as usize => Ok(d),
        _ => Err(Error::DegreeOverflow(format!("{what} does not fit in 32-bit indices"))),
    }
}

fn catalog_permutations(kind: CatalogKind, rank: usize, degree: usize) -> Vec<Permutation> {
    match kind {
        CatalogKind::CyclicCommuting => (0..rank).map(|i| Permutation::shift(degree, i as i64 + 1)).collect(),
        CatalogKind::RandomTransitive { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (degree as u64).rotate_left(32));
            let mut out = Vec::with_capacity(rank);
            let mut order: Vec<u32> = (0..degree as u32).collect();
            order.shuffle(&mut rng);
            let mut cycle = vec![0u32; degree];
            for i in 0..degree {
                cycle[order[i] as usize] = order[(i + 1) % degree];
            }
            out.push(Permutation::from_images_unchecked(cycle));
            for _ in 1..rank {
                let mut images: Vec<u32> = (0..degree as u32).collect();
                images.shuffle(&mut rng);
                out.push(Permutation::from_images_unchecked(images));
            }
            out
        }
    }
}

fn actions_for(spec: &GroupSpec, schedule: &QuotientSchedule) -> Result<Vec<(usize, Action, bool)>> {
    match (spec.kind(), schedule) {
        (GroupKind::FreeAbelian(d), QuotientSchedule::Congruence(moduli)) => moduli
            .iter()
            .map(|&n| {
                if n == 0 {
                    return Err(Error::validation("sizes", "congruence modulus must be positive"));
                }
                let degree = check_degree(n.checked_pow(*d as u32), "congruence quotient")?;
                Ok((degree, Action::Torus { modulus: n, dim: *d }, false))
            })
            .collect(),
        (GroupKind::Free(r), QuotientSchedule::Catalog { kind, degrees }) => degrees
            .iter()
            .map(|&degree| {
                if degree == 0 {
                    return Err(Error::validation("degrees", "catalog degree must be positive"));
                }
                check_degree(Some(degree), "catalog level")?;
                let perms = catalog_permutations(*kind, *r, degree);
                let inverses = perms.iter().map(Permutation::inverse).collect();
                Ok((degree, Action::Generators { perms, inverses }, false))
            })
            .collect(),
        (GroupKind::Free(_) | GroupKind::FreeAbelian(_), QuotientSchedule::Explicit(levels)) => levels
            .iter()
            .map(|perms| {
                if perms.len() != spec.num_generators() {
                    return Err(Error::NonHomomorphic(format!(
                        "{} permutations given for {} generators",
                        perms.len(),
                        spec.num_generators()
                    )));
                }
                let degree = perms.first().map(Permutation::degree).unwrap_or(0);
                if degree == 0 || perms.iter().any(|p| p.degree() != degree) {
                    return Err(Error::NonHomomorphic(
                        "generator permutations must share a positive degree".into(),
                    ));
                }
                if matches!(spec.kind(), GroupKind::FreeAbelian(_)) {
                    for (i, p) in perms.iter().enumerate() {
                        for q in &perms[i + 1..] {
                            if p.compose(q) != q.compose(p) {
                                return Err(Error::NonHomomorphic(
                                    "generator permutations of Z^d must commute".into(),
                                ));
                            }
                        }
                    }
                }
                let inverses = perms.iter().map(Permutation::inverse).collect();
                Ok((
                    degree,
                    Action::Generators {
                        perms: perms.clone(),
                        inverses,
                    },
                    true,
                ))
            })
            .collect(),
        (GroupKind::Finite(t), QuotientSchedule::Regular) => Ok(vec![(t.order(), Action::Regular(t.clone()), false)]),
        (GroupKind::DirectProduct(factors), QuotientSchedule::Product(schedules)) => {
            if factors.len() != schedules.len() {
                return Err(Error::validation(
                    "levels",
                    format!("{} factor schedules for {} factors", schedules.len(), factors.len()),
                ));
            }
            let per_factor = factors
                .iter()
                .zip(schedules)
                .map(|(f, s)| actions_for(f, s))
                .collect::<Result<Vec<_>>>()?;
            let count = per_factor.iter().map(Vec::len).max().unwrap_or(0);
            if per_factor.iter().any(|v| v.len() != count && v.len() != 1) {
                return Err(Error::validation(
                    "levels",
                    "factor schedules must have equal length (or a single level)",
                ));
            }
            (0..count)
                .map(|i| {
                    let mut degree = Some(1usize);
                    let mut parts = Vec::new();
                    let mut degrees = Vec::new();
                    let mut explicit = false;
                    for (f, levels) in factors.iter().zip(&per_factor) {
                        let (d, act, ex) = &levels[i.min(levels.len() - 1)];
                        degree = degree.and_then(|x| x.checked_mul(*d));
                        parts.push((f.clone(), act.clone()));
                        degrees.push(*d);
                        explicit |= *ex;
                    }
                    let degree = check_degree(degree, "product level")?;
                    Ok((
                        degree,
                        Action::Product {
                            factors: parts,
                            degrees,
                        },
                        explicit,
                    ))
                })
                .collect()
        }
        _ => Err(Error::Unsupported(format!(
            "schedule {} is not available for {spec}",
            schedule_name(schedule)
        ))),
    }
}

fn schedule_name(s: &QuotientSchedule) -> &'static str {
    match s {
        QuotientSchedule::Congruence(_) => "congruence",
        QuotientSchedule::Catalog { .. } => "catalog",
        QuotientSchedule::Explicit(_) => "explicit",
        QuotientSchedule::Regular => "regular",
        QuotientSchedule::Product(_) => "product",
    }
}

/// Levels of zero defect from finite quotients (or exact permutation
/// actions), with strictly increasing degree.
pub fn quotient_chain(spec: &GroupSpec, schedule: &QuotientSchedule) -> Result<Vec<SoficLevel>> {
    let actions = actions_for(spec, schedule)?;
    if actions.is_empty() {
        return Err(Error::validation("levels", "schedule produced no levels"));
    }
    for w in actions.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::validation(
                "levels",
                format!("degrees must strictly increase ({} then {})", w[0].0, w[1].0),
            ));
        }
    }
    Ok(actions
        .into_iter()
        .enumerate()
        .map(|(index, (degree, action, explicit))| SoficLevel {
            index,
            degree,
            provenance: if explicit {
                Provenance::ExplicitTable
            } else {
                Provenance::FiniteQuotient { chain_index: index }
            },
            group: spec.clone(),
            action,
        })
        .collect())
}

/// Canonical amenable levels `σ_F` on boxes of `Z^d`.
pub fn folner_levels(spec: &GroupSpec, boxes: &[Vec<usize>]) -> Result<Vec<SoficLevel>> {
    boxes
        .iter()
        .enumerate()
        .map(|(index, sides)| {
            let b = FolnerBox::new(spec, sides.clone())?;
            let degree = check_degree(
                sides.iter().try_fold(1usize, |acc, &s| acc.checked_mul(s)),
                "Følner box",
            )?;
            Ok(SoficLevel {
                index,
                degree,
                provenance: Provenance::FolnerSet { sides: sides.clone() },
                group: spec.clone(),
                action: Action::Box(b),
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct PairDefect {
    pub g: GroupElement,
    pub h: GroupElement,
    /// Fraction of points `k` with `σ(g)σ(h)(k) = σ(gh)(k)`.
    pub multiplicative_fraction: f64,
    /// Fraction of points with `σ(g)(k) ≠ σ(h)(k)`; `None` when `g = h`.
    pub separation_fraction: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct DefectReport {
    pub level_index: usize,
    pub degree: usize,
    pub pairs: Vec<PairDefect>,
}

impl DefectReport {
    pub fn min_multiplicative_fraction(&self) -> f64 {
        self.pairs.iter().map(|p| p.multiplicative_fraction).fold(1.0, f64::min)
    }
}

pub fn defect_statistics(level: &SoficLevel, pairs: &[(GroupElement, GroupElement)]) -> Result<DefectReport> {
    let group = level.group();
    let d = level.degree() as f64;
    let rows = pairs
        .iter()
        .map(|(g, h)| {
            let pg = level.permutation(g)?;
            let ph = level.permutation(h)?;
            let pgh = level.permutation(&group.mul(g, h)?)?;
            let agree = (0..level.degree())
                .filter(|&k| pg.apply(ph.apply(k)) == pgh.apply(k))
                .count();
            let separation_fraction =
                (g != h).then(|| (0..level.degree()).filter(|&k| pg.apply(k) != ph.apply(k)).count() as f64 / d);
            Ok(PairDefect {
                g: g.clone(),
                h: h.clone(),
                multiplicative_fraction: agree as f64 / d,
                separation_fraction,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DefectReport {
        level_index: level.index(),
        degree: level.degree(),
        pairs: rows,
    })
}
