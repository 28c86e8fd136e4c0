use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{GroupElement, Permutation, SoficLevel};
use crate::ring::{Coeff, GroupRingElement};

/// Distance on `R/Z`.
pub fn torus_dist(x: f64, y: f64) -> f64 {
    let t = (x - y).rem_euclid(1.0);
    t.min(1.0 - t)
}

/// Reduces into `[0, 1)`.
pub fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Exponent `p ∈ [1, ∞]` of an averaged product metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Exponent(pub f64);

impl Exponent {
    pub const INF: Exponent = Exponent(f64::INFINITY);

    pub fn new(p: f64) -> Result<Self> {
        if p >= 1.0 {
            Ok(Exponent(p))
        } else {
            Err(Error::validation("p", format!("{p} must be at least 1")))
        }
    }

    pub fn is_infinite(&self) -> bool {
        self.0.is_infinite()
    }

    /// `((1/k) Σ x_j^p)^{1/p}`, or the maximum for `p = ∞`.
    pub fn mean(&self, xs: impl Iterator<Item = f64>) -> f64 {
        if self.is_infinite() {
            return xs.fold(0.0, f64::max);
        }
        let p = self.0;
        let (mut sum, mut k) = (0.0, 0usize);
        for x in xs {
            sum += if p == 1.0 {
                x
            } else if p == 2.0 {
                x * x
            } else {
                x.powf(p)
            };
            k += 1;
        }
        if k == 0 {
            return 0.0;
        }
        let m = sum / k as f64;
        if p == 1.0 {
            m
        } else if p == 2.0 {
            m.sqrt()
        } else {
            m.powf(1.0 / p)
        }
    }
}

impl std::fmt::Display for Exponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// How one configuration `χ ∈ (T^Γ)^n` is measured.
#[derive(Clone, Debug, PartialEq)]
pub enum MetricKind {
    /// `‖χ(e)‖` in `ℓ²` over the `n` components.
    Delta,
    /// `‖χ(e)‖` in `ℓ∞` over the `n` components.
    Theta,
    /// `ℓ²` over the pairings `⟨χ, α_j⟩` with listed module elements.
    DualGenerators(Vec<Vec<GroupRingElement>>),
}

/// A configuration metric together with the exponent of its product.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudometricSpec {
    pub kind: MetricKind,
    pub p: Exponent,
}

/// Combination of coordinate distances inside one configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InnerNorm {
    L2,
    LInf,
}

impl InnerNorm {
    pub fn combine(&self, xs: impl Iterator<Item = f64>) -> f64 {
        match self {
            InnerNorm::L2 => xs.map(|x| x * x).sum::<f64>().sqrt(),
            InnerNorm::LInf => xs.fold(0.0, f64::max),
        }
    }
}

impl PseudometricSpec {
    pub fn delta(p: Exponent) -> Self {
        Self {
            kind: MetricKind::Delta,
            p,
        }
    }

    pub fn theta(p: Exponent) -> Self {
        Self {
            kind: MetricKind::Theta,
            p,
        }
    }

    pub fn inner(&self) -> InnerNorm {
        match self.kind {
            MetricKind::Theta => InnerNorm::LInf,
            _ => InnerNorm::L2,
        }
    }

    /// Group elements at which configurations are read.
    pub fn support(&self, identity: &GroupElement) -> Vec<GroupElement> {
        match &self.kind {
            MetricKind::Delta | MetricKind::Theta => vec![identity.clone()],
            MetricKind::DualGenerators(alphas) => {
                let mut s: Vec<GroupElement> = alphas
                    .iter()
                    .flatten()
                    .flat_map(|x| x.terms().map(|(g, _)| g.clone()))
                    .collect();
                s.sort();
                s.dedup();
                s
            }
        }
    }

    pub fn label(&self) -> String {
        let k = match self.kind {
            MetricKind::Delta => "delta",
            MetricKind::Theta => "theta",
            MetricKind::DualGenerators(_) => "dual-generators",
        };
        format!("{k},p={}", self.p)
    }
}

/// `φ_ξ(j)(l)(g) = ξ(l)(σ(g)⁻¹ j) mod 1` on a finite window of `Γ`.
#[derive(Clone, Debug)]
pub struct TorusMicrostate {
    level: Arc<SoficLevel>,
    rank: usize,
    /// `ξ mod 1`, block-major.
    base: Vec<f64>,
    window: Vec<GroupElement>,
    index: HashMap<GroupElement, usize>,
    /// `σ(g)⁻¹` for each window element.
    inverse_perms: Vec<Permutation>,
}

/// Builds the torus microstate of `ξ ∈ R^{n·d}`.
pub fn microstate_from_vector(level: Arc<SoficLevel>, xi: &[f64], window: &[GroupElement]) -> Result<TorusMicrostate> {
    let d = level.degree();
    if d == 0 || !xi.len().is_multiple_of(d) || xi.is_empty() {
        return Err(Error::Dimension(format!(
            "vector of length {} is not a multiple of the degree {d}",
            xi.len()
        )));
    }
    let mut win: Vec<GroupElement> = window.to_vec();
    let e = level.group().identity();
    if !win.contains(&e) {
        win.push(e);
    }
    let mut index = HashMap::new();
    let mut inverse_perms = Vec::with_capacity(win.len());
    let mut unique = Vec::with_capacity(win.len());
    for g in win {
        if index.contains_key(&g) {
            continue;
        }
        inverse_perms.push(level.permutation(&g)?.inverse());
        index.insert(g.clone(), unique.len());
        unique.push(g);
    }
    Ok(TorusMicrostate {
        rank: xi.len() / d,
        base: xi.iter().map(|&x| wrap(x)).collect(),
        window: unique,
        index,
        inverse_perms,
        level,
    })
}

impl TorusMicrostate {
    pub fn level(&self) -> &SoficLevel {
        &self.level
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn degree(&self) -> usize {
        self.level.degree()
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn window(&self) -> &[GroupElement] {
        &self.window
    }

    pub fn is_exact(&self) -> bool {
        self.level.is_exact()
    }

    fn slot(&self, g: &GroupElement) -> Result<usize> {
        self.index
            .get(g)
            .copied()
            .ok_or_else(|| Error::InsufficientWindow(format!("element {}", self.level.group().format_element(g))))
    }

    /// `φ(j)(l)(g)`.
    pub fn value(&self, j: usize, l: usize, g: &GroupElement) -> Result<f64> {
        let s = self.slot(g)?;
        Ok(self.base[l * self.degree() + self.inverse_perms[s].apply(j)])
    }

    /// `⟨φ(j), α⟩ = Σ_l Σ_g α̂_l(g) φ(j)(l)(g) mod 1`.
    pub fn pairing<C: Coeff>(&self, j: usize, alpha: &[GroupRingElement<C>]) -> Result<f64> {
        self.pairing_with(alpha, |l, g| self.value(j, l, g))
    }

    fn pairing_with<C: Coeff>(
        &self,
        alpha: &[GroupRingElement<C>],
        mut chi: impl FnMut(usize, &GroupElement) -> Result<f64>,
    ) -> Result<f64> {
        if alpha.len() != self.rank {
            return Err(Error::Dimension(format!(
                "module element with {} components for rank {}",
                alpha.len(),
                self.rank
            )));
        }
        let mut acc = 0.0;
        for (l, a) in alpha.iter().enumerate() {
            for (g, c) in a.terms() {
                acc += c.to_f64() * chi(l, g)?;
            }
        }
        Ok(wrap(acc))
    }

    /// Coordinates of `φ(j)` under a metric, `d × r` values in `[0, 1)`.
    pub fn coordinates(&self, metric: &PseudometricSpec) -> Result<Vec<f64>> {
        let d = self.degree();
        let e = self.level.group().identity();
        match &metric.kind {
            MetricKind::Delta | MetricKind::Theta => {
                let mut out = Vec::with_capacity(d * self.rank);
                for j in 0..d {
                    for l in 0..self.rank {
                        out.push(self.value(j, l, &e)?);
                    }
                }
                Ok(out)
            }
            MetricKind::DualGenerators(alphas) => {
                let mut out = Vec::with_capacity(d * alphas.len());
                for j in 0..d {
                    for a in alphas {
                        out.push(self.pairing(j, a)?);
                    }
                }
                Ok(out)
            }
        }
    }

    /// Elements the window must contain for [`map_membership`].
    pub fn required_window(
        level: &SoficLevel,
        relation_set: &[GroupElement],
        metric: &PseudometricSpec,
        relators: &[Vec<GroupRingElement>],
    ) -> Result<Vec<GroupElement>> {
        let group = level.group();
        let e = group.identity();
        let support = metric.support(&e);
        let mut out = vec![e];
        out.extend(support.iter().cloned());
        for g in relation_set {
            let gi = group.inverse(g)?;
            for h in &support {
                out.push(group.mul(&gi, h)?);
            }
        }
        for r in relators {
            for x in r {
                out.extend(x.terms().map(|(g, _)| g.clone()));
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }

    /// Torus values `(level, point, coordinate, value)` as CSV rows.
    pub fn csv_rows(&self, point: usize, metric: &PseudometricSpec, out: &mut String) -> Result<()> {
        for (c, v) in self.coordinates(metric)?.into_iter().enumerate() {
            let _ = writeln!(out, "{},{point},{c},{v}", self.level.index());
        }
        Ok(())
    }
}

/// Header for [`TorusMicrostate::csv_rows`].
pub const MICROSTATE_CSV_HEADER: &str = "level,point,coordinate,value\n";

#[derive(Clone, Debug, Serialize)]
pub struct EquivarianceDefect {
    pub element: String,
    pub defect: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MembershipReport {
    pub level_index: usize,
    pub metric: String,
    pub delta: f64,
    /// `ρ_2(φ∘σ(g), gφ)` for each `g` in the relation set.
    pub equivariance: Vec<EquivarianceDefect>,
    /// `(1/d) Σ_j |⟨φ(j), b_k⟩|²` for the first `m` relators.
    pub relator_smallness: Vec<f64>,
    pub member: bool,
}

/// Checks `φ ∈ Map(ρ | T, F, m, δ, σ)`: every equivariance defect below
/// `δ` and every relator pairing of mean square below `δ²`.
pub fn map_membership(
    ms: &TorusMicrostate,
    metric: &PseudometricSpec,
    relation_set: &[GroupElement],
    delta: f64,
    relators: &[Vec<GroupRingElement>],
) -> Result<MembershipReport> {
    let level = ms.level();
    let group = level.group();
    let d = ms.degree();
    let e = group.identity();
    let support = metric.support(&e);
    let inner = metric.inner();
    let two = Exponent(2.0);
    let mut equivariance = Vec::with_capacity(relation_set.len());
    for g in relation_set {
        let pg = level.permutation(g)?;
        let gi = group.inverse(g)?;
        // (gχ)(h) = χ(g⁻¹h)
        let shifted: Vec<(usize, usize)> = support
            .iter()
            .map(|h| Ok((ms.slot(h)?, ms.slot(&group.mul(&gi, h)?)?)))
            .collect::<Result<_>>()?;
        let read = |j: usize, l: usize, slot: usize| ms.base[l * d + ms.inverse_perms[slot].apply(j)];
        let per_point = (0..d).map(|j| {
            let jg = pg.apply(j);
            match &metric.kind {
                MetricKind::Delta | MetricKind::Theta => inner.combine((0..ms.rank).map(|l| {
                    let (s_h, s_gih) = shifted[0];
                    torus_dist(read(jg, l, s_h), read(j, l, s_gih))
                })),
                MetricKind::DualGenerators(alphas) => inner.combine(alphas.iter().map(|a| {
                    let lhs = ms
                        .pairing_with(a, |l, h| Ok(read(jg, l, ms.slot(h)?)))
                        .unwrap_or(f64::NAN);
                    let rhs = ms
                        .pairing_with(a, |l, h| Ok(read(j, l, ms.slot(&group.mul(&gi, h)?)?)))
                        .unwrap_or(f64::NAN);
                    torus_dist(lhs, rhs)
                })),
            }
        });
        let defect = two.mean(per_point);
        if defect.is_nan() {
            return Err(Error::InsufficientWindow("pairing support".into()));
        }
        equivariance.push(EquivarianceDefect {
            element: group.format_element(g),
            defect,
        });
    }
    let mut relator_smallness = Vec::with_capacity(relators.len());
    for r in relators {
        let mut acc = 0.0;
        for j in 0..d {
            let v = ms.pairing(j, r)?;
            let t = torus_dist(v, 0.0);
            acc += t * t;
        }
        relator_smallness.push(acc / d as f64);
    }
    let member = equivariance.iter().all(|x| x.defect < delta) && relator_smallness.iter().all(|&s| s < delta * delta);
    Ok(MembershipReport {
        level_index: level.index(),
        metric: metric.label(),
        delta,
        equivariance,
        relator_smallness,
        member,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{folner_levels, quotient_chain, GroupSpec, QuotientSchedule};
    use crate::ring::parse_element;

    fn z_level(n: usize) -> (Arc<GroupSpec>, Arc<SoficLevel>) {
        let g = Arc::new(GroupSpec::free_abelian(1).unwrap());
        let lv = quotient_chain(&g, &QuotientSchedule::Congruence(vec![n]))
            .unwrap()
            .remove(0);
        (g, Arc::new(lv))
    }

    #[test]
    fn torus_distance_wraps() {
        assert!((torus_dist(0.95, 0.05) - 0.1).abs() < 1e-12);
        assert_eq!(torus_dist(0.25, 0.25), 0.0);
        assert_eq!(wrap(-0.25), 0.75);
        assert_eq!(wrap(3.0), 0.0);
    }

    #[test]
    fn exponent_means() {
        let xs = [0.1, 0.3];
        assert!((Exponent(1.0).mean(xs.into_iter()) - 0.2).abs() < 1e-15);
        assert!((Exponent(2.0).mean(xs.into_iter()) - 0.05f64.sqrt()).abs() < 1e-15);
        assert_eq!(Exponent::INF.mean(xs.into_iter()), 0.3);
        assert!(Exponent::new(0.5).is_err());
    }

    #[test]
    fn constant_microstate_is_invariant() {
        let (g, lv) = z_level(4);
        let x = g.generator(0).unwrap();
        let window = vec![g.identity(), x.clone(), g.inverse(&x).unwrap()];
        let ms = microstate_from_vector(lv, &[0.25; 4], &window).unwrap();
        for j in 0..4 {
            for h in &window {
                assert_eq!(ms.value(j, 0, h).unwrap(), 0.25);
            }
        }
        let relator = vec![parse_element(&g, "x - e").unwrap()];
        let rep = map_membership(&ms, &PseudometricSpec::delta(Exponent(2.0)), &[x], 0.01, &[relator]).unwrap();
        assert_eq!(rep.equivariance[0].defect, 0.0);
        assert_eq!(rep.relator_smallness, vec![0.0]);
        assert!(rep.member);
    }

    #[test]
    fn exact_levels_have_zero_defect() {
        let (g, lv) = z_level(7);
        let metric = PseudometricSpec::delta(Exponent(2.0));
        let f: Vec<GroupElement> = (-2..=2).map(|k| g.pow(&g.generator(0).unwrap(), k).unwrap()).collect();
        let window = TorusMicrostate::required_window(&lv, &f, &metric, &[]).unwrap();
        let xi: Vec<f64> = (0..7).map(|k| (k as f64 * 0.618).fract()).collect();
        let ms = microstate_from_vector(lv, &xi, &window).unwrap();
        let rep = map_membership(&ms, &metric, &f, 1e-9, &[]).unwrap();
        assert!(rep.equivariance.iter().all(|x| x.defect == 0.0));
    }

    #[test]
    fn folner_defect_counts_the_boundary() {
        let g = Arc::new(GroupSpec::free_abelian(2).unwrap());
        let lv = Arc::new(folner_levels(&g, &[vec![2, 4]]).unwrap().remove(0));
        let x = g.generator(0).unwrap();
        let metric = PseudometricSpec::delta(Exponent(2.0));
        let window = TorusMicrostate::required_window(&lv, std::slice::from_ref(&x), &metric, &[]).unwrap();
        let xi: Vec<f64> = (0..8).map(|k| k as f64 / 8.0).collect();
        let ms = microstate_from_vector(lv.clone(), &xi, &window).unwrap();
        let rep = map_membership(&ms, &metric, std::slice::from_ref(&x), 1.0, &[]).unwrap();
        // hand count: compare ξ(σ(g) j) with ξ(σ(g⁻¹)⁻¹ j) point by point
        let pg = lv.permutation(&x).unwrap();
        let pgi = lv.permutation(&g.inverse(&x).unwrap()).unwrap().inverse();
        let mut sq = 0.0;
        let mut disagreements = 0;
        for j in 0..8 {
            let t = torus_dist(xi[pg.apply(j)], xi[pgi.apply(j)]);
            if pg.apply(j) != pgi.apply(j) {
                disagreements += 1;
            }
            sq += t * t;
        }
        assert!((rep.equivariance[0].defect - (sq / 8.0f64).sqrt()).abs() < 1e-15);
        // at most a boundary fraction of the points, each at distance ≤ 1/2
        assert!(rep.equivariance[0].defect <= 0.5 * (disagreements as f64 / 8.0).sqrt() + 1e-15);
    }

    #[test]
    fn window_must_cover_the_relation_set() {
        let (g, lv) = z_level(5);
        let ms = microstate_from_vector(lv, &[0.1; 5], &[]).unwrap();
        let x = g.generator(0).unwrap();
        let err = map_membership(&ms, &PseudometricSpec::delta(Exponent(2.0)), &[x], 0.1, &[]).unwrap_err();
        assert!(matches!(err, Error::InsufficientWindow(_)));
    }
}
