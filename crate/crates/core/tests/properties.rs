//! Randomized checks of the structural invariants across modules.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_traits::ToPrimitive;
use proptest::prelude::*;
use soficrank::group::{defect_statistics, folner_levels, quotient_chain, CatalogKind, QuotientSchedule};
use soficrank::linalg::Budget;
use soficrank::microstates::{
    covering_number_bruteforce, map_membership, microstate_from_vector, Exponent, InnerNorm, PseudometricSpec,
    TorusMicrostate, TorusPointSet,
};
use soficrank::rank::{sandwich_bounds, vr_estimate, vr_prefix_scan, EstimatorOptions, EtaSchedule};
use soficrank::ring::trace_moment;
use soficrank::sofic::{normalized_hs_distance, represent};
use soficrank::spectral::{counting_function, singular_profile, ProfileOptions};
use soficrank::tiling::{check_quasi_tiling, orbit_covering_estimate, quasi_tile, random_configurations, BoxRegion};
use soficrank::{GroupElement, GroupRingElement, GroupRingMatrix, GroupSpec, ModulePresentation, SoficLevel};

fn z() -> Arc<GroupSpec> {
    Arc::new(GroupSpec::free_abelian(1).unwrap())
}

fn f2() -> Arc<GroupSpec> {
    Arc::new(GroupSpec::free(2).unwrap())
}

fn dense(a: &soficrank::SoficMatrix) -> DMatrix<f64> {
    a.to_dense(&Budget::default()).unwrap()
}

/// Laurent polynomials over `Z` with exponents in `[-3, 3]`.
fn laurent() -> impl Strategy<Value = Vec<(i64, i64)>> {
    prop::collection::vec((-3i64..=3, -3i64..=3), 1..5)
}

fn z_element(g: &Arc<GroupSpec>, terms: &[(i64, i64)]) -> GroupRingElement {
    GroupRingElement::from_terms(
        g.clone(),
        terms
            .iter()
            .map(|&(e, c)| (GroupElement::Abelian(vec![e]), BigInt::from(c))),
    )
    .unwrap()
}

/// Elements of `Z(F_2)` supported on words of length at most 3.
fn free_element() -> impl Strategy<Value = Vec<(Vec<i32>, i64)>> {
    let letter = prop_oneof![Just(1), Just(-1), Just(2), Just(-2)];
    prop::collection::vec((prop::collection::vec(letter, 0..4), -2i64..=2), 1..4)
}

fn f2_element(g: &Arc<GroupSpec>, terms: &[(Vec<i32>, i64)]) -> GroupRingElement {
    let reduce = |w: &[i32]| {
        w.iter().fold(g.identity(), |acc, &l| {
            let gen = g.generator(l.unsigned_abs() as usize - 1).unwrap();
            let gen = if l < 0 { g.inverse(&gen).unwrap() } else { gen };
            g.mul(&acc, &gen).unwrap()
        })
    };
    GroupRingElement::from_terms(g.clone(), terms.iter().map(|(w, c)| (reduce(w), BigInt::from(*c)))).unwrap()
}

fn f2_level(degree: usize, seed: u64) -> SoficLevel {
    let kind = CatalogKind::RandomTransitive { seed };
    quotient_chain(
        &f2(),
        &QuotientSchedule::Catalog {
            kind,
            degrees: vec![degree],
        },
    )
    .unwrap()
    .remove(0)
}

fn z_level(n: usize) -> SoficLevel {
    quotient_chain(&z(), &QuotientSchedule::Congruence(vec![n]))
        .unwrap()
        .remove(0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn abelian_normal_forms_form_a_group(a in prop::collection::vec(-9i64..9, 2),
                                         b in prop::collection::vec(-9i64..9, 2),
                                         c in prop::collection::vec(-9i64..9, 2)) {
        let g = GroupSpec::free_abelian(2).unwrap();
        let (a, b, c) = (GroupElement::Abelian(a), GroupElement::Abelian(b), GroupElement::Abelian(c));
        prop_assert_eq!(g.mul(&g.mul(&a, &b).unwrap(), &c).unwrap(), g.mul(&a, &g.mul(&b, &c).unwrap()).unwrap());
        let inv = g.inverse(&a).unwrap();
        prop_assert!(g.is_identity(&g.mul(&a, &inv).unwrap()));
        prop_assert!(g.is_identity(&g.mul(&inv, &a).unwrap()));
    }

    #[test]
    fn exact_levels_are_multiplicative(x in free_element(), seed in 0u64..1000) {
        let g = f2();
        let level = f2_level(24, seed);
        let support: Vec<_> = f2_element(&g, &x).terms().map(|(h, _)| h.clone()).collect();
        let pairs: Vec<_> = support.iter().flat_map(|a| support.iter().map(move |b| (a.clone(), b.clone()))).collect();
        let report = defect_statistics(&level, &pairs).unwrap();
        prop_assert!(report.pairs.iter().all(|p| p.multiplicative_fraction == 1.0));
        prop_assert!(level.permutation(&g.identity()).unwrap().is_identity());
    }

    #[test]
    fn folner_defect_is_bounded_by_the_boundary(g in prop::collection::vec(-2i64..=2, 2),
                                                h in prop::collection::vec(-2i64..=2, 2),
                                                n in 5usize..12) {
        let grp = GroupSpec::free_abelian(2).unwrap();
        let level = folner_levels(&grp, &[vec![n, n]]).unwrap().remove(0);
        let norm = |v: &[i64]| v.iter().map(|c| c.abs()).max().unwrap_or(0) as f64;
        let gh: Vec<i64> = g.iter().zip(&h).map(|(a, b)| a + b).collect();
        let bound = (norm(&g) + norm(&h) + norm(&gh)) * 2.0 / n as f64;
        let pair = (GroupElement::Abelian(g), GroupElement::Abelian(h));
        let report = defect_statistics(&level, &[pair]).unwrap();
        prop_assert!(1.0 - report.pairs[0].multiplicative_fraction <= bound + 1e-12);
    }

    #[test]
    fn representation_is_a_homomorphism_on_exact_levels(x in free_element(), y in free_element(), seed in 0u64..1000) {
        let g = f2();
        let level = f2_level(16, seed);
        let (fx, fy) = (f2_element(&g, &x), f2_element(&g, &y));
        let prod = GroupRingMatrix::scalar(fx.mul(&fy).unwrap());
        let a = represent(&level, &GroupRingMatrix::scalar(fx.clone())).unwrap();
        let b = represent(&level, &GroupRingMatrix::scalar(fy)).unwrap();
        prop_assert_eq!(dense(&represent(&level, &prod).unwrap()), dense(&a) * dense(&b));
        let star = represent(&level, &GroupRingMatrix::scalar(fx.star())).unwrap();
        prop_assert_eq!(dense(&star), dense(&a).transpose());
        prop_assert_eq!(dense(&a.transpose()), dense(&a).transpose());
    }

    #[test]
    fn folner_homomorphism_defect_is_bounded(x in laurent(), y in laurent(), n in 6usize..20) {
        let g = z();
        let grp = GroupSpec::free_abelian(1).unwrap();
        let level = folner_levels(&grp, &[vec![n]]).unwrap().remove(0);
        let (fx, fy) = (z_element(&g, &x), z_element(&g, &y));
        let lhs = represent(&level, &GroupRingMatrix::scalar(fx.mul(&fy).unwrap())).unwrap();
        let rhs = represent(&level, &GroupRingMatrix::scalar(fx.clone()))
            .unwrap()
            .mul(&represent(&level, &GroupRingMatrix::scalar(fy.clone())).unwrap())
            .unwrap();
        // triangle inequality over the pair defects ‖σ(a)σ(b) − σ(ab)‖₂² = 2·(1 − fraction)
        let mut bound = 0.0;
        for (a, ca) in fx.terms() {
            for (b, cb) in fy.terms() {
                let rep = defect_statistics(&level, &[(a.clone(), b.clone())]).unwrap();
                let w = (ca * cb).to_f64().unwrap().abs();
                bound += w * (2.0 * (1.0 - rep.pairs[0].multiplicative_fraction)).sqrt();
            }
        }
        prop_assert!(normalized_hs_distance(&lhs, &rhs).unwrap() <= bound + 1e-9);
    }

    #[test]
    fn trace_moment_matches_fourier_quadrature(x in laurent(), k in 1u32..4) {
        let g = z();
        let f = z_element(&g, &x);
        let exact = trace_moment(&GroupRingMatrix::scalar(f.clone()), k).unwrap().to_f64().unwrap();
        // the integrand is a trigonometric polynomial of degree ≤ 6k, so a
        // uniform grid finer than that integrates it exactly
        let grid = 64;
        let quad = (0..grid)
            .map(|j| {
                let t = 2.0 * PI * j as f64 / grid as f64;
                let (re, im) = f.terms().fold((0.0, 0.0), |(re, im), (h, c)| {
                    let GroupElement::Abelian(e) = h else { unreachable!() };
                    let c = c.to_f64().unwrap();
                    (re + c * (e[0] as f64 * t).cos(), im + c * (e[0] as f64 * t).sin())
                });
                (re * re + im * im).powi(k as i32)
            })
            .sum::<f64>()
            / grid as f64;
        prop_assert!(exact >= 0.0);
        prop_assert!((exact - quad).abs() <= 1e-6 * exact.max(1.0), "{} vs {}", exact, quad);
    }

    #[test]
    fn counting_function_is_monotone(x in laurent(), n in 4usize..40) {
        let g = z();
        let a = represent(&z_level(n), &GroupRingMatrix::scalar(z_element(&g, &x))).unwrap();
        let etas: Vec<f64> = (0..=24).map(|j| j as f64 * 0.5).collect();
        let cf = counting_function(&singular_profile(&a, &ProfileOptions::default()).unwrap(), &etas).unwrap();
        prop_assert!(cf.values.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(*cf.values.last().unwrap(), 1.0);
    }

    #[test]
    fn singular_values_reproduce_the_hs_norm(x in free_element(), y in free_element(), seed in 0u64..100) {
        let g = f2();
        let level = f2_level(12, seed);
        let e = f2_element(&g, &x);
        let f = GroupRingMatrix::from_rows(g.clone(), vec![vec![e.clone(), f2_element(&g, &y)], vec![e.star(), e]]).unwrap();
        let a = represent(&level, &f).unwrap();
        let profile = singular_profile(&a, &ProfileOptions::default()).unwrap();
        let sum: f64 = profile.values().unwrap().iter().map(|s| s * s).sum();
        let hs = a.normalized_hs_norm();
        prop_assert!((sum / (2.0 * 12.0) - hs * hs).abs() <= 1e-9 * (1.0 + hs * hs));
    }

    #[test]
    fn sandwich_is_ordered(d in 0.0f64..4.0, eps in 1e-9f64..0.999) {
        let (lo, hi) = sandwich_bounds(d, eps).unwrap();
        prop_assert!(lo <= hi);
        let rate = ((3.0 + 3.0 * eps) / eps).ln() / (1.0 / eps).ln() - 1.0;
        prop_assert!((hi - lo - d * rate).abs() <= 1e-9 * (1.0 + d));
    }

    #[test]
    fn free_modules_have_full_rank(n in 1usize..4, degrees in prop::collection::btree_set(2usize..40, 2..5)) {
        let g = z();
        let levels = quotient_chain(&g, &QuotientSchedule::Congruence(degrees.into_iter().collect())).unwrap();
        let est = vr_estimate(&levels, &ModulePresentation::free(g, n).unwrap(), 0, &EtaSchedule::default(), &EstimatorOptions::default()).unwrap();
        prop_assert!(est.table.iter().all(|r| r.count_fraction == n as f64));
        prop_assert_eq!(est.estimate, n as f64);
    }

    #[test]
    fn adding_relators_never_grows_the_kernel(rels in prop::collection::vec(free_element(), 1..4), seed in 0u64..100) {
        let g = f2();
        let relators = rels.iter().map(|r| vec![f2_element(&g, r)]).collect::<Vec<_>>();
        let k = relators.len();
        let pres = ModulePresentation::new(g, 1, relators).unwrap();
        let levels = vec![f2_level(16, seed), f2_level(24, seed)];
        let opts = EstimatorOptions { integer_rank: true, ..Default::default() };
        let est = vr_prefix_scan(&levels, &pres, k, &EtaSchedule::kernel_only(1), &opts).unwrap();
        let rows = est.prefix.unwrap();
        for w in rows.windows(2) {
            for (a, b) in w[0].kernel_fractions.iter().zip(&w[1].kernel_fractions) {
                prop_assert!(b <= a, "{:?}", rows);
            }
        }
    }

    #[test]
    fn covering_bounds_grow_with_the_exponent(points in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 1..60),
                                              eps in prop_oneof![Just(0.25), Just(0.125)]) {
        let set = TorusPointSet::new(3, 1, points).unwrap();
        let mut last = 0;
        for p in [1.0, 2.0, f64::INFINITY] {
            let b = covering_number_bruteforce(&set, InnerNorm::LInf, Exponent(p), eps, 1000, &Budget::default()).unwrap();
            prop_assert!(b.lower <= b.upper);
            prop_assert!(b.upper >= last);
            last = b.upper;
        }
    }

    #[test]
    fn exact_microstates_are_equivariant(xi in prop::collection::vec(-3.0f64..3.0, 12), seed in 0u64..100) {
        let g = f2();
        let level = Arc::new(f2_level(12, seed));
        let metric = PseudometricSpec::delta(Exponent(2.0));
        let relation_set: Vec<_> = ["a", "b", "a^-1", "a*b"].iter()
            .map(|w| soficrank::ring::parse_element(&g, w).unwrap().terms().next().unwrap().0.clone())
            .collect();
        let window = TorusMicrostate::required_window(&level, &relation_set, &metric, &[]).unwrap();
        let ms = microstate_from_vector(level, &xi, &window).unwrap();
        let rep = map_membership(&ms, &metric, &relation_set, 1e-12, &[]).unwrap();
        prop_assert!(rep.equivariance.iter().all(|d| d.defect == 0.0));
    }

    #[test]
    fn quasi_tilings_are_disjoint_and_full(sides in prop::collection::vec(4usize..40, 2),
                                           shapes in prop::collection::vec(prop::collection::vec(1usize..8, 2), 1..3),
                                           eta in 0.02f64..0.4) {
        let ambient = BoxRegion::at_origin(sides).unwrap();
        let shapes: Vec<_> = shapes.into_iter().map(|s| BoxRegion::at_origin(s).unwrap()).collect();
        let t = quasi_tile(&ambient, &shapes, eta).unwrap();
        let check = check_quasi_tiling(&t);
        prop_assert!(check.inside && check.disjoint && check.full_tiles);
        for tile in &t.tiles {
            prop_assert!(tile.cells.len() as f64 >= (1.0 - eta) * shapes[tile.shape].len() as f64);
        }
    }

    #[test]
    fn divisible_boxes_are_covered_exactly(m in 1usize..6, k in 1usize..6, s in 1usize..5) {
        let ambient = BoxRegion::at_origin(vec![m * s, k * s]).unwrap();
        let t = quasi_tile(&ambient, &[BoxRegion::at_origin(vec![s, s]).unwrap()], 0.1).unwrap();
        prop_assert_eq!(t.coverage, 1.0);
    }
}

#[test]
fn shipped_orbit_exponents_shrink_as_eps_grows() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../jobs/z2_tile.toml");
    let out = soficrank::job::run_job(
        &soficrank::job::JobSpec::load(&path).unwrap(),
        soficrank::job::Command::Tile,
    )
    .unwrap();
    let json: serde_json::Value = serde_json::from_str(&out.json).unwrap();
    let rows = json["result"]["orbit"].as_array().expect("orbit rows");
    for a in rows {
        for b in rows {
            let same = a["folner_index"] == b["folner_index"] && a["p"] == b["p"];
            if same && a["eps"].as_f64() < b["eps"].as_f64() {
                assert!(b["exponent"].as_f64() <= a["exponent"].as_f64(), "{a} vs {b}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn orbit_covers_shrink_as_eps_grows(seed in 0u64..1000) {
        let window = BoxRegion::at_origin(vec![3]).unwrap();
        let sample = random_configurations(&window, 1, 120, seed).unwrap();
        let folner = vec![BoxRegion::at_origin(vec![1]).unwrap(), BoxRegion::at_origin(vec![2]).unwrap()];
        let eps = [0.0625, 0.125, 0.25];
        let rows = orbit_covering_estimate(
            &sample, &PseudometricSpec::theta(Exponent(2.0)), &folner, Exponent(2.0), &eps, 1000, &Budget::default(),
        ).unwrap();
        for fi in 0..folner.len() {
            let mut upper: Vec<_> = rows.iter().filter(|r| r.folner_index == fi).map(|r| (r.eps, r.upper)).collect();
            upper.sort_by(|a, b| a.0.total_cmp(&b.0));
            prop_assert!(upper.windows(2).all(|w| w[1].1 <= w[0].1), "{:?}", upper);
        }
    }
}
