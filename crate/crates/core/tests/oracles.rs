//! Worked examples checked against independent closed forms: circulant
//! spectra, central binomial coefficients, box enumeration and orbit counts.

use std::f64::consts::PI;
use std::sync::Arc;

use num_bigint::BigInt;
use soficrank::group::{folner_levels, quotient_chain, CatalogKind, QuotientSchedule};
use soficrank::linalg::Budget;
use soficrank::microstates::{
    covering_number_bruteforce, microstate_from_vector, near_kernel, Exponent, InnerNorm, TorusPointSet,
};
use soficrank::rank::{
    covering_sandwich, fourier_counting_oracle, fourier_oracle_vr, sandwich_bounds, vr_estimate, EstimatorOptions,
    EtaSchedule,
};
use soficrank::ring::{parse_element, trace_moment};
use soficrank::sofic::represent;
use soficrank::spectral::{counting_function, moment_check, singular_profile, ProfileOptions};
use soficrank::tiling::{check_quasi_tiling, quasi_tile, BoxRegion};
use soficrank::{GroupRingMatrix, GroupSpec, ModulePresentation, SoficLevel};

fn z() -> Arc<GroupSpec> {
    Arc::new(GroupSpec::free_abelian(1).unwrap())
}

fn f2() -> Arc<GroupSpec> {
    Arc::new(GroupSpec::free(2).unwrap())
}

fn scalar(g: &Arc<GroupSpec>, s: &str) -> GroupRingMatrix {
    GroupRingMatrix::scalar(parse_element(g, s).unwrap())
}

fn cyclic(g: &GroupSpec, n: usize) -> SoficLevel {
    quotient_chain(g, &QuotientSchedule::Congruence(vec![n]))
        .unwrap()
        .remove(0)
}

fn transitive(g: &GroupSpec, degrees: Vec<usize>) -> Vec<SoficLevel> {
    let kind = CatalogKind::RandomTransitive { seed: 7 };
    quotient_chain(g, &QuotientSchedule::Catalog { kind, degrees }).unwrap()
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

#[test]
fn word_reduction_in_f2() {
    let g = f2();
    let lhs = parse_element(&g, "(a*b)*(b^-1*a)").unwrap();
    assert_eq!(lhs, parse_element(&g, "a^2").unwrap());
}

#[test]
fn hand_convolutions() {
    let g = z();
    let x = parse_element(&g, "x + x^-1").unwrap();
    assert_eq!(x.mul(&x).unwrap(), parse_element(&g, "x^2 + 2 + x^-2").unwrap());
    let h = f2();
    let p = parse_element(&h, "a - 1")
        .unwrap()
        .mul(&parse_element(&h, "a^-1").unwrap())
        .unwrap();
    assert_eq!(p, parse_element(&h, "1 - a^-1").unwrap());
}

#[test]
fn trace_moments_are_central_binomials() {
    // τ((x + x⁻¹)^{2k}) = C(2k, k)
    let f = scalar(&z(), "x + x^-1");
    for k in 1..=6u32 {
        let m: BigInt = trace_moment(&f, k).unwrap();
        assert_eq!(m, BigInt::from(binomial(2 * k as u64, k as u64)), "k = {k}");
    }
    let a_plus_b = scalar(&f2(), "a + b");
    assert_eq!(trace_moment(&a_plus_b, 1).unwrap(), BigInt::from(2));
}

#[test]
fn congruence_level_of_z2_has_commuting_three_cycles() {
    let g = GroupSpec::free_abelian(2).unwrap();
    let level = cyclic(&g, 3);
    assert_eq!(level.degree(), 9);
    let gens = level.generator_permutations().unwrap();
    assert_eq!(gens[0].compose(&gens[1]), gens[1].compose(&gens[0]));
    for p in &gens {
        assert_eq!(p.fixed_points(), 0);
        assert!(p.cycles().iter().all(|c| c.len() == 3));
    }
}

#[test]
fn folner_box_translation_matches_enumeration() {
    let g = GroupSpec::free_abelian(2).unwrap();
    let level = folner_levels(&g, &[vec![3, 3]]).unwrap().remove(0);
    let x = g.generator(0).unwrap();
    let p = level.permutation(&x).unwrap();
    // lexicographic box order: point (i, j) has index 3i + j
    let translated = (0..9)
        .filter(|&k| {
            let (i, j) = (k / 3, k % 3);
            i + 1 < 3 && p.apply(k) == 3 * (i + 1) + j
        })
        .count();
    assert_eq!(translated, 6);
}

#[test]
fn difference_operator_spectrum_is_the_circulant_symbol() {
    let f = scalar(&z(), "x - 1");
    let level = cyclic(&z(), 8);
    let a = represent(&level, &f).unwrap();
    let profile = singular_profile(&a, &ProfileOptions::default()).unwrap();
    let mut expected: Vec<f64> = (0..8).map(|k| 2.0 * (PI * k as f64 / 8.0).sin().abs()).collect();
    expected.sort_by(f64::total_cmp);
    for (s, e) in profile.values().unwrap().iter().zip(&expected) {
        assert!((s - e).abs() < 1e-12, "{s} vs {e}");
    }
    let cf = counting_function(&profile, &[0.0, 0.1]).unwrap();
    assert_eq!(cf.values, vec![1.0 / 8.0, 1.0 / 8.0]);
}

#[test]
fn c4_minus_identity_has_hs_norm_sqrt2() {
    let level = cyclic(&z(), 4);
    let a = represent(&level, &scalar(&z(), "x - 1")).unwrap();
    assert!((a.normalized_hs_norm() - 2f64.sqrt()).abs() < 1e-12);
    let dense = a.to_dense(&Budget::default()).unwrap();
    for r in 0..4 {
        assert_eq!(dense.row(r).sum(), 0.0);
    }
    let gram = a
        .gram(&Budget::default())
        .unwrap()
        .to_dense(&Budget::default())
        .unwrap();
    for i in 0..4 {
        for j in 0..4 {
            let e = match (i as i64 - j as i64).rem_euclid(4) {
                0 => 2.0,
                1 | 3 => -1.0,
                _ => 0.0,
            };
            assert_eq!(gram[(i, j)], e);
        }
    }
}

#[test]
fn empirical_moments_match_without_wraparound() {
    let f = scalar(&z(), "x + x^-1");
    let report = moment_check(&cyclic(&z(), 16), &f, 4, &Budget::default()).unwrap();
    assert!(report.rows.iter().all(|r| !r.wraparound));
    assert!((report.rows[0].empirical - 2.0).abs() < 1e-12);
    assert!(report.max_abs_diff() < 1e-9);

    let g = f2();
    let level = transitive(&g, vec![64]).remove(0);
    let report = moment_check(&level, &scalar(&g, "a + b"), 1, &Budget::default()).unwrap();
    assert!(report.rows[0].exact == 2.0);
}

#[test]
fn difference_rank_decays_like_one_over_n() {
    let g = z();
    let pres = ModulePresentation::new(g.clone(), 1, vec![vec![parse_element(&g, "x - 1").unwrap()]]).unwrap();
    let levels = quotient_chain(&g, &QuotientSchedule::Congruence(vec![8, 16, 32, 64])).unwrap();
    let est = vr_estimate(&levels, &pres, 1, &EtaSchedule::default(), &EstimatorOptions::default()).unwrap();
    for (row, n) in est.column(0.0).iter().zip([8.0, 16.0, 32.0, 64.0]) {
        assert_eq!(*row, 1.0 / n);
    }
    assert!(est.estimate <= 1.0 / 64.0 + 1e-12);
}

#[test]
fn trivial_f2_module_counts_orbits() {
    let g = f2();
    let pres = ModulePresentation::new(
        g.clone(),
        1,
        vec![
            vec![parse_element(&g, "a - 1").unwrap()],
            vec![parse_element(&g, "b - 1").unwrap()],
        ],
    )
    .unwrap();
    let levels = transitive(&g, vec![64, 128]);
    let opts = EstimatorOptions {
        integer_rank: true,
        ..Default::default()
    };
    let est = vr_estimate(&levels, &pres, 2, &EtaSchedule::kernel_only(2), &opts).unwrap();
    assert_eq!(est.column(0.0), vec![1.0 / 64.0, 1.0 / 128.0]);
}

#[test]
fn sandwich_arithmetic() {
    let (lo, hi) = sandwich_bounds(0.5, 0.1).unwrap();
    assert_eq!(lo, 0.5);
    assert!((hi - 0.5 * 33f64.ln() / 10f64.ln()).abs() < 1e-12);
    assert!((hi - 0.7593).abs() < 1e-4);
    let (lo, hi) = sandwich_bounds(0.5, 1e-6).unwrap();
    assert!(hi - lo <= 0.5 * 6f64.ln() / 1e6f64.ln() + 1e-12);
}

#[test]
fn covering_sandwich_rows_follow_the_counting_function() {
    let level = cyclic(&z(), 16);
    let a = represent(&level, &scalar(&z(), "x - 1")).unwrap();
    let cf = counting_function(&singular_profile(&a, &ProfileOptions::default()).unwrap(), &[0.5]).unwrap();
    let s = covering_sandwich(&cf, &[0.25, 0.125]).unwrap();
    for row in &s.rows {
        let (lo, hi) = sandwich_bounds(cf.values[0], row.eps).unwrap();
        assert_eq!((row.lower, row.upper), (lo, hi));
    }
}

#[test]
fn fourier_oracle_on_difference_operator() {
    let f = scalar(&z(), "x - 1");
    assert_eq!(fourier_oracle_vr(&f, 4096).unwrap(), 0.0);
    // |2 sin(πt)| ≤ 1 on a set of measure 1/3
    let m = fourier_counting_oracle(&f, 1.0, 1 << 16).unwrap();
    assert!((m - 1.0 / 3.0).abs() < 1e-3, "{m}");
}

#[test]
fn near_kernel_dimensions() {
    let g = z();
    let pres = ModulePresentation::new(g.clone(), 1, vec![vec![parse_element(&g, "x - 1").unwrap()]]).unwrap();
    let w = near_kernel(&cyclic(&g, 8), &pres, 1, 0.1, &[], 1, &Budget::default()).unwrap();
    assert_eq!(w.dim(), 1);
    let c = w.basis.column(0);
    assert!(c.iter().all(|v| (v.abs() - 1.0 / 8f64.sqrt()).abs() < 1e-9));

    let h = f2();
    let trivial = ModulePresentation::new(
        h.clone(),
        1,
        vec![
            vec![parse_element(&h, "a - 1").unwrap()],
            vec![parse_element(&h, "b - 1").unwrap()],
        ],
    )
    .unwrap();
    let level = transitive(&h, vec![32]).remove(0);
    let w = near_kernel(&level, &trivial, 2, 1e-6, &[], 1, &Budget::default()).unwrap();
    assert_eq!(w.dim(), 1);
}

#[test]
fn constant_microstate_is_exactly_equivariant() {
    let g = z();
    let level = Arc::new(cyclic(&g, 4));
    let window: Vec<_> = (-2..=2).map(|k| g.pow(&g.generator(0).unwrap(), k).unwrap()).collect();
    let ms = microstate_from_vector(level, &[0.25; 4], &window).unwrap();
    for j in 0..4 {
        for w in &window {
            assert_eq!(ms.value(j, 0, w).unwrap(), 0.25);
        }
    }
}

#[test]
fn circle_grid_needs_at_most_six_balls() {
    let points = (0..100).map(|k| vec![k as f64 / 100.0]).collect();
    let set = TorusPointSet::new(1, 1, points).unwrap();
    let b = covering_number_bruteforce(&set, InnerNorm::LInf, Exponent(2.0), 0.1, 1000, &Budget::default()).unwrap();
    assert!(b.upper <= 6, "{b:?}");
    assert!(b.lower <= b.upper);
}

#[test]
fn grid_tilings_count_cells() {
    let shape = BoxRegion::at_origin(vec![10, 10]).unwrap();
    let exact = quasi_tile(
        &BoxRegion::at_origin(vec![100, 100]).unwrap(),
        std::slice::from_ref(&shape),
        0.1,
    )
    .unwrap();
    assert_eq!(exact.tiles.len(), 100);
    assert_eq!(exact.coverage, 1.0);
    let ragged = quasi_tile(&BoxRegion::at_origin(vec![101, 101]).unwrap(), &[shape], 0.1).unwrap();
    assert_eq!(ragged.tiles.len(), 100);
    assert_eq!(ragged.covered, 10_000);
    assert!(check_quasi_tiling(&ragged).all());
}
