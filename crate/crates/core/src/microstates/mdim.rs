use std::collections::HashSet;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use super::covering::{covering_number_bruteforce, TorusPointSet, DEFAULT_POINT_LIMIT};
use super::nearkernel::{near_kernel, NearKernelSubspace};
use super::torus::{microstate_from_vector, PseudometricSpec};
use crate::error::{Error, Result};
use crate::group::{GroupElement, SoficLevel};
use crate::linalg::Budget;
use crate::rank::{sandwich_bounds, vr_estimate, EstimatorOptions, EtaSchedule, RankEstimate};
use crate::ring::{GroupRingElement, ModulePresentation};
use crate::sofic::represent;
use crate::spectral::{counting_function, singular_profile, ProfileOptions};

/// Brute force runs only at degrees up to this bound; larger lattices hit the point limit.
pub const BRUTE_FORCE_MAX_DEGREE: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct MdimSchedule {
    pub eps: Vec<f64>,
    pub delta: f64,
    /// Relator prefix length `m`.
    pub relators: usize,
    pub relation_set: Vec<GroupElement>,
    pub power_bound: usize,
    /// Scale for the brute-force covering; `None` disables it.
    pub brute_force_eps: Option<f64>,
    pub point_limit: usize,
}

impl Default for MdimSchedule {
    fn default() -> Self {
        Self {
            eps: vec![0.5f64.powi(20)],
            delta: 1e-6,
            relators: 0,
            relation_set: Vec::new(),
            power_bound: 1,
            brute_force_eps: Some(0.125),
            point_limit: DEFAULT_POINT_LIMIT,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BruteForce {
    pub eps: f64,
    pub lattice: usize,
    pub points: usize,
    pub lower_count: usize,
    pub upper_count: usize,
    /// `log(lower) / (d log(1/ε))`.
    pub lower_exponent: f64,
    /// `log(upper) / (d log(1/ε))`.
    pub exponent: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MdimRow {
    pub level: usize,
    pub degree: usize,
    pub eps: f64,
    pub delta: f64,
    pub near_kernel_dim: usize,
    /// `dim W / d`.
    pub lower: f64,
    /// Sandwich upper exponent of the relator counting function at `√δ`.
    pub upper: f64,
    pub count_fraction: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MdimInterval {
    pub eps: f64,
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MdimReport {
    pub schema: &'static str,
    pub metric: String,
    pub rank: usize,
    pub relators: usize,
    pub rows: Vec<MdimRow>,
    /// Interval at the final level for each `ε`.
    pub intervals: Vec<MdimInterval>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub brute_force: Vec<BruteForceRow>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BruteForceRow {
    pub level: usize,
    pub degree: usize,
    #[serde(flatten)]
    pub result: BruteForce,
}

impl MdimReport {
    pub fn interval(&self, eps: f64) -> Option<&MdimInterval> {
        self.intervals.iter().find(|i| i.eps == eps)
    }
}

/// Lattice sample of the microstates of `W`: all points of `(Z/L)^{nd}`
/// when `W` is the whole space, otherwise `√d·B c mod 1` for `c` on the
/// grid `{0, 1/L, .., (L-1)/L}^k`.
pub fn lattice_sample(w: &NearKernelSubspace, lattice: usize, limit: usize) -> Result<Vec<Vec<f64>>> {
    let dim = w.ambient_dim();
    let k = w.dim();
    let count = (0..k)
        .try_fold(1usize, |acc, _| acc.checked_mul(lattice))
        .filter(|&c| c <= limit);
    let Some(count) = count else {
        return Err(Error::budget(
            "point_limit",
            format!("{lattice}^{k} lattice points exceed the limit {limit}"),
        ));
    };
    let full = k == dim;
    let scale = (w.degree as f64).sqrt();
    let mut out = Vec::with_capacity(count);
    for mut idx in 0..count {
        let mut c = vec![0.0; k];
        // most significant coordinate first, so the order is lexicographic
        for x in c.iter_mut().rev() {
            *x = (idx % lattice) as f64 / lattice as f64;
            idx /= lattice;
        }
        let xi: Vec<f64> = if full {
            c
        } else {
            (0..dim)
                .map(|r| scale * (0..k).map(|j| w.basis[(r, j)] * c[j]).sum::<f64>())
                .collect()
        };
        out.push(xi);
    }
    Ok(out)
}

fn brute_force_at(
    level: &Arc<SoficLevel>,
    w: &NearKernelSubspace,
    metric: &PseudometricSpec,
    eps: f64,
    limit: usize,
    budget: &Budget,
) -> Result<BruteForce> {
    let lattice = (1.0 / eps).ceil() as usize;
    let sample = lattice_sample(w, lattice, limit)?;
    let d = level.degree();
    let window = [level.group().identity()];
    let coords = sample
        .iter()
        .map(|xi| microstate_from_vector(level.clone(), xi, &window)?.coordinates(metric))
        .collect::<Result<Vec<_>>>()?;
    let width = coords.first().map(|c| c.len() / d).unwrap_or(w.rank);
    let set = TorusPointSet::new(d, width, coords)?;
    let b = covering_number_bruteforce(&set, metric.inner(), metric.p, eps, limit, budget)?;
    let norm = d as f64 * (1.0 / eps).ln();
    Ok(BruteForce {
        eps,
        lattice,
        points: set.len(),
        lower_count: b.lower,
        upper_count: b.upper,
        lower_exponent: (b.lower as f64).ln() / norm,
        exponent: (b.upper as f64).ln() / norm,
    })
}

/// Interval estimates of the `p`-metric mean dimension of the dual of a
/// presented module.
pub fn mdim_estimate(
    levels: &[Arc<SoficLevel>],
    pres: &ModulePresentation,
    metric: &PseudometricSpec,
    schedule: &MdimSchedule,
    budget: &Budget,
) -> Result<MdimReport> {
    if levels.is_empty() {
        return Err(Error::InsufficientLevels("no levels given".into()));
    }
    for (i, &e) in schedule.eps.iter().enumerate() {
        if !(e > 0.0 && e < 1.0) {
            return Err(Error::validation(
                format!("eps[{i}]"),
                format!("{e} must lie in (0, 1)"),
            ));
        }
    }
    let n = pres.rank();
    let m = schedule.relators;
    let f = pres.relator_matrix(m)?;
    let eta = schedule.delta.sqrt();
    let mut rows = Vec::new();
    let mut brute = Vec::new();
    let mut warnings = Vec::new();
    for level in levels {
        let w = near_kernel(
            level,
            pres,
            m,
            schedule.delta,
            &schedule.relation_set,
            schedule.power_bound,
            budget,
        )?;
        warnings.extend(w.warnings.iter().map(|s| format!("level {}: {s}", level.index())));
        let count_fraction = if m == 0 {
            n as f64
        } else {
            let a = represent(level, &f)?;
            let profile = singular_profile(
                &a,
                &ProfileOptions {
                    budget: *budget,
                    ..Default::default()
                },
            )?;
            counting_function(&profile, &[eta])?.values[0]
        };
        for &e in &schedule.eps {
            let (_, upper) = sandwich_bounds(count_fraction, e)?;
            rows.push(MdimRow {
                level: level.index(),
                degree: level.degree(),
                eps: e,
                delta: schedule.delta,
                near_kernel_dim: w.dim(),
                lower: w.normalized_dim(),
                upper,
                count_fraction,
            });
        }
        if let Some(be) = schedule.brute_force_eps {
            if level.degree() <= BRUTE_FORCE_MAX_DEGREE {
                match brute_force_at(level, &w, metric, be, schedule.point_limit, budget) {
                    Ok(result) => brute.push(BruteForceRow {
                        level: level.index(),
                        degree: level.degree(),
                        result,
                    }),
                    Err(Error::Budget { message, .. }) => {
                        warnings.push(format!("level {}: brute force skipped: {message}", level.index()))
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    let last = levels.last().expect("nonempty").index();
    let intervals = schedule
        .eps
        .iter()
        .map(|&e| {
            let row = rows
                .iter()
                .find(|r| r.level == last && r.eps == e)
                .expect("row for the final level");
            let (lower, upper) = (row.lower.min(row.upper), row.upper.max(row.lower));
            MdimInterval {
                eps: e,
                lower,
                upper,
                width: upper - lower,
            }
        })
        .collect();
    Ok(MdimReport {
        schema: "1",
        metric: metric.label(),
        rank: n,
        relators: m,
        rows,
        intervals,
        brute_force: brute,
        warnings,
    })
}

/// Largest number of sample points used by [`cube_section_slope`].
pub const CUBE_SAMPLE_LIMIT: usize = 4_000_000;

#[derive(Clone, Debug, Serialize)]
pub struct SlopeFit {
    pub eps: Vec<f64>,
    pub counts: Vec<usize>,
    pub slope: f64,
}

/// Box-counting slope of `W ∩ [0,1]^{nd}` under the sup norm, fitted by
/// least squares of `log N(ε)` against `log(1/ε)`.
pub fn cube_section_slope(basis: &DMatrix<f64>, eps: &[f64]) -> Result<SlopeFit> {
    let dim = basis.nrows();
    let k = basis.ncols();
    if k == 0 {
        return Ok(SlopeFit {
            eps: eps.to_vec(),
            counts: vec![1; eps.len()],
            slope: 0.0,
        });
    }
    let finest = eps.iter().copied().fold(f64::INFINITY, f64::min);
    if !(finest > 0.0) || eps.len() < 2 {
        return Err(Error::validation("eps", "need at least two positive scales"));
    }
    // coefficients of points in the unit cube are bounded by √dim
    let radius = (dim as f64).sqrt();
    let mesh = finest / 4.0;
    let per_axis = (2.0 * radius / mesh).ceil() as usize + 1;
    let total = (0..k)
        .try_fold(1usize, |acc, _| acc.checked_mul(per_axis))
        .filter(|&t| t <= CUBE_SAMPLE_LIMIT);
    let Some(total) = total else {
        return Err(Error::budget(
            "cube_samples",
            format!("{per_axis}^{k} samples exceed {CUBE_SAMPLE_LIMIT}"),
        ));
    };
    let mut cells: Vec<HashSet<Vec<i64>>> = vec![HashSet::new(); eps.len()];
    let mut c = vec![0.0; k];
    let mut x = vec![0.0; dim];
    for mut idx in 0..total {
        for v in c.iter_mut() {
            *v = -radius + (idx % per_axis) as f64 * mesh;
            idx /= per_axis;
        }
        let mut inside = true;
        for (r, xr) in x.iter_mut().enumerate() {
            *xr = (0..k).map(|j| basis[(r, j)] * c[j]).sum();
            if !(-1e-12..=1.0 + 1e-12).contains(xr) {
                inside = false;
                break;
            }
        }
        if !inside {
            continue;
        }
        for (s, &e) in cells.iter_mut().zip(eps) {
            s.insert(x.iter().map(|&v| (v / e).floor() as i64).collect());
        }
    }
    let counts: Vec<usize> = cells.iter().map(HashSet::len).collect();
    let xs: Vec<f64> = eps.iter().map(|e| (1.0 / e).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c.max(1) as f64).ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(SlopeFit {
        eps: eps.to_vec(),
        counts,
        slope: sxy / sxx,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AdditivityReport {
    pub schema: &'static str,
    pub generators: usize,
    /// `vr(Z(F_n))`.
    pub middle: f64,
    /// `vr` of the augmentation ideal, free of rank `n`.
    pub sub: f64,
    /// `vr(Z(F_n) / (x_i − e))`.
    pub quotient: f64,
    pub additivity_holds: bool,
    pub middle_table: RankEstimate,
    pub sub_table: RankEstimate,
    pub quotient_table: RankEstimate,
}

/// Tolerance on `|middle − (sub + quotient)|` before additivity is rejected.
pub const ADDITIVITY_TOLERANCE: f64 = 0.5;

/// Ranks of the three terms of `0 → M → Z(F_n) → Z → 0`, with `M` the
/// augmentation ideal.
pub fn additivity_failure_demo(
    levels: &[SoficLevel],
    schedule: &EtaSchedule,
    opts: &EstimatorOptions,
) -> Result<AdditivityReport> {
    let Some(first) = levels.first() else {
        return Err(Error::InsufficientLevels("no levels given".into()));
    };
    let group = Arc::new(first.group().clone());
    let n = group.num_generators();
    if !matches!(group.kind(), crate::group::GroupKind::Free(_)) || n < 2 {
        return Err(Error::validation(
            "group",
            "the demo needs a free group of rank at least 2",
        ));
    }
    let middle_pres = ModulePresentation::free(group.clone(), 1)?;
    let sub_pres = ModulePresentation::free(group.clone(), n)?;
    let relators = (0..n)
        .map(|i| {
            let x = GroupRingElement::monomial(group.clone(), group.generator(i)?, 1.into());
            Ok(vec![x.sub(&GroupRingElement::one(group.clone()))?])
        })
        .collect::<Result<Vec<_>>>()?;
    let quotient_pres = ModulePresentation::new(group.clone(), 1, relators)?;
    let middle_table = vr_estimate(levels, &middle_pres, 0, schedule, opts)?;
    let sub_table = vr_estimate(levels, &sub_pres, 0, schedule, opts)?;
    let quotient_table = vr_estimate(levels, &quotient_pres, n, schedule, opts)?;
    let (middle, sub, quotient) = (middle_table.estimate, sub_table.estimate, quotient_table.estimate);
    Ok(AdditivityReport {
        schema: "1",
        generators: n,
        middle,
        sub,
        quotient,
        additivity_holds: (middle - (sub + quotient)).abs() <= ADDITIVITY_TOLERANCE,
        middle_table,
        sub_table,
        quotient_table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{quotient_chain, CatalogKind, GroupSpec, QuotientSchedule};
    use crate::microstates::torus::Exponent;
    use crate::ring::parse_element;

    fn z_levels(degrees: Vec<usize>) -> (Arc<GroupSpec>, Vec<Arc<SoficLevel>>) {
        let g = Arc::new(GroupSpec::free_abelian(1).unwrap());
        let lv = quotient_chain(&g, &QuotientSchedule::Congruence(degrees)).unwrap();
        (g, lv.into_iter().map(Arc::new).collect())
    }

    #[test]
    fn free_module_interval_contains_the_rank() {
        let (g, levels) = z_levels(vec![4, 8]);
        let pres = ModulePresentation::free(g, 1).unwrap();
        let r = mdim_estimate(
            &levels,
            &pres,
            &PseudometricSpec::theta(Exponent::INF),
            &MdimSchedule::default(),
            &Budget::default(),
        )
        .unwrap();
        let iv = &r.intervals[0];
        assert!(iv.lower <= 1.0 && 1.0 <= iv.upper);
        let bf = &r.brute_force[0].result;
        assert_eq!(bf.points, 4096);
        assert_eq!(bf.upper_count, 4096);
        assert!((bf.exponent - 1.0).abs() < 1e-12);
    }

    #[test]
    fn difference_relator_interval_shrinks() {
        let (g, levels) = z_levels(vec![4, 8, 16]);
        let pres = ModulePresentation::new(g.clone(), 1, vec![vec![parse_element(&g, "x - e").unwrap()]]).unwrap();
        let sched = MdimSchedule {
            relators: 1,
            delta: 0.01,
            ..Default::default()
        };
        let r = mdim_estimate(
            &levels,
            &pres,
            &PseudometricSpec::theta(Exponent::INF),
            &sched,
            &Budget::default(),
        )
        .unwrap();
        assert_eq!(r.intervals[0].lower, 1.0 / 16.0);
        assert!(r.intervals[0].upper < 0.07);
        // brute force at d = 4: the constants form 8 lattice points
        let bf = &r.brute_force[0].result;
        assert_eq!(bf.upper_count, 8);
        assert!((bf.exponent - 0.25).abs() < 1e-12);
    }

    #[test]
    fn cube_section_slope_tracks_dimension() {
        let line = DMatrix::from_element(4, 1, 0.5);
        let eps: Vec<f64> = (3..=6).map(|j| 0.5f64.powi(j)).collect();
        let fit = cube_section_slope(&line, &eps).unwrap();
        assert!((fit.slope - 1.0).abs() < 0.3, "{fit:?}");
        let plane = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let fit = cube_section_slope(&plane, &eps).unwrap();
        assert!((fit.slope - 2.0).abs() < 0.3, "{fit:?}");
    }

    #[test]
    fn additivity_fails_for_free_groups() {
        let g = GroupSpec::free(2).unwrap();
        let levels = quotient_chain(
            &g,
            &QuotientSchedule::Catalog {
                kind: CatalogKind::RandomTransitive { seed: 3 },
                degrees: vec![16, 32, 64],
            },
        )
        .unwrap();
        let r = additivity_failure_demo(
            &levels,
            &EtaSchedule::kernel_only(3),
            &EstimatorOptions {
                integer_rank: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!((r.middle, r.sub), (1.0, 2.0));
        assert_eq!(r.quotient, 1.0 / 64.0);
        assert!(!r.additivity_holds);
    }
}
