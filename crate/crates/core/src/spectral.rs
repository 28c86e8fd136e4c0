//! Singular-value profiles of `σ_i(f)`, counting functions `d_{η,i}` and
//! moment comparisons against exact group-ring traces.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::SoficLevel;
use crate::linalg::{Budget, InertiaCounter};
use crate::ring::{Coeff, GroupRingMatrix};
use crate::sofic::{represent, SoficMatrix};

/// Offset added to positive thresholds so that ties count as `≤ η`.
pub const TIE_OFFSET: f64 = 1e-12;
/// Kernel threshold at `η = 0`, relative to the largest singular value.
pub const KERNEL_RELATIVE_THRESHOLD: f64 = 1e-8;
/// Kernel threshold at `η = 0` on the Gram eigenvalue scale for the
/// inertia path, relative to the Gershgorin bound.
pub const INERTIA_KERNEL_THRESHOLD: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralMethod {
    DenseEigen,
    InertiaCount,
}

/// Which path [`singular_profile`] may take.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MethodPreference {
    #[default]
    Auto,
    Dense,
    Inertia,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ProfileOptions {
    pub budget: Budget,
    pub method: MethodPreference,
}

/// Singular values of `σ_i(f)` (dense path) or an inertia counter for
/// its Gram matrix (large degrees).
#[derive(Clone, Debug)]
pub struct SpectralProfile {
    pub level_index: usize,
    pub rows: usize,
    pub cols: usize,
    pub degree: usize,
    pub method: SpectralMethod,
    values: Vec<f64>,
    counter: Option<Arc<InertiaCounter>>,
    largest: f64,
}

impl SpectralProfile {
    /// Ascending singular values, length `n·d`; `None` on the inertia path.
    pub fn values(&self) -> Option<&[f64]> {
        (self.method == SpectralMethod::DenseEigen).then_some(&self.values[..])
    }

    /// Largest singular value, or an upper bound for it on the inertia path.
    pub fn largest(&self) -> f64 {
        self.largest
    }

    /// `(1/d) Σ s^{2k}`; dense path only.
    pub fn moment(&self, k: u32) -> Option<f64> {
        self.values()
            .map(|v| v.iter().map(|s| (s * s).powi(k as i32)).sum::<f64>() / self.degree as f64)
    }
}

fn dense_singular_values(a: DMatrix<f64>, cols: usize) -> Result<Vec<f64>> {
    let total = a.ncols();
    let mut values = if a.nrows() == 0 || total == 0 {
        Vec::new()
    } else {
        let svd = SVD::try_new(a, false, false, f64::EPSILON, 1_000_000).ok_or(Error::Eigen { residual: f64::NAN })?;
        svd.singular_values.iter().map(|&s| s.max(0.0)).collect::<Vec<_>>()
    };
    // |A| acts on the column space; rank-deficient shapes contribute zeros
    values.resize(total.max(cols), 0.0);
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Computes the spectral profile of `|A|`.
pub fn singular_profile(a: &SoficMatrix, opts: &ProfileOptions) -> Result<SpectralProfile> {
    let (m, n) = a.shape();
    let dense_ok = n <= opts.budget.dense_degree_guard && Budget::dense_bytes(m.max(n), n) <= opts.budget.max_bytes;
    let use_dense = match opts.method {
        MethodPreference::Dense => {
            opts.budget.check_dense(m.max(n), n, "dense singular values")?;
            if n > opts.budget.dense_degree_guard {
                return Err(Error::budget(
                    "dense_degree_guard",
                    format!(
                        "dimension {n} exceeds the dense guard {}",
                        opts.budget.dense_degree_guard
                    ),
                ));
            }
            true
        }
        MethodPreference::Inertia => false,
        MethodPreference::Auto => dense_ok,
    };
    if use_dense {
        let values = dense_singular_values(a.to_dense(&opts.budget)?, n)?;
        let largest = values.last().copied().unwrap_or(0.0);
        return Ok(SpectralProfile {
            level_index: a.level_index(),
            rows: a.rows(),
            cols: a.cols(),
            degree: a.degree(),
            method: SpectralMethod::DenseEigen,
            values,
            counter: None,
            largest,
        });
    }
    let gram = a.gram(&opts.budget)?;
    let counter = InertiaCounter::new(n, &gram.triplets(), &opts.budget)?;
    let largest = counter.gershgorin_bound().max(0.0).sqrt();
    Ok(SpectralProfile {
        level_index: a.level_index(),
        rows: a.rows(),
        cols: a.cols(),
        degree: a.degree(),
        method: SpectralMethod::InertiaCount,
        values: Vec::new(),
        counter: Some(Arc::new(counter)),
        largest,
    })
}

/// `d_{η,i}` at a list of thresholds.
#[derive(Clone, Debug, Serialize)]
pub struct CountingFunction {
    pub level_index: usize,
    pub degree: usize,
    pub cols: usize,
    pub method: SpectralMethod,
    pub etas: Vec<f64>,
    pub values: Vec<f64>,
    /// Count error bound on the same scale as `values` (0 for the dense path).
    pub uncertainty: Vec<f64>,
}

impl CountingFunction {
    pub fn value_at(&self, eta: f64) -> Option<f64> {
        self.etas.iter().position(|&e| e == eta).map(|i| self.values[i])
    }
}

/// Normalized counts `(1/d)·#{s ≤ η}`.
pub fn counting_function(profile: &SpectralProfile, etas: &[f64]) -> Result<CountingFunction> {
    let d = profile.degree as f64;
    let mut values = Vec::with_capacity(etas.len());
    let mut uncertainty = Vec::with_capacity(etas.len());
    for (i, &eta) in etas.iter().enumerate() {
        if eta.is_nan() || eta < 0.0 {
            return Err(Error::validation(
                format!("etas[{i}]"),
                format!("threshold {eta} must be nonnegative"),
            ));
        }
        match (&profile.counter, profile.values()) {
            (None, Some(v)) => {
                let t = if eta == 0.0 {
                    KERNEL_RELATIVE_THRESHOLD * profile.largest
                } else {
                    eta + TIE_OFFSET
                };
                values.push(v.partition_point(|&s| s <= t) as f64 / d);
                uncertainty.push(0.0);
            }
            (Some(counter), _) => {
                let n = counter.dim();
                let t2 = if eta == 0.0 {
                    INERTIA_KERNEL_THRESHOLD * counter.gershgorin_bound()
                } else {
                    (eta + TIE_OFFSET) * (eta + TIE_OFFSET)
                };
                let (below, unc) = if t2.is_infinite() || t2 > counter.gershgorin_bound() {
                    (n, 0)
                } else {
                    let c = counter.count_below(t2);
                    (c.below, c.uncertain)
                };
                values.push(below as f64 / d);
                uncertainty.push(unc as f64 / d);
            }
            (None, None) => unreachable!("dense profile without values"),
        }
    }
    Ok(CountingFunction {
        level_index: profile.level_index,
        degree: profile.degree,
        cols: profile.cols,
        method: profile.method,
        etas: etas.to_vec(),
        values,
        uncertainty,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentRow {
    pub k: u32,
    /// `(1/d) Tr((σ(f)ᵀσ(f))^k)`.
    pub empirical: f64,
    /// `Σ_j ((f*f)^k)_jj` at the identity.
    pub exact: f64,
    pub abs_diff: f64,
    /// Some non-identity element of the diagonal support of `(f*f)^k`
    /// has fixed points at this level.
    pub wraparound: bool,
    /// Largest word length (or sup norm) in that support.
    pub support_radius: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift_bound: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentReport {
    pub level_index: usize,
    pub degree: usize,
    pub exact_level: bool,
    pub noise_scale: f64,
    pub rows: Vec<MomentRow>,
}

impl MomentReport {
    pub fn max_abs_diff(&self) -> f64 {
        self.rows.iter().map(|r| r.abs_diff).fold(0.0, f64::max)
    }
}

fn exact_moments<C: Coeff>(level: &SoficLevel, f: &GroupRingMatrix<C>, kmax: u32) -> Result<Vec<(f64, bool, u64)>> {
    let group = f.group().clone();
    let gram = f.star().mul(f)?;
    let n = gram.rows();
    let e = group.identity();
    let mut power = GroupRingMatrix::identity(group.clone(), n);
    let mut out = Vec::with_capacity(kmax as usize);
    for _ in 0..kmax {
        power = power.mul(&gram)?;
        let mut exact = C::zero();
        let mut wrap = false;
        let mut radius = 0;
        for j in 0..n {
            let entry = power.get(j, j);
            exact = exact + entry.coefficient(&e);
            for (g, _) in entry.terms() {
                radius = radius.max(group.radius(g));
                if !group.is_identity(g) && level.permutation(g)?.fixed_points() > 0 {
                    wrap = true;
                }
            }
        }
        out.push((exact.to_f64(), wrap, radius));
    }
    Ok(out)
}

fn check_kmax(kmax: u32) -> Result<()> {
    if kmax == 0 {
        return Err(Error::validation("kmax", "must be at least 1"));
    }
    Ok(())
}

/// Compares `(1/d)Tr(σ(f)ᵀσ(f))^k` with the exact trace of `(f*f)^k`.
pub fn moment_check<C: Coeff>(
    level: &SoficLevel,
    f: &GroupRingMatrix<C>,
    kmax: u32,
    budget: &Budget,
) -> Result<MomentReport> {
    check_kmax(kmax)?;
    let a = represent(level, f)?;
    let profile = singular_profile(
        &a,
        &ProfileOptions {
            budget: *budget,
            method: MethodPreference::Dense,
        },
    )?;
    let exact = exact_moments(level, f, kmax)?;
    let rows = exact
        .into_iter()
        .enumerate()
        .map(|(i, (exact, wraparound, support_radius))| {
            let k = i as u32 + 1;
            let empirical = profile.moment(k).expect("dense profile");
            MomentRow {
                k,
                empirical,
                exact,
                abs_diff: (empirical - exact).abs(),
                wraparound,
                support_radius,
                drift: None,
                drift_bound: None,
            }
        })
        .collect();
    Ok(MomentReport {
        level_index: level.index(),
        degree: level.degree(),
        exact_level: level.is_exact(),
        noise_scale: 0.0,
        rows,
    })
}

/// Adds Gaussian noise of normalized Hilbert–Schmidt size exactly `s` to
/// `σ(f)` and reports the moment drift against the unperturbed matrix.
///
/// The bound for `k = 1` is `2n·s(‖σ(f)‖∞ + s)`; for larger `k` it is
/// `n·k·R^{2(k-1)}(‖A‖₂ + ‖A'‖₂)s` with `R` the larger operator norm.
pub fn perturbation_moment_check<C: Coeff>(
    level: &SoficLevel,
    f: &GroupRingMatrix<C>,
    s: f64,
    kmax: u32,
    seed: u64,
    budget: &Budget,
) -> Result<MomentReport> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::validation(
            "noise_scale",
            format!("{s} must be a finite nonnegative number"),
        ));
    }
    let mut report = moment_check(level, f, kmax, budget)?;
    report.noise_scale = s;
    if s == 0.0 {
        for r in report.rows.iter_mut() {
            r.drift = Some(0.0);
            r.drift_bound = Some(0.0);
        }
        return Ok(report);
    }
    let a = represent(level, f)?;
    let dense = a.to_dense(budget)?;
    let (m, n_scalar) = (dense.nrows(), dense.ncols());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = DMatrix::from_fn(m, n_scalar, |_, _| StandardNormal.sample(&mut rng));
    let raw: f64 = noise.iter().map(|v: &f64| v * v).sum();
    let target = s * s * n_scalar as f64;
    if raw > 0.0 {
        noise *= (target / raw).sqrt();
    }
    let base = dense_singular_values(dense.clone(), n_scalar)?;
    let perturbed = dense_singular_values(dense + noise, n_scalar)?;
    let d = a.degree() as f64;
    let n = a.cols() as f64;
    let op = base.last().copied().unwrap_or(0.0);
    let op_p = perturbed.last().copied().unwrap_or(0.0);
    let hs = (base.iter().map(|x| x * x).sum::<f64>() / n_scalar as f64).sqrt();
    let hs_p = (perturbed.iter().map(|x| x * x).sum::<f64>() / n_scalar as f64).sqrt();
    let r = op.max(op_p);
    for row in report.rows.iter_mut() {
        let k = row.k as i32;
        let m_base: f64 = base.iter().map(|x| (x * x).powi(k)).sum::<f64>() / d;
        let m_pert: f64 = perturbed.iter().map(|x| (x * x).powi(k)).sum::<f64>() / d;
        row.empirical = m_pert;
        row.abs_diff = (m_pert - row.exact).abs();
        row.drift = Some(m_pert - m_base);
        row.drift_bound = Some(if k == 1 {
            2.0 * n * s * (op + s)
        } else {
            n * k as f64 * r.powi(2 * (k - 1)) * (hs + hs_p) * s
        });
    }
    Ok(report)
}

/// CSV rows `level,degree,eta,count_fraction,uncertainty,method`.
pub fn counting_csv(functions: &[CountingFunction]) -> String {
    let mut out = String::from("level,degree,eta,count_fraction,uncertainty,method\n");
    for cf in functions {
        let method = match cf.method {
            SpectralMethod::DenseEigen => "dense-eigen",
            SpectralMethod::InertiaCount => "inertia-count",
        };
        for i in 0..cf.etas.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                cf.level_index, cf.degree, cf.etas[i], cf.values[i], cf.uncertainty[i], method
            );
        }
    }
    out
}

/// CSV rows `level,degree,k,empirical,exact,abs_diff,wraparound,support_radius,drift,drift_bound`.
pub fn moments_csv(reports: &[MomentReport]) -> String {
    let mut out = String::from("level,degree,k,empirical,exact,abs_diff,wraparound,support_radius,drift,drift_bound\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in reports {
        for row in &r.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.level_index,
                r.degree,
                row.k,
                row.empirical,
                row.exact,
                row.abs_diff,
                row.wraparound,
                row.support_radius,
                opt(row.drift),
                opt(row.drift_bound)
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{quotient_chain, GroupSpec, QuotientSchedule};
    use crate::ring::parse_matrix;

    fn setup(n: usize, f: &str) -> (SoficLevel, GroupRingMatrix) {
        let g = Arc::new(GroupSpec::free_abelian(1).unwrap());
        let lv = quotient_chain(&g, &QuotientSchedule::Congruence(vec![n]))
            .unwrap()
            .remove(0);
        (lv, parse_matrix(&g, &[vec![f]]).unwrap())
    }

    fn profile(lv: &SoficLevel, f: &GroupRingMatrix, method: MethodPreference) -> SpectralProfile {
        let a = represent(lv, f).unwrap();
        singular_profile(
            &a,
            &ProfileOptions {
                budget: Budget::default(),
                method,
            },
        )
        .unwrap()
    }

    #[test]
    fn difference_operator_spectrum_matches_circulant() {
        let (lv, f) = setup(8, "x - e");
        let p = profile(&lv, &f, MethodPreference::Dense);
        let mut expected: Vec<f64> = (0..8)
            .map(|k| 2.0 * (std::f64::consts::PI * k as f64 / 8.0).sin().abs())
            .collect();
        expected.sort_by(f64::total_cmp);
        for (a, b) in p.values().unwrap().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let cf = counting_function(&p, &[0.0, 0.1, 10.0]).unwrap();
        assert_eq!(cf.values, vec![0.125, 0.125, 1.0]);
    }

    #[test]
    fn inertia_path_agrees_with_dense_counts() {
        let (lv, f) = setup(16, "x + x^-1 - 1");
        let dense = profile(&lv, &f, MethodPreference::Dense);
        let sliced = profile(&lv, &f, MethodPreference::Inertia);
        let etas = [0.05, 0.3, 0.7, 1.1, 2.0, 5.0];
        let a = counting_function(&dense, &etas).unwrap();
        let b = counting_function(&sliced, &etas).unwrap();
        for i in 0..etas.len() {
            assert!(
                (a.values[i] - b.values[i]).abs() <= b.uncertainty[i] + 1e-15,
                "eta {}",
                etas[i]
            );
        }
    }

    #[test]
    fn zero_and_scalar_profiles() {
        let (lv, zero) = setup(5, "0");
        let p = profile(&lv, &zero, MethodPreference::Auto);
        assert!(p.values().unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(counting_function(&p, &[0.0]).unwrap().values, vec![1.0]);
        let (lv, two) = setup(5, "2");
        let p = profile(&lv, &two, MethodPreference::Auto);
        assert!(p.values().unwrap().iter().all(|&v| (v - 2.0).abs() < 1e-14));
    }

    #[test]
    fn moments_of_laplacian_symbol() {
        let (lv, f) = setup(16, "x + x^-1");
        let r = moment_check(&lv, &f, 3, &Budget::default()).unwrap();
        assert_eq!(r.rows[0].exact, 2.0);
        assert!(r.max_abs_diff() < 1e-9);
        assert!(r.rows.iter().all(|row| !row.wraparound));
        // at N = 2 the element x^2 acts trivially
        let (lv, f) = setup(2, "x + x^-1");
        let r = moment_check(&lv, &f, 1, &Budget::default()).unwrap();
        assert!(r.rows[0].wraparound);
    }

    #[test]
    fn perturbation_respects_first_order_bound() {
        let (lv, f) = setup(64, "x - e");
        let r = perturbation_moment_check(&lv, &f, 0.01, 2, 7, &Budget::default()).unwrap();
        let row = &r.rows[0];
        assert!(row.drift.unwrap().abs() <= row.drift_bound.unwrap());
        assert!((row.drift_bound.unwrap() - 0.0402).abs() < 1e-3);
        let same = perturbation_moment_check(&lv, &f, 0.0, 2, 7, &Budget::default()).unwrap();
        let plain = moment_check(&lv, &f, 2, &Budget::default()).unwrap();
        for (a, b) in same.rows.iter().zip(&plain.rows) {
            assert_eq!(a.empirical, b.empirical);
        }
    }
}
