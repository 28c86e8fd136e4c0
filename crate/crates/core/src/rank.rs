//! Estimators for `dim ker ρ(f)` and the von Neumann–Lück rank of
//! presented modules, the covering-number sandwich, and Fourier oracles
//! over `Z^d`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{GroupElement, GroupKind, SoficLevel};
use crate::linalg::{integer_rank, Budget};
use crate::ring::{Coeff, GroupRingMatrix, ModulePresentation};
use crate::sofic::represent;
use crate::spectral::{counting_function, singular_profile, CountingFunction, MethodPreference, ProfileOptions};

/// Thresholds `η_j = 2^{-j}`, optionally with `η = 0`, and the number of
/// trailing levels that form the tail.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EtaSchedule {
    pub etas: Vec<f64>,
    pub include_zero: bool,
    pub tail: usize,
}

impl Default for EtaSchedule {
    fn default() -> Self {
        Self::dyadic(10, 3)
    }
}

impl EtaSchedule {
    /// `η_j = 2^{-j}` for `j = 1..=depth`, plus `η = 0`.
    pub fn dyadic(depth: u32, tail: usize) -> Self {
        Self {
            etas: (1..=depth).map(|j| 0.5f64.powi(j as i32)).collect(),
            include_zero: true,
            tail,
        }
    }

    /// Only the kernel threshold `η = 0`.
    pub fn kernel_only(tail: usize) -> Self {
        Self {
            etas: Vec::new(),
            include_zero: true,
            tail,
        }
    }

    /// All thresholds in ascending order.
    pub fn thresholds(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.etas.clone();
        if self.include_zero {
            t.push(0.0);
        }
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }

    pub fn validate(&self) -> Result<()> {
        for (i, &e) in self.etas.iter().enumerate() {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::validation(
                    format!("etas[{i}]"),
                    format!("{e} must be positive and finite"),
                ));
            }
        }
        if self.etas.is_empty() && !self.include_zero {
            return Err(Error::validation("etas", "schedule has no thresholds"));
        }
        if self.tail == 0 {
            return Err(Error::validation("tail", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EstimatorOptions {
    pub budget: Budget,
    pub method: MethodPreference,
    /// Count the kernel at `η = 0` by exact rank over `Q` instead of the
    /// floating-point spectrum.
    pub integer_rank: bool,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct TableRow {
    pub level: usize,
    pub degree: usize,
    pub eta: f64,
    pub count_fraction: f64,
    pub uncertainty: f64,
    pub method: String,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct EtaTail {
    pub eta: f64,
    pub tail_min: f64,
    pub tail_mean: f64,
    pub tail_max: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct PrefixRow {
    pub relators: usize,
    pub estimate: f64,
    /// Kernel fraction at `η = 0` per level.
    pub kernel_fractions: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RankEstimate {
    pub schema: &'static str,
    pub target: String,
    pub method: String,
    pub table: Vec<TableRow>,
    /// `inf_η` of the tail minimum of `d_{η,i}`.
    pub estimate: f64,
    /// `[min, max]` of `d_{η,i}` over the trailing levels at the smallest `η`.
    pub envelope: [f64; 2],
    pub tails: Vec<EtaTail>,
    pub schedule: EtaSchedule,
    pub diagnostics: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prefix: Option<Vec<PrefixRow>>,
}

impl RankEstimate {
    /// Rows of the table at one threshold, in level order.
    pub fn column(&self, eta: f64) -> Vec<f64> {
        self.table
            .iter()
            .filter(|r| r.eta == eta)
            .map(|r| r.count_fraction)
            .collect()
    }
}

fn level_counts<C: Coeff>(
    level: &SoficLevel,
    f: &GroupRingMatrix<C>,
    thresholds: &[f64],
    opts: &EstimatorOptions,
) -> Result<(CountingFunction, String)> {
    let a = represent(level, f)?;
    let n = a.cols();
    let d = a.degree();
    let positive: Vec<f64> = thresholds.iter().copied().filter(|&e| e > 0.0).collect();
    let want_zero = thresholds.contains(&0.0);
    let exact_zero = opts.integer_rank && want_zero;
    if exact_zero && !a.is_integral() {
        return Err(Error::validation(
            "integer_rank",
            "exact rank needs integer coefficients",
        ));
    }
    let spectral_needed = !positive.is_empty() || (want_zero && !exact_zero);
    let cf = if spectral_needed {
        let profile = singular_profile(
            &a,
            &ProfileOptions {
                budget: opts.budget,
                method: opts.method,
            },
        )?;
        let list: Vec<f64> = if exact_zero { positive } else { thresholds.to_vec() };
        Some(counting_function(&profile, &list)?)
    } else {
        None
    };
    let mut method = cf
        .as_ref()
        .map(|c| match c.method {
            crate::spectral::SpectralMethod::DenseEigen => "dense-eigen".to_string(),
            crate::spectral::SpectralMethod::InertiaCount => "inertia-count".to_string(),
        })
        .unwrap_or_default();
    let mut out = CountingFunction {
        level_index: level.index(),
        degree: d,
        cols: n,
        method: cf
            .as_ref()
            .map(|c| c.method)
            .unwrap_or(crate::spectral::SpectralMethod::DenseEigen),
        etas: Vec::new(),
        values: Vec::new(),
        uncertainty: Vec::new(),
    };
    let kernel = if exact_zero {
        let mut rows: Vec<Vec<(usize, i64)>> = vec![Vec::new(); a.shape().0];
        for (i, j, v) in a.triplets() {
            rows[i].push((j, v as i64));
        }
        let rank = integer_rank(&rows, a.shape().1, &opts.budget)?;
        method = if method.is_empty() {
            "integer-rank".into()
        } else {
            format!("integer-rank+{method}")
        };
        Some((n * d - rank) as f64 / d as f64)
    } else {
        None
    };
    for &eta in thresholds {
        let (v, u) = match (eta == 0.0, kernel) {
            (true, Some(k)) => (k, 0.0),
            _ => {
                let c = cf.as_ref().expect("spectral counts");
                let i = c.etas.iter().position(|&e| e == eta).expect("threshold present");
                (c.values[i], c.uncertainty[i])
            }
        };
        out.etas.push(eta);
        out.values.push(v);
        out.uncertainty.push(u);
    }
    Ok((out, method))
}

fn assemble(target: String, counts: Vec<(CountingFunction, String)>, schedule: &EtaSchedule) -> RankEstimate {
    let thresholds = schedule.thresholds();
    let levels = counts.len();
    let tail = schedule.tail.min(levels);
    let mut table = Vec::new();
    for (cf, method) in &counts {
        for (i, &eta) in cf.etas.iter().enumerate() {
            table.push(TableRow {
                level: cf.level_index,
                degree: cf.degree,
                eta,
                count_fraction: cf.values[i],
                uncertainty: cf.uncertainty[i],
                method: method.clone(),
            });
        }
    }
    let mut diagnostics = Vec::new();
    let mut tails = Vec::new();
    for (ti, &eta) in thresholds.iter().enumerate() {
        let column: Vec<f64> = counts.iter().map(|(cf, _)| cf.values[ti]).collect();
        let window = &column[levels - tail..];
        tails.push(EtaTail {
            eta,
            tail_min: window.iter().copied().fold(f64::INFINITY, f64::min),
            tail_mean: window.iter().sum::<f64>() / window.len() as f64,
            tail_max: window.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
        if column.windows(2).any(|w| w[1] > w[0] + 1e-12) {
            diagnostics.push(format!("counts at eta={eta} are not nonincreasing along the levels"));
        }
    }
    let estimate = tails.iter().map(|t| t.tail_min).fold(f64::INFINITY, f64::min);
    let env_len = tail.max(levels.div_ceil(2));
    let first: Vec<f64> = counts.iter().map(|(cf, _)| cf.values[0]).collect();
    let env = &first[levels - env_len..];
    let envelope = [
        env.iter().copied().fold(f64::INFINITY, f64::min),
        env.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    ];
    let methods: Vec<&str> = counts.iter().map(|(_, m)| m.as_str()).collect();
    let method = if methods.windows(2).all(|w| w[0] == w[1]) {
        methods.first().copied().unwrap_or("").to_string()
    } else {
        "mixed".to_string()
    };
    RankEstimate {
        schema: "1",
        target,
        method,
        table,
        estimate,
        envelope,
        tails,
        schedule: schedule.clone(),
        diagnostics,
        prefix: None,
    }
}

fn check_levels(levels: &[SoficLevel]) -> Result<()> {
    if levels.len() < 2 {
        return Err(Error::InsufficientLevels(format!(
            "{} level(s) given, at least 2 are needed",
            levels.len()
        )));
    }
    Ok(())
}

/// Estimates `dim ker ρ(f)` from the counting functions of `σ_i(f)`.
pub fn vnd_estimate<C: Coeff>(
    levels: &[SoficLevel],
    f: &GroupRingMatrix<C>,
    schedule: &EtaSchedule,
    opts: &EstimatorOptions,
) -> Result<RankEstimate> {
    check_levels(levels)?;
    schedule.validate()?;
    let thresholds = schedule.thresholds();
    let counts = levels
        .par_iter()
        .map(|lv| level_counts(lv, f, &thresholds, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(format!("dim ker f, f = {f}"), counts, schedule))
}

fn free_module_estimate(levels: &[SoficLevel], rank: usize, schedule: &EtaSchedule, target: String) -> RankEstimate {
    let thresholds = schedule.thresholds();
    let counts = levels
        .iter()
        .map(|lv| {
            (
                CountingFunction {
                    level_index: lv.index(),
                    degree: lv.degree(),
                    cols: rank,
                    method: crate::spectral::SpectralMethod::DenseEigen,
                    etas: thresholds.clone(),
                    values: vec![rank as f64; thresholds.len()],
                    uncertainty: vec![0.0; thresholds.len()],
                },
                "no-relators".to_string(),
            )
        })
        .collect();
    assemble(target, counts, schedule)
}

/// Estimates `vr(Z(Γ)^n / B)` from the first `k` relators of `B`.
pub fn vr_estimate(
    levels: &[SoficLevel],
    pres: &ModulePresentation,
    k: usize,
    schedule: &EtaSchedule,
    opts: &EstimatorOptions,
) -> Result<RankEstimate> {
    check_levels(levels)?;
    schedule.validate()?;
    let target = format!(
        "vr of Z({})^{} modulo {} relator(s)",
        pres.group().describe(),
        pres.rank(),
        k
    );
    if k == 0 {
        // relator_matrix validates the cutoff
        pres.relator_matrix(0)?;
        return Ok(free_module_estimate(levels, pres.rank(), schedule, target));
    }
    let f = pres.relator_matrix(k)?;
    let mut est = vnd_estimate(levels, &f, schedule, opts)?;
    est.target = target;
    Ok(est)
}

/// `vr_estimate` for every relator prefix `0..=k`, recording whether the
/// kernel fraction at each level is nonincreasing in the prefix length.
pub fn vr_prefix_scan(
    levels: &[SoficLevel],
    pres: &ModulePresentation,
    k: usize,
    schedule: &EtaSchedule,
    opts: &EstimatorOptions,
) -> Result<RankEstimate> {
    let mut rows = Vec::with_capacity(k + 1);
    let mut last = None;
    for j in 0..=k {
        let est = vr_estimate(levels, pres, j, schedule, opts)?;
        let smallest = est.schedule.thresholds()[0];
        rows.push(PrefixRow {
            relators: j,
            estimate: est.estimate,
            kernel_fractions: est.column(smallest),
        });
        last = Some(est);
    }
    let mut est = last.expect("at least one prefix");
    for w in rows.windows(2) {
        let grew = w[0]
            .kernel_fractions
            .iter()
            .zip(&w[1].kernel_fractions)
            .any(|(a, b)| *b > *a + 1e-9);
        if grew {
            est.diagnostics.push(format!(
                "kernel fraction increased when adding relator {}",
                w[1].relators
            ));
        }
    }
    est.prefix = Some(rows);
    Ok(est)
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SandwichRow {
    pub level: usize,
    pub degree: usize,
    pub eta: f64,
    pub eps: f64,
    pub lower: f64,
    pub upper: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CoveringSandwich {
    pub rows: Vec<SandwichRow>,
}

/// Normalized covering exponents `(lower, upper)` for a subspace of
/// normalized dimension `d_eta` at scale `eps`.
pub fn sandwich_bounds(d_eta: f64, eps: f64) -> Result<(f64, f64)> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::validation("eps", format!("{eps} must lie in (0, 1)")));
    }
    let upper = d_eta * ((3.0 + 3.0 * eps) / eps).ln() / (1.0 / eps).ln();
    Ok((d_eta, upper))
}

/// Sandwich rows for every threshold of a counting function and every `ε`.
pub fn covering_sandwich(cf: &CountingFunction, eps: &[f64]) -> Result<CoveringSandwich> {
    let mut rows = Vec::new();
    for (ei, &e) in eps.iter().enumerate() {
        if !(e > 0.0 && e < 1.0) {
            return Err(Error::validation(
                format!("eps[{ei}]"),
                format!("{e} must lie in (0, 1)"),
            ));
        }
        for (i, &eta) in cf.etas.iter().enumerate() {
            let (lower, upper) = sandwich_bounds(cf.values[i], e)?;
            rows.push(SandwichRow {
                level: cf.level_index,
                degree: cf.degree,
                eta,
                eps: e,
                lower,
                upper,
                gap: upper - lower,
            });
        }
    }
    Ok(CoveringSandwich { rows })
}

/// Threshold on singular values of the symbol used by [`fourier_oracle_vr`].
pub const FOURIER_KERNEL_THRESHOLD: f64 = 1e-8;
/// Largest number of grid points a Fourier oracle evaluates.
pub const FOURIER_GRID_LIMIT: usize = 1 << 24;

fn torus_dim<C: Coeff>(f: &GroupRingMatrix<C>) -> Result<usize> {
    match f.group().kind() {
        GroupKind::FreeAbelian(d) => Ok(*d),
        _ => Err(Error::Unsupported(format!(
            "Fourier oracle needs a free abelian group, got {}",
            f.group().describe()
        ))),
    }
}

fn symbol<C: Coeff>(f: &GroupRingMatrix<C>, t: &[f64]) -> DMatrix<Complex64> {
    DMatrix::from_fn(f.rows(), f.cols(), |r, c| {
        f.get(r, c)
            .terms()
            .map(|(g, coef)| {
                let GroupElement::Abelian(v) = g else {
                    unreachable!("abelian element")
                };
                let phase: f64 = v.iter().zip(t).map(|(&a, &s)| a as f64 * s).sum();
                Complex64::from_polar(coef.to_f64(), -2.0 * PI * phase)
            })
            .sum()
    })
}

fn symbol_singular_values(m: DMatrix<Complex64>, cols: usize) -> Vec<f64> {
    let mut s: Vec<f64> = if m.nrows() == 0 {
        Vec::new()
    } else if m.nrows() == 1 && m.ncols() == 1 {
        vec![m[(0, 0)].norm()]
    } else {
        m.singular_values().iter().copied().collect()
    };
    s.resize(cols.max(s.len()), 0.0);
    s
}

/// Averages `count(t)` over the midpoint grid `((k + 1/2)/G)^d`.
fn grid_average<C: Coeff>(f: &GroupRingMatrix<C>, grid: usize, count: impl Fn(&[f64]) -> usize + Sync) -> Result<f64> {
    let d = torus_dim(f)?;
    if grid == 0 {
        return Err(Error::validation("grid", "must be positive"));
    }
    let total = (0..d)
        .try_fold(1usize, |acc, _| acc.checked_mul(grid))
        .filter(|&t| t <= FOURIER_GRID_LIMIT);
    let Some(total) = total else {
        return Err(Error::budget(
            "fourier_grid",
            format!("{grid}^{d} points exceed {FOURIER_GRID_LIMIT}"),
        ));
    };
    let sum: usize = (0..total)
        .into_par_iter()
        .map(|mut idx| {
            let mut t = vec![0.0; d];
            for x in t.iter_mut() {
                *x = ((idx % grid) as f64 + 0.5) / grid as f64;
                idx /= grid;
            }
            count(&t)
        })
        .sum();
    Ok(sum as f64 / total as f64)
}

/// Measure of the set where the symbol `f̂(t)` has singular values below
/// `1e-8`, counted with multiplicity; a value in `[0, n]`.
pub fn fourier_oracle_vr<C: Coeff>(f: &GroupRingMatrix<C>, grid: usize) -> Result<f64> {
    fourier_counting_oracle(f, 0.0, grid)
}

/// `∫ #{singular values of f̂(t) ≤ η} dt`, the limit of `d_{η,i}` over
/// `Z^d`. `η = 0` uses the kernel threshold.
pub fn fourier_counting_oracle<C: Coeff>(f: &GroupRingMatrix<C>, eta: f64, grid: usize) -> Result<f64> {
    let threshold = if eta == 0.0 { FOURIER_KERNEL_THRESHOLD } else { eta };
    let n = f.cols();
    grid_average(f, grid, |t| {
        symbol_singular_values(symbol(f, t), n)
            .iter()
            .filter(|&&s| s <= threshold)
            .count()
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::group::{quotient_chain, GroupSpec, QuotientSchedule};
    use crate::ring::parse_matrix;

    fn z() -> Arc<GroupSpec> {
        Arc::new(GroupSpec::free_abelian(1).unwrap())
    }

    #[test]
    fn sandwich_arithmetic() {
        let (l, u) = sandwich_bounds(0.5, 0.1).unwrap();
        assert_eq!(l, 0.5);
        assert!((u - 0.5 * 33f64.ln() / 10f64.ln()).abs() < 1e-15);
        assert!((u - 0.7593).abs() < 1e-4);
        assert_eq!(sandwich_bounds(0.0, 0.3).unwrap(), (0.0, 0.0));
        let (l, u) = sandwich_bounds(0.5, 1e-6).unwrap();
        assert!(u - l <= 0.5 * 6f64.ln() / 1e6f64.ln() + 1e-12);
        assert!(sandwich_bounds(0.5, 1.0).is_err());
        assert!(sandwich_bounds(0.5, 0.0).is_err());
    }

    #[test]
    fn fourier_oracles_on_simple_symbols() {
        let g = z();
        let diff = parse_matrix(&g, &[vec!["x - e"]]).unwrap();
        assert_eq!(fourier_oracle_vr(&diff, 256).unwrap(), 0.0);
        let zero = parse_matrix(&g, &[vec!["0"]]).unwrap();
        assert_eq!(fourier_oracle_vr(&zero, 16).unwrap(), 1.0);
        let two = parse_matrix(&g, &[vec!["2"]]).unwrap();
        assert_eq!(fourier_oracle_vr(&two, 16).unwrap(), 0.0);
        // |1 - e^{2πit}| ≤ 1 on |t| ≤ 1/6
        let m = fourier_counting_oracle(&diff, 1.0, 6000).unwrap();
        assert!((m - 1.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn kernel_of_difference_operator_shrinks() {
        let g = z();
        let f = parse_matrix(&g, &[vec!["x - e"]]).unwrap();
        let levels = quotient_chain(&g, &QuotientSchedule::Congruence(vec![8, 16, 32])).unwrap();
        let est = vnd_estimate(&levels, &f, &EtaSchedule::default(), &EstimatorOptions::default()).unwrap();
        assert_eq!(est.column(0.0), vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0]);
        assert_eq!(est.estimate, 1.0 / 32.0);
        assert!(est.envelope[0] <= est.estimate && est.estimate <= est.envelope[1]);
        let exact = vnd_estimate(
            &levels,
            &f,
            &EtaSchedule::kernel_only(3),
            &EstimatorOptions {
                integer_rank: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(exact.column(0.0), vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0]);
    }

    #[test]
    fn zero_relators_give_the_rank() {
        let g = z();
        let pres = ModulePresentation::free(g.clone(), 3).unwrap();
        let levels = quotient_chain(&g, &QuotientSchedule::Congruence(vec![4, 8])).unwrap();
        let est = vr_estimate(&levels, &pres, 0, &EtaSchedule::default(), &EstimatorOptions::default()).unwrap();
        assert_eq!(est.estimate, 3.0);
        assert!(est.table.iter().all(|r| r.count_fraction == 3.0));
        assert!(vr_estimate(&levels, &pres, 1, &EtaSchedule::default(), &EstimatorOptions::default()).is_err());
        assert!(vr_estimate(
            &levels[..1],
            &pres,
            0,
            &EtaSchedule::default(),
            &EstimatorOptions::default()
        )
        .is_err());
    }
}
