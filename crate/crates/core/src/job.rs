//! Job files and the report pipeline behind the CLI.
//!
//! A job is a TOML document with the sections `group`, `levels`, `input`,
//! `estimator`, `tile` and `output` plus a top-level `seed`. Unknown keys
//! are rejected. Every run produces one JSON report (schema `"1"`) and a
//! set of CSV tables; neither contains timings, so identical jobs give
//! byte-identical output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{
    folner_levels, quotient_chain, CatalogKind, FiniteTable, GroupElement, GroupKind, GroupSpec, Permutation,
    Provenance, QuotientSchedule, SoficLevel,
};
use crate::linalg::{Budget, BUDGET_ENV};
use crate::microstates::{
    additivity_failure_demo, mdim_estimate, Exponent, MdimSchedule, PseudometricSpec, BRUTE_FORCE_MAX_DEGREE,
    DEFAULT_POINT_LIMIT,
};
use crate::rank::{
    covering_sandwich, fourier_oracle_vr, vnd_estimate, vr_estimate, vr_prefix_scan, EstimatorOptions, EtaSchedule,
    SandwichRow, FOURIER_GRID_LIMIT,
};
use crate::ring::{parse_element, GroupRingMatrix, ModulePresentation};
use crate::sofic::represent;
use crate::spectral::{
    counting_csv, counting_function, moment_check, moments_csv, perturbation_moment_check, singular_profile,
    MethodPreference, ProfileOptions,
};
use crate::tiling::{
    check_quasi_tiling, lattice_configurations, orbit_covering_estimate, quasi_tile, random_configurations,
    render_tiling, tiling_csv, BoxRegion,
};

/// Version tag written into every report.
pub const SCHEMA_VERSION: &str = "1";

/// The CLI subcommands that run a job.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Command {
    Vr,
    Vnd,
    Spectrum,
    Moments,
    Mdim,
    Tile,
    DemoAdditivity,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Vr,
        Command::Vnd,
        Command::Spectrum,
        Command::Moments,
        Command::Mdim,
        Command::Tile,
        Command::DemoAdditivity,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Vr => "vr",
            Command::Vnd => "vnd",
            Command::Spectrum => "spectrum",
            Command::Moments => "moments",
            Command::Mdim => "mdim",
            Command::Tile => "tile",
            Command::DemoAdditivity => "demo-additivity",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| Error::validation("command", format!("unknown command `{name}`")))
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    #[serde(default)]
    pub seed: u64,
    pub group: GroupSection,
    pub levels: Option<LevelsSection>,
    pub input: Option<InputSection>,
    #[serde(default)]
    pub estimator: EstimatorSection,
    pub tile: Option<TileSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum GroupKindName {
    FreeAbelian,
    Free,
    Cyclic,
    Table,
    Product,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GroupSection {
    pub kind: GroupKindName,
    /// Rank of `Z^d` or `F_r`.
    pub rank: Option<usize>,
    /// Order of a cyclic group.
    pub order: Option<usize>,
    /// Multiplication table `table[g][h] = gh` of a finite group.
    pub table: Option<Vec<Vec<usize>>>,
    /// Element indices used as generators of a table group.
    pub table_generators: Option<Vec<usize>>,
    pub generators: Option<Vec<String>>,
    pub factors: Option<Vec<GroupSection>>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum LevelKindName {
    Congruence,
    Folner,
    Catalog,
    Regular,
    Explicit,
    Product,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum CatalogName {
    Cyclic,
    RandomTransitive,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LevelsSection {
    pub kind: LevelKindName,
    /// Congruence moduli, catalog degrees, or cube sides of Følner boxes.
    pub sizes: Option<Vec<usize>>,
    /// Explicit Følner box sides, one list per level.
    pub boxes: Option<Vec<Vec<usize>>>,
    pub catalog: Option<CatalogName>,
    /// One list of generator images per generator, one entry per level.
    pub permutations: Option<Vec<Vec<Vec<usize>>>>,
    pub factors: Option<Vec<LevelsSection>>,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InputSection {
    /// A single group-ring element, read as a `1 × 1` matrix.
    pub element: Option<String>,
    /// A matrix given as rows of element strings.
    pub matrix: Option<Vec<Vec<String>>>,
    /// Rank `n` of the free module `Z(Γ)^n`.
    pub module_rank: Option<usize>,
    /// Relators, each a list of `n` elements.
    pub relators: Option<Vec<Vec<String>>>,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    #[default]
    Auto,
    Dense,
    Inertia,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum MetricName {
    #[default]
    Delta,
    Theta,
}

/// An exponent written as a number or as `"inf"`.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum PValue {
    Number(f64),
    Text(String),
}

impl Default for PValue {
    fn default() -> Self {
        PValue::Number(2.0)
    }
}

impl PValue {
    pub fn exponent(&self, field: &str) -> Result<Exponent> {
        match self {
            PValue::Number(p) => Exponent::new(*p).map_err(|_| invalid(field, format!("{p} must be at least 1"))),
            PValue::Text(s) if matches!(s.as_str(), "inf" | "infinity" | "∞") => Ok(Exponent::INF),
            PValue::Text(s) => s
                .parse::<f64>()
                .ok()
                .and_then(|p| Exponent::new(p).ok())
                .ok_or_else(|| invalid(field, format!("`{s}` is not an exponent in [1, inf]"))),
        }
    }
}

fn default_depth() -> u32 {
    10
}
fn default_true() -> bool {
    true
}
fn default_tail() -> usize {
    3
}
fn default_kmax() -> u32 {
    4
}
fn default_delta() -> f64 {
    1e-6
}
fn default_power_bound() -> usize {
    1
}
fn default_brute_force_eps() -> Option<f64> {
    Some(0.125)
}
fn default_point_limit() -> usize {
    DEFAULT_POINT_LIMIT
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    /// Explicit thresholds; when absent `η_j = 2^{-j}` for `j ≤ eta_depth`.
    pub etas: Option<Vec<f64>>,
    #[serde(default = "default_depth")]
    pub eta_depth: u32,
    #[serde(default = "default_true")]
    pub include_zero: bool,
    #[serde(default = "default_tail")]
    pub tail: usize,
    #[serde(default)]
    pub method: MethodName,
    #[serde(default)]
    pub integer_rank: bool,
    /// Relator prefix `k`; all relators when absent.
    pub relator_cutoff: Option<usize>,
    #[serde(default)]
    pub prefix_scan: bool,
    #[serde(default = "default_kmax")]
    pub kmax: u32,
    /// Normalized Hilbert–Schmidt size of a random perturbation.
    pub perturbation: Option<f64>,
    /// Radii for covering sandwiches and metric mean dimension.
    pub eps: Option<Vec<f64>>,
    /// Grid points per axis of the Fourier oracle over `Z^d`.
    pub fourier_grid: Option<usize>,
    #[serde(default)]
    pub metric: MetricName,
    #[serde(default)]
    pub p: PValue,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_power_bound")]
    pub power_bound: usize,
    #[serde(default)]
    pub relation_set: Vec<String>,
    #[serde(default = "default_brute_force_eps")]
    pub brute_force_eps: Option<f64>,
    #[serde(default = "default_true")]
    pub brute_force: bool,
    #[serde(default = "default_point_limit")]
    pub point_limit: usize,
    /// Overrides the dense allocation budget from the environment.
    pub budget_mb: Option<usize>,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        toml::from_str("").expect("estimator defaults")
    }
}

fn default_samples() -> usize {
    500
}
fn default_components() -> usize {
    1
}
fn default_ladder() -> Vec<PValue> {
    vec![PValue::Number(1.0), PValue::Number(2.0), PValue::Text("inf".into())]
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TileSection {
    pub ambient: Vec<usize>,
    pub shapes: Vec<Vec<usize>>,
    pub eta: f64,
    #[serde(default)]
    pub render: bool,
    pub orbit: Option<OrbitSection>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OrbitSection {
    /// Sides of the window `[0, s_1) × …` on which samples are drawn.
    pub window: Vec<usize>,
    #[serde(default = "default_components")]
    pub components: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Use the full value lattice `{0, 1/L, ..}` instead of random samples.
    pub lattice: Option<usize>,
    /// Sides of the Følner boxes `F_n`.
    pub folner: Vec<Vec<usize>>,
    #[serde(default = "default_ladder")]
    pub p: Vec<PValue>,
    pub eps: Vec<f64>,
    #[serde(default)]
    pub metric: MetricName,
    #[serde(default = "default_point_limit")]
    pub point_limit: usize,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// File stem of the artifacts; the command name when absent.
    pub name: Option<String>,
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::validation(field, message)
}

fn require<'a, T>(v: &'a Option<T>, field: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| invalid(field, "missing field"))
}

impl JobSpec {
    /// Parses a job document; schema violations report line and field.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = e
                .message()
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "job".to_string());
            let line = e
                .span()
                .map(|s| format!("line {}: ", text[..s.start.min(text.len())].lines().count().max(1)))
                .unwrap_or_default();
            invalid(field, format!("{line}{}", e.message().trim()))
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn budget(&self) -> Budget {
        match self.estimator.budget_mb {
            Some(mb) => Budget::with_megabytes(mb),
            None => Budget::from_env(),
        }
    }

    pub fn build_group(&self) -> Result<Arc<GroupSpec>> {
        build_group(&self.group, "group").map(Arc::new)
    }

    pub fn build_levels(&self, group: &GroupSpec) -> Result<Vec<SoficLevel>> {
        let sec = require(&self.levels, "levels")?;
        build_levels(group, sec, self.seed, "levels")
    }

    fn input(&self) -> Result<&InputSection> {
        require(&self.input, "input")
    }

    /// The matrix `f` analysed by `vnd`, `spectrum` and `moments`.
    pub fn matrix(&self, group: &Arc<GroupSpec>) -> Result<GroupRingMatrix> {
        let input = self.input()?;
        if let Some(s) = &input.element {
            return Ok(GroupRingMatrix::scalar(parse_field(group, s, "input.element")?));
        }
        if let Some(rows) = &input.matrix {
            return parse_rows(group, rows, "input.matrix");
        }
        if input.relators.is_some() {
            let pres = self.presentation(group)?;
            return pres.relator_matrix(self.relator_cutoff(&pres)?);
        }
        Err(invalid(
            "input.element",
            "missing field (or give input.matrix / input.relators)",
        ))
    }

    /// The module `Z(Γ)^n / B` analysed by `vr` and `mdim`.
    pub fn presentation(&self, group: &Arc<GroupSpec>) -> Result<ModulePresentation> {
        let input = self.input()?;
        if let Some(rels) = &input.relators {
            let rank = match (input.module_rank, rels.first()) {
                (Some(n), _) => n,
                (None, Some(r)) => r.len(),
                (None, None) => return Err(invalid("input.module_rank", "missing field")),
            };
            let parsed = rels
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    r.iter()
                        .enumerate()
                        .map(|(j, s)| parse_field(group, s, &format!("input.relators[{i}][{j}]")))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            return ModulePresentation::new(group.clone(), rank, parsed);
        }
        if input.element.is_some() || input.matrix.is_some() {
            let f = self.matrix(group)?;
            let rows = (0..f.rows())
                .map(|r| (0..f.cols()).map(|c| f.get(r, c).clone()).collect())
                .collect();
            return ModulePresentation::new(group.clone(), f.cols(), rows);
        }
        let n = require(&input.module_rank, "input.module_rank")?;
        ModulePresentation::free(group.clone(), *n)
    }

    fn relator_cutoff(&self, pres: &ModulePresentation) -> Result<usize> {
        match self.estimator.relator_cutoff {
            Some(k) if k > pres.relators().len() => Err(invalid(
                "estimator.relator_cutoff",
                format!("{k} exceeds the {} relators given", pres.relators().len()),
            )),
            Some(k) => Ok(k),
            None => Ok(pres.relators().len()),
        }
    }

    pub fn eta_schedule(&self) -> Result<EtaSchedule> {
        let e = &self.estimator;
        let schedule = EtaSchedule {
            etas: match &e.etas {
                Some(v) => v.clone(),
                None => EtaSchedule::dyadic(e.eta_depth, e.tail).etas,
            },
            include_zero: e.include_zero,
            tail: e.tail,
        };
        schedule.validate().map_err(prefix_field("estimator"))?;
        Ok(schedule)
    }

    pub fn estimator_options(&self) -> EstimatorOptions {
        EstimatorOptions {
            budget: self.budget(),
            method: match self.estimator.method {
                MethodName::Auto => MethodPreference::Auto,
                MethodName::Dense => MethodPreference::Dense,
                MethodName::Inertia => MethodPreference::Inertia,
            },
            integer_rank: self.estimator.integer_rank,
        }
    }

    fn metric(&self) -> Result<PseudometricSpec> {
        let p = self.estimator.p.exponent("estimator.p")?;
        Ok(match self.estimator.metric {
            MetricName::Delta => PseudometricSpec::delta(p),
            MetricName::Theta => PseudometricSpec::theta(p),
        })
    }

    fn eps_list(&self, default: &[f64]) -> Result<Vec<f64>> {
        let eps = self.estimator.eps.clone().unwrap_or_else(|| default.to_vec());
        for (i, &e) in eps.iter().enumerate() {
            if !(e > 0.0 && e < 1.0) {
                return Err(invalid(
                    format!("estimator.eps[{i}]"),
                    format!("{e} must lie in (0, 1)"),
                ));
            }
        }
        Ok(eps)
    }

    fn mdim_schedule(&self, group: &Arc<GroupSpec>, pres: &ModulePresentation) -> Result<MdimSchedule> {
        let e = &self.estimator;
        if !(e.delta > 0.0 && e.delta.is_finite()) {
            return Err(invalid("estimator.delta", format!("{} must be positive", e.delta)));
        }
        let relation_set = e
            .relation_set
            .iter()
            .enumerate()
            .map(|(i, s)| group_element(group, s, &format!("estimator.relation_set[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        Ok(MdimSchedule {
            eps: self.eps_list(&MdimSchedule::default().eps)?,
            delta: e.delta,
            relators: self.relator_cutoff(pres)?,
            relation_set,
            power_bound: e.power_bound,
            brute_force_eps: if e.brute_force { e.brute_force_eps } else { None },
            point_limit: e.point_limit,
        })
    }

    fn artifact_stem(&self, cmd: Command) -> Result<String> {
        match &self.output.name {
            Some(n) if n.is_empty() || n.contains(['/', '\\']) || n.starts_with('.') => {
                Err(invalid("output.name", format!("`{n}` is not a plain file stem")))
            }
            Some(n) => Ok(n.clone()),
            None => Ok(cmd.name().replace('-', "_")),
        }
    }
}

fn prefix_field(section: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Validation { field, message } => Error::Validation {
            field: format!("{section}.{field}"),
            message,
        },
        other => other,
    }
}

fn parse_field(group: &Arc<GroupSpec>, s: &str, field: &str) -> Result<crate::ring::GroupRingElement> {
    parse_element(group, s).map_err(|e| match e {
        Error::Parse(p) => invalid(field, p.to_string()),
        other => prefix_field_owned(field, other),
    })
}

fn prefix_field_owned(field: &str, e: Error) -> Error {
    match e {
        Error::Validation { field: f, message } => invalid(format!("{field}.{f}"), message),
        other => invalid(field, other.to_string()),
    }
}

fn parse_rows(group: &Arc<GroupSpec>, rows: &[Vec<String>], field: &str) -> Result<GroupRingMatrix> {
    let parsed = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.iter()
                .enumerate()
                .map(|(j, s)| parse_field(group, s, &format!("{field}[{i}][{j}]")))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    if parsed.is_empty() {
        return Err(invalid(field, "matrix has no rows"));
    }
    GroupRingMatrix::from_rows(group.clone(), parsed).map_err(|e| prefix_field_owned(field, e))
}

/// A group element written as a monomial with coefficient 1.
fn group_element(group: &Arc<GroupSpec>, s: &str, field: &str) -> Result<GroupElement> {
    let x = parse_field(group, s, field)?;
    let mut terms = x.terms();
    match (terms.next(), terms.next()) {
        (Some((g, c)), None) if *c == 1.into() => Ok(g.clone()),
        _ => Err(invalid(field, format!("`{s}` is not a single group element"))),
    }
}

fn build_group(sec: &GroupSection, field: &str) -> Result<GroupSpec> {
    let wrap = |e: Error| match e {
        Error::InvalidGroup(m) => invalid(field, m),
        other => other,
    };
    let labels = |n: usize, default: GroupSpec| -> Result<GroupSpec> {
        match &sec.generators {
            None => Ok(default),
            Some(g) if g.len() != n => Err(invalid(
                format!("{field}.generators"),
                format!("{} labels for {n} generators", g.len()),
            )),
            Some(_) => Ok(default),
        }
    };
    let spec = match sec.kind {
        GroupKindName::FreeAbelian => {
            let d = *require(&sec.rank, &format!("{field}.rank"))?;
            match &sec.generators {
                Some(g) => GroupSpec::free_abelian_with(d, g.clone()),
                None => GroupSpec::free_abelian(d),
            }
            .map_err(wrap)?
        }
        GroupKindName::Free => {
            let r = *require(&sec.rank, &format!("{field}.rank"))?;
            match &sec.generators {
                Some(g) => GroupSpec::free_with(r, g.clone()),
                None => GroupSpec::free(r),
            }
            .map_err(wrap)?
        }
        GroupKindName::Cyclic => {
            let n = *require(&sec.order, &format!("{field}.order"))?;
            if n == 0 {
                return Err(invalid(format!("{field}.order"), "order must be positive"));
            }
            let table = (0..n).map(|g| (0..n).map(|h| (g + h) % n).collect()).collect();
            let t = FiniteTable::new(table, vec![1 % n]).map_err(wrap)?;
            let g = sec.generators.clone().unwrap_or_else(|| vec!["t".to_string()]);
            labels(1, GroupSpec::finite(t, g).map_err(wrap)?)?
        }
        GroupKindName::Table => {
            let table = require(&sec.table, &format!("{field}.table"))?.clone();
            let gens = require(&sec.table_generators, &format!("{field}.table_generators"))?.clone();
            let count = gens.len();
            let t = FiniteTable::new(table, gens).map_err(wrap)?;
            let g = sec
                .generators
                .clone()
                .unwrap_or_else(|| (1..=count).map(|i| format!("t{i}")).collect());
            GroupSpec::finite(t, g).map_err(wrap)?
        }
        GroupKindName::Product => {
            let factors = require(&sec.factors, &format!("{field}.factors"))?;
            let built = factors
                .iter()
                .enumerate()
                .map(|(i, f)| build_group(f, &format!("{field}.factors[{i}]")))
                .collect::<Result<Vec<_>>>()?;
            GroupSpec::direct_product(built).map_err(wrap)?
        }
    };
    Ok(spec)
}

fn quotient_schedule(group: &GroupSpec, sec: &LevelsSection, seed: u64, field: &str) -> Result<QuotientSchedule> {
    Ok(match sec.kind {
        LevelKindName::Congruence => {
            QuotientSchedule::Congruence(require(&sec.sizes, &format!("{field}.sizes"))?.clone())
        }
        LevelKindName::Catalog => QuotientSchedule::Catalog {
            kind: match sec.catalog.unwrap_or(CatalogName::RandomTransitive) {
                CatalogName::Cyclic => CatalogKind::CyclicCommuting,
                CatalogName::RandomTransitive => CatalogKind::RandomTransitive { seed },
            },
            degrees: require(&sec.sizes, &format!("{field}.sizes"))?.clone(),
        },
        LevelKindName::Regular => QuotientSchedule::Regular,
        LevelKindName::Explicit => {
            let levels = require(&sec.permutations, &format!("{field}.permutations"))?;
            QuotientSchedule::Explicit(
                levels
                    .iter()
                    .enumerate()
                    .map(|(i, perms)| {
                        perms
                            .iter()
                            .enumerate()
                            .map(|(j, images)| {
                                Permutation::from_images(images.clone())
                                    .map_err(|e| invalid(format!("{field}.permutations[{i}][{j}]"), e.to_string()))
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        LevelKindName::Product => {
            let GroupKind::DirectProduct(factors) = group.kind() else {
                return Err(invalid(format!("{field}.kind"), "product levels need a product group"));
            };
            let secs = require(&sec.factors, &format!("{field}.factors"))?;
            if secs.len() != factors.len() {
                return Err(invalid(
                    format!("{field}.factors"),
                    format!("{} level schedules for {} factors", secs.len(), factors.len()),
                ));
            }
            QuotientSchedule::Product(
                factors
                    .iter()
                    .zip(secs)
                    .enumerate()
                    .map(|(i, (g, s))| quotient_schedule(g, s, seed, &format!("{field}.factors[{i}]")))
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        LevelKindName::Folner => {
            return Err(invalid(format!("{field}.kind"), "Følner levels cannot be combined"));
        }
    })
}

fn build_levels(group: &GroupSpec, sec: &LevelsSection, seed: u64, field: &str) -> Result<Vec<SoficLevel>> {
    let levels = if sec.kind == LevelKindName::Folner {
        let GroupKind::FreeAbelian(d) = group.kind() else {
            return Err(invalid(
                format!("{field}.kind"),
                "Følner boxes need a free abelian group",
            ));
        };
        let boxes = match (&sec.boxes, &sec.sizes) {
            (Some(b), _) => b.clone(),
            (None, Some(s)) => s.iter().map(|&n| vec![n; *d]).collect(),
            (None, None) => return Err(invalid(format!("{field}.boxes"), "missing field (or give sizes)")),
        };
        folner_levels(group, &boxes)
    } else {
        quotient_chain(group, &quotient_schedule(group, sec, seed, field)?)
    };
    levels.map_err(|e| match e {
        Error::Validation { field: f, message } => invalid(format!("{field}.{f}"), message),
        Error::Unsupported(m) => invalid(format!("{field}.kind"), m),
        other => other,
    })
}

/// Where each level came from, echoed into every report.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct LevelInfo {
    pub level: usize,
    pub degree: usize,
    pub provenance: String,
}

fn level_info(levels: &[SoficLevel]) -> Vec<LevelInfo> {
    levels
        .iter()
        .map(|l| LevelInfo {
            level: l.index(),
            degree: l.degree(),
            provenance: match l.provenance() {
                Provenance::FiniteQuotient { .. } => "finite-quotient".into(),
                Provenance::FolnerSet { sides } => format!("folner-box {sides:?}"),
                Provenance::ExplicitTable => "explicit".into(),
            },
        })
        .collect()
}

struct Header<'a> {
    command: &'static str,
    seed: u64,
    group: String,
    levels: &'a [LevelInfo],
}

impl Header<'_> {
    fn render<T: Serialize>(&self, result: T) -> Result<String> {
        to_json(&Envelope {
            schema: SCHEMA_VERSION,
            command: self.command,
            seed: self.seed,
            group: self.group.clone(),
            levels: self.levels,
            result,
        })
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: &'static str,
    command: &'static str,
    seed: u64,
    group: String,
    levels: &'a [LevelInfo],
    result: T,
}

/// The artifacts of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct JobOutput {
    pub command: Command,
    pub stem: String,
    pub json: String,
    /// `(file name, contents)` of each CSV table.
    pub tables: Vec<(String, String)>,
    /// Optional plain-text rendering (tilings).
    pub text: Option<(String, String)>,
}

impl JobOutput {
    /// Writes every artifact into `dir` and returns the written paths.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let io = |path: &Path| {
            let p = path.display().to_string();
            move |source| Error::Io { path: p, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let mut written = Vec::new();
        let json = dir.join(format!("{}.json", self.stem));
        std::fs::write(&json, &self.json).map_err(io(&json))?;
        written.push(json);
        for (name, body) in self.tables.iter().chain(self.text.iter()) {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(io(&path))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Serialize(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn rows_csv<T: Serialize>(rows: &[T], header_if_empty: &str) -> Result<String> {
    if rows.is_empty() {
        return Ok(format!("{header_if_empty}\n"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Serialize(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serialize(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serialize(e.to_string()))
}

#[derive(Serialize)]
struct VndResult {
    estimate: crate::rank::RankEstimate,
    fourier_oracle: Option<f64>,
    fourier_grid: Option<usize>,
}

#[derive(Serialize)]
struct SpectrumResult {
    counting: Vec<crate::spectral::CountingFunction>,
    largest_singular_value: Vec<f64>,
    sandwich: Vec<SandwichRow>,
}

#[derive(Serialize)]
struct MomentsResult {
    exact: Vec<crate::spectral::MomentReport>,
    perturbed: Vec<crate::spectral::MomentReport>,
}

#[derive(Serialize)]
struct TileResult {
    tiling: crate::tiling::QuasiTiling,
    check: crate::tiling::TilingCheck,
    orbit: Option<Vec<crate::tiling::OrbitRow>>,
}

fn fourier_grid(job: &JobSpec, group: &GroupSpec) -> Result<Option<usize>> {
    let Some(grid) = job.estimator.fourier_grid else {
        return Ok(None);
    };
    let GroupKind::FreeAbelian(d) = group.kind() else {
        return Err(invalid(
            "estimator.fourier_grid",
            "the Fourier oracle needs a free abelian group",
        ));
    };
    let total = (0..*d).try_fold(1usize, |acc, _| acc.checked_mul(grid));
    if grid == 0 || total.is_none_or(|t| t > FOURIER_GRID_LIMIT) {
        return Err(invalid(
            "estimator.fourier_grid",
            format!("{grid}^{d} grid points must lie in [1, {FOURIER_GRID_LIMIT}]"),
        ));
    }
    Ok(Some(grid))
}

/// Runs a job for one command.
pub fn run_job(job: &JobSpec, cmd: Command) -> Result<JobOutput> {
    let stem = job.artifact_stem(cmd)?;
    let group = job.build_group()?;
    let group_name = group.describe();
    if cmd == Command::Tile {
        return run_tile(job, &group, stem, group_name);
    }
    let levels = job.build_levels(&group)?;
    let info = level_info(&levels);
    let envelope = Header {
        command: cmd.name(),
        seed: job.seed,
        group: group_name.clone(),
        levels: &info,
    };
    let opts = job.estimator_options();
    let mut tables = Vec::new();
    let json = match cmd {
        Command::Vr => {
            let pres = job.presentation(&group)?;
            let k = job.relator_cutoff(&pres)?;
            let schedule = job.eta_schedule()?;
            let est = if job.estimator.prefix_scan {
                vr_prefix_scan(&levels, &pres, k, &schedule, &opts)?
            } else {
                vr_estimate(&levels, &pres, k, &schedule, &opts)?
            };
            tables.push((
                format!("{stem}_table.csv"),
                rows_csv(&est.table, "level,degree,eta,count_fraction,uncertainty,method")?,
            ));
            envelope.render(est)?
        }
        Command::Vnd => {
            let f = job.matrix(&group)?;
            let schedule = job.eta_schedule()?;
            let grid = fourier_grid(job, &group)?;
            let estimate = vnd_estimate(&levels, &f, &schedule, &opts)?;
            let fourier_oracle = grid.map(|g| fourier_oracle_vr(&f, g)).transpose()?;
            tables.push((
                format!("{stem}_table.csv"),
                rows_csv(&estimate.table, "level,degree,eta,count_fraction,uncertainty,method")?,
            ));
            envelope.render(VndResult {
                estimate,
                fourier_oracle,
                fourier_grid: grid,
            })?
        }
        Command::Spectrum => {
            let f = job.matrix(&group)?;
            let thresholds = job.eta_schedule()?.thresholds();
            let eps = job.eps_list(&[0.5f64.powi(20)])?;
            let popts = ProfileOptions {
                budget: opts.budget,
                method: opts.method,
            };
            let profiles = levels
                .par_iter()
                .map(|lv| {
                    let p = singular_profile(&represent(lv, &f)?, &popts)?;
                    Ok((counting_function(&p, &thresholds)?, p.largest()))
                })
                .collect::<Result<Vec<_>>>()?;
            let (counting, largest): (Vec<_>, Vec<_>) = profiles.into_iter().unzip();
            let mut sandwich = Vec::new();
            for cf in &counting {
                sandwich.extend(covering_sandwich(cf, &eps)?.rows);
            }
            tables.push((format!("{stem}_counting.csv"), counting_csv(&counting)));
            tables.push((
                format!("{stem}_sandwich.csv"),
                rows_csv(&sandwich, "level,degree,eta,eps,lower,upper,gap")?,
            ));
            envelope.render(SpectrumResult {
                counting,
                largest_singular_value: largest,
                sandwich,
            })?
        }
        Command::Moments => {
            let f = job.matrix(&group)?;
            let kmax = job.estimator.kmax;
            let exact = levels
                .par_iter()
                .map(|lv| moment_check(lv, &f, kmax, &opts.budget))
                .collect::<Result<Vec<_>>>()?;
            let perturbed = match job.estimator.perturbation {
                Some(s) => levels
                    .par_iter()
                    .map(|lv| {
                        let seed = job.seed ^ (lv.index() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
                        perturbation_moment_check(lv, &f, s, kmax, seed, &opts.budget)
                    })
                    .collect::<Result<Vec<_>>>()
                    .map_err(prefix_field("estimator"))?,
                None => Vec::new(),
            };
            tables.push((format!("{stem}_exact.csv"), moments_csv(&exact)));
            if !perturbed.is_empty() {
                tables.push((format!("{stem}_perturbed.csv"), moments_csv(&perturbed)));
            }
            envelope.render(MomentsResult { exact, perturbed })?
        }
        Command::Mdim => {
            let pres = job.presentation(&group)?;
            let schedule = job.mdim_schedule(&group, &pres)?;
            let metric = job.metric()?;
            let arcs: Vec<Arc<SoficLevel>> = levels.iter().cloned().map(Arc::new).collect();
            let report = mdim_estimate(&arcs, &pres, &metric, &schedule, &opts.budget)?;
            tables.push((
                format!("{stem}_rows.csv"),
                rows_csv(
                    &report.rows,
                    "level,degree,eps,delta,near_kernel_dim,lower,upper,count_fraction",
                )?,
            ));
            tables.push((
                format!("{stem}_intervals.csv"),
                rows_csv(&report.intervals, "eps,lower,upper,width")?,
            ));
            envelope.render(report)?
        }
        Command::DemoAdditivity => {
            let schedule = job.eta_schedule()?;
            let report = additivity_failure_demo(&levels, &schedule, &opts)?;
            let mut csv = String::from("module,rank_estimate\n");
            let _ = writeln!(csv, "middle,{}", report.middle);
            let _ = writeln!(csv, "sub,{}", report.sub);
            let _ = writeln!(csv, "quotient,{}", report.quotient);
            tables.push((format!("{stem}_summary.csv"), csv));
            tables.push((
                format!("{stem}_quotient_table.csv"),
                rows_csv(
                    &report.quotient_table.table,
                    "level,degree,eta,count_fraction,uncertainty,method",
                )?,
            ));
            envelope.render(report)?
        }
        Command::Tile => unreachable!("handled above"),
    };
    Ok(JobOutput {
        command: cmd,
        stem,
        json,
        tables,
        text: None,
    })
}

fn box_at_origin(sides: &[usize], field: &str) -> Result<BoxRegion> {
    BoxRegion::at_origin(sides.to_vec()).map_err(|e| prefix_field_owned(field, e))
}

fn run_tile(job: &JobSpec, group: &GroupSpec, stem: String, group_name: String) -> Result<JobOutput> {
    let sec = require(&job.tile, "tile")?;
    let dim = match group.kind() {
        GroupKind::FreeAbelian(d) => *d,
        _ => return Err(invalid("group.kind", "tilings need a free abelian group")),
    };
    if sec.ambient.len() != dim {
        return Err(invalid(
            "tile.ambient",
            format!("{} sides given for Z^{dim}", sec.ambient.len()),
        ));
    }
    let ambient = box_at_origin(&sec.ambient, "tile.ambient")?;
    let shapes = sec
        .shapes
        .iter()
        .enumerate()
        .map(|(i, s)| box_at_origin(s, &format!("tile.shapes[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let tiling = quasi_tile(&ambient, &shapes, sec.eta).map_err(prefix_field("tile"))?;
    let check = check_quasi_tiling(&tiling);
    let mut tables = vec![(format!("{stem}_tiles.csv"), tiling_csv(&tiling))];
    let orbit = match &sec.orbit {
        Some(o) => {
            let rows = orbit_rows(job, o, dim)?;
            tables.push((
                format!("{stem}_orbit.csv"),
                rows_csv(
                    &rows,
                    "folner_index,folner_size,p,eps,lower,upper,lower_exponent,exponent",
                )?,
            ));
            Some(rows)
        }
        None => None,
    };
    let text = if sec.render {
        Some((
            format!("{stem}.txt"),
            render_tiling(&tiling).map_err(prefix_field_owned_fn("tile.render"))?,
        ))
    } else {
        None
    };
    let json = to_json(&Envelope {
        schema: SCHEMA_VERSION,
        command: Command::Tile.name(),
        seed: job.seed,
        group: group_name,
        levels: &[],
        result: TileResult { tiling, check, orbit },
    })?;
    Ok(JobOutput {
        command: Command::Tile,
        stem,
        json,
        tables,
        text,
    })
}

fn prefix_field_owned_fn(field: &'static str) -> impl Fn(Error) -> Error {
    move |e| prefix_field_owned(field, e)
}

fn orbit_rows(job: &JobSpec, o: &OrbitSection, dim: usize) -> Result<Vec<crate::tiling::OrbitRow>> {
    if o.window.len() != dim {
        return Err(invalid(
            "tile.orbit.window",
            format!("{} sides given for Z^{dim}", o.window.len()),
        ));
    }
    let window = box_at_origin(&o.window, "tile.orbit.window")?;
    let sample = match o.lattice {
        Some(l) => lattice_configurations(&window, l, o.point_limit)?,
        None => random_configurations(&window, o.components, o.samples, job.seed)?,
    };
    let folner = o
        .folner
        .iter()
        .enumerate()
        .map(|(i, s)| box_at_origin(s, &format!("tile.orbit.folner[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let base = match o.metric {
        MetricName::Delta => PseudometricSpec::delta(Exponent(2.0)),
        MetricName::Theta => PseudometricSpec::theta(Exponent(2.0)),
    };
    let budget = job.budget();
    let mut rows = Vec::new();
    for (i, p) in o.p.iter().enumerate() {
        let p = p.exponent(&format!("tile.orbit.p[{i}]"))?;
        rows.extend(
            orbit_covering_estimate(&sample, &base, &folner, p, &o.eps, o.point_limit, &budget)
                .map_err(prefix_field("tile.orbit"))?,
        );
    }
    Ok(rows)
}

/// Result of a dry run.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct VerifyReport {
    pub schema: &'static str,
    pub command: &'static str,
    pub levels: Vec<LevelInfo>,
    /// Largest dense matrix any step may build, as `[rows, cols]`.
    pub max_dense: [usize; 2],
    pub max_dense_bytes: usize,
    pub budget_bytes: usize,
    pub warnings: Vec<String>,
}

impl VerifyReport {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "ok: {} level(s), predicted max dense matrix {}x{} ({} MiB of {} MiB)\n",
            self.levels.len(),
            self.max_dense[0],
            self.max_dense[1],
            self.max_dense_bytes >> 20,
            self.budget_bytes >> 20
        );
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}

/// Validates a job and predicts matrix sizes without running estimators.
pub fn verify_job(job: &JobSpec, cmd: Command) -> Result<VerifyReport> {
    job.artifact_stem(cmd)?;
    let group = job.build_group()?;
    let budget = job.budget();
    let mut warnings = Vec::new();
    let mut max_dense = [0usize, 0usize];
    let mut note = |rows: usize, cols: usize| {
        if Budget::dense_bytes(rows, cols) > Budget::dense_bytes(max_dense[0], max_dense[1]) {
            max_dense = [rows, cols];
        }
    };
    if cmd == Command::Tile {
        let sec = require(&job.tile, "tile")?;
        let ambient = box_at_origin(&sec.ambient, "tile.ambient")?;
        for (i, s) in sec.shapes.iter().enumerate() {
            box_at_origin(s, &format!("tile.shapes[{i}]"))?;
        }
        if !(sec.eta > 0.0 && sec.eta < 1.0) {
            return Err(invalid("tile.eta", format!("{} must lie in (0, 1)", sec.eta)));
        }
        if let Some(o) = &sec.orbit {
            for (i, p) in o.p.iter().enumerate() {
                p.exponent(&format!("tile.orbit.p[{i}]"))?;
            }
            let n = o.lattice.map_or(o.samples, |l| {
                (0..o.window.iter().product::<usize>()).fold(1usize, |a, _| a.saturating_mul(l))
            });
            if n > o.point_limit {
                warnings.push(format!("{n} orbit sample points exceed point_limit {}", o.point_limit));
            }
        }
        note(ambient.len(), 1);
        return Ok(VerifyReport {
            schema: SCHEMA_VERSION,
            command: cmd.name(),
            levels: Vec::new(),
            max_dense,
            max_dense_bytes: Budget::dense_bytes(max_dense[0], max_dense[1]),
            budget_bytes: budget.max_bytes,
            warnings,
        });
    }
    let levels = job.build_levels(&group)?;
    let opts = job.estimator_options();
    let shape = match cmd {
        Command::Vr | Command::Mdim => {
            let pres = job.presentation(&group)?;
            let k = job.relator_cutoff(&pres)?;
            if cmd == Command::Mdim {
                let s = job.mdim_schedule(&group, &pres)?;
                job.metric()?;
                if s.brute_force_eps.is_some() && levels.iter().all(|l| l.degree() > BRUTE_FORCE_MAX_DEGREE) {
                    warnings.push(format!(
                        "brute-force covering only runs at degrees <= {BRUTE_FORCE_MAX_DEGREE}; no level qualifies"
                    ));
                }
            } else {
                job.eta_schedule()?;
            }
            (k, pres.rank())
        }
        Command::Vnd | Command::Spectrum | Command::Moments => {
            let f = job.matrix(&group)?;
            job.eta_schedule()?;
            if cmd == Command::Vnd {
                fourier_grid(job, &group)?;
            }
            if cmd == Command::Spectrum {
                job.eps_list(&[0.5])?;
            }
            (f.rows(), f.cols())
        }
        Command::DemoAdditivity => {
            job.eta_schedule()?;
            match group.kind() {
                GroupKind::Free(r) if *r >= 2 => (*r, *r),
                _ => return Err(invalid("group.kind", "the demo needs a free group of rank at least 2")),
            }
        }
        Command::Tile => unreachable!("handled above"),
    };
    if levels.len() < job.estimator.tail && matches!(cmd, Command::Vr | Command::Vnd | Command::DemoAdditivity) {
        warnings.push(format!(
            "tail {} is longer than the {} level(s) given",
            job.estimator.tail,
            levels.len()
        ));
    }
    let (m, n) = shape;
    for lv in &levels {
        let (rows, cols) = (m.max(n) * lv.degree(), n * lv.degree());
        if cmd == Command::Mdim {
            note(cols, cols);
        }
        let guard = cols > budget.dense_degree_guard;
        let over = Budget::dense_bytes(rows, cols) > budget.max_bytes;
        if guard || over {
            let name = if guard { "dense_degree_guard" } else { BUDGET_ENV };
            let consequence = match (cmd, opts.method) {
                (Command::Moments, _) | (_, MethodPreference::Dense) => "the dense path will abort",
                _ => "the sparse inertia path will be used",
            };
            warnings.push(format!(
                "level {}: dense {rows}x{cols} exceeds guard `{name}`; {consequence}",
                lv.index()
            ));
            if cmd == Command::Mdim {
                warnings.push(format!(
                    "level {}: near-kernel needs a dense {cols}x{cols} Gram",
                    lv.index()
                ));
            }
        } else {
            note(rows, cols);
        }
    }
    Ok(VerifyReport {
        schema: SCHEMA_VERSION,
        command: cmd.name(),
        levels: level_info(&levels),
        max_dense,
        max_dense_bytes: Budget::dense_bytes(max_dense[0], max_dense[1]),
        budget_bytes: budget.max_bytes,
        warnings,
    })
}

/// Process exit status for an error: 2 for invalid input, 3 for a guard
/// or budget abort, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Budget { .. } => 3,
        Error::Io { .. } | Error::Serialize(_) | Error::Eigen { .. } => 1,
        _ => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const Z_VR: &str = r#"
seed = 1
[group]
kind = "free-abelian"
rank = 1
[levels]
kind = "congruence"
sizes = [8, 16, 32, 64]
[input]
element = "x - 1"
"#;

    #[test]
    fn missing_group_names_the_field() {
        let e = JobSpec::from_toml_str("seed = 1\n").unwrap_err();
        assert_eq!(exit_code(&e), 2);
        assert!(e.to_string().contains("group"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_line() {
        let e = JobSpec::from_toml_str(&format!("{Z_VR}\n[estimator]\nbogus = 3\n")).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("bogus") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn parse_errors_carry_a_caret() {
        let job = JobSpec::from_toml_str(&Z_VR.replace("x - 1", "x - * 1")).unwrap();
        let e = verify_job(&job, Command::Vr).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("input.element") && msg.contains('^'), "{msg}");
    }

    #[test]
    fn z_vr_job_runs() {
        let job = JobSpec::from_toml_str(Z_VR).unwrap();
        let out = run_job(&job, Command::Vr).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out.json).unwrap();
        assert_eq!(v["schema"], "1");
        assert!(v["result"]["estimate"].as_f64().unwrap() <= 1.0 / 64.0 + 1e-9);
        assert_eq!(out.tables.len(), 1);
        assert!(out.tables[0].1.starts_with("level,degree,eta"));
    }

    #[test]
    fn runs_are_deterministic() {
        let job = JobSpec::from_toml_str(Z_VR).unwrap();
        assert_eq!(
            run_job(&job, Command::Vnd).unwrap(),
            run_job(&job, Command::Vnd).unwrap()
        );
    }

    #[test]
    fn verify_warns_about_the_guard() {
        let job = JobSpec::from_toml_str(&Z_VR.replace("[8, 16, 32, 64]", "[8, 100000]")).unwrap();
        let r = verify_job(&job, Command::Vnd).unwrap();
        assert!(
            r.warnings.iter().any(|w| w.contains("dense_degree_guard")),
            "{:?}",
            r.warnings
        );
        assert_eq!(r.max_dense, [8, 8]);
        assert!(r.summary().starts_with("ok:"));
    }

    #[test]
    fn exponents_parse() {
        assert_eq!(PValue::Text("inf".into()).exponent("p").unwrap(), Exponent::INF);
        assert_eq!(PValue::Number(1.0).exponent("p").unwrap(), Exponent(1.0));
        assert!(PValue::Number(0.5).exponent("p").is_err());
    }

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            assert_eq!(Command::from_name(c.name()).unwrap(), c);
        }
    }
}
