//! Greedy quasi-tilings of boxes in `Z^d` and covering numbers of orbit
//! pseudometrics `ρ_{F,p}` on torus-valued configurations.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Budget;
use crate::microstates::{covering_table, Exponent, InnerNorm, MetricKind, PseudometricSpec, TorusPointSet};

/// The box `origin + [0, sides_1) × … × [0, sides_d)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BoxRegion {
    pub origin: Vec<i64>,
    pub sides: Vec<usize>,
}

impl BoxRegion {
    pub fn new(origin: Vec<i64>, sides: Vec<usize>) -> Result<Self> {
        if origin.len() != sides.len() || sides.is_empty() {
            return Err(Error::validation(
                "sides",
                "origin and sides must have the same positive length",
            ));
        }
        if sides.contains(&0) {
            return Err(Error::validation("sides", "box sides must be positive"));
        }
        Ok(Self { origin, sides })
    }

    /// `[0, s_1) × … × [0, s_d)`.
    pub fn at_origin(sides: Vec<usize>) -> Result<Self> {
        Self::new(vec![0; sides.len()], sides)
    }

    pub fn dim(&self) -> usize {
        self.sides.len()
    }

    pub fn len(&self) -> usize {
        self.sides.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        x.iter()
            .zip(&self.origin)
            .zip(&self.sides)
            .all(|((&v, &o), &s)| v >= o && v < o + s as i64)
    }

    /// Row-major index of a point (first coordinate most significant).
    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let mut idx = 0usize;
        for ((&v, &o), &s) in x.iter().zip(&self.origin).zip(&self.sides) {
            idx = idx * s + (v - o) as usize;
        }
        Some(idx)
    }

    pub fn point(&self, mut idx: usize) -> Vec<i64> {
        let mut x = vec![0i64; self.dim()];
        for k in (0..self.dim()).rev() {
            x[k] = self.origin[k] + (idx % self.sides[k]) as i64;
            idx /= self.sides[k];
        }
        x
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    /// `|F ∩ (F + g)|`.
    pub fn overlap_with_shift(&self, g: &[i64]) -> usize {
        self.sides
            .iter()
            .zip(g)
            .map(|(&s, &t)| (s as i64 - t.abs()).max(0) as usize)
            .product()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Tile {
    pub shape: usize,
    pub center: Vec<i64>,
    /// `F_{i,j}`: offsets inside the shape that the tile actually owns.
    pub cells: Vec<Vec<i64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct QuasiTiling {
    pub ambient: BoxRegion,
    pub shapes: Vec<BoxRegion>,
    pub eta: f64,
    pub tiles: Vec<Tile>,
    pub covered: usize,
    pub coverage: f64,
    /// Coverage fell short of `1 − η`.
    pub under_covered: bool,
    /// `sup_{g ∈ K} |gF Δ F| / |F|` with `K` the union of the shapes.
    pub invariance_beta: f64,
}

/// Greedy largest-first packing of translated shapes into `F`.
///
/// For each shape, candidate centers are scanned in lexicographic order
/// twice: first accepting only fully unoccupied translates, then any
/// translate whose unoccupied part has at least `(1 − η)|shape|` cells.
pub fn quasi_tile(ambient: &BoxRegion, shapes: &[BoxRegion], eta: f64) -> Result<QuasiTiling> {
    if shapes.is_empty() {
        return Err(Error::validation("shapes", "at least one shape is required"));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::validation("eta", format!("{eta} must lie in (0, 1)")));
    }
    if let Some(i) = shapes.iter().position(|s| s.dim() != ambient.dim()) {
        return Err(Error::validation(
            format!("shapes[{i}]"),
            "dimension differs from the ambient box",
        ));
    }
    let mut order: Vec<usize> = (0..shapes.len()).collect();
    order.sort_by(|&a, &b| shapes[b].len().cmp(&shapes[a].len()));
    let mut occupied = vec![false; ambient.len()];
    let mut tiles = Vec::new();
    for &si in &order {
        let shape = &shapes[si];
        let need = ((1.0 - eta) * shape.len() as f64).ceil() as usize;
        // centers c with shape + c inside the ambient box
        let lo: Vec<i64> = (0..ambient.dim())
            .map(|k| ambient.origin[k] - shape.origin[k])
            .collect();
        let span: Vec<i64> = (0..ambient.dim())
            .map(|k| ambient.sides[k] as i64 - shape.sides[k] as i64 + 1)
            .collect();
        if span.iter().any(|&s| s <= 0) {
            continue;
        }
        let centers = BoxRegion::new(lo, span.iter().map(|&s| s as usize).collect())?;
        for (c, need) in [shape.len(), need]
            .into_iter()
            .flat_map(|need| centers.points().map(move |c| (c, need)))
        {
            let mut free = Vec::new();
            for off in shape.points() {
                let x: Vec<i64> = off.iter().zip(&c).map(|(a, b)| a + b).collect();
                let idx = ambient.index_of(&x).expect("translate inside the ambient box");
                if !occupied[idx] {
                    free.push(off);
                }
            }
            if free.len() >= need && !free.is_empty() {
                for off in &free {
                    let x: Vec<i64> = off.iter().zip(&c).map(|(a, b)| a + b).collect();
                    occupied[ambient.index_of(&x).expect("inside")] = true;
                }
                tiles.push(Tile {
                    shape: si,
                    center: c,
                    cells: free,
                });
            }
        }
    }
    let covered = occupied.iter().filter(|&&o| o).count();
    let coverage = covered as f64 / ambient.len() as f64;
    let invariance_beta = shapes
        .iter()
        .flat_map(|s| s.points())
        .map(|g| 2.0 * (ambient.len() - ambient.overlap_with_shift(&g)) as f64 / ambient.len() as f64)
        .fold(0.0, f64::max);
    Ok(QuasiTiling {
        ambient: ambient.clone(),
        shapes: shapes.to_vec(),
        eta,
        tiles,
        covered,
        coverage,
        under_covered: coverage < 1.0 - eta,
        invariance_beta,
    })
}

/// The tiling inequalities, checked by enumerating cells.
#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct TilingCheck {
    /// Every `F_{i,j} ⊆ F_{n_j}` and `F_{i,j} c ⊆ F`.
    pub inside: bool,
    pub disjoint: bool,
    /// `|F_{i,j}| ≥ (1 − η)|F_{n_j}|` for every tile.
    pub full_tiles: bool,
    /// `|⋃ F_{i,j} c| ≥ (1 − η)|F|`.
    pub covering: bool,
}

impl TilingCheck {
    pub fn all(&self) -> bool {
        self.inside && self.disjoint && self.full_tiles && self.covering
    }
}

pub fn check_quasi_tiling(t: &QuasiTiling) -> TilingCheck {
    let mut seen = vec![false; t.ambient.len()];
    let (mut inside, mut disjoint, mut full_tiles) = (true, true, true);
    for tile in &t.tiles {
        let shape = &t.shapes[tile.shape];
        if (tile.cells.len() as f64) < (1.0 - t.eta) * shape.len() as f64 {
            full_tiles = false;
        }
        for off in &tile.cells {
            if !shape.contains(off) {
                inside = false;
            }
            let x: Vec<i64> = off.iter().zip(&tile.center).map(|(a, b)| a + b).collect();
            match t.ambient.index_of(&x) {
                None => inside = false,
                Some(i) => {
                    if seen[i] {
                        disjoint = false;
                    }
                    seen[i] = true;
                }
            }
        }
    }
    let covered = seen.iter().filter(|&&s| s).count();
    TilingCheck {
        inside,
        disjoint,
        full_tiles,
        covering: covered as f64 >= (1.0 - t.eta) * t.ambient.len() as f64,
    }
}

/// CSV rows `tile,shape,c_1,..,c_d,cells`.
pub fn tiling_csv(t: &QuasiTiling) -> String {
    let mut out = String::from("tile,shape");
    for k in 0..t.ambient.dim() {
        let _ = write!(out, ",c{}", k + 1);
    }
    out.push_str(",cells\n");
    for (i, tile) in t.tiles.iter().enumerate() {
        let _ = write!(out, "{i},{}", tile.shape);
        for c in &tile.center {
            let _ = write!(out, ",{c}");
        }
        let _ = writeln!(out, ",{}", tile.cells.len());
    }
    out
}

/// Text grid of a tiling in one or two dimensions; `.` marks uncovered cells.
pub fn render_tiling(t: &QuasiTiling) -> Result<String> {
    let dim = t.ambient.dim();
    if dim > 2 {
        return Err(Error::Unsupported(format!("cannot draw a {dim}-dimensional tiling")));
    }
    let mut grid = vec![b'.'; t.ambient.len()];
    for (i, tile) in t.tiles.iter().enumerate() {
        let glyph = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"[i % 52];
        for off in &tile.cells {
            let x: Vec<i64> = off.iter().zip(&tile.center).map(|(a, b)| a + b).collect();
            if let Some(idx) = t.ambient.index_of(&x) {
                grid[idx] = glyph;
            }
        }
    }
    let width = *t.ambient.sides.last().expect("nonempty");
    let mut out = String::new();
    for row in grid.chunks(width) {
        out.push_str(std::str::from_utf8(row).expect("ascii"));
        out.push('\n');
    }
    Ok(out)
}

/// A torus-valued configuration `x: window → T^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    pub window: BoxRegion,
    pub components: usize,
    /// Row-major over the window, `components` values per cell.
    pub values: Vec<f64>,
}

impl Configuration {
    pub fn new(window: BoxRegion, components: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != window.len() * components {
            return Err(Error::Dimension(format!(
                "{} values for a window of {} cells with {components} components",
                values.len(),
                window.len()
            )));
        }
        Ok(Self {
            window,
            components,
            values: values.into_iter().map(crate::microstates::wrap).collect(),
        })
    }

    /// `x(g)`.
    pub fn at(&self, g: &[i64]) -> Result<&[f64]> {
        let i = self
            .window
            .index_of(g)
            .ok_or_else(|| Error::InsufficientWindow(format!("point {g:?}")))?;
        Ok(&self.values[i * self.components..(i + 1) * self.components])
    }
}

/// All configurations with values in `{0, 1/L, .., (L-1)/L}`, in
/// lexicographic order.
pub fn lattice_configurations(window: &BoxRegion, lattice: usize, limit: usize) -> Result<Vec<Configuration>> {
    let cells = window.len();
    let count = (0..cells)
        .try_fold(1usize, |acc, _| acc.checked_mul(lattice))
        .filter(|&c| c <= limit);
    let Some(count) = count else {
        return Err(Error::budget(
            "point_limit",
            format!("{lattice}^{cells} configurations exceed {limit}"),
        ));
    };
    (0..count)
        .map(|mut idx| {
            let mut v = vec![0.0; cells];
            for x in v.iter_mut().rev() {
                *x = (idx % lattice) as f64 / lattice as f64;
                idx /= lattice;
            }
            Configuration::new(window.clone(), 1, v)
        })
        .collect()
}

/// Independent uniform configurations from a seeded generator.
pub fn random_configurations(
    window: &BoxRegion,
    components: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Configuration>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let v = (0..window.len() * components).map(|_| rng.gen::<f64>()).collect();
            Configuration::new(window.clone(), components, v)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct OrbitRow {
    pub folner_index: usize,
    pub folner_size: usize,
    pub p: String,
    pub eps: f64,
    pub lower: usize,
    pub upper: usize,
    pub lower_exponent: f64,
    /// `log(upper) / (|F_n| log(1/ε))`.
    pub exponent: f64,
}

/// Covering numbers of a sample under `ρ_{F_n,p}(x, y)^p = (1/|F_n|) Σ_{g∈F_n} ρ(gx, gy)^p`,
/// with `(g·x)(h) = x(h + g)` and `ρ` read at the identity.
pub fn orbit_covering_estimate(
    sample: &[Configuration],
    base: &PseudometricSpec,
    folner: &[BoxRegion],
    p: Exponent,
    eps: &[f64],
    limit: usize,
    budget: &Budget,
) -> Result<Vec<OrbitRow>> {
    let inner = match base.kind {
        MetricKind::Delta => InnerNorm::L2,
        MetricKind::Theta => InnerNorm::LInf,
        MetricKind::DualGenerators(_) => {
            return Err(Error::Unsupported(
                "orbit pseudometrics use the coordinate metrics".into(),
            ))
        }
    };
    let mut rows = Vec::new();
    for (fi, f) in folner.iter().enumerate() {
        let components = sample.first().map(|c| c.components).unwrap_or(1);
        let points = sample
            .iter()
            .map(|x| {
                let mut v = Vec::with_capacity(f.len() * components);
                for g in f.points() {
                    v.extend_from_slice(x.at(&g)?);
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        let set = TorusPointSet::new(f.len(), components, points)?;
        for cell in covering_table(&set, inner, &[p], eps, limit, budget)? {
            let norm = f.len() as f64 * (1.0 / cell.eps).ln();
            rows.push(OrbitRow {
                folner_index: fi,
                folner_size: f.len(),
                p: cell.p,
                eps: cell.eps,
                lower: cell.lower,
                upper: cell.upper,
                lower_exponent: (cell.lower.max(1) as f64).ln() / norm,
                exponent: (cell.upper.max(1) as f64).ln() / norm,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_grid_tiling() {
        let f = BoxRegion::at_origin(vec![100, 100]).unwrap();
        let t = quasi_tile(&f, &[BoxRegion::at_origin(vec![10, 10]).unwrap()], 0.1).unwrap();
        assert_eq!(t.tiles.len(), 100);
        assert_eq!(t.coverage, 1.0);
        assert!(check_quasi_tiling(&t).all());
    }

    #[test]
    fn shape_equal_to_the_box() {
        let f = BoxRegion::at_origin(vec![10]).unwrap();
        let t = quasi_tile(&f, std::slice::from_ref(&f), 0.1).unwrap();
        assert_eq!(t.tiles.len(), 1);
        assert_eq!(t.coverage, 1.0);
        assert_eq!(render_tiling(&t).unwrap(), "aaaaaaaaaa\n");
    }

    #[test]
    fn ragged_box_keeps_coverage() {
        let f = BoxRegion::at_origin(vec![101, 101]).unwrap();
        let t = quasi_tile(&f, &[BoxRegion::at_origin(vec![10, 10]).unwrap()], 0.1).unwrap();
        assert!(t.coverage >= 0.9);
        assert_eq!(t.covered, 10000);
        assert!(!t.under_covered);
        assert!(check_quasi_tiling(&t).all());
        assert!(tiling_csv(&t).starts_with("tile,shape,c1,c2,cells\n0,0,0,0,100\n"));
    }

    #[test]
    fn orbit_covering_of_the_full_shift() {
        let window = BoxRegion::at_origin(vec![3]).unwrap();
        let sample = lattice_configurations(&window, 8, 1000).unwrap();
        let f = vec![BoxRegion::at_origin(vec![3]).unwrap()];
        let rows = orbit_covering_estimate(
            &sample,
            &PseudometricSpec::theta(Exponent::INF),
            &f,
            Exponent::INF,
            &[0.125],
            1000,
            &Budget::default(),
        )
        .unwrap();
        assert!((rows[0].exponent - 1.0).abs() <= 0.25);
        let fixed = vec![Configuration::new(window, 1, vec![0.0; 3]).unwrap()];
        let rows = orbit_covering_estimate(
            &fixed,
            &PseudometricSpec::theta(Exponent::INF),
            &f,
            Exponent(1.0),
            &[0.125],
            10,
            &Budget::default(),
        )
        .unwrap();
        assert_eq!((rows[0].lower, rows[0].upper), (1, 1));
        assert_eq!(rows[0].exponent, 0.0);
    }
}
