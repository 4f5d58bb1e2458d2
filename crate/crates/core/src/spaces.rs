//! Variable-exponent modulars and Luxemburg norms of grid functions, the
//! generalized Hölder inequalities, and empirical embedding constants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::ExponentField;
use crate::grid::{hat, Grid, GridFunction};
use crate::kernel::{unit_level_root, KernelError, KernelQuadrature, Region};
use crate::quadrature::{graded_pieces, pairwise_sum, zero_mark, GaussRule};

pub const DEFAULT_GAUSS_ORDER: usize = 4;
pub const LUXEMBURG_REL_TOL: f64 = 1e-10;
pub const DEFAULT_SAFETY_FACTOR: f64 = 1.5;
pub const DEFAULT_DICTIONARY_SIZE: usize = 40;
const DICTIONARY_SEED: u64 = 0x5eed_d1c7;
/// Geometric levels toward a zero of the interpolant inside a cell.
const ZERO_GRADING: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceError {
    #[error("modular never crossed 1 on [{lo:e}, {hi:e}]")]
    BracketFailure { lo: f64, hi: f64 },
    #[error("dictionary member {index} has seminorm {seminorm:e} below 1e-14")]
    DegenerateDictionary { index: usize, seminorm: f64 },
    #[error("dictionary is empty")]
    EmptyDictionary,
    #[error(transparent)]
    Kernel(KernelError),
}

impl From<KernelError> for SpaceError {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::BracketFailure { lo, hi } => SpaceError::BracketFailure { lo, hi },
            other => SpaceError::Kernel(other),
        }
    }
}

/// Samples of a function and an exponent at quadrature nodes.
#[derive(Debug, Clone)]
pub struct Samples {
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
    pub exponents: Vec<f64>,
}

impl Samples {
    /// Samples of the interpolant of `u` with exponent `p(x)` on composite Gauss nodes.
    /// Cells where `u` vanishes are split there and graded toward the zero.
    pub fn new(u: &GridFunction, p: impl Fn(f64) -> f64, order: usize) -> Self {
        Self::on_nodes(u, p, &split_nodes(&[u], order))
    }

    /// Samples of `u` and `v` on one node set, split at the zeros of both.
    pub fn pair(
        u: &GridFunction,
        v: &GridFunction,
        pu: impl Fn(f64) -> f64,
        pv: impl Fn(f64) -> f64,
        order: usize,
    ) -> (Self, Self) {
        let nodes = split_nodes(&[u, v], order);
        (Self::on_nodes(u, pu, &nodes), Self::on_nodes(v, pv, &nodes))
    }

    fn on_nodes(u: &GridFunction, p: impl Fn(f64) -> f64, nodes: &[(usize, f64, f64)]) -> Self {
        let grid = u.grid;
        Samples {
            weights: nodes.iter().map(|n| n.2).collect(),
            values: nodes.iter().map(|n| u.at(n.0, n.1)).collect(),
            exponents: nodes.iter().map(|n| p(grid.point(n.0, n.1))).collect(),
        }
    }

    /// Pointwise product of the sampled values with another function on the same nodes.
    pub fn times(&self, other: &Samples) -> Samples {
        Samples {
            weights: self.weights.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
            exponents: self.exponents.clone(),
        }
    }

    pub fn with_exponents(&self, p: impl Fn(usize) -> f64) -> Samples {
        Samples {
            weights: self.weights.clone(),
            values: self.values.clone(),
            exponents: (0..self.values.len()).map(p).collect(),
        }
    }

    pub fn modular(&self) -> f64 {
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.values)
            .zip(&self.exponents)
            .map(|((w, v), p)| if *v == 0.0 { 0.0 } else { w * v.abs().powf(*p) })
            .collect();
        pairwise_sum(&terms)
    }

    pub fn luxemburg(&self) -> Result<f64, SpaceError> {
        let mut ln_abs = Vec::new();
        let mut ps = Vec::new();
        let mut ws = Vec::new();
        for ((w, v), p) in self.weights.iter().zip(&self.values).zip(&self.exponents) {
            if *v != 0.0 {
                ln_abs.push(v.abs().ln());
                ps.push(*p);
                ws.push(*w);
            }
        }
        if ws.is_empty() {
            return Ok(0.0);
        }
        let f = |ln_mu: f64| {
            let terms: Vec<f64> = ln_abs
                .iter()
                .zip(&ps)
                .zip(&ws)
                .map(|((l, p), w)| w * (p * (l - ln_mu)).exp())
                .collect();
            pairwise_sum(&terms)
        };
        let emin = ps.iter().cloned().fold(f64::INFINITY, f64::min);
        let emax = ps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(unit_level_root(f, (emin, emax), LUXEMBURG_REL_TOL)?)
    }

    /// `∫|v|` over the sampled nodes.
    pub fn l1(&self) -> f64 {
        let terms: Vec<f64> = self.weights.iter().zip(&self.values).map(|(w, v)| w * v.abs()).collect();
        pairwise_sum(&terms)
    }
}

/// `(cell, t, weight)` nodes. Each cell is cut at the zeros of the given
/// interpolants, and pieces are graded toward zeros at (or just beyond) their ends.
fn split_nodes(fns: &[&GridFunction], order: usize) -> Vec<(usize, f64, f64)> {
    let grid = fns[0].grid;
    let rule = GaussRule::new(order);
    let h = grid.h();
    let mut out = Vec::with_capacity(grid.cells * order);
    for cell in 0..grid.cells {
        let marks: Vec<(f64, usize)> = fns
            .iter()
            .filter_map(|f| zero_mark(f.values[cell], f.values[cell + 1], ZERO_GRADING))
            .collect();
        for (a, b) in graded_pieces(&[], &marks) {
            for (z, wt) in rule.nodes.iter().zip(&rule.weights) {
                out.push((cell, a + (b - a) * z, h * (b - a) * wt));
            }
        }
    }
    out
}

/// `∫_Ω |u(x)|^{p(x)} dx`.
pub fn modular(u: &GridFunction, p: &ExponentField) -> f64 {
    Samples::new(u, |x| p.at(x), DEFAULT_GAUSS_ORDER).modular()
}

/// Luxemburg norm `inf{λ > 0 : ∫ |u/λ|^{p(x)} ≤ 1}`.
pub fn luxemburg_norm(u: &GridFunction, p: &ExponentField) -> Result<f64, SpaceError> {
    Samples::new(u, |x| p.at(x), DEFAULT_GAUSS_ORDER).luxemburg()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub lhs: f64,
    pub mid: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `min(‖u‖^{p⁻}, ‖u‖^{p⁺}) ≤ ρ(u) ≤ max(‖u‖^{p⁻}, ‖u‖^{p⁺})`.
pub fn check_sandwich(u: &GridFunction, p: &ExponentField) -> Result<Sandwich, SpaceError> {
    let s = Samples::new(u, |x| p.at(x), DEFAULT_GAUSS_ORDER);
    let norm = s.luxemburg()?;
    let mid = s.modular();
    let a = norm.powf(p.min());
    let b = norm.powf(p.max());
    let (lhs, rhs) = (a.min(b), a.max(b));
    let slack = 1e-9 * rhs.max(1e-300);
    Ok(Sandwich {
        lhs,
        mid,
        rhs,
        holds: lhs - slack <= mid && mid <= rhs + slack,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoelderCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `∫|uv| ≤ (1/p⁻ + 1/(p')⁻) ‖u‖_{p(.)} ‖v‖_{p'(.)}` with `(p')⁻ = p⁻/(p⁻ − 1)`.
pub fn check_hoelder(u: &GridFunction, v: &GridFunction, p: &ExponentField) -> Result<HoelderCheck, SpaceError> {
    let (su, sv) = Samples::pair(
        u,
        v,
        |x| p.at(x),
        |x| {
            let px = p.at(x);
            px / (px - 1.0)
        },
        DEFAULT_GAUSS_ORDER,
    );
    let lhs = su.times(&sv).l1();
    let pm = p.min();
    let conj_min = pm / (pm - 1.0);
    let constant = 1.0 / pm + 1.0 / conj_min;
    let rhs = constant * su.luxemburg()? * sv.luxemburg()?;
    Ok(HoelderCheck {
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + 1e-9),
    })
}

/// Three-exponent form `‖uv‖_{p(.)} ≤ C ‖u‖_{r(.)} ‖v‖_{q(.)}` with `1/p = 1/r + 1/q`.
/// Returns `(lhs, ‖u‖_r ‖v‖_q)`; callers compare against their chosen `C`.
pub fn three_exponent_hoelder(
    u: &GridFunction,
    v: &GridFunction,
    r: &ExponentField,
    q: &ExponentField,
) -> Result<(f64, f64), SpaceError> {
    let (su, sv) = Samples::pair(u, v, |x| r.at(x), |x| q.at(x), DEFAULT_GAUSS_ORDER);
    let uv = su
        .times(&sv)
        .with_exponents(|i| 1.0 / (1.0 / su.exponents[i] + 1.0 / sv.exponents[i]));
    Ok((uv.luxemburg()?, su.luxemburg()? * sv.luxemburg()?))
}

/// The `index`-th member of the embedding dictionary on `grid`: 15 hats
/// (5 centres × 3 widths), 5 sine modes, then seeded random piecewise-linear
/// functions on an 8-cell coarse grid.
pub fn dictionary_member(grid: Grid, index: usize) -> GridFunction {
    let (a, len) = (grid.a, grid.len());
    if index < 15 {
        let center = a + len * (1 + index % 5) as f64 / 6.0;
        let half = len * [0.08, 0.12, 0.16][index / 5];
        return hat(grid, center, half);
    }
    if index < 20 {
        let mode = (index - 14) as f64;
        return GridFunction::from_fn(grid, true, |x| {
            (mode * std::f64::consts::PI * (x - a) / len).sin()
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(DICTIONARY_SEED ^ index as u64);
    let knots: Vec<f64> = (0..9)
        .map(|i| if i == 0 || i == 8 { 0.0 } else { rng.gen_range(-1.0..1.0) })
        .collect();
    GridFunction::from_fn(grid, true, |x| {
        let s = ((x - a) / len * 8.0).clamp(0.0, 8.0);
        let c = (s.floor() as usize).min(7);
        let t = s - c as f64;
        knots[c] * (1.0 - t) + knots[c + 1] * t
    })
}

pub fn dictionary(grid: Grid, size: usize) -> Vec<GridFunction> {
    (0..size).map(|i| dictionary_member(grid, i)).collect()
}

/// `safety × max_u ‖u‖_{L^{r(.)}} / [u]_{q(.),s(.),Ω}` over the first
/// `dictionary_size` dictionary members.
pub fn estimate_embedding_constant(
    r: &ExponentField,
    dictionary_size: usize,
    kernel: &KernelQuadrature,
    safety: f64,
) -> Result<f64, SpaceError> {
    Ok(estimate_embedding_constants(&[r], dictionary_size, kernel, safety)?[0])
}

/// As [`estimate_embedding_constant`] for several exponents, sharing the
/// seminorm evaluations.
pub fn estimate_embedding_constants(
    rs: &[&ExponentField],
    dictionary_size: usize,
    kernel: &KernelQuadrature,
    safety: f64,
) -> Result<Vec<f64>, SpaceError> {
    if dictionary_size == 0 {
        return Err(SpaceError::EmptyDictionary);
    }
    let mut best = vec![0.0f64; rs.len()];
    for index in 0..dictionary_size {
        let u = dictionary_member(*kernel.grid(), index);
        let seminorm = kernel.seminorm(&u, Region::Omega)?;
        if !(seminorm >= 1e-14) {
            return Err(SpaceError::DegenerateDictionary { index, seminorm });
        }
        for (b, r) in best.iter_mut().zip(rs) {
            *b = b.max(luxemburg_norm(&u, r)? / seminorm);
        }
    }
    Ok(best.into_iter().map(|b| safety * b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Arity;
    use crate::kernel::KernelOptions;

    const OMEGA: (f64, f64) = (0.0, 1.0);

    fn field(src: &str) -> ExponentField {
        ExponentField::parse("p", src, Arity::One, OMEGA, 257).unwrap()
    }

    fn grid(n: usize) -> Grid {
        Grid::new(0.0, 1.0, n).unwrap()
    }

    #[test]
    fn trivial_modulars_and_norms() {
        let g = grid(64);
        assert_eq!(modular(&GridFunction::zeros(g), &field("2.5")), 0.0);
        assert_eq!(luxemburg_norm(&GridFunction::zeros(g), &field("2.5")).unwrap(), 0.0);
        let two = GridFunction::from_fn(g, false, |_| 2.0);
        assert!((modular(&two, &field("3")) - 8.0).abs() < 1e-12);
        let one = GridFunction::from_fn(g, false, |_| 1.0);
        assert!((luxemburg_norm(&one, &field("2+x")).unwrap() - 1.0).abs() < 1e-9);
        let three = GridFunction::from_fn(g, false, |_| 3.0);
        assert!((luxemburg_norm(&three, &field("2")).unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn sandwich_and_hoelder_trivial_cases() {
        let g = grid(64);
        let one = GridFunction::from_fn(g, false, |_| 1.0);
        let s = check_sandwich(&one, &field("2+x")).unwrap();
        assert!(s.holds);
        assert!((s.lhs - 1.0).abs() < 1e-9 && (s.rhs - 1.0).abs() < 1e-9 && (s.mid - 1.0).abs() < 1e-12);
        let three = GridFunction::from_fn(g, false, |_| 3.0);
        let s = check_sandwich(&three, &field("2")).unwrap();
        assert!(s.holds && (s.mid - 9.0).abs() < 1e-9);
        let h = check_hoelder(&one, &one, &field("2")).unwrap();
        assert!(h.holds && (h.lhs - 1.0).abs() < 1e-12 && (h.rhs - 1.0).abs() < 1e-9);
        let h = check_hoelder(&GridFunction::zeros(g), &one, &field("2")).unwrap();
        assert_eq!((h.lhs, h.rhs, h.holds), (0.0, 0.0, true));
    }

    #[test]
    fn dictionary_prefix_is_stable() {
        let g = grid(64);
        let small = dictionary(g, 25);
        let large = dictionary(g, 50);
        assert_eq!(&large[..25], &small[..]);
        assert!(large.iter().all(|u| u.dirichlet && !u.is_zero()));
    }

    #[test]
    fn embedding_estimate_is_monotone_in_dictionary_size() {
        let g = grid(64);
        let q = ExponentField::parse("q", "1.5+0.05*cos(x-y)", Arity::Two, OMEGA, 33).unwrap();
        let s = ExponentField::parse("s", "0.35", Arity::Two, OMEGA, 33).unwrap();
        let kq = KernelQuadrature::new(g, &q, &s, KernelOptions::default()).unwrap();
        let p = field("2.2+0.3*sin(x)");
        let c20 = estimate_embedding_constant(&p, 20, &kq, 1.5).unwrap();
        let c40 = estimate_embedding_constant(&p, 40, &kq, 1.5).unwrap();
        assert!(c20 > 0.0 && c40 >= c20);
    }
}
