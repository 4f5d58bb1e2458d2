//! Quadrature of the variable-order Gagliardo modular and of the weak form of
//! the fractional `q(.)`-Laplacian for piecewise-linear functions in 1D.
//!
//! The kernel is `|x - y|^{-(1 + q(x,y) s(x,y))}`. All geometry (points,
//! weights, kernel values, exponents) is computed once per grid and cached;
//! evaluations for a given `u` only interpolate and raise to powers.
//!
//! * Cell pairs at distance ≥ 2 cells: tensor Gauss, doubled order for the
//!   nearest few.
//! * Diagonal cells: variables `(x, d = x - y)`, geometric grading toward `d = 0`.
//! * Adjacent cells: Duffy split at the shared vertex, graded toward the vertex.
//! * Cell pairs on which `u(x) - u(y)` changes sign get, per evaluation,
//!   extra points split along the zero line (the cached points
//!   of the pair are cancelled by negated copies).
//! * Exterior (`u = 0` outside `Ω`): the cross term
//!   `2 ∫_Ω |u(x)|^q̃ ∫_{Ωᶜ} |x - y|^{-(1 + q̃ s)} dy dx`, with `q` extended by
//!   nearest-point projection onto the exponent domain and the `y` integral
//!   truncated at `|y - mid(Ω)| ≤ R_tail`. The remainder is reported separately.

use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::ExponentField;
use crate::grid::{Grid, GridFunction};
use crate::quadrature::{cell_nodes, graded_intervals, graded_pieces, pairwise_sum, zero_mark, CellNode, GaussRule};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("kernel quadrature needs {needed} nodes, budget is {budget}")]
    GradingOverflow { needed: usize, budget: usize },
    #[error("modular never crossed 1 on [{lo:e}, {hi:e}]")]
    BracketFailure { lo: f64, hi: f64 },
    #[error("grid function lives on a different grid than the kernel quadrature")]
    GridMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelOptions {
    pub gauss_order: usize,
    pub grading_depth: usize,
    /// Truncation radius of the exterior integral, measured from the midpoint of Ω.
    /// `None` means `10 |Ω|`.
    pub tail_radius: Option<f64>,
    pub node_budget: usize,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions {
            gauss_order: 4,
            grading_depth: 6,
            tail_radius: None,
            node_budget: 8_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// `Ω × Ω` only.
    Omega,
    /// `ℝ × ℝ` with `u = 0` outside `Ω`.
    FullPlane,
}

/// One quadrature point of the `Ω × Ω` double integral.
#[derive(Debug, Clone, Copy)]
struct PairPoint {
    ix: u32,
    iy: u32,
    tx: f64,
    ty: f64,
    /// Quadrature weight times kernel value.
    w: f64,
    q: f64,
}

/// One quadrature point of the exterior cross term (factor 2 included).
#[derive(Debug, Clone, Copy)]
struct TailPoint {
    ix: u32,
    tx: f64,
    w: f64,
    q: f64,
}

const CHUNK: usize = 4096;
/// Separated cell pairs up to this many cells apart use twice the Gauss order.
const NEAR_FIELD_CELLS: usize = 3;
/// Gauss order on the pieces of a re-integrated pair.
const KINK_ORDER: usize = 8;
/// Singular points closer than this many piece lengths get an adapted rule.
const NEAR_KINK: f64 = 1.0;
/// Deepest geometric grading toward a nearby singular point; closer ones use a
/// cubic substitution.
const KINK_LEVELS: usize = 8;
/// Mantissa bits ignored when matching a nodal vector against the kink cache.
const KINK_KEY_MASK: u64 = (1 << 20) - 1;
/// Grading levels of the exterior term toward a zero of `u` inside a cell.
const TAIL_ZERO_LEVELS: usize = 12;

/// Cached points of the cell pair `{i, j}`, `j > i`, both orientations.
#[derive(Debug, Clone, Copy)]
struct Block {
    i: usize,
    j: usize,
    start: usize,
    len: usize,
}

/// Values of `u` reused across a root search in the scale parameter.
struct LogTerms {
    ln_abs: Vec<f64>,
    q: Vec<f64>,
    w: Vec<f64>,
}

/// Cached kernel quadrature on a grid.
#[derive(Debug, Clone)]
pub struct KernelQuadrature {
    grid: Grid,
    opts: KernelOptions,
    exponent_domain: (f64, f64),
    tail_radius: f64,
    pairs: Vec<PairPoint>,
    blocks: Vec<Block>,
    tails: Vec<TailPoint>,
    /// `tails[tail_start[c]..tail_start[c + 1]]` belong to cell `c`.
    tail_start: Vec<usize>,
    tail_bound: Vec<TailPoint>,
    q: ExponentField,
    s: ExponentField,
    kink_cache: KinkCache,
}

/// Correction points for one nodal vector.
#[derive(Default)]
struct KinkPoints {
    pairs: Vec<PairPoint>,
    tails: Vec<TailPoint>,
}

/// The kink points of the last evaluated nodal vector.
#[derive(Default)]
struct KinkCache(Mutex<Option<(Vec<f64>, Arc<KinkPoints>)>>);

impl Clone for KinkCache {
    fn clone(&self) -> Self {
        KinkCache::default()
    }
}

impl std::fmt::Debug for KinkCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("KinkCache")
    }
}

struct Kernel<'a> {
    q: &'a ExponentField,
    s: &'a ExponentField,
    qdom: (f64, f64),
}

impl Kernel<'_> {
    #[inline]
    fn q(&self, x: f64, y: f64) -> f64 {
        let (lo, hi) = self.qdom;
        self.q.value(x.clamp(lo, hi), y.clamp(lo, hi))
    }

    /// `(kernel value, q)` at `(x, y)`.
    #[inline]
    fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        let q = self.q(x, y);
        let s = self.s.value(x, y);
        ((x - y).abs().powf(-(1.0 + q * s)), q)
    }
}

impl KernelQuadrature {
    /// Build the quadrature with `q` extended by projection onto `Ω̄ × Ω̄`.
    pub fn new(
        grid: Grid,
        q: &ExponentField,
        s: &ExponentField,
        opts: KernelOptions,
    ) -> Result<Self, KernelError> {
        Self::with_exponent_domain(grid, q, s, opts, (grid.a, grid.b))
    }

    /// As [`KernelQuadrature::new`], projecting `q` onto `D × D` for a domain
    /// `D ⊇ Ω` on which `q` is defined (used for problems posed on a subdomain).
    pub fn with_exponent_domain(
        grid: Grid,
        q: &ExponentField,
        s: &ExponentField,
        opts: KernelOptions,
        exponent_domain: (f64, f64),
    ) -> Result<Self, KernelError> {
        let g = opts.gauss_order;
        let m = opts.grading_depth;
        let n = grid.cells;
        let needed = n * n * g * g + 2 * n * (m + 1) * g * g * 3 + 2 * n * NEAR_FIELD_CELLS * 3 * g * g;
        if needed > opts.node_budget {
            return Err(KernelError::GradingOverflow {
                needed,
                budget: opts.node_budget,
            });
        }
        let kernel = Kernel {
            q,
            s,
            qdom: (
                exponent_domain.0.min(grid.a),
                exponent_domain.1.max(grid.b),
            ),
        };
        let tail_radius = opts.tail_radius.unwrap_or(10.0 * grid.len());
        let rule = GaussRule::new(g);

        let rows: Vec<(Vec<PairPoint>, Vec<(usize, usize, usize)>)> = (0..n)
            .into_par_iter()
            .map(|i| pair_row(&grid, &kernel, &rule, m, i))
            .collect();
        let mut pairs = Vec::new();
        let mut blocks = Vec::new();
        for (i, (pts, row_blocks)) in rows.into_iter().enumerate() {
            let base = pairs.len();
            blocks.extend(row_blocks.into_iter().map(|(j, start, len)| Block {
                i,
                j,
                start: base + start,
                len,
            }));
            pairs.extend(pts);
        }

        let (tails, tail_bound) = exterior_points(&grid, &kernel, g, m, tail_radius);
        let mut tail_start = vec![0; n + 1];
        for pt in &tails {
            tail_start[pt.ix as usize + 1] += 1;
        }
        for c in 0..n {
            tail_start[c + 1] += tail_start[c];
        }
        Ok(KernelQuadrature {
            grid,
            opts,
            exponent_domain: kernel.qdom,
            tail_radius,
            pairs,
            blocks,
            tails,
            tail_start,
            tail_bound,
            q: q.clone(),
            s: s.clone(),
            kink_cache: KinkCache::default(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn options(&self) -> &KernelOptions {
        &self.opts
    }

    pub fn tail_radius(&self) -> f64 {
        self.tail_radius
    }

    pub fn exponent_domain(&self) -> (f64, f64) {
        self.exponent_domain
    }

    pub fn node_count(&self) -> usize {
        self.pairs.len() + self.tails.len()
    }

    fn check(&self, u: &GridFunction) -> Result<(), KernelError> {
        if u.grid != self.grid {
            return Err(KernelError::GridMismatch);
        }
        Ok(())
    }

    /// `∬ |u(x) - u(y)|^q |x - y|^{-(1+qs)}` over `region`.
    pub fn modular(&self, u: &GridFunction, region: Region) -> Result<f64, KernelError> {
        self.check(u)?;
        Ok(self.sum(u, region, false, false))
    }

    /// Same as [`modular`](Self::modular) with the roles of `x` and `y` exchanged
    /// in every quadrature point. Agrees with `modular` when `q`, `s` are symmetric.
    pub fn modular_transposed(&self, u: &GridFunction) -> Result<f64, KernelError> {
        self.check(u)?;
        Ok(self.sum(u, Region::Omega, false, true))
    }

    /// Full-plane modular and the truncation error bar of its exterior part.
    pub fn modular_with_tail_bound(&self, u: &GridFunction) -> Result<(f64, f64), KernelError> {
        self.check(u)?;
        let value = self.sum(u, Region::FullPlane, false, false);
        Ok((value, tail_sum(&self.tail_bound, &u.values, false)))
    }

    /// Kinetic energy `∬_{ℝ²} (1/q) |u(x) - u(y)|^q K(x, y)`.
    pub fn kinetic_energy(&self, u: &GridFunction) -> Result<f64, KernelError> {
        self.check(u)?;
        Ok(self.sum(u, Region::FullPlane, true, false))
    }

    /// Truncation error bar of the kinetic energy.
    pub fn kinetic_tail_bound(&self, u: &GridFunction) -> Result<f64, KernelError> {
        self.check(u)?;
        Ok(tail_sum(&self.tail_bound, &u.values, true))
    }

    fn sum(&self, u: &GridFunction, region: Region, divide_by_q: bool, transpose: bool) -> f64 {
        let vals = &u.values;
        let extra = self.kink_points(vals);
        let partials: Vec<f64> = self
            .pairs
            .par_chunks(CHUNK)
            .chain(extra.pairs.par_chunks(CHUNK))
            .map(|chunk| {
                let mut acc = 0.0;
                for pt in chunk {
                    let ux = interp(vals, pt.ix, pt.tx);
                    let uy = interp(vals, pt.iy, pt.ty);
                    let d = if transpose { uy - ux } else { ux - uy };
                    if d == 0.0 {
                        continue;
                    }
                    let mut term = pt.w * d.abs().powf(pt.q);
                    if divide_by_q {
                        term /= pt.q;
                    }
                    acc += term;
                }
                acc
            })
            .collect();
        let mut total = pairwise_sum(&partials);
        if region == Region::FullPlane {
            total += tail_sum(&self.tails, vals, divide_by_q) + tail_sum(&extra.tails, vals, divide_by_q);
        }
        total
    }

    /// Points correcting the cached rule for `u`: on every cell pair where the
    /// zero set of `u(x) - u(y)` meets or nearly meets the pair, negated cached
    /// points plus points adapted to the zero line. Depends on `u` only up to
    /// scaling and sign.
    /// The kink geometry is scale invariant, so the points are built from
    /// `u / max|u|` with the low mantissa bits cleared; rays `t u` share them.
    fn kink_points(&self, vals: &[f64]) -> Arc<KinkPoints> {
        let m = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if m == 0.0 || !m.is_finite() {
            return Arc::default();
        }
        let key: Vec<f64> = vals
            .iter()
            .map(|v| f64::from_bits((v / m).to_bits() & !KINK_KEY_MASK))
            .collect();
        let mut cache = self.kink_cache.0.lock().unwrap_or_else(|e| e.into_inner());
        if let Some((k, pts)) = cache.as_ref() {
            if *k == key {
                return pts.clone();
            }
        }
        let pts = Arc::new(KinkPoints {
            pairs: self.build_kink_points(&key),
            tails: self.build_tail_points(&key),
        });
        *cache = Some((key, pts.clone()));
        pts
    }

    /// Exterior points of every cell where `u` vanishes or nearly vanishes,
    /// negated cached ones first, then a rule graded toward the zero.
    fn build_tail_points(&self, vals: &[f64]) -> Vec<TailPoint> {
        let kernel = Kernel {
            q: &self.q,
            s: &self.s,
            qdom: self.exponent_domain,
        };
        let rule = GaussRule::new(self.opts.gauss_order);
        let (n, levels) = (self.grid.cells, self.opts.grading_depth);
        let h = self.grid.h();
        let parts: Vec<Vec<TailPoint>> = (0..n)
            .into_par_iter()
            .filter_map(|cell| {
                let mark = zero_mark(vals[cell], vals[cell + 1], TAIL_ZERO_LEVELS)?;
                let mut marks = vec![mark];
                if levels > 0 && cell == 0 {
                    marks.push((0.0, levels));
                } else if levels > 0 && cell + 1 == n {
                    marks.push((1.0, levels));
                }
                let cached = &self.tails[self.tail_start[cell]..self.tail_start[cell + 1]];
                let mut out: Vec<TailPoint> = cached.iter().map(|pt| TailPoint { w: -pt.w, ..*pt }).collect();
                let mut bounds = Vec::new();
                for (lo, hi) in graded_pieces(&[], &marks) {
                    for (z, w) in rule.nodes.iter().zip(&rule.weights) {
                        let t = lo + (hi - lo) * z;
                        let node = CellNode {
                            cell,
                            t,
                            x: self.grid.point(cell, t),
                            weight: h * (hi - lo) * w,
                        };
                        exterior_node(&self.grid, &kernel, &node, self.tail_radius, &mut out, &mut bounds);
                    }
                }
                Some(out)
            })
            .collect();
        parts.into_iter().flatten().collect()
    }

    fn build_kink_points(&self, vals: &[f64]) -> Vec<PairPoint> {
        let kernel = Kernel {
            q: &self.q,
            s: &self.s,
            qdom: self.exponent_domain,
        };
        let rule = GaussRule::new(self.opts.gauss_order);
        let fine = GaussRule::new(KINK_ORDER);
        let g = rule.len();
        let parts: Vec<Vec<PairPoint>> = self
            .blocks
            .par_iter()
            .filter_map(|b| {
                let cached = &self.pairs[b.start..b.start + b.len];
                let mut out = Vec::new();
                if b.j == b.i + 1 {
                    let (a, c) = (vals[b.i + 1] - vals[b.i], vals[b.i + 2] - vals[b.i + 1]);
                    // Δu ∝ a + c t on the first triangle, a t + c on the second
                    let first = (c != 0.0).then(|| -a / c).filter(|t| near_unit(*t));
                    let second = (a != 0.0).then(|| -c / a).filter(|t| near_unit(*t));
                    if first.is_none() && second.is_none() {
                        return None;
                    }
                    // cached layout: per radial node, 2g first-triangle points then 2g second
                    for (k, pt) in cached.iter().enumerate() {
                        let in_first = k % (4 * g) < 2 * g;
                        if (in_first && first.is_some()) || (!in_first && second.is_some()) {
                            out.push(PairPoint { w: -pt.w, ..*pt });
                        }
                    }
                    let first = first.map(|t| adapted_nodes(0.0, 1.0, &[t], &fine));
                    let second = second.map(|t| adapted_nodes(0.0, 1.0, &[t], &fine));
                    adjacent_points(
                        &mut out,
                        &self.grid,
                        &kernel,
                        &rule,
                        self.opts.grading_depth,
                        b.i,
                        first.as_deref(),
                        second.as_deref(),
                    );
                } else {
                    if !separated_near_zero(vals, b.i, b.j) {
                        return None;
                    }
                    out.extend(cached.iter().map(|pt| PairPoint { w: -pt.w, ..*pt }));
                    kink_separated(&mut out, &self.grid, &kernel, vals, b.i, b.j, &fine);
                }
                Some(out)
            })
            .collect();
        parts.into_iter().flatten().collect()
    }

    /// Gradient of [`kinetic_energy`](Self::kinetic_energy) with respect to the
    /// nodal values: entry `i` is `∬ |Δu|^{q-2} Δu Δφ_i K` over `ℝ²`.
    /// Returned for all nodes (boundary entries included).
    pub fn kinetic_gradient(&self, u: &GridFunction) -> Result<Vec<f64>, KernelError> {
        self.check(u)?;
        let vals = &u.values;
        let nn = vals.len();
        let extra = self.kink_points(vals);
        let partials: Vec<Vec<f64>> = self
            .pairs
            .par_chunks(CHUNK)
            .chain(extra.pairs.par_chunks(CHUNK))
            .map(|chunk| {
                let mut g = vec![0.0; nn];
                for pt in chunk {
                    let ux = interp(vals, pt.ix, pt.tx);
                    let uy = interp(vals, pt.iy, pt.ty);
                    let d = ux - uy;
                    if d == 0.0 {
                        continue;
                    }
                    let c = pt.w * d.signum() * d.abs().powf(pt.q - 1.0);
                    let (ix, iy) = (pt.ix as usize, pt.iy as usize);
                    g[ix] += c * (1.0 - pt.tx);
                    g[ix + 1] += c * pt.tx;
                    g[iy] -= c * (1.0 - pt.ty);
                    g[iy + 1] -= c * pt.ty;
                }
                g
            })
            .collect();
        let mut grad = reduce_vectors(partials, nn);
        for pt in self.tails.iter().chain(&extra.tails) {
            let ux = interp(vals, pt.ix, pt.tx);
            if ux == 0.0 {
                continue;
            }
            let c = pt.w * ux.signum() * ux.abs().powf(pt.q - 1.0);
            let ix = pt.ix as usize;
            grad[ix] += c * (1.0 - pt.tx);
            grad[ix + 1] += c * pt.tx;
        }
        Ok(grad)
    }

    /// Gagliardo seminorm over `region`: `0` for a zero modular, else the unique
    /// scale `μ` with `modular(u / μ) = 1`, found by a bracketed search in `ln μ`.
    pub fn seminorm(&self, u: &GridFunction, region: Region) -> Result<f64, KernelError> {
        self.seminorm_with_tol(u, region, 1e-10)
    }

    pub fn seminorm_with_tol(
        &self,
        u: &GridFunction,
        region: Region,
        rel_tol: f64,
    ) -> Result<f64, KernelError> {
        self.check(u)?;
        let terms = self.log_terms(u, region);
        if terms.w.is_empty() {
            return Ok(0.0);
        }
        let modular_at = |ln_mu: f64| -> f64 {
            let parts: Vec<f64> = terms
                .ln_abs
                .par_chunks(CHUNK)
                .zip(terms.q.par_chunks(CHUNK))
                .zip(terms.w.par_chunks(CHUNK))
                .map(|((l, q), w)| {
                    l.iter()
                        .zip(q)
                        .zip(w)
                        .map(|((l, q), w)| w * (q * (l - ln_mu)).exp())
                        .sum::<f64>()
                })
                .collect();
            pairwise_sum(&parts)
        };
        let emin = terms.q.iter().cloned().fold(f64::INFINITY, f64::min);
        let emax = terms.q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        unit_level_root(modular_at, (emin, emax), rel_tol)
    }

    fn log_terms(&self, u: &GridFunction, region: Region) -> LogTerms {
        let vals = &u.values;
        let mut t = LogTerms {
            ln_abs: Vec::new(),
            q: Vec::new(),
            w: Vec::new(),
        };
        let extra = self.kink_points(vals);
        for pt in self.pairs.iter().chain(&extra.pairs) {
            let d = interp(vals, pt.ix, pt.tx) - interp(vals, pt.iy, pt.ty);
            if d != 0.0 {
                t.ln_abs.push(d.abs().ln());
                t.q.push(pt.q);
                t.w.push(pt.w);
            }
        }
        if region == Region::FullPlane {
            for pt in self.tails.iter().chain(&extra.tails) {
                let ux = interp(vals, pt.ix, pt.tx);
                if ux != 0.0 {
                    t.ln_abs.push(ux.abs().ln());
                    t.q.push(pt.q);
                    t.w.push(pt.w);
                }
            }
        }
        t
    }

    /// Kinetic energy of `t·u` for every `t` in `ts`, in one pass over the points.
    pub fn kinetic_energy_profile(&self, u: &GridFunction, ts: &[f64]) -> Result<Vec<f64>, KernelError> {
        self.check(u)?;
        let terms = self.log_terms(u, Region::FullPlane);
        let ln_t: Vec<f64> = ts.iter().map(|t| t.abs().ln()).collect();
        let parts: Vec<Vec<f64>> = terms
            .ln_abs
            .par_chunks(CHUNK)
            .zip(terms.q.par_chunks(CHUNK))
            .zip(terms.w.par_chunks(CHUNK))
            .map(|((l, q), w)| {
                let mut acc = vec![0.0; ts.len()];
                for ((l, q), w) in l.iter().zip(q).zip(w) {
                    let wq = w / q;
                    for (a, lt) in acc.iter_mut().zip(&ln_t) {
                        *a += wq * (q * (l + lt)).exp();
                    }
                }
                acc
            })
            .collect();
        let mut out = reduce_vectors(parts, ts.len());
        for (o, t) in out.iter_mut().zip(ts) {
            if *t == 0.0 {
                *o = 0.0;
            }
        }
        Ok(out)
    }

    /// Hessian of [`kinetic_energy`](Self::kinetic_energy) on the interior nodes,
    /// dense row-major: `∬ (q-1) |Δu|^{q-2} Δφ_i Δφ_j K`. `|Δu|` is floored at
    /// `floor` where the exact second derivative is unbounded.
    pub fn kinetic_hessian(&self, u: &GridFunction, floor: f64) -> Result<Vec<f64>, KernelError> {
        self.check(u)?;
        let vals = &u.values;
        let n = self.grid.interior_count();
        let nn = vals.len();
        let weight = |d: f64, q: f64| (q - 1.0) * d.abs().max(floor).powf(q - 2.0);
        let mut full = vec![0.0; nn * nn];
        let extra = self.kink_points(vals);
        for pt in self.pairs.iter().chain(&extra.pairs) {
            let d = interp(vals, pt.ix, pt.tx) - interp(vals, pt.iy, pt.ty);
            let c = pt.w * weight(d, pt.q);
            let (ix, iy) = (pt.ix as usize, pt.iy as usize);
            let idx = [ix, ix + 1, iy, iy + 1];
            let coef = [1.0 - pt.tx, pt.tx, -(1.0 - pt.ty), -pt.ty];
            for a in 0..4 {
                for b in 0..4 {
                    full[idx[a] * nn + idx[b]] += c * coef[a] * coef[b];
                }
            }
        }
        for pt in self.tails.iter().chain(&extra.tails) {
            let ux = interp(vals, pt.ix, pt.tx);
            let c = pt.w * weight(ux, pt.q);
            let ix = pt.ix as usize;
            let idx = [ix, ix + 1];
            let coef = [1.0 - pt.tx, pt.tx];
            for a in 0..2 {
                for b in 0..2 {
                    full[idx[a] * nn + idx[b]] += c * coef[a] * coef[b];
                }
            }
        }
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = full[(i + 1) * nn + (j + 1)];
            }
        }
        Ok(out)
    }
}

#[inline]
fn interp(vals: &[f64], cell: u32, t: f64) -> f64 {
    let c = cell as usize;
    vals[c] + t * (vals[c + 1] - vals[c])
}

fn tail_sum(points: &[TailPoint], vals: &[f64], divide_by_q: bool) -> f64 {
    let terms: Vec<f64> = points
        .iter()
        .map(|pt| {
            let ux = interp(vals, pt.ix, pt.tx);
            if ux == 0.0 {
                return 0.0;
            }
            let t = pt.w * ux.abs().powf(pt.q);
            if divide_by_q {
                t / pt.q
            } else {
                t
            }
        })
        .collect();
    pairwise_sum(&terms)
}

fn reduce_vectors(parts: Vec<Vec<f64>>, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for p in parts {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out
}

/// Find `μ` with `f(ln μ) = 1` for a decreasing modular-type `f`.
///
/// `exponents` is the range of exponents appearing in `f`; together with
/// `f(0)` it gives the bracket `ln μ ∈ [ln f(0)/e⁺, ln f(0)/e⁻]` (or reversed),
/// which is widened geometrically if round-off defeats it. Inside the bracket
/// the Illinois variant of regula falsi runs on `ln f`, which is affine in
/// `ln μ` for constant exponents; every third step is a bisection.
pub(crate) fn unit_level_root(
    f: impl Fn(f64) -> f64,
    exponents: (f64, f64),
    rel_tol: f64,
) -> Result<f64, KernelError> {
    let g = |x: f64| f(x).ln();
    let g0 = g(0.0);
    if g0 == 0.0 {
        return Ok(1.0);
    }
    let (emin, emax) = exponents;
    let (a, b) = (g0 / emax, g0 / emin);
    let pad = 1e-9 * (1.0 + a.abs().max(b.abs()));
    let (mut lo, mut hi) = (a.min(b) - pad, a.max(b) + pad);
    let (mut glo, mut ghi) = (g(lo), g(hi));
    let limit = 700.0;
    let mut step = 1.0;
    while !(glo > 0.0) {
        lo -= step;
        step *= 2.0;
        glo = g(lo);
        if lo < -limit {
            return Err(KernelError::BracketFailure { lo: lo.exp(), hi: hi.exp() });
        }
    }
    step = 1.0;
    while !(ghi < 0.0) {
        hi += step;
        step *= 2.0;
        ghi = g(hi);
        if hi > limit {
            return Err(KernelError::BracketFailure { lo: lo.exp(), hi: hi.exp() });
        }
    }
    let tol = rel_tol.ln_1p();
    let mut side = 0i8;
    for iter in 0..300 {
        if hi - lo <= tol {
            break;
        }
        let mut x = if iter % 3 == 2 || !glo.is_finite() || !ghi.is_finite() {
            0.5 * (lo + hi)
        } else {
            lo - glo * (hi - lo) / (ghi - glo)
        };
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        let gx = g(x);
        if gx == 0.0 || gx.abs() < 1e-15 {
            return Ok(x.exp());
        }
        if gx > 0.0 {
            lo = x;
            glo = gx;
            if side == 1 {
                ghi *= 0.5;
            }
            side = 1;
        } else {
            hi = x;
            ghi = gx;
            if side == -1 {
                glo *= 0.5;
            }
            side = -1;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Point at local coordinate of a known cell, avoiding re-location round-off.
fn push_pair_local(
    out: &mut Vec<PairPoint>,
    grid: &Grid,
    kernel: &Kernel,
    (ix, tx): (usize, f64),
    (iy, ty): (usize, f64),
    w: f64,
) {
    let x = grid.point(ix, tx);
    let y = grid.point(iy, ty);
    let (k, q) = kernel.eval(x, y);
    out.push(PairPoint {
        ix: ix as u32,
        iy: iy as u32,
        tx,
        ty,
        w: w * k,
        q,
    });
}

/// All points whose first cell is `i` and second cell `j ≥ i`, plus mirrors,
/// and `(j, start, len)` for every pair with `j > i`.
fn pair_row(
    grid: &Grid,
    kernel: &Kernel,
    rule: &GaussRule,
    levels: usize,
    i: usize,
) -> (Vec<PairPoint>, Vec<(usize, usize, usize)>) {
    let n = grid.cells;
    let h = grid.h();
    let mut out = Vec::new();
    let mut blocks = Vec::new();

    // diagonal cell: y = x - d, d ∈ (0, h), x ∈ (x_i + d, x_{i+1})
    for (dlo, dhi) in graded_intervals(h, levels) {
        for (zd, wd) in rule.nodes.iter().zip(&rule.weights) {
            let d = dlo + (dhi - dlo) * zd;
            let span = h - d;
            for (zx, wx) in rule.nodes.iter().zip(&rule.weights) {
                let tx = (d + span * zx) / h;
                let ty = tx - d / h;
                let w = (dhi - dlo) * wd * span * wx;
                push_pair_local(&mut out, grid, kernel, (i, tx), (i, ty), w);
                push_pair_local(&mut out, grid, kernel, (i, ty), (i, tx), w);
            }
        }
    }

    if i + 1 < n {
        let start = out.len();
        let plain = adapted_nodes(0.0, 1.0, &[], rule);
        adjacent_points(&mut out, grid, kernel, rule, levels, i, Some(&plain), Some(&plain));
        blocks.push((i + 1, start, out.len() - start));
    }

    // well-separated cells; the first few neighbours get a doubled order
    let near = GaussRule::new(2 * rule.len());
    for j in i + 2..n {
        let start = out.len();
        let r = if j - i <= NEAR_FIELD_CELLS { &near } else { rule };
        for (zx, wx) in r.nodes.iter().zip(&r.weights) {
            for (zy, wy) in r.nodes.iter().zip(&r.weights) {
                let w = h * h * wx * wy;
                push_pair_local(&mut out, grid, kernel, (i, *zx), (j, *zy), w);
                push_pair_local(&mut out, grid, kernel, (j, *zy), (i, *zx), w);
            }
        }
        blocks.push((j, start, out.len() - start));
    }
    (out, blocks)
}

/// Adjacent cells `i`, `i + 1` around the vertex `c = x_{i+1}`: `x = c - ξ`,
/// `y = c + η`, graded in `r = max(ξ, η)`, with the given rules for the ratio
/// `t = min/max` on the triangles `η ≤ ξ` and `ξ ≤ η` (`None` skips a triangle).
#[allow(clippy::too_many_arguments)]
fn adjacent_points(
    out: &mut Vec<PairPoint>,
    grid: &Grid,
    kernel: &Kernel,
    rule: &GaussRule,
    levels: usize,
    i: usize,
    first: Option<&[(f64, f64)]>,
    second: Option<&[(f64, f64)]>,
) {
    let h = grid.h();
    let mut add = |a: (usize, f64), b: (usize, f64), w: f64| {
        push_pair_local(out, grid, kernel, a, b, w);
        push_pair_local(out, grid, kernel, b, a, w);
    };
    for (rlo, rhi) in graded_intervals(h, levels) {
        for (zr, wr) in rule.nodes.iter().zip(&rule.weights) {
            let r = rlo + (rhi - rlo) * zr;
            let base = (rhi - rlo) * wr * r;
            for (t, wt) in first.unwrap_or_default() {
                add((i, 1.0 - r / h), (i + 1, r * t / h), base * wt);
            }
            for (t, wt) in second.unwrap_or_default() {
                add((i, 1.0 - r * t / h), (i + 1, r / h), base * wt);
            }
        }
    }
}

/// Whether a singular point `t` of an integrand on `[0, 1]` is inside or
/// within one length of the interval.
fn near_unit(t: f64) -> bool {
    t > -NEAR_KINK && t < 1.0 + NEAR_KINK
}

/// Whether the zero line of `u(x) - u(y)` on separated cells `i < j` meets the
/// square or passes within one cell of it (in the steeper variable).
fn separated_near_zero(vals: &[f64], i: usize, j: usize) -> bool {
    let corners = [
        vals[i] - vals[j],
        vals[i] - vals[j + 1],
        vals[i + 1] - vals[j],
        vals[i + 1] - vals[j + 1],
    ];
    if corners.iter().any(|c| *c < 0.0) && corners.iter().any(|c| *c > 0.0) {
        return true;
    }
    let slope = (vals[i + 1] - vals[i]).abs().max((vals[j + 1] - vals[j]).abs());
    let gap = corners.iter().fold(f64::INFINITY, |m, c| m.min(c.abs()));
    gap < NEAR_KINK * slope
}

/// Gauss nodes on `[lo, hi]` for an integrand singular at the points `sing`:
/// split at interior ones, then each piece is graded toward a singular end
/// (`x = z + (e - z) v³`) or geometrically toward a singular point just outside.
fn adapted_nodes(lo: f64, hi: f64, sing: &[f64], rule: &GaussRule) -> Vec<(f64, f64)> {
    let mut cuts = vec![lo, hi];
    cuts.extend(sing.iter().copied().filter(|z| *z > lo && *z < hi));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let left = sing.iter().filter(|z| **z <= a).fold(f64::INFINITY, |m, z| m.min(a - z));
        let right = sing.iter().filter(|z| **z >= b).fold(f64::INFINITY, |m, z| m.min(z - b));
        let near = |d: f64| d < NEAR_KINK * (b - a);
        match (near(left), near(right)) {
            (false, false) => plain_nodes(&mut out, a, b, rule),
            (true, false) => graded_toward(&mut out, a, b, left, rule),
            (false, true) => graded_toward(&mut out, b, a, right, rule),
            (true, true) => {
                let mid = 0.5 * (a + b);
                graded_toward(&mut out, a, mid, left, rule);
                graded_toward(&mut out, b, mid, right, rule);
            }
        }
    }
    out
}

fn plain_nodes(out: &mut Vec<(f64, f64)>, a: f64, b: f64, rule: &GaussRule) {
    out.extend(
        rule.nodes
            .iter()
            .zip(&rule.weights)
            .map(|(v, w)| (a + (b - a) * v, (b - a) * w)),
    );
}

/// Nodes on the segment from `z` to `e` for a singularity at distance `dist`
/// beyond `z`: cubic substitution when it is very close, else geometric pieces
/// no longer than their distance to it.
fn graded_toward(out: &mut Vec<(f64, f64)>, z: f64, e: f64, dist: f64, rule: &GaussRule) {
    let len = (e - z).abs();
    let dir = (e - z).signum();
    let levels = (len / dist).log2().ceil();
    if !(levels <= KINK_LEVELS as f64) {
        out.extend(
            rule.nodes
                .iter()
                .zip(&rule.weights)
                .map(|(v, w)| (z + (e - z) * v * v * v, len * 3.0 * v * v * w)),
        );
        return;
    }
    for (a, b) in graded_intervals(len, levels.max(0.0) as usize) {
        let (p, q) = (z + dir * a, z + dir * b);
        plain_nodes(out, p.min(q), p.max(q), rule);
    }
}

/// Separated cells `i < j`: `u(x) - u(y) = C + a t_x - b t_y` is affine, so the
/// inner integral (in the variable with the larger slope) is adapted to its zero
/// and the outer one to where the zero line crosses the inner edges.
fn kink_separated(
    out: &mut Vec<PairPoint>,
    grid: &Grid,
    kernel: &Kernel,
    vals: &[f64],
    i: usize,
    j: usize,
    rule: &GaussRule,
) {
    let h = grid.h();
    let c = vals[i] - vals[j];
    let (a, b) = (vals[i + 1] - vals[i], vals[j + 1] - vals[j]);
    let inner_is_x = a.abs() >= b.abs();
    let (c_in, c_out) = if inner_is_x { (a, -b) } else { (-b, a) };
    let zero_at = |r: f64| -(c + c_out * r) / c_in;
    // where the zero line crosses t = 0 and t = 1 of the inner variable
    let exits: Vec<f64> = if c_out != 0.0 {
        vec![-c / c_out, -(c + c_in) / c_out]
    } else {
        Vec::new()
    };
    for (r, wr) in adapted_nodes(0.0, 1.0, &exits, rule) {
        for (t, wt) in adapted_nodes(0.0, 1.0, &[zero_at(r)], rule) {
            let (tx, ty) = if inner_is_x { (t, r) } else { (r, t) };
            let wgt = h * h * wr * wt;
            push_pair_local(out, grid, kernel, (i, tx), (j, ty), wgt);
            push_pair_local(out, grid, kernel, (j, ty), (i, tx), wgt);
        }
    }
}

/// Exterior cross-term points and the truncation remainder points.
fn exterior_points(
    grid: &Grid,
    kernel: &Kernel,
    order: usize,
    levels: usize,
    radius: f64,
) -> (Vec<TailPoint>, Vec<TailPoint>) {
    let mut tails = Vec::new();
    let mut bounds = Vec::new();
    for node in &cell_nodes(grid, order, levels) {
        exterior_node(grid, kernel, node, radius, &mut tails, &mut bounds);
    }
    (tails, bounds)
}

/// Exterior points of one `x` node on both sides of `Ω`.
fn exterior_node(
    grid: &Grid,
    kernel: &Kernel,
    node: &CellNode,
    radius: f64,
    tails: &mut Vec<TailPoint>,
    bounds: &mut Vec<TailPoint>,
) {
    let mid = grid.midpoint();
    let (left_end, right_end) = (mid - radius, mid + radius);
    let (qlo, qhi) = kernel.qdom;
    let fine = GaussRule::new(8);
    let x = node.x;
    let base = 2.0 * node.weight;
    let push = |out: &mut Vec<TailPoint>, w: f64, q: f64| {
        out.push(TailPoint {
            ix: node.cell as u32,
            tx: node.t,
            w,
            q,
        })
    };
    // sides: (distance to Ω boundary, distance to truncation, distance to end of q-domain, sign)
    let sides = [
        (x - grid.a, x - left_end, x - qlo.min(grid.a), -1.0),
        (grid.b - x, right_end - x, qhi.max(grid.b) - x, 1.0),
    ];
    for (d0, d_end, d_q, dir) in sides {
        if d0 <= 0.0 {
            continue;
        }
        let y_of = |d: f64| x + dir * d;
        let d_q = d_q.min(d_end);
        // region where q varies with y: d ∈ [d0, d_q)
        if d_q > d0 {
            for (lo, hi) in log_panels(d0, d_q) {
                for (z, wz) in fine.nodes.iter().zip(&fine.weights) {
                    let tau = lo + (hi - lo) * z;
                    let d = tau.exp();
                    let (k, q) = kernel.eval(x, y_of(d));
                    push(tails, base * (hi - lo) * wz * d * k, q);
                }
            }
        }
        // region where the projected q is constant: d ∈ [max(d0, d_q), d_end]
        let start = d0.max(d_q);
        if d_end > start {
            let q_const = kernel.q(x, y_of(start));
            let mut acc = 0.0;
            for (lo, hi) in log_panels(start, d_end) {
                for (z, wz) in fine.nodes.iter().zip(&fine.weights) {
                    let tau = lo + (hi - lo) * z;
                    let d = tau.exp();
                    let s = kernel.s.value(x, y_of(d));
                    acc += (hi - lo) * wz * d.powf(-q_const * s);
                }
            }
            push(tails, base * acc, q_const);
        }
        // remainder beyond the truncation radius
        let y_end = y_of(d_end);
        let gamma = kernel.q(x, y_end) * kernel.s.value(x, y_end);
        push(bounds, base * d_end.powf(-gamma) / gamma, kernel.q(x, y_end));
    }
}

/// Panels of width ≤ 0.5 in `ln d` covering `[ln lo, ln hi]`.
fn log_panels(lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let (a, b) = (lo.ln(), hi.ln());
    let count = ((b - a) / 0.5).ceil().max(1.0) as usize;
    let step = (b - a) / count as f64;
    (0..count)
        .map(|i| (a + step * i as f64, if i + 1 == count { b } else { a + step * (i + 1) as f64 }))
        .collect()
}
