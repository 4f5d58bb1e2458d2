//! The energy functional `I_λ`, its gradient, and the mountain-pass geometry
//! constants.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, EmbeddingConfig, ProblemConfig};
use crate::fields::{ExponentField, FieldError, Potential};
use crate::grid::{hat, Grid, GridError, GridFunction};
use crate::kernel::{KernelError, KernelOptions, KernelQuadrature, Region};
use crate::quadrature::{adaptive_pieces, graded_intervals, graded_pieces, pairwise_sum, zero_mark, GaussRule};
use crate::spaces::{estimate_embedding_constants, SpaceError};

/// Below this magnitude the non-Lipschitz source `|u|^{k-2} u` is evaluated as 0.
pub const NONSMOOTH_THRESHOLD: f64 = 1e-14;
const MAX_ESCAPE_DOUBLINGS: u32 = 20;
/// Grading levels toward a zero of `u` inside a cell.
const ZERO_GRADING: usize = 12;
/// Bisection tolerance and depth for cells where a field has a kink.
const FIELD_TOL: f64 = 1e-13;
const FIELD_DEPTH: usize = 30;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("parameters are outside the admissible range: {0}")]
    InadmissibleParameters(String),
    #[error("no negative energy along the ray up to scale 2^{max_doublings}")]
    EscapeFailure { max_doublings: u32 },
    #[error("potential has no zero set, so the limit domain is undefined")]
    NoLimitDomain,
    #[error("grid function does not vanish on a set of positive measure: {0}")]
    DegenerateDirection(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub potential: f64,
    pub source_p: f64,
    pub source_k: f64,
    pub total: f64,
    /// Truncation error bar of the exterior part of `kinetic` (not included in it).
    pub kinetic_tail_bound: f64,
}

impl EnergyBreakdown {
    pub fn recompute_total(&self) -> f64 {
        self.kinetic + self.potential - self.source_p - self.source_k
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradient {
    /// One entry per interior node.
    pub values: Vec<f64>,
    /// Some quadrature node had `|u| < 1e-14` with `k < 2` there.
    pub nonsmooth_source: bool,
}

impl Gradient {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// A one-dimensional quadrature node with the field values there.
#[derive(Debug, Clone, Copy)]
struct LocalPoint {
    cell: usize,
    t: f64,
    weight: f64,
    p: f64,
    k: f64,
    v: f64,
}

/// Cached local quadrature. Cells where the fields are not smooth are bisected
/// adaptively; cells where `u` vanishes are rebuilt per evaluation.
#[derive(Debug, Clone)]
struct NodeData {
    points: Vec<LocalPoint>,
    /// `points[start[c]..start[c + 1]]` lie in cell `c`.
    start: Vec<usize>,
    /// Piece end points per cell.
    cuts: Vec<Vec<f64>>,
    order: usize,
}
/// A discretized problem instance: fields, parameters, grid and cached quadratures.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Grid,
    pub p: ExponentField,
    pub q: ExponentField,
    pub s: ExponentField,
    pub k: ExponentField,
    /// Potential on the original domain, with its zero set.
    pub potential: Potential,
    /// `false` for the limit problem, where the potential term is dropped.
    pub with_potential: bool,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub embedding: EmbeddingConfig,
    pub kernel: Arc<KernelQuadrature>,
    nodes: NodeData,
    /// Embedding constants depend only on the grid and exponents, so parameter
    /// variants share them.
    embedding_cache: Arc<OnceLock<(f64, f64)>>,
}

impl NodeData {
    fn build(
        grid: &Grid,
        p: &ExponentField,
        k: &ExponentField,
        potential: &Potential,
        with_potential: bool,
        order: usize,
        boundary_levels: usize,
    ) -> Self {
        let rule = GaussRule::new(order);
        let fields = |x: f64| {
            let v = if with_potential { potential.at(x) } else { 0.0 };
            [p.at(x), k.at(x), v]
        };
        let mut out = NodeData {
            points: Vec::with_capacity(grid.cells * order),
            start: vec![0],
            cuts: Vec::with_capacity(grid.cells),
            order,
        };
        for cell in 0..grid.cells {
            let edge = boundary_levels > 0 && (cell == 0 || cell + 1 == grid.cells);
            let base: Vec<(f64, f64)> = match (edge, cell == 0) {
                (false, _) => vec![(0.0, 1.0)],
                (true, true) => graded_intervals(1.0, boundary_levels),
                (true, false) => graded_intervals(1.0, boundary_levels)
                    .into_iter()
                    .map(|(a, b)| (1.0 - b, 1.0 - a))
                    .collect(),
            };
            let at = |t: f64| fields(grid.point(cell, t));
            let mut scale = [f64::MIN_POSITIVE; 3];
            for i in 0..=8 {
                for (s, v) in scale.iter_mut().zip(at(i as f64 / 8.0)) {
                    *s = s.max(v.abs());
                }
            }
            let mut pieces: Vec<(f64, f64)> = base
                .into_iter()
                .flat_map(|(a, b)| adaptive_pieces(a, b, &rule, &at, scale, FIELD_TOL, FIELD_DEPTH))
                .collect();
            pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
            out.push_pieces(grid, cell, &pieces, &rule, &fields);
            let mut cuts: Vec<f64> = pieces.iter().flat_map(|&(a, b)| [a, b]).collect();
            cuts.dedup();
            out.cuts.push(cuts);
            out.start.push(out.points.len());
        }
        out
    }

    fn push_pieces(
        &mut self,
        grid: &Grid,
        cell: usize,
        pieces: &[(f64, f64)],
        rule: &GaussRule,
        fields: &impl Fn(f64) -> [f64; 3],
    ) {
        for &(a, b) in pieces {
            for (z, w) in rule.nodes.iter().zip(&rule.weights) {
                let t = a + (b - a) * z;
                let [p, k, v] = fields(grid.point(cell, t));
                self.points.push(LocalPoint {
                    cell,
                    t,
                    weight: grid.h() * (b - a) * w,
                    p,
                    k,
                    v,
                });
            }
        }
    }
}

impl Problem {
    /// Local quadrature nodes for `u`: the cached ones, except in cells where
    /// `u` vanishes, which are cut there and graded toward the zero.
    fn local_points(&self, u: &GridFunction) -> Vec<LocalPoint> {
        let nd = &self.nodes;
        let rule = OnceLock::new();
        let fields = |x: f64| {
            let v = if self.with_potential { self.potential.at(x) } else { 0.0 };
            [self.p.at(x), self.k.at(x), v]
        };
        let mut out = NodeData {
            points: Vec::with_capacity(nd.points.len()),
            start: Vec::new(),
            cuts: Vec::new(),
            order: nd.order,
        };
        for cell in 0..self.grid.cells {
            match zero_mark(u.values[cell], u.values[cell + 1], ZERO_GRADING) {
                None => out.points.extend_from_slice(&nd.points[nd.start[cell]..nd.start[cell + 1]]),
                Some(mark) => {
                    let pieces = graded_pieces(&nd.cuts[cell], &[mark]);
                    let rule = rule.get_or_init(|| GaussRule::new(nd.order));
                    out.push_pieces(&self.grid, cell, &pieces, rule, &fields);
                }
            }
        }
        out.points
    }

    pub fn from_config(cfg: &ProblemConfig) -> Result<Self, EnergyError> {
        cfg.validate()?;
        let f = cfg.fields()?;
        let potential = Potential::new(f.v, cfg.zeta_tol, cfg.scan_resolution)?;
        let grid = Grid::new(cfg.omega[0], cfg.omega[1], cfg.grid)?;
        Self::assemble(
            grid,
            f.p,
            f.q,
            f.s,
            f.k,
            potential,
            true,
            (cfg.alpha, cfg.beta, cfg.lambda),
            cfg.embedding.clone(),
            cfg.quadrature.kernel_options(),
            cfg.domain(),
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        grid: Grid,
        p: ExponentField,
        q: ExponentField,
        s: ExponentField,
        k: ExponentField,
        potential: Potential,
        with_potential: bool,
        (alpha, beta, lambda): (f64, f64, f64),
        embedding: EmbeddingConfig,
        opts: KernelOptions,
        exponent_domain: (f64, f64),
    ) -> Result<Self, EnergyError> {
        let kernel = Arc::new(KernelQuadrature::with_exponent_domain(grid, &q, &s, opts, exponent_domain)?);
        let nodes = NodeData::build(&grid, &p, &k, &potential, with_potential, opts.gauss_order, opts.grading_depth);
        Ok(Problem {
            grid,
            p,
            q,
            s,
            k,
            potential,
            with_potential,
            alpha,
            beta,
            lambda,
            embedding,
            kernel,
            nodes,
            embedding_cache: Arc::new(OnceLock::new()),
        })
    }

    /// The same problem with different `(α, β, λ)`, reusing every cached quadrature.
    pub fn with_parameters(&self, alpha: f64, beta: f64, lambda: f64) -> Self {
        let mut out = self.clone();
        out.alpha = alpha;
        out.beta = beta;
        out.lambda = lambda;
        out
    }

    /// The limit problem on `Ω₀`: same exponents, no potential term, zero exterior
    /// condition outside `Ω₀`. `q` keeps its projection onto the original domain.
    pub fn limit_problem(&self) -> Result<Self, EnergyError> {
        let (a0, b0) = self.potential.omega0.ok_or(EnergyError::NoLimitDomain)?;
        let grid = Grid::new(a0, b0, self.grid.cells)?;
        Self::assemble(
            grid,
            self.p.clone(),
            self.q.clone(),
            self.s.clone(),
            self.k.clone(),
            self.potential.clone(),
            false,
            (self.alpha, self.beta, self.lambda),
            self.embedding.clone(),
            *self.kernel.options(),
            self.kernel.exponent_domain(),
        )
    }

    pub fn zeros(&self) -> GridFunction {
        GridFunction::zeros(self.grid)
    }

    pub fn energy(&self, u: &GridFunction) -> Result<EnergyBreakdown, EnergyError> {
        let kinetic = self.kernel.kinetic_energy(u)?;
        let kinetic_tail_bound = self.kernel.kinetic_tail_bound(u)?;
        let (potential, source_p, source_k) = self.local_terms(u);
        let total = kinetic + potential - source_p - source_k;
        Ok(EnergyBreakdown {
            kinetic,
            potential,
            source_p,
            source_k,
            total,
            kinetic_tail_bound,
        })
    }

    /// `(λ/2)∫V u², ∫(α/p)|u|^p, ∫(β/k)|u|^k`.
    fn local_terms(&self, u: &GridFunction) -> (f64, f64, f64) {
        let pts = self.local_points(u);
        let mut pot = Vec::with_capacity(pts.len());
        let mut sp = Vec::with_capacity(pts.len());
        let mut sk = Vec::with_capacity(pts.len());
        for pt in &pts {
            let w = pt.weight;
            let val = u.at(pt.cell, pt.t);
            let a = val.abs();
            pot.push(w * pt.v * val * val);
            if a == 0.0 {
                sp.push(0.0);
                sk.push(0.0);
            } else {
                sp.push(w * a.powf(pt.p) / pt.p);
                sk.push(w * a.powf(pt.k) / pt.k);
            }
        }
        (
            0.5 * self.lambda * pairwise_sum(&pot),
            self.alpha * pairwise_sum(&sp),
            self.beta * pairwise_sum(&sk),
        )
    }

    /// `∫ V u²` (the potential mass, without the `λ/2` factor).
    pub fn potential_mass(&self, u: &GridFunction) -> f64 {
        if self.lambda == 0.0 {
            return 0.0;
        }
        2.0 * self.local_terms(u).0 / self.lambda
    }

    /// Full nodal vector of `∫ (λ V u − α|u|^{p-2}u − β|u|^{k-2}u) φ_i` and the nonsmooth flag.
    fn local_gradient(&self, u: &GridFunction) -> (Vec<f64>, bool) {
        let mut g = vec![0.0; self.grid.node_count()];
        let mut nonsmooth = false;
        for pt in self.local_points(u) {
            let (c, t, w) = (pt.cell, pt.t, pt.weight);
            let val = u.at(c, t);
            let a = val.abs();
            let mut f = self.lambda * pt.v * val;
            if a < NONSMOOTH_THRESHOLD {
                if pt.k < 2.0 {
                    nonsmooth = true;
                }
            } else {
                let sign = val.signum();
                f -= sign * (self.alpha * a.powf(pt.p - 1.0) + self.beta * a.powf(pt.k - 1.0));
            }
            g[c] += w * f * (1.0 - t);
            g[c + 1] += w * f * t;
        }
        (g, nonsmooth)
    }

    /// `⟨L₁(u), φ_i⟩` for every interior hat `φ_i`.
    pub fn weak_form(&self, u: &GridFunction) -> Result<Vec<f64>, EnergyError> {
        let mut g = self.kernel.kinetic_gradient(u)?;
        for pt in self.local_points(u) {
            let (c, t) = (pt.cell, pt.t);
            let f = pt.weight * self.lambda * pt.v * u.at(c, t);
            g[c] += f * (1.0 - t);
            g[c + 1] += f * t;
        }
        Ok(g[1..self.grid.cells].to_vec())
    }

    /// `⟨I'_λ(u), φ_i⟩` for every interior hat `φ_i`.
    pub fn gradient(&self, u: &GridFunction) -> Result<Gradient, EnergyError> {
        let mut g = self.kernel.kinetic_gradient(u)?;
        let (local, nonsmooth) = self.local_gradient(u);
        for (a, b) in g.iter_mut().zip(&local) {
            *a += b;
        }
        Ok(Gradient {
            values: g[1..self.grid.cells].to_vec(),
            nonsmooth_source: nonsmooth,
        })
    }

    /// Hessian of the discrete energy on the interior nodes (dense, row-major).
    /// Differences and values below `floor` are floored where the exact second
    /// derivative is unbounded.
    pub fn hessian(&self, u: &GridFunction, floor: f64) -> Result<Vec<f64>, EnergyError> {
        let mut h = self.kernel.kinetic_hessian(u, floor)?;
        let n = self.grid.interior_count();
        for pt in self.local_points(u) {
            let (c, t) = (pt.cell, pt.t);
            let a = u.at(c, t).abs().max(floor);
            let coef = self.lambda * pt.v
                - self.alpha * (pt.p - 1.0) * a.powf(pt.p - 2.0)
                - self.beta * (pt.k - 1.0) * a.powf(pt.k - 2.0);
            let f = pt.weight * coef;
            // interior indices of the two hats touching this node
            let idx = [c as isize - 1, c as isize];
            let phi = [1.0 - t, t];
            for a in 0..2 {
                for b in 0..2 {
                    let (ia, ib) = (idx[a], idx[b]);
                    if ia >= 0 && ib >= 0 && (ia as usize) < n && (ib as usize) < n {
                        h[ia as usize * n + ib as usize] += f * phi[a] * phi[b];
                    }
                }
            }
        }
        Ok(h)
    }

    /// Max-norm of the gradient.
    pub fn residual(&self, u: &GridFunction) -> Result<f64, EnergyError> {
        Ok(self.gradient(u)?.max_abs())
    }

    /// `I_λ(t u)` for every `t` in `ts`.
    pub fn ray_energies(&self, u: &GridFunction, ts: &[f64]) -> Result<Vec<f64>, EnergyError> {
        let kin = self.kernel.kinetic_energy_profile(u, ts)?;
        Ok(ts
            .iter()
            .zip(kin)
            .map(|(t, k)| {
                let (pot, sp, sk) = self.local_terms(&u.scaled(*t));
                k + pot - sp - sk
            })
            .collect())
    }

    /// `‖u‖_λ`, the Gagliardo seminorm over `Ω × Ω`.
    pub fn norm(&self, u: &GridFunction) -> Result<f64, EnergyError> {
        Ok(self.kernel.seminorm(u, Region::Omega)?)
    }

    /// Empirical embedding constants `(C_p, C_k)`.
    pub fn embedding_constants(&self) -> Result<(f64, f64), EnergyError> {
        let c = estimate_embedding_constants(
            &[&self.p, &self.k],
            self.embedding.dictionary_size,
            &self.kernel,
            self.embedding.safety_factor,
        )?;
        Ok((c[0], c[1]))
    }

    /// Centred hat on `Ω₀` (or on the whole grid for the limit problem),
    /// normalized to `‖w₀‖_λ = 1`.
    pub fn default_w0(&self) -> Result<GridFunction, EnergyError> {
        let (a0, b0) = if self.with_potential {
            self.potential.omega0.ok_or(EnergyError::NoLimitDomain)?
        } else {
            (self.grid.a, self.grid.b)
        };
        let w = hat(self.grid, 0.5 * (a0 + b0), 0.5 * (b0 - a0));
        if w.is_zero() {
            return Err(EnergyError::DegenerateDirection("Ω₀ contains no grid node".into()));
        }
        let n = self.norm(&w)?;
        Ok(w.scaled(1.0 / n))
    }

    /// Exponent bounds entering the geometry constants.
    pub fn exponent_bounds(&self) -> ExponentBounds {
        ExponentBounds {
            p_minus: self.p.min(),
            p_plus: self.p.max(),
            q_minus: self.q.min(),
            q_plus: self.q.max(),
            k_minus: self.k.min(),
            k_plus: self.k.max(),
        }
    }

    /// `τ₀ = [β ∫|w₀|^k / (k⁺ ‖w₀‖² max(1/q⁻, 1/2))]^{1/(2-k⁺)}`.
    pub fn tau0(&self, w0: &GridFunction) -> Result<f64, EnergyError> {
        let b = self.exponent_bounds();
        let norm = self.norm(w0)?;
        let km = crate::spaces::modular(w0, &self.k);
        let m = (1.0 / b.q_minus).max(0.5);
        Ok((self.beta * km / (b.k_plus * norm * norm * m)).powf(1.0 / (2.0 - b.k_plus)))
    }

    /// Geometry constants from the given embedding constants and `w₀`.
    pub fn geometry(&self, c_p: f64, c_k: f64, w0: &GridFunction) -> Result<GeometryConstants, EnergyError> {
        let b = self.exponent_bounds();
        let a_const = c_p.powf(b.p_minus).max(c_p.powf(b.p_plus)) / b.p_minus;
        let b_const = c_k.powf(b.k_minus).max(c_k.powf(b.k_plus)) / b.k_minus;
        let d = (1.0 / b.q_plus).min(0.5);
        let mut g = GeometryConstants::from_abd(a_const, b_const, d, b.p_plus, b.k_plus, self.alpha, self.beta)?;
        g.c_p = c_p;
        g.c_k = c_k;
        g.tau0 = self.tau0(w0)?;
        Ok(g)
    }

    /// Geometry constants with empirically estimated embedding constants and the default `w₀`.
    pub fn default_geometry(&self) -> Result<GeometryConstants, EnergyError> {
        let (c_p, c_k) = self.embedding_constants()?;
        self.geometry(c_p, c_k, &self.default_w0()?)
    }

    /// As [`default_geometry`](Self::default_geometry), estimating the embedding
    /// constants once per grid and exponent set.
    pub fn cached_geometry(&self) -> Result<GeometryConstants, EnergyError> {
        let (c_p, c_k) = match self.embedding_cache.get() {
            Some(c) => *c,
            None => {
                let c = self.embedding_constants()?;
                *self.embedding_cache.get_or_init(|| c)
            }
        };
        self.geometry(c_p, c_k, &self.default_w0()?)
    }

    /// `σ v₀` for the smallest `σ ∈ {2, 4, 8, …}` with `‖σ v₀‖_λ > ρ` and `I_λ(σ v₀) < 0`.
    pub fn make_e_point(&self, v0: &GridFunction, rho: f64) -> Result<GridFunction, EnergyError> {
        let norm = self.norm(v0)?;
        let mut sigma = 1.0;
        for _ in 0..MAX_ESCAPE_DOUBLINGS {
            sigma *= 2.0;
            let e = v0.scaled(sigma);
            if sigma * norm > rho && self.energy(&e)?.total < 0.0 {
                return Ok(e);
            }
        }
        Err(EnergyError::EscapeFailure {
            max_doublings: MAX_ESCAPE_DOUBLINGS,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentBounds {
    pub p_minus: f64,
    pub p_plus: f64,
    pub q_minus: f64,
    pub q_plus: f64,
    pub k_minus: f64,
    pub k_plus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryConstants {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub rho: f64,
    pub psi_at_rho: f64,
    pub delta: f64,
    pub tau0: f64,
    pub alpha_max: f64,
    pub beta_max: f64,
    pub product: f64,
    pub product_bound: f64,
    pub c_p: f64,
    pub c_k: f64,
}

impl GeometryConstants {
    /// Closed forms from `A, B, D`, `p⁺`, `k⁺`, `α`, `β`. `τ₀` and the embedding
    /// constants are left at 0.
    pub fn from_abd(
        a: f64,
        b: f64,
        d: f64,
        p_plus: f64,
        k_plus: f64,
        alpha: f64,
        beta: f64,
    ) -> Result<Self, EnergyError> {
        if !(p_plus > 2.0 && k_plus < 2.0 && a > 0.0 && b > 0.0 && d > 0.0) {
            return Err(EnergyError::InadmissibleParameters(format!(
                "need p+ > 2, k+ < 2 and positive A, B, D (p+ = {p_plus}, k+ = {k_plus})"
            )));
        }
        let alpha_max = d * (2.0 - k_plus) / (a * (p_plus - k_plus));
        let beta_max = d * (p_plus - 2.0) / (b * (p_plus - k_plus));
        let product = alpha.powf(2.0 - k_plus) * beta.powf(p_plus - 2.0);
        let product_bound = alpha_max.powf(2.0 - k_plus) * beta_max.powf(p_plus - 2.0);
        if alpha > alpha_max {
            return Err(EnergyError::InadmissibleParameters(format!(
                "alpha = {alpha} exceeds alpha_max = {alpha_max}"
            )));
        }
        if beta > beta_max {
            return Err(EnergyError::InadmissibleParameters(format!(
                "beta = {beta} exceeds beta_max = {beta_max}"
            )));
        }
        if product > product_bound {
            return Err(EnergyError::InadmissibleParameters(format!(
                "alpha^(2-k+) beta^(p+-2) = {product} exceeds {product_bound}"
            )));
        }
        let rho = (alpha_max / alpha).powf(1.0 / (p_plus - 2.0));
        let psi_at_rho = psi(rho, a, b, d, p_plus, k_plus, alpha, beta);
        Ok(GeometryConstants {
            a,
            b,
            d,
            rho,
            psi_at_rho,
            delta: psi_at_rho * rho.powf(k_plus),
            tau0: 0.0,
            alpha_max,
            beta_max,
            product,
            product_bound,
            c_p: 0.0,
            c_k: 0.0,
        })
    }
}

/// `ψ(σ) = D σ^{2-k⁺} − A α σ^{p⁺-k⁺} − B β`.
#[allow(clippy::too_many_arguments)]
pub fn psi(sigma: f64, a: f64, b: f64, d: f64, p_plus: f64, k_plus: f64, alpha: f64, beta: f64) -> f64 {
    d * sigma.powf(2.0 - k_plus) - a * alpha * sigma.powf(p_plus - k_plus) - b * beta
}
