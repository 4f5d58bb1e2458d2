//! Brute-force reference quadratures, written independently of the library's
//! cached cell-pair scheme.
//!
//! The `Ω × Ω` integrals use the variables `(x, d = y - x)` with `d > 0` and the
//! symmetry of the integrand; every inner `x` integral is split at all kinks
//! (nodes, shifted nodes, sign changes). The exterior `y` integral is done in
//! `ln |x - y|`. Gauss nodes come from Newton iteration on Legendre polynomials.

#![allow(dead_code)]

pub mod cases;

use varfrac::config::ProblemConfig;
use varfrac::energy::Problem;
use varfrac::fields::ExponentField;
use varfrac::grid::{hat, Grid, GridFunction};

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        xs[i] = 0.5 * (1.0 - z);
        ws[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (xs, ws)
}

pub struct Rule {
    x: Vec<f64>,
    w: Vec<f64>,
}

impl Rule {
    pub fn new(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        Rule { x, w }
    }

    pub fn on(&self, lo: f64, hi: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let len = hi - lo;
        self.x.iter().zip(&self.w).map(|(t, w)| w * f(lo + len * t)).sum::<f64>() * len
    }

    /// Integral over `[lo, hi]` graded geometrically toward both ends.
    pub fn graded(&self, lo: f64, hi: f64, levels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let mid = 0.5 * (lo + hi);
        let mut total = 0.0;
        let mut span = 0.5 * (hi - lo);
        let mut cuts = vec![];
        for _ in 0..levels {
            span *= 0.5;
            cuts.push(span);
        }
        // [lo, lo + span_L], [lo + span_{L}, lo + span_{L-1}], ..., [lo + span_0, mid]
        let mut left = vec![lo];
        for c in cuts.iter().rev() {
            left.push(lo + c);
        }
        left.push(mid);
        for w in left.windows(2) {
            total += self.on(w[0], w[1], &mut f);
        }
        let mut right = vec![mid];
        for c in &cuts {
            right.push(hi - c);
        }
        right.push(hi);
        for w in right.windows(2) {
            total += self.on(w[0], w[1], &mut f);
        }
        total
    }
}

/// Problem data the oracle reads: exponent fields, parameters and the grid.
pub struct Oracle<'a> {
    pub a: f64,
    pub b: f64,
    pub cells: usize,
    pub q: &'a ExponentField,
    pub s: &'a ExponentField,
    pub qdom: (f64, f64),
    pub tail_radius: f64,
    pub inner: Rule,
    pub outer: Rule,
    pub tail: Rule,
    /// Order of the first `d` panel after the cubic substitution.
    pub near: Rule,
    pub levels: usize,
}

impl<'a> Oracle<'a> {
    pub fn for_problem(pb: &'a Problem, order: usize) -> Self {
        Oracle {
            a: pb.grid.a,
            b: pb.grid.b,
            cells: pb.grid.cells,
            q: &pb.q,
            s: &pb.s,
            qdom: pb.kernel.exponent_domain(),
            tail_radius: pb.kernel.tail_radius(),
            inner: Rule::new(order),
            outer: Rule::new(order),
            tail: Rule::new(2 * order),
            near: Rule::new(4 * order),
            levels: 24,
        }
    }

    pub fn with_cells(mut self, cells: usize) -> Self {
        self.cells = cells;
        self
    }

    fn h(&self) -> f64 {
        (self.b - self.a) / self.cells as f64
    }

    fn node(&self, i: usize) -> f64 {
        if i == self.cells {
            self.b
        } else {
            self.a + i as f64 * self.h()
        }
    }

    /// Piecewise-linear interpolant of nodal values, zero outside `[a, b]`.
    pub fn u(&self, vals: &[f64], x: f64) -> f64 {
        if x <= self.a || x >= self.b {
            return 0.0;
        }
        let r = (x - self.a) / self.h();
        let i = (r.floor() as usize).min(self.cells - 1);
        let t = r - i as f64;
        vals[i] * (1.0 - t) + vals[i + 1] * t
    }

    fn q_at(&self, x: f64, y: f64) -> f64 {
        let (lo, hi) = self.qdom;
        self.q.value(x.clamp(lo, hi), y.clamp(lo, hi))
    }

    fn kernel(&self, x: f64, y: f64) -> (f64, f64) {
        let q = self.q_at(x, y);
        let s = self.s.value(x, y);
        ((y - x).abs().powf(-(1.0 + q * s)), q)
    }

    /// Breakpoints of `x ↦ (u(x), u(x + d))` inside `[lo, hi]`.
    fn pieces(&self, lo: f64, hi: f64, d: f64) -> Vec<f64> {
        let mut pts = vec![lo, hi];
        for i in 0..=self.cells {
            for x in [self.node(i), self.node(i) - d] {
                if x > lo && x < hi {
                    pts.push(x);
                }
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        pts
    }

    /// `∫ f` over `[lo, hi]` split at kinks and at sign changes of `g`, where both
    /// are linear between breakpoints.
    fn split_integral(
        &self,
        lo: f64,
        hi: f64,
        d: f64,
        g: impl Fn(f64) -> f64,
        mut f: impl FnMut(f64) -> f64,
    ) -> f64 {
        let pts = self.pieces(lo, hi, d);
        let mut total = 0.0;
        for w in pts.windows(2) {
            let (l, r) = (w[0], w[1]);
            let (gl, gr) = (g(l), g(r));
            if gl * gr < 0.0 {
                let z = l + (r - l) * gl / (gl - gr);
                // x = z ∓ len·t³ smooths |Δu|^{q-1} at the zero
                let (dl, dr) = (z - l, r - z);
                total += self.inner.on(0.0, 1.0, |t| 3.0 * dl * t * t * f(z - dl * t * t * t))
                    + self.inner.on(0.0, 1.0, |t| 3.0 * dr * t * t * f(z + dr * t * t * t));
            } else {
                total += self.inner.on(l, r, &mut f);
            }
        }
        total
    }

    /// `2 ∫_0^L F(d) dd` with the first cell of `d` resolved by `d = h t³`, every
    /// cell bisected where `F` has kinks in `d`.
    fn over_d(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = self.h();
        let mut total = self.adaptive(0.0, 1.0, &mut |t| 3.0 * h * t * t * f(h * t * t * t));
        for j in 1..self.cells {
            total += self.adaptive(j as f64 * h, (j + 1) as f64 * h, &mut f);
        }
        2.0 * total
    }

    fn adaptive(&self, l: f64, r: f64, f: &mut impl FnMut(f64) -> f64) -> f64 {
        let scale = self.inner.on(l, r, |x| f(x).abs()) / (r - l);
        let whole = self.inner.on(l, r, &mut *f);
        self.bisect(l, r, whole, (1e-9 * scale, 1e-9 * (r - l)), f)
    }

    /// `∬_{Ω×Ω} |u(x) - u(y)|^q K` (divided by `q` on request).
    pub fn omega_modular(&self, vals: &[f64], divide_by_q: bool) -> f64 {
        let (a, b) = (self.a, self.b);
        self.over_d(|d| {
            let diff = |x: f64| self.u(vals, x) - self.u(vals, x + d);
            self.split_integral(a, b - d, d, diff, |x| {
                let du = diff(x);
                if du == 0.0 {
                    return 0.0;
                }
                let (k, q) = self.kernel(x, x + d);
                let v = du.abs().powf(q) * k;
                if divide_by_q {
                    v / q
                } else {
                    v
                }
            })
        })
    }

    /// `∫_{Ωᶜ, |y - mid| ≤ R} f(q(x, y)) K(x, y) dy` for one side, split where
    /// the projection of `q` starts to hold it constant.
    fn exterior_side(&self, x: f64, left: bool, f: impl Fn(f64) -> f64) -> f64 {
        let mid = 0.5 * (self.a + self.b);
        let (lo, hi) = self.qdom;
        let (r0, r1, rq) = if left {
            (x - self.a, x - (mid - self.tail_radius), x - lo)
        } else {
            (self.b - x, mid + self.tail_radius - x, hi - x)
        };
        let mut cuts = vec![r0.ln(), r1.ln()];
        if rq > r0 && rq < r1 {
            cuts.insert(1, rq.ln());
        }
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (l0, l1) = (w[0], w[1]);
            let panels = ((l1 - l0) / 0.25).ceil().max(1.0) as usize;
            let step = (l1 - l0) / panels as f64;
            for j in 0..panels {
                total += self.tail.on(l0 + j as f64 * step, l0 + (j + 1) as f64 * step, |lr| {
                    let r = lr.exp();
                    let y = if left { x - r } else { x + r };
                    let (k, q) = self.kernel(x, y);
                    f(q) * k * r
                });
            }
        }
        total
    }

    /// `2 ∫_Ω Σ_side |u|^{q_side} E_side(x) dx` (divided by `q` on request).
    pub fn exterior_modular(&self, vals: &[f64], divide_by_q: bool) -> f64 {
        let mut total = 0.0;
        for c in 0..self.cells {
            let (l, r) = (self.node(c), self.node(c + 1));
            let f = |x: f64| {
                let ux = self.u(vals, x).abs();
                if ux == 0.0 {
                    return 0.0;
                }
                let term = |q: f64| if divide_by_q { ux.powf(q) / q } else { ux.powf(q) };
                self.exterior_side(x, true, term) + self.exterior_side(x, false, term)
            };
            total += self.local_cell(vals, c, l, r, f);
        }
        2.0 * total
    }

    /// Integral over one cell, split at a sign change of `u`, then bisected
    /// adaptively so kinks of the integrand anywhere in the cell are resolved.
    fn local_cell(&self, vals: &[f64], c: usize, l: f64, r: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let (ul, ur) = (vals[c], vals[c + 1]);
        let mut cuts = vec![l, r];
        if ul * ur < 0.0 {
            cuts.insert(1, l + (r - l) * ul / (ul - ur));
        }
        let scale = self.inner.on(l, r, |x| f(x).abs()) / (r - l);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let whole = self.inner.on(w[0], w[1], &mut f);
            total += self.bisect(w[0], w[1], whole, (1e-11 * scale, 1e-9 * (r - l)), &mut f);
        }
        total
    }

    /// Adaptive bisection to an absolute tolerance per unit length, down to a
    /// shortest piece (below it rounding in `u` swamps the error estimate).
    fn bisect(&self, l: f64, r: f64, whole: f64, (tol, shortest): (f64, f64), f: &mut impl FnMut(f64) -> f64) -> f64 {
        let m = 0.5 * (l + r);
        let (a, b) = (self.inner.on(l, m, &mut *f), self.inner.on(m, r, &mut *f));
        if r - l < shortest || (a + b - whole).abs() <= tol * (r - l) {
            return a + b;
        }
        self.bisect(l, m, a, (tol, shortest), f) + self.bisect(m, r, b, (tol, shortest), f)
    }

    pub fn full_modular(&self, vals: &[f64], divide_by_q: bool) -> f64 {
        self.omega_modular(vals, divide_by_q) + self.exterior_modular(vals, divide_by_q)
    }

    /// `⟨K'(u), φ_i⟩` for the kinetic part, interior `i`.
    pub fn kinetic_weak(&self, vals: &[f64], i: usize) -> f64 {
        let (a, b) = (self.a, self.b);
        let (sl, sr) = (self.node(i - 1), self.node(i + 1));
        let h = self.h();
        let phi = |x: f64| (1.0 - ((x - self.node(i)) / h).abs()).max(0.0);
        let omega = self.over_d(|d| {
            let diff = |x: f64| self.u(vals, x) - self.u(vals, x + d);
            let f = |x: f64| {
                let du = diff(x);
                let dphi = phi(x) - phi(x + d);
                if du == 0.0 || dphi == 0.0 {
                    return 0.0;
                }
                let (k, q) = self.kernel(x, x + d);
                du.signum() * du.abs().powf(q - 1.0) * dphi * k
            };
            // x in supp φ or x + d in supp φ
            let mut ivs = vec![(sl.max(a), sr.min(b - d)), ((sl - d).max(a), (sr - d).min(b - d))];
            ivs.retain(|(l, r)| r > l);
            ivs.sort_by(|p, q| p.0.total_cmp(&q.0));
            if ivs.len() == 2 && ivs[1].0 <= ivs[0].1 {
                ivs = vec![(ivs[0].0, ivs[0].1.max(ivs[1].1))];
            }
            ivs.iter().map(|(l, r)| self.split_integral(*l, *r, d, diff, f)).sum()
        });
        let mut ext = 0.0;
        for c in [i - 1, i] {
            let (l, r) = (self.node(c), self.node(c + 1));
            ext += self.local_cell(vals, c, l, r, |x| {
                let ux = self.u(vals, x);
                if ux == 0.0 {
                    return 0.0;
                }
                let term = |q: f64| ux.signum() * ux.abs().powf(q - 1.0);
                (self.exterior_side(x, true, term) + self.exterior_side(x, false, term)) * phi(x)
            });
        }
        omega + 2.0 * ext
    }
}

/// Local (potential and source) data read from a problem.
pub struct Local<'a> {
    pub pb: &'a Problem,
}

impl Local<'_> {
    fn v(&self, x: f64) -> f64 {
        if self.pb.with_potential {
            self.pb.potential.at(x)
        } else {
            0.0
        }
    }

    /// `(λ/2) V u² - (α/p)|u|^p - (β/k)|u|^k` at `x`.
    pub fn density(&self, x: f64, u: f64) -> f64 {
        let pb = self.pb;
        let a = u.abs();
        let mut e = 0.5 * pb.lambda * self.v(x) * u * u;
        if a > 0.0 {
            let (p, k) = (pb.p.at(x), pb.k.at(x));
            e -= pb.alpha * a.powf(p) / p + pb.beta * a.powf(k) / k;
        }
        e
    }

    /// `λ V u - α|u|^{p-2}u - β|u|^{k-2}u` at `x`.
    pub fn force(&self, x: f64, u: f64) -> f64 {
        let pb = self.pb;
        let a = u.abs();
        let mut f = pb.lambda * self.v(x) * u;
        if a > 0.0 {
            let (p, k) = (pb.p.at(x), pb.k.at(x));
            f -= u.signum() * (pb.alpha * a.powf(p - 1.0) + pb.beta * a.powf(k - 1.0));
        }
        f
    }
}

/// Energy recomputed by the oracle.
pub fn oracle_energy(pb: &Problem, vals: &[f64], order: usize) -> f64 {
    let o = Oracle::for_problem(pb, order);
    let loc = Local { pb };
    let mut local = 0.0;
    for c in 0..o.cells {
        let (l, r) = (o.node(c), o.node(c + 1));
        local += o.local_cell(vals, c, l, r, |x| loc.density(x, o.u(vals, x)));
    }
    o.full_modular(vals, true) + local
}

/// Residual `max_i |⟨I'(u), φ_i⟩|` recomputed by the oracle.
pub fn oracle_residual(pb: &Problem, vals: &[f64], order: usize) -> f64 {
    let o = Oracle::for_problem(pb, order);
    let loc = Local { pb };
    let h = o.h();
    let mut worst: f64 = 0.0;
    for i in 1..o.cells {
        let phi = |x: f64| (1.0 - ((x - o.node(i)) / h).abs()).max(0.0);
        let mut g = o.kinetic_weak(vals, i);
        for c in [i - 1, i] {
            let (l, r) = (o.node(c), o.node(c + 1));
            g += o.local_cell(vals, c, l, r, |x| loc.force(x, o.u(vals, x)) * phi(x));
        }
        worst = worst.max(g.abs());
    }
    worst
}

/// Shipped default configuration.
pub fn default_config() -> ProblemConfig {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.json");
    ProblemConfig::load(std::path::Path::new(path)).expect("shipped config loads")
}

/// Default configuration with another grid size.
pub fn default_config_with_grid(grid: usize) -> ProblemConfig {
    let mut cfg = default_config();
    cfg.grid = grid;
    cfg
}

/// The five fixture functions on `[0, 1]`.
pub fn fixtures(grid: Grid) -> Vec<(&'static str, GridFunction)> {
    use std::f64::consts::PI;
    vec![
        ("centred hat", hat(grid, 0.5, 0.25)),
        ("offset hat", hat(grid, 0.3125, 0.1875)),
        ("first sine", GridFunction::from_fn(grid, true, |x| (PI * x).sin())),
        ("third sine", GridFunction::from_fn(grid, true, |x| 0.5 * (3.0 * PI * x).sin())),
        ("quartic bump", GridFunction::from_fn(grid, true, |x| 16.0 * x * x * (1.0 - x) * (1.0 - x))),
    ]
}

/// Richardson extrapolation of two oracle values at `N` and `2N`, order two.
pub fn richardson(coarse: f64, fine: f64) -> f64 {
    (4.0 * fine - coarse) / 3.0
}

/// Richardson-extrapolated oracle `Ω × Ω` modular of fixture `index`, from the
/// oracle at `N = 512` and `N = 1024` (fields and tail taken from `pb`).
pub fn fixture_limit(pb: &Problem, index: usize) -> f64 {
    let at = |cells: usize| {
        let grid = Grid::new(pb.grid.a, pb.grid.b, cells).unwrap();
        let u = &fixtures(grid)[index].1;
        Oracle::for_problem(pb, 4).with_cells(cells).omega_modular(&u.values, false)
    };
    richardson(at(512), at(1024))
}

/// Argmax of `f` on `(0, hi]` by repeated zooming of a uniform grid.
pub fn grid_argmax(f: impl Fn(f64) -> f64, hi: f64) -> f64 {
    let (mut lo, mut top) = (0.0, hi);
    let mut best = hi;
    for _ in 0..8 {
        let n = 10_000;
        let step = (top - lo) / n as f64;
        best = (1..=n)
            .map(|i| lo + step * i as f64)
            .max_by(|a, b| f(*a).total_cmp(&f(*b)))
            .unwrap();
        lo = (best - step).max(0.0);
        top = (best + step).min(hi);
    }
    best
}
