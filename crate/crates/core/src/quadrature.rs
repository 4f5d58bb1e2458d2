//! Gauss–Legendre rules and deterministic summation.

use std::f64::consts::PI;

use crate::grid::Grid;

/// Gauss–Legendre rule mapped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// `order`-point rule, exact for polynomials of degree `2 * order - 1`.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss order must be at least 1");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Newton on P_n starting from the Chebyshev-like guess.
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                if n == 1 {
                    p1 = z;
                    p0 = 1.0;
                } else {
                    for k in 2..=n {
                        let pk = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                        p0 = p1;
                        p1 = pk;
                    }
                }
                // p1 = P_n(z), p0 = P_{n-1}(z)
                dp = if n == 1 { 1.0 } else { n as f64 * (z * p1 - p0) / (z * z - 1.0) };
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = 0.5 * (1.0 - z);
            nodes[n - 1 - i] = 0.5 * (1.0 + z);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        GaussRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrate `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = b - a;
        let mut acc = 0.0;
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(a + h * t);
        }
        acc * h
    }
}

/// Geometric subdivision of `[0, len]` toward 0: `[len/2, len], [len/4, len/2], ...`
/// followed by the innermost piece `[0, len/2^levels]`.
pub fn graded_intervals(len: f64, levels: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(levels + 1);
    let mut hi = len;
    for _ in 0..levels {
        let lo = 0.5 * hi;
        out.push((lo, hi));
        hi = lo;
    }
    out.push((0.0, hi));
    out
}

/// Where the linear interpolant through `a` (at 0) and `b` (at 1) vanishes, as
/// `(position, levels)`: a zero inside `[0, 1]` gets `max_levels` of grading, a
/// zero at distance `d` outside marks the near end with `ceil(-log2 d)` levels.
pub fn zero_mark(a: f64, b: f64, max_levels: usize) -> Option<(f64, usize)> {
    if a == b {
        return None;
    }
    let t = a / (a - b);
    if (0.0..=1.0).contains(&t) {
        return Some((t, max_levels));
    }
    let (end, dist) = if t < 0.0 { (0.0, -t) } else { (1.0, t - 1.0) };
    let levels = (-dist.log2()).ceil();
    (levels > 0.0).then(|| (end, (levels as usize).min(max_levels)))
}

/// Pieces of `[0, 1]` between consecutive `cuts`. Each gap is halved and both
/// halves are graded toward their outer end by the levels marked there.
pub fn graded_pieces(cuts: &[f64], marks: &[(f64, usize)]) -> Vec<(f64, f64)> {
    let mut cuts: Vec<f64> = cuts.iter().copied().chain([0.0, 1.0]).chain(marks.iter().map(|m| m.0)).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let levels_at = |t: f64| marks.iter().filter(|m| m.0 == t).map(|m| m.1).max().unwrap_or(0);
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mid = 0.5 * (lo + hi);
        out.extend(graded_intervals(mid - lo, levels_at(lo)).into_iter().map(|(a, b)| (lo + a, lo + b)));
        out.extend(graded_intervals(hi - mid, levels_at(hi)).into_iter().map(|(a, b)| (hi - b, hi - a)));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Bisect `[lo, hi]` until `rule` on each piece agrees with the rule on its two
/// halves for every component of `f`, to `tol * scale[i] * length`.
pub fn adaptive_pieces<const M: usize>(
    lo: f64,
    hi: f64,
    rule: &GaussRule,
    f: &impl Fn(f64) -> [f64; M],
    scale: [f64; M],
    tol: f64,
    max_depth: usize,
) -> Vec<(f64, f64)> {
    fn integrate<const M: usize>(rule: &GaussRule, a: f64, b: f64, f: &impl Fn(f64) -> [f64; M]) -> [f64; M] {
        let mut acc = [0.0; M];
        for (t, w) in rule.nodes.iter().zip(&rule.weights) {
            for (s, v) in acc.iter_mut().zip(f(a + (b - a) * t)) {
                *s += w * v * (b - a);
            }
        }
        acc
    }
    fn go<const M: usize>(
        a: f64,
        b: f64,
        whole: [f64; M],
        depth: usize,
        env: (&GaussRule, &dyn Fn(f64, f64) -> [f64; M], [f64; M], f64),
        out: &mut Vec<(f64, f64)>,
    ) {
        let (_, integ, scale, tol) = env;
        let m = 0.5 * (a + b);
        let (l, r) = (integ(a, m), integ(m, b));
        let fine = (0..M).all(|i| (l[i] + r[i] - whole[i]).abs() <= tol * scale[i] * (b - a));
        if fine || depth == 0 {
            out.push((a, b));
        } else {
            go(a, m, l, depth - 1, env, out);
            go(m, b, r, depth - 1, env, out);
        }
    }
    let integ = |a: f64, b: f64| integrate(rule, a, b, f);
    let mut out = Vec::new();
    go(lo, hi, integ(lo, hi), max_depth, (rule, &integ, scale, tol), &mut out);
    out
}

/// A quadrature node inside a grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellNode {
    pub cell: usize,
    /// Local coordinate in `[0, 1]`.
    pub t: f64,
    pub x: f64,
    pub weight: f64,
}

/// Composite Gauss rule on every cell of `grid`. With `boundary_levels > 0` the
/// first and last cells are geometrically graded toward the end points.
pub fn cell_nodes(grid: &Grid, order: usize, boundary_levels: usize) -> Vec<CellNode> {
    let rule = GaussRule::new(order);
    let h = grid.h();
    let mut out = Vec::with_capacity(grid.cells * order);
    for cell in 0..grid.cells {
        let graded = boundary_levels > 0 && (cell == 0 || cell + 1 == grid.cells);
        let pieces: Vec<(f64, f64)> = if graded {
            // pieces in distance-to-boundary units of h
            graded_intervals(1.0, boundary_levels)
        } else {
            vec![(0.0, 1.0)]
        };
        let mut cell_nodes = Vec::new();
        for (lo, hi) in pieces {
            for (z, w) in rule.nodes.iter().zip(&rule.weights) {
                let dist = lo + (hi - lo) * z;
                // distance from the boundary end of the cell
                let t = if graded && cell + 1 == grid.cells && cell != 0 {
                    1.0 - dist
                } else {
                    dist
                };
                cell_nodes.push(CellNode {
                    cell,
                    t,
                    x: grid.point(cell, t),
                    weight: h * (hi - lo) * w,
                });
            }
        }
        cell_nodes.sort_by(|a, b| a.t.total_cmp(&b.t));
        out.extend(cell_nodes);
    }
    out
}

/// Pairwise (cascade) summation; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
