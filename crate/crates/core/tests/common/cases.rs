//! Seeded random grid functions and exponent fields.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use varfrac::fields::{Arity, ExponentField};
use varfrac::grid::{Grid, GridFunction};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random trigonometric combination, Dirichlet or not, with amplitude up to `amp`.
pub fn function(rng: &mut ChaCha8Rng, grid: Grid, amp: f64) -> GridFunction {
    let dirichlet = rng.gen_bool(0.5);
    combination(rng, grid, amp, dirichlet)
}

/// As [`function`], always vanishing at both ends.
pub fn dirichlet(rng: &mut ChaCha8Rng, grid: Grid, amp: f64) -> GridFunction {
    combination(rng, grid, amp, true)
}

fn combination(rng: &mut ChaCha8Rng, grid: Grid, amp: f64, dirichlet: bool) -> GridFunction {
    let modes: Vec<(f64, f64, f64)> = (0..rng.gen_range(1..5))
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.5..8.0), rng.gen_range(0.0..6.3)))
        .collect();
    let shift = rng.gen_range(-0.5..0.5);
    let scale = amp * rng.gen_range(0.05..1.0);
    let len = grid.len();
    GridFunction::from_fn(grid, dirichlet, |x| {
        let t = (x - grid.a) / len;
        let bump = if dirichlet { (std::f64::consts::PI * t).sin() } else { 1.0 };
        scale * bump * (shift + modes.iter().map(|(c, w, ph)| c * (w * t + ph).sin()).sum::<f64>())
    })
}

/// `p(x) = c + a sin(w x + φ)` with values in `[lo, hi]`.
pub fn exponent(rng: &mut ChaCha8Rng, domain: (f64, f64), lo: f64, hi: f64) -> ExponentField {
    let c = rng.gen_range(lo..hi);
    let a = rng.gen_range(0.0..1.0) * (c - lo).min(hi - c);
    let w = rng.gen_range(0.5..6.0);
    let ph = rng.gen_range(0.0..6.3);
    ExponentField::parse("p", &format!("{c:?}+{a:?}*sin({w:?}*x+{ph:?})"), Arity::One, domain, 257).unwrap()
}

/// `(∫_Ω |u|^p)` for constant `p`, exactly per cell (u is linear there).
pub fn exact_power_integral(u: &GridFunction, p: f64) -> f64 {
    let h = u.grid.h();
    let prim = |a: f64, b: f64| -> f64 {
        // ∫_0^1 |a + (b - a) t|^p dt for a, b of one sign
        let (a, b) = (a.abs(), b.abs());
        if (b - a).abs() < 1e-12 * (a + b) {
            return (0.5 * (a + b)).powf(p);
        }
        (b.powf(p + 1.0) - a.powf(p + 1.0)) / ((p + 1.0) * (b - a))
    };
    let mut total = 0.0;
    for w in u.values.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a * b < 0.0 {
            let t0 = a / (a - b);
            total += h * (t0 * prim(a, 0.0) + (1.0 - t0) * prim(0.0, b));
        } else {
            total += h * prim(a, b);
        }
    }
    total
}
