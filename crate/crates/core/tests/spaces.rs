mod common;

use common::cases::{self, exact_power_integral};
use proptest::prelude::*;
use rand::Rng;
use varfrac::fields::{Arity, ExponentField};
use varfrac::grid::Grid;
use varfrac::spaces::{check_hoelder, check_sandwich, luxemburg_norm, modular, three_exponent_hoelder};

const OMEGA: (f64, f64) = (0.0, 1.0);

fn grid() -> Grid {
    Grid::new(OMEGA.0, OMEGA.1, 128).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn luxemburg_norm_is_homogeneous(seed in any::<u64>()) {
        let mut r = cases::rng(seed);
        let u = cases::function(&mut r, grid(), 5.0);
        let p = cases::exponent(&mut r, OMEGA, 1.1, 6.0);
        let n = luxemburg_norm(&u, &p).unwrap();
        for c in [0.1, 2.0, 10.0] {
            let nc = luxemburg_norm(&u.scaled(c), &p).unwrap();
            prop_assert!((nc - c * n).abs() <= 1e-9 * c * n, "c = {c}: {nc} vs {}", c * n);
        }
    }

    #[test]
    fn normalized_function_has_unit_modular(seed in any::<u64>()) {
        let mut r = cases::rng(seed);
        let u = cases::function(&mut r, grid(), 20.0);
        let p = cases::exponent(&mut r, OMEGA, 1.1, 6.0);
        let n = luxemburg_norm(&u, &p).unwrap();
        prop_assert!((modular(&u.scaled(1.0 / n), &p) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn constant_exponent_gives_lebesgue_norm(seed in any::<u64>()) {
        let mut r = cases::rng(seed);
        let u = cases::function(&mut r, grid(), 10.0);
        let p: f64 = r.gen_range(1.05..6.0);
        let field = ExponentField::constant("p", p, Arity::One, OMEGA);
        let exact = exact_power_integral(&u, p).powf(1.0 / p);
        let n = luxemburg_norm(&u, &field).unwrap();
        prop_assert!((n - exact).abs() <= 1e-9 * exact, "{n} vs {exact}");
    }

    #[test]
    fn sandwich_holds(seed in any::<u64>()) {
        let mut r = cases::rng(seed);
        let u = cases::function(&mut r, grid(), 10.0);
        let p = cases::exponent(&mut r, OMEGA, 1.1, 6.0);
        let s = check_sandwich(&u, &p).unwrap();
        prop_assert!(s.holds, "{s:?}");
    }

    #[test]
    fn hoelder_holds(seed in any::<u64>()) {
        let mut r = cases::rng(seed);
        let u = cases::function(&mut r, grid(), 10.0);
        let v = cases::function(&mut r, grid(), 10.0);
        let p = cases::exponent(&mut r, OMEGA, 1.1, 6.0);
        let h = check_hoelder(&u, &v, &p).unwrap();
        prop_assert!(h.holds, "{h:?}");
    }
}

#[test]
fn three_exponent_hoelder_with_constant_two() {
    let mut flagged = 0;
    for seed in 0..100 {
        let mut r = cases::rng(1000 + seed);
        let u = cases::function(&mut r, grid(), 10.0);
        let v = cases::function(&mut r, grid(), 10.0);
        let rr = cases::exponent(&mut r, OMEGA, 1.2, 6.0);
        let q = cases::exponent(&mut r, OMEGA, 1.2, 6.0);
        let (lhs, rhs) = three_exponent_hoelder(&u, &v, &rr, &q).unwrap();
        if lhs > 2.0 * rhs {
            flagged += 1;
            eprintln!("seed {seed}: ‖uv‖ = {lhs:e} exceeds 2‖u‖‖v‖ = {:e}", 2.0 * rhs);
        }
    }
    eprintln!("three-exponent Hölder with C = 2: {flagged} of 100 samples flagged");
}

#[test]
fn modular_of_constant_exponent_matches_closed_form() {
    let mut r = cases::rng(7);
    for _ in 0..20 {
        let u = cases::function(&mut r, grid(), 3.0);
        let p: f64 = r.gen_range(1.05..4.0);
        let field = ExponentField::constant("p", p, Arity::One, OMEGA);
        let exact = exact_power_integral(&u, p);
        assert!((modular(&u, &field) - exact).abs() <= 1e-10 * exact);
    }
}
