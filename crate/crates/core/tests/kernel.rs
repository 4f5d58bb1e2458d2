mod common;

use common::cases;
use common::{default_config_with_grid, fixture_limit, fixtures, Oracle};
use proptest::prelude::*;
use rand::Rng;
use varfrac::energy::Problem;
use varfrac::fields::{Arity, ExponentField};
use varfrac::grid::{hat, Grid};
use varfrac::kernel::{KernelOptions, KernelQuadrature, Region};

fn problem(n: usize) -> Problem {
    Problem::from_config(&default_config_with_grid(n)).unwrap()
}

fn fields(q: &str, s: &str) -> (ExponentField, ExponentField) {
    (
        ExponentField::parse("q", q, Arity::Two, (0.0, 1.0), 33).unwrap(),
        ExponentField::parse("s", s, Arity::Two, (0.0, 1.0), 33).unwrap(),
    )
}

#[test]
fn fixtures_match_oracle_on_the_same_grid() {
    let pb = problem(64);
    let o = Oracle::for_problem(&pb, 6);
    for (name, u) in fixtures(pb.grid) {
        let lib = pb.kernel.modular(&u, Region::Omega).unwrap();
        let ora = o.omega_modular(&u.values, false);
        assert!(((lib - ora) / ora).abs() < 1e-5, "{name}: Ω×Ω {lib} vs {ora}");
        let lib = pb.kernel.modular(&u, Region::FullPlane).unwrap();
        let ora = o.full_modular(&u.values, false);
        assert!(((lib - ora) / ora).abs() < 1e-5, "{name}: ℝ×ℝ {lib} vs {ora}");
    }
}

#[test]
fn refinement_converges_toward_the_fine_oracle() {
    let pbs: Vec<Problem> = [64, 128, 256].into_iter().map(problem).collect();
    for index in [2, 3] {
        let limit = fixture_limit(&pbs[0], index);
        let errs: Vec<f64> = pbs
            .iter()
            .map(|pb| {
                let u = &fixtures(pb.grid)[index].1;
                (pb.kernel.modular(u, Region::Omega).unwrap() - limit).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.0, "fixture {index}: errors {errs:?}");
        }
    }
}

#[test]
fn tail_bound_decays_with_the_exponent_product() {
    let (q, s) = fields("1.8", "0.4");
    let g = Grid::new(0.0, 1.0, 16).unwrap();
    let u = hat(g, 0.4, 0.3);
    let at = |r: f64| {
        let opts = KernelOptions {
            tail_radius: Some(r),
            ..KernelOptions::default()
        };
        KernelQuadrature::new(g, &q, &s, opts).unwrap().modular_with_tail_bound(&u).unwrap()
    };
    let radii = [10.0, 20.0, 40.0, 80.0];
    let vals: Vec<(f64, f64)> = radii.iter().map(|r| at(*r)).collect();
    for w in vals.windows(2) {
        assert!(w[1].0 >= w[0].0);
        let rate = (w[0].1 / w[1].1).log2();
        assert!((rate - 1.8 * 0.4).abs() < 0.05, "rate {rate}");
        // truncated mass plus the bound never undershoots the next value
        assert!(w[0].0 + w[0].1 >= w[1].0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transposed_assembly_agrees(seed in any::<u64>()) {
        let (q, s) = fields("1.5+0.1*cos(3*(x-y))", "0.3+0.05*(x-y)^2");
        let g = Grid::new(0.0, 1.0, 24).unwrap();
        let k = KernelQuadrature::new(g, &q, &s, KernelOptions::default()).unwrap();
        let u = cases::function(&mut cases::rng(seed), g, 5.0);
        let a = k.modular(&u, Region::Omega).unwrap();
        let b = k.modular_transposed(&u).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300), "{a} vs {b}");
    }

    #[test]
    fn constant_exponent_scaling_law(seed in any::<u64>()) {
        let mut r = cases::rng(seed);
        let q0: f64 = r.gen_range(1.1..3.0);
        let (q, s) = fields(&format!("{q0:?}"), "0.35");
        let g = Grid::new(0.0, 1.0, 16).unwrap();
        let k = KernelQuadrature::new(g, &q, &s, KernelOptions::default()).unwrap();
        let u = cases::function(&mut r, g, 3.0);
        let c = r.gen_range(0.1..10.0) * if r.gen_bool(0.5) { -1.0 } else { 1.0 };
        for region in [Region::Omega, Region::FullPlane] {
            let base = k.modular(&u, region).unwrap();
            let scaled = k.modular(&u.scaled(c), region).unwrap();
            let expect = c.abs().powf(q0) * base;
            prop_assert!((scaled - expect).abs() <= 1e-9 * expect, "{scaled} vs {expect}");
        }
    }
}
