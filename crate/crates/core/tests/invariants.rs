use std::f64::consts::{E, PI};
use std::sync::OnceLock;

use nlpt::capacity::{capacity_via_exhaustion, classify_type, p_capacity, CapacityOptions, Condenser};
use nlpt::cli::{emit_curve, parse_curve, parse_window, Provenance, Report, RunConfig, TaskTag};
use nlpt::domains::{build_grid, compact_box, export_grid, parse_grid, sublevel_integral, Grid, GridSpec, ModelDomain};
use nlpt::energy::{energy_integral, leave_one_out, n_monotonicity, EnergyCurve, EpsTag};
use nlpt::exhaustion::{level_window, make_special_exhaustion, DomainType, ExhaustionFunction};
use nlpt::quad::gauss_legendre;
use nlpt::wtforms::{
    check_structure, check_wt1, check_wt2, random_scalar_field, wt2_implies_wt1_constant, ScalarFormPair,
    StructureField,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Annulus {
    grid: Grid,
    h: ExhaustionFunction,
}

fn annulus() -> &'static Annulus {
    static A: OnceLock<Annulus> = OnceLock::new();
    A.get_or_init(|| {
        let d = ModelDomain::plane_annulus(1.0);
        Annulus {
            grid: build_grid(&d, &GridSpec::new(vec![65, 64], E * E)).unwrap(),
            h: make_special_exhaustion(&d, 2.0).unwrap(),
        }
    })
}

fn square() -> &'static Grid {
    static G: OnceLock<Grid> = OnceLock::new();
    G.get_or_init(|| compact_box(&[[0.0, 1.0], [0.0, 1.0]], &[13, 13]).unwrap())
}

fn curve_strategy() -> impl Strategy<Value = EnergyCurve> {
    (1usize..12, any::<bool>()).prop_flat_map(|(len, family)| {
        let col = || proptest::collection::vec(-1e6f64..1e6, len);
        (col(), col(), col(), col(), col()).prop_map(move |(tau, i, di, eps, q)| EnergyCurve {
            tau_samples: tau,
            i,
            di,
            eps,
            eps_tag: if family { EpsTag::FamilyUpperBound } else { EpsTag::PerForm },
            monotone_quantity: q,
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gauss_legendre_is_exact_on_cubics(c in proptest::collection::vec(-5.0f64..5.0, 4), a in -2.0f64..0.0, w in 0.1f64..3.0) {
        let b = a + w;
        let poly = |x: f64| c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x;
        let prim = |x: f64| c[0] * x + c[1] * x * x / 2.0 + c[2] * x.powi(3) / 3.0 + c[3] * x.powi(4) / 4.0;
        let exact = prim(b) - prim(a);
        prop_assert!((gauss_legendre(poly, a, b, 1) - exact).abs() <= 1e-10 * (1.0 + exact.abs()));
    }

    #[test]
    fn sublevel_integral_is_linear_and_monotone(a in -3.0f64..3.0, b in -3.0f64..3.0, t in 0.2f64..1.8) {
        let s = annulus();
        let hv = s.h.values(&s.grid);
        let f = s.grid.sample(|x| 1.0 + x[0]);
        let g = s.grid.sample(|x| x[1].cos());
        let combo: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
        let lhs = sublevel_integral(&s.grid, &hv, &combo, t).unwrap();
        let rhs = a * sublevel_integral(&s.grid, &hv, &f, t).unwrap() + b * sublevel_integral(&s.grid, &hv, &g, t).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        let ones = vec![1.0; s.grid.len()];
        let v1 = sublevel_integral(&s.grid, &hv, &ones, t).unwrap();
        let v2 = sublevel_integral(&s.grid, &hv, &ones, t + 0.1).unwrap();
        prop_assert!(v2 >= v1);
    }

    #[test]
    fn energy_grows_with_the_ball(t in 0.2f64..1.6, dt in 0.01f64..0.3, seed in any::<u64>()) {
        let s = annulus();
        let f = random_scalar_field(&s.grid, &mut ChaCha8Rng::seed_from_u64(seed));
        let pair = ScalarFormPair::new(&s.grid, f, &StructureField::p_laplace(2.0));
        let i1 = energy_integral(&s.grid, &pair, &s.h, 2.0, t).unwrap();
        let i2 = energy_integral(&s.grid, &pair, &s.h, 2.0, t + dt).unwrap();
        prop_assert!(i1 >= 0.0 && i2 >= i1 * (1.0 - 1e-12));
    }

    #[test]
    fn exhaustion_capacity_is_translation_invariant_and_homogeneous(p in 1.2f64..4.0, a in 0.05f64..0.3, gap in 0.1f64..0.3, shift in 0.0f64..0.15) {
        let s = annulus();
        let d = ModelDomain::plane_annulus(1.0);
        let h = make_special_exhaustion(&d, p).unwrap();
        let (lo, hi) = level_window(&h, &s.grid);
        let at = |f: f64| lo + f * (hi - lo);
        let width = at(gap) - lo;
        let c = capacity_via_exhaustion(&h, &s.grid, p, at(a), at(a) + width).unwrap();
        let shifted = capacity_via_exhaustion(&h, &s.grid, p, at(a + shift), at(a + shift) + width).unwrap();
        prop_assert!((c - shifted).abs() <= 1e-9 * c);
        let wide = capacity_via_exhaustion(&h, &s.grid, p, at(a), at(a) + 2.0 * width).unwrap();
        prop_assert!((wide * 2f64.powf(p - 1.0) - c).abs() <= 1e-9 * c);
    }

    #[test]
    fn euclidean_type_follows_the_exponent(n in 2usize..5, p in 1.1f64..6.0) {
        let v = classify_type(&ModelDomain::EuclideanSpace { n, r1: 1.0 }, p).unwrap().verdict;
        prop_assert_eq!(v == DomainType::Parabolic, p >= n as f64);
    }

    #[test]
    fn structure_inequalities_hold_for_presets(p in 1.1f64..5.0, c in proptest::collection::vec(0.1f64..10.0, 2..4), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = c.len();
        prop_assert!(check_structure(&StructureField::p_laplace(p), dim, 64, &mut rng).passed);
        prop_assert!(check_structure(&StructureField::anisotropic(p, c), dim, 64, &mut rng).passed);
    }

    #[test]
    fn second_class_implies_first(p in 1.2f64..4.0, c0 in 0.2f64..5.0, c1 in 0.2f64..5.0, seed in any::<u64>()) {
        let grid = square();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for sf in [StructureField::p_laplace(p), StructureField::anisotropic(p, vec![c0, c1])] {
            let nu0 = wt2_implies_wt1_constant(sf.nu1, sf.nu2, p);
            prop_assert!(nu0 > 0.0);
            let pair = ScalarFormPair::new(grid, random_scalar_field(grid, &mut rng), &sf);
            if check_wt2(&pair, sf.nu1, sf.nu2, p).passed {
                prop_assert!(check_wt1(&pair, nu0, p).passed);
            }
        }
    }

    #[test]
    fn leave_one_out_never_raises_the_best_mean(eps in proptest::collection::vec(0.0f64..100.0, 2..8)) {
        let l = leave_one_out(&eps);
        let mean = eps.iter().sum::<f64>() / eps.len() as f64;
        prop_assert!((l.full_mean - mean).abs() <= 1e-9 * (1.0 + mean));
        prop_assert!(l.holds);
        prop_assert!(n_monotonicity(&[eps.clone(), eps.iter().rev().cloned().collect()]).unwrap().holds);
    }

    #[test]
    fn curve_csv_round_trips(curve in curve_strategy()) {
        let report = Report {
            task: TaskTag::Growth,
            config: RunConfig::default(),
            provenance: Provenance {
                tool: "nlpt",
                version: "0",
                resolution: None,
                truncation: None,
                tolerances: Default::default(),
                seed: 0,
            },
            results: serde_json::Value::Null,
            curve: Some(curve.clone()),
        };
        let text = emit_curve(&report).unwrap();
        prop_assert_eq!(parse_curve(&text).unwrap(), curve);
    }

    #[test]
    fn window_endpoints(a in -5.0f64..5.0, steps in 0usize..40, step in 0.01f64..1.0) {
        let b = a + steps as f64 * step;
        let w = parse_window(&format!("{a}:{b}:{step}")).unwrap();
        prop_assert_eq!(w.len(), steps + 1);
        prop_assert_eq!(w[0], a);
        prop_assert!((w[steps] - b).abs() <= 1e-9 * (1.0 + b.abs()));
    }

    #[test]
    fn node_tables_round_trip(nx in 8usize..16, ny in 8usize..16, k in -3.0f64..3.0) {
        let g = compact_box(&[[0.0, 1.0], [0.0, PI]], &[nx, ny]).unwrap();
        let phi = g.sample(|x| (k * x[0]).sin() + x[1] / 7.0);
        let t = parse_grid(&export_grid(&g, &[("phi", &phi)])).unwrap();
        prop_assert_eq!(&t.fields[0], &phi);
        prop_assert_eq!(t.coords.len(), g.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn capacity_ignores_plate_order(p in 1.5f64..3.5) {
        let g = build_grid(&ModelDomain::plane_annulus(1.0), &GridSpec::new(vec![12, 24], E)).unwrap();
        let last = g.axes[0].count - 1;
        let a: Vec<usize> = (0..g.len()).filter(|&n| g.index(n, 0) == 0).collect();
        let b: Vec<usize> = (0..g.len()).filter(|&n| g.index(n, 0) == last).collect();
        let c = Condenser::new(g, a, b).unwrap();
        let opts = CapacityOptions::default();
        let v1 = p_capacity(&c, p, &opts).unwrap();
        let v2 = p_capacity(&c.swapped(), p, &opts).unwrap();
        prop_assert!(v1.value > 0.0);
        prop_assert!((v1.value - v2.value).abs() <= 1e-6 * v1.value);
        prop_assert!(v1.minimizer.iter().all(|u| (-1e-9..=1.0 + 1e-9).contains(u)));
    }
}
