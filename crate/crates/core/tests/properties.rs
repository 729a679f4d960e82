use gmmcc_core::exec::Exec;
use gmmcc_core::factory::{generate_instance, GenConfig, WeightMode};
use gmmcc_core::gmm::{chance_probability, validate_instance, GaussianComponent, GmmInstance};
use gmmcc_core::json::{instance_from_json, instance_to_json};
use gmmcc_core::model::{
    block_model, build_pwl_model, build_saa, lp, witness_inner, witness_outer, BuildOptions, MiqpModel, ModelBounds,
};
use gmmcc_core::pwl::{breakpoints, build_pwl, ApproxKind, DEFAULT_ENDPOINT};
use gmmcc_core::special::{cdf, std_normal_inv_cdf};
use gmmcc_core::verify::{mc_probability_with, verify};
use ndarray::Array1;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn kind() -> impl Strategy<Value = ApproxKind> {
    prop_oneof![Just(ApproxKind::Outer), Just(ApproxKind::Inner)]
}

fn small_instance() -> impl Strategy<Value = GmmInstance> {
    (1usize..6, 1usize..4, any::<u64>(), 0.5f64..0.999).prop_map(|(n, k, seed, theta)| {
        let mut cfg = GenConfig::new(n, k, theta, seed);
        cfg.b_samples = 50;
        generate_instance(&cfg).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cdf_symmetric_and_monotone(z in -9.0f64..9.0, dz in 1e-6f64..1.0) {
        prop_assert!((cdf(z) + cdf(-z) - 1.0).abs() <= 2e-16);
        prop_assert!(cdf(z + dz) >= cdf(z));
    }

    #[test]
    fn inverse_cdf_round_trip(p in 1e-12f64..(1.0 - 1e-12)) {
        let z = std_normal_inv_cdf(p).unwrap();
        prop_assert!((cdf(z) - p).abs() <= 4e-16 + 1e-13 * p.min(1.0 - p));
    }

    #[test]
    fn breakpoints_well_formed(tau in 1e-4f64..0.2, k in kind()) {
        let bp = breakpoints(k, tau, -DEFAULT_ENDPOINT, DEFAULT_ENDPOINT).unwrap();
        let pts = bp.points();
        prop_assert!(pts.windows(2).all(|w| w[0] < w[1]));
        for anchor in [-1.0, 0.0, 1.0] {
            prop_assert!(pts.contains(&anchor));
        }
        prop_assert_eq!(pts.first().copied(), Some(-DEFAULT_ENDPOINT));
        prop_assert_eq!(pts.last().copied(), Some(DEFAULT_ENDPOINT));
        prop_assert!(bp.check_gaps().is_ok());
    }

    #[test]
    fn pwl_is_one_sided_within_tau(tau in 1e-4f64..0.1, z in -10.0f64..10.0, k in kind()) {
        let pwl = build_pwl(breakpoints(k, tau, -DEFAULT_ENDPOINT, DEFAULT_ENDPOINT).unwrap());
        let dev = pwl.deviation(z);
        prop_assert!(dev >= -1e-13, "dev = {dev}");
        prop_assert!(dev <= tau, "dev = {dev}");
        let v = pwl.eval(z);
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn witnesses_match_evaluators(z in -9.0f64..9.0, zeta in 0.0f64..1.0, k in kind()) {
        let pwl = build_pwl(breakpoints(k, 0.005, -DEFAULT_ENDPOINT, DEFAULT_ENDPOINT).unwrap());
        let bounds = ModelBounds::default();
        let (model, layout) = block_model(&pwl, &BuildOptions::default()).unwrap();
        let w = match k {
            ApproxKind::Outer => witness_outer(z, zeta, &pwl, &bounds).unwrap(),
            ApproxKind::Inner => witness_inner(z, zeta, &pwl, &bounds).unwrap(),
        };
        prop_assert_eq!(w.is_some(), pwl.eval(z) >= zeta);
        if let Some(w) = w {
            let mut values = vec![0.0; model.num_vars()];
            w.scatter(&layout, &mut values);
            prop_assert!(model.violations(&values, 1e-9).unwrap().is_empty());
        }
    }

    #[test]
    fn probability_invariant_under_joint_scaling(inst in small_instance(), s in 0.01f64..100.0, raw in prop::collection::vec(-5.0f64..5.0, 5)) {
        let x = Array1::from(raw[..inst.n].to_vec());
        let mut scaled = inst.clone();
        scaled.b *= s;
        scaled.components = inst
            .components
            .iter()
            .map(|c| GaussianComponent::new(c.weight, &c.mean * s, &c.covariance * (s * s)))
            .collect();
        let p0 = verify(&inst, x.view(), 0.0).unwrap().theta_check;
        let p1 = verify(&scaled, x.view(), 0.0).unwrap().theta_check;
        prop_assert!((p0 - p1).abs() <= 1e-12, "{p0} vs {p1}");
    }

    #[test]
    fn generated_instances_validate(n in 1usize..12, k in prop::sample::select(vec![5usize, 10, 15]), seed in any::<u64>(), unequal in any::<bool>()) {
        let mut cfg = GenConfig::new(n, k, 0.95, seed);
        cfg.b_samples = 20;
        cfg.weight_mode = if unequal { WeightMode::Unequal } else { WeightMode::Equal };
        let inst = generate_instance(&cfg).unwrap();
        prop_assert!(validate_instance(&inst).is_empty());
        prop_assert_eq!(&generate_instance(&cfg).unwrap(), &inst);
    }

    #[test]
    fn instance_json_round_trip(inst in small_instance()) {
        let text = instance_to_json(&inst).unwrap();
        let back = instance_from_json(&text).unwrap();
        prop_assert_eq!(&back, &inst);
        prop_assert_eq!(instance_to_json(&back).unwrap(), text);
    }

    #[test]
    fn mc_independent_of_exec(inst in small_instance(), seed in any::<u64>()) {
        let x = Array1::from_elem(inst.n, 0.5);
        let a = mc_probability_with(&inst, x.view(), 5000, &mut ChaCha8Rng::seed_from_u64(seed), Exec::Sequential).unwrap();
        let b = mc_probability_with(&inst, x.view(), 5000, &mut ChaCha8Rng::seed_from_u64(seed), Exec::Parallel).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((0.0..=1.0).contains(&chance_probability(&inst, x.view()).unwrap()));
    }
}

fn lp_round_trip(model: &MiqpModel) {
    let text = lp::export(model).unwrap();
    let back = lp::parse(&text).unwrap();
    assert_eq!(lp::export(&back).unwrap(), text);
    assert_eq!(back.to_json().unwrap(), model.to_json().unwrap());
    assert_eq!(lp::export_with(model, Exec::Sequential).unwrap(), text);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn lp_export_is_a_fixed_point(inst in small_instance(), k in kind(), binarize in any::<bool>(), split in any::<bool>()) {
        let opts = BuildOptions { sos2_as_binary: binarize, split_quadratic_equality: split, ..Default::default() };
        lp_round_trip(&build_pwl_model(&inst, k, 0.01, &opts).unwrap());
    }

    #[test]
    fn saa_lp_round_trip(inst in small_instance(), seed in any::<u64>()) {
        let m = build_saa(&inst, 40, 1e6, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(m.num_binaries(), 40);
        lp_round_trip(&m);
    }
}
