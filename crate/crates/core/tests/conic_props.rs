use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use socpd::conic::{export_checked, parse_cbf_str, to_cbf};
use socpd::generators::{attach_random_profit, generate_synthetic};
use socpd::{build_gm_micp, build_micp, share_of_choice, DesignVector};

mod common;
use common::{random_design, random_instance};

#[test]
fn cone_counts_follow_the_type_count() {
    for k in 1..=20 {
        let inst = generate_synthetic(4, k, k as u64);
        assert_eq!(build_micp(&inst).unwrap().num_exp_cones(), 4 * k);
        assert_eq!(build_gm_micp(&inst).unwrap().num_exp_cones(), 2 * k);
    }
}

#[test]
fn cbf_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..10 {
        let inst = random_instance(seed, 6, 1 + seed as usize % 5, 2);
        let profit = attach_random_profit(inst.clone(), seed);
        for model in [build_micp(&inst).unwrap(), build_gm_micp(&inst).unwrap(), build_micp(&profit).unwrap()] {
            let path = dir.path().join("m.cbf");
            let parsed = export_checked(&model, &path).unwrap();
            assert_eq!(parsed.summary, model.summary());
            let again = parse_cbf_str(&to_cbf(&model)).unwrap();
            assert_eq!(again.summary, parsed.summary);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn candidate_points_satisfy_every_row(seed in 0u64..1000, n in 1usize..10, k in 1usize..8, bits in any::<u64>()) {
        let inst = random_instance(seed, n, k, 0);
        let a: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
        let model = build_micp(&inst).unwrap();
        let x = model.candidate_point(&inst, &a).unwrap();
        prop_assert!(model.max_violation(&x) <= 1e-8);
        let share = share_of_choice(&inst, &DesignVector::new(a.clone())).unwrap();
        prop_assert!((model.objective_value(&x) - share).abs() <= 1e-9);
        let gm = build_gm_micp(&inst).unwrap();
        let y = gm.candidate_point(&inst, &a).unwrap();
        prop_assert!(gm.max_violation(&y) <= 1e-8);
    }
}

#[test]
fn twenty_random_designs_pass_the_algebraic_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let inst = generate_synthetic(12, 10, 7);
    let model = build_micp(&inst).unwrap();
    for _ in 0..20 {
        let a = random_design(&mut rng, 12);
        let x = model.candidate_point(&inst, &a).unwrap();
        assert!(model.max_violation(&x) <= 1e-8);
    }
}
