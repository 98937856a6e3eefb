use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use socpd::bnb::Master;
use socpd::generators::attach_random_profit;
use socpd::gm::GmMaster;
use socpd::lp::{solve as lp_solve, LpStatus};
use socpd::oa::{relative_gap, separate, Cut, MasterModel, WarmStart};
use socpd::{
    enumerate, gamma, logistic, probability_bounds, share_of_choice, softplus, solve, solve_gm, solve_profit, Criterion,
    utility, DesignVector, SolveParams, TerminationReason,
};

mod common;
use common::{random_instance, rel_diff};

#[test]
fn oa_matches_enumeration_on_share_and_profit() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = SolveParams::default();
    for seed in 0..50u64 {
        let n = rng.gen_range(4..=12);
        let k = rng.gen_range(1..=10);
        let inst = random_instance(seed, n, k, rng.gen_range(0..3));
        let oracle = enumerate(&inst, Criterion::ShareOfChoice, 24).unwrap();
        let r = solve(&inst, &params).unwrap();
        assert_eq!(r.termination, TerminationReason::Optimal);
        assert!(rel_diff(r.objective_value.unwrap(), oracle.best_value) <= 1e-6, "share seed {seed}");

        let inst = attach_random_profit(inst, seed);
        let oracle = enumerate(&inst, Criterion::ExpectedProfit, 24).unwrap();
        let r = solve_profit(&inst, &params).unwrap();
        assert_eq!(r.termination, TerminationReason::Optimal);
        assert!(rel_diff(r.objective_value.unwrap(), oracle.best_value) <= 1e-6, "profit seed {seed}");
    }
}

#[test]
fn gm_warm_start_keeps_the_optimum() {
    for seed in 0..10 {
        let inst = random_instance(seed, 11, 7, 1);
        let cold = solve(&inst, &SolveParams::default()).unwrap();
        let warm = solve(
            &inst,
            &SolveParams {
                warm_start: WarmStart::Gm,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(rel_diff(cold.objective_value.unwrap(), warm.objective_value.unwrap()) <= 1e-9);
    }
}

#[test]
fn reported_gap_is_relative_to_the_bound() {
    let inst = random_instance(9, 16, 12, 0);
    let r = solve(
        &inst,
        &SolveParams {
            node_limit: Some(3),
            ..Default::default()
        },
    )
    .unwrap();
    let (ub, lb) = (r.best_bound.unwrap(), r.objective_value.unwrap());
    assert!(ub >= lb);
    let gap = r.gap.unwrap();
    assert!((gap - (ub - lb) / ub).abs() <= 1e-15);
    assert!((r.gap_percent.unwrap() - 100.0 * gap).abs() <= 1e-12);
    assert_eq!(relative_gap(1.0, 1.0), 0.0);
}

#[test]
fn cuts_and_branching_never_raise_the_relaxation() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for seed in 0..10 {
        let inst = random_instance(seed, 10, 6, 1);
        let master = MasterModel::build(&inst, Criterion::ShareOfChoice).unwrap();
        let mut lp = master.lp().clone();
        let mut last = f64::INFINITY;
        for _ in 0..15 {
            let sol = lp_solve(&lp).unwrap();
            assert_eq!(sol.status, LpStatus::Optimal);
            assert!(sol.objective_value <= last + 1e-9);
            last = sol.objective_value;
            let mut rows = master.lazy_rows(&sol.values);
            rows.extend(master.separate(&sol.values, None));
            if rows.is_empty() {
                break;
            }
            for r in rows {
                lp.add_row(r);
            }
        }
        let parent = lp_solve(&lp).unwrap().objective_value;
        let i = rng.gen_range(0..inst.n);
        for bit in [0.0, 1.0] {
            let mut child = lp.clone();
            let j = master.design_column(i);
            child.lower[j] = bit;
            child.upper[j] = bit;
            let sol = lp_solve(&child).unwrap();
            if sol.status == LpStatus::Optimal {
                assert!(sol.objective_value <= parent + 1e-9);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn gradient_cuts_hold_at_exact_points(
        w in -20.0f64..20.0, x1 in 0.0f64..1.0, x0 in 0.0f64..1.0, ua in -25.0f64..25.0,
        seed in 0u64..50, bits in any::<u64>()
    ) {
        let cut = Cut::at(0, w, x1, x0, ua);
        prop_assert!(cut.coeffs.iter().all(|c| c.is_finite()));
        // The linearisation is exact at its (clamped) anchor.
        let [aw, a1, a0, au] = cut.anchor;
        let f = socpd::f_value(aw, a1, a0, au).unwrap();
        prop_assert!((cut.violation(cut.anchor) - f).abs() <= 1e-9 * f.abs().max(1.0));
        let inst = random_instance(seed, 8, 3, 0);
        let a = DesignVector::new((0..8).map(|i| bits >> i & 1 == 1).collect());
        for u in utility(&inst, &a).unwrap() {
            let s = logistic(u);
            prop_assert!(cut.violation([u * s, s, 1.0 - s, u]) <= 1e-9 * cut.rhs.abs().max(1.0));
        }
    }

    #[test]
    fn softplus_tangents_stay_below(u0 in -40.0f64..40.0, u in -40.0f64..40.0) {
        let inst = random_instance(1, 3, 1, 0);
        let master = GmMaster::build(&inst).unwrap();
        let row = master.tangent(0, u0);
        let mut x = vec![0.0; master.lp().num_vars()];
        x[master.u_cols[0]] = u;
        x[master.t_cols[0]] = softplus(u);
        prop_assert!(row.violation(&x) <= 1e-12 * softplus(u).max(1.0));
    }
}

#[test]
fn separation_only_cuts_violated_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let u = rng.gen_range(-20.0..20.0);
        let x1: f64 = rng.gen_range(0.0..1.0);
        let w = rng.gen_range(-20.0..20.0);
        match separate(0, w, x1, 1.0 - x1, u) {
            Some(c) => assert!(c.violation([w, x1, 1.0 - x1, u]) > 0.0),
            None => assert!(socpd::f_value(w, x1, 1.0 - x1, u).unwrap() <= 1e-7),
        }
    }
}

#[test]
fn gm_matches_enumeration_and_meets_the_guarantee() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut ratios = Vec::new();
    for seed in 0..50u64 {
        let n = rng.gen_range(4..=12);
        let k = rng.gen_range(1..=10);
        let inst = random_instance(seed + 100, n, k, rng.gen_range(0..3));
        let oracle = enumerate(&inst, Criterion::GeometricMean, 24).unwrap();
        let r = solve_gm(&inst, &SolveParams::default()).unwrap();
        let gm = r.gm_value.unwrap();
        assert!(rel_diff(gm, oracle.best_value) <= 1e-6, "seed {seed}: {gm} vs {}", oracle.best_value);
        let am = enumerate(&inst, Criterion::ShareOfChoice, 24).unwrap().best_value;
        assert!(am >= oracle.best_value * (1.0 - 1e-12), "seed {seed}: AM {am} < GM {}", oracle.best_value);
        let design_am = share_of_choice(&inst, r.design.as_ref().unwrap()).unwrap();
        assert!((design_am - r.am_value_of_design.unwrap()).abs() <= 1e-12);
        let (l, u) = probability_bounds(&inst);
        let g = gamma(&inst.lambda, l, u).unwrap();
        assert!(design_am >= g * am - 1e-9, "seed {seed}: {design_am} < {g} * {am}");
        ratios.push(design_am / am);
    }
    assert!(ratios.iter().all(|&r| r <= 1.0 + 1e-12));
}

#[test]
fn uniform_gamma_has_a_closed_form() {
    for k in 1..=30 {
        let lambda = vec![1.0 / k as f64; k];
        for r in [1.0, 1.5, 2.0, 10.0, 37.0, 100.0, 1e4] {
            let g = gamma(&lambda, 1.0 / r, 1.0).unwrap();
            let closed = (1.0 / r).powf(1.0 - 1.0 / k as f64);
            assert!((g - closed).abs() <= 1e-12, "K = {k}, ratio {r}: {g} vs {closed}");
        }
    }
}

#[test]
fn zero_design_is_always_a_candidate() {
    let inst = random_instance(2, 6, 3, 2);
    let r = solve(&inst, &SolveParams::default()).unwrap();
    let zero = share_of_choice(&inst, &DesignVector::zeros(6)).unwrap();
    assert!(r.objective_value.unwrap() >= zero);
}
