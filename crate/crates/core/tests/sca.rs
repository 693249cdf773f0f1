use noma_offload::model;
use noma_offload::sca::{self, g2, ScaOptions, ScaStatus, SlackPoint, SlackVars};
use noma_offload::{sample_channel, ChannelRealization, Scenario};
use proptest::prelude::*;

fn g2_direct(tau: f64, s: f64, w: f64) -> f64 {
    tau * w * (1.0 + s / tau).log2()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn tangent_plane_bounds_g2_from_above(
        tau0 in 1e-3f64..1.0,
        s0 in prop::collection::vec(0.0f64..1e8, 1..6),
        tau in 1e-4f64..1.0,
        s in 0.0f64..2e8,
    ) {
        let w = 1e6;
        let point = SlackPoint { tau_i: tau0, s3: s0.clone() };
        let t = sca::taylor_terms(&point, w).unwrap();
        for n in 0..s0.len() {
            let bound = t.upper_bound(n, &point, tau, s);
            let exact = g2_direct(tau, s, w);
            prop_assert!(bound >= exact - 1e-10 * exact.max(1.0), "row {n}: {bound} < {exact}");
            let at = t.upper_bound(n, &point, tau0, s0[n]);
            prop_assert!((at - g2(tau0, s0[n], w)).abs() <= 1e-10 * at.max(1.0));
        }
    }
}

#[test]
fn taylor_gradient_matches_finite_difference() {
    let w = 1e6;
    let point = SlackPoint { tau_i: 0.4, s3: vec![3e5, 7.0] };
    let t = sca::taylor_terms(&point, w).unwrap();
    for n in 0..2 {
        let s = point.s3[n];
        let h_t = 1e-7;
        let h_s = 1e-6 * s.max(1.0);
        let dt = (g2_direct(0.4 + h_t, s, w) - g2_direct(0.4 - h_t, s, w)) / (2.0 * h_t);
        let ds = (g2_direct(0.4, s + h_s, w) - g2_direct(0.4, s - h_s, w)) / (2.0 * h_s);
        assert!((t.d[n] - dt).abs() <= 1e-5 * dt.abs().max(1.0), "{} vs {dt}", t.d[n]);
        assert!((t.q[n] - ds).abs() <= 1e-5 * ds.abs().max(1.0), "{} vs {ds}", t.q[n]);
    }
}

fn draws() -> Vec<(Scenario, ChannelRealization)> {
    let mut out = Vec::new();
    for n in [2usize, 3, 4, 6] {
        for seed in 0..4u64 {
            let s = Scenario::reference(n);
            let ch = sample_channel(&s, 1000 * n as u64 + seed).unwrap();
            out.push((s, ch));
        }
    }
    out
}

#[test]
fn objective_never_decreases_and_slacks_are_tight() {
    for (s, ch) in draws() {
        let out = sca::sca_solve(&s, &ch, None, &ScaOptions::default()).unwrap();
        assert_eq!(out.trace.status, ScaStatus::Converged);
        let phi = out.trace.phi();
        for pair in phi.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-9 * pair[0].max(1.0), "{phi:?}");
        }
        let last = out.trace.iterations.last().unwrap();
        assert!(last.slack_gap <= 1e-6, "raw slack gap {}", last.slack_gap);
        // returned slacks equal the sums they bound
        let g = &ch.gamma;
        let tail = |e: &[f64], from: usize| (from..g.len()).map(|k| e[k] * g[k]).sum::<f64>();
        let a = &out.allocation;
        let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1.0);
        assert!(rel(out.slacks.s1, tail(&a.e_c, 0)) <= 1e-12);
        for n in 0..g.len() {
            assert!(rel(out.slacks.s2[n], tail(&a.e_i, n)) <= 1e-12);
        }
        for n in 0..g.len() - 1 {
            assert!(rel(out.slacks.s3[n], tail(&a.e_i, n + 1)) <= 1e-12);
        }
        let report = model::check_feasibility(a, &s, &ch, 1e-6);
        assert!(report.feasible, "{report:?}");
        let direct = model::objective_min_individual(a, g, s.bandwidth_hz).unwrap();
        assert!((direct - out.objective).abs() <= 1e-9 * direct);
    }
}

#[test]
fn subproblem_value_is_a_lower_bound_on_the_true_rate() {
    for (s, ch) in draws().into_iter().take(6) {
        let out = sca::sca_solve(&s, &ch, None, &ScaOptions::default()).unwrap();
        for rec in &out.trace.iterations {
            assert!(rec.subproblem_phi <= rec.phi * (1.0 + 1e-6) + 1e-6, "{} > {}", rec.subproblem_phi, rec.phi);
        }
    }
}

#[test]
fn iterate_is_feasible_for_the_next_restriction() {
    for (s, ch) in draws().into_iter().step_by(3) {
        let out = sca::sca_solve(&s, &ch, None, &ScaOptions::default()).unwrap();
        let point = SlackPoint { tau_i: out.allocation.tau_i, s3: out.slacks.s3.clone() };
        let prepared = sca::build_subproblem(&s, &ch, &point).unwrap();
        // the restriction is tight at its expansion point, so the iterate
        // with a slightly lowered objective is inside it
        let x = prepared.encode(&out.allocation, &out.slacks, out.objective * (1.0 - 1e-9));
        let viol = prepared.problem.max_violation(&x);
        assert!(viol <= 1e-7, "violation {viol}");
    }
}

#[test]
fn default_start_is_strictly_inside_restriction() {
    for (s, ch) in draws() {
        let point = sca::default_init(&s, &ch);
        let prepared = sca::build_subproblem(&s, &ch, &point).unwrap();
        let e_max = s.e_max_sorted(&ch);
        let alloc = model::Allocation {
            tau_c: s.t_max_s / 2.0,
            tau_i: s.t_max_s / 2.0,
            e_c: e_max.iter().map(|e| e / 2.0).collect(),
            e_i: e_max.iter().map(|e| e / 2.0).collect(),
        };
        let slacks = SlackVars::tight(&alloc, &ch.gamma, false);
        let x = prepared.encode(&alloc, &slacks, 0.0);
        assert!(prepared.problem.max_violation(&x) <= 1e-9);
    }
}

#[test]
fn single_device_matches_water_level() {
    // one device: all leftover energy and time go to the individual stage;
    // compare against a fine scan over tau^C with minimal common energy
    let mut s = Scenario::reference(1);
    s.k_common_bits = 2e6;
    let ch = sample_channel(&s, 7).unwrap();
    let out = sca::sca_solve(&s, &ch, None, &ScaOptions::default()).unwrap();
    let (w, g, e_max) = (s.bandwidth_hz, ch.gamma[0], s.e_max_j[0]);
    let mut best = 0.0f64;
    for i in 1..200_000 {
        let tau_c = i as f64 / 200_000.0;
        let e_c = tau_c * ((s.k_common_bits / (tau_c * w)) * std::f64::consts::LN_2).exp_m1() / g;
        if e_c >= e_max {
            continue;
        }
        let tau_i = 1.0 - tau_c;
        best = best.max(g2_direct(tau_i, (e_max - e_c) * g, w));
    }
    assert!((out.objective - best).abs() <= 1e-4 * best, "{} vs {best}", out.objective);
}

#[test]
fn unreachable_common_data_is_infeasible() {
    let mut s = Scenario::reference(3);
    s.k_common_bits = 1e9;
    let ch = sample_channel(&s, 3).unwrap();
    let out = sca::sca_solve(&s, &ch, None, &ScaOptions::default()).unwrap();
    assert_eq!(out.trace.status, ScaStatus::Infeasible);
    assert_eq!(out.objective, 0.0);
}

#[test]
fn tighter_eps_never_hurts() {
    let s = Scenario::reference(4);
    let ch = sample_channel(&s, 11).unwrap();
    let loose = sca::sca_solve(&s, &ch, None, &ScaOptions { eps: 1e-2, ..ScaOptions::default() }).unwrap();
    let tight = sca::sca_solve(&s, &ch, None, &ScaOptions { eps: 1e-6, ..ScaOptions::default() }).unwrap();
    assert!(tight.objective >= loose.objective * (1.0 - 1e-9));
    assert!(tight.trace.iterations.len() >= loose.trace.iterations.len());
}
