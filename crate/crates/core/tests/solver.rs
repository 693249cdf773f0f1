use noma_offload::solver::{
    self, concavity_probe, AffineExpr, ConvexSubproblem, LinearRow, PerspectiveRow, RowFamily, Sense, SolveStatus,
    VarLayout,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-8;

fn q(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * (1.0 + b / a).log2()
    }
}

/// max phi s.t. phi <= t log2(1 + g s / t), t + u <= 1, s <= smax.
fn rate_problem(g: f64, smax: f64) -> ConvexSubproblem {
    let mut layout = VarLayout::new();
    let phi = layout.push("phi", 1).start;
    let t = layout.push("t", 1).start;
    let u = layout.push("u", 1).start;
    let s = layout.push("s", 1).start;
    let mut p = ConvexSubproblem::new(layout);
    p.objective[phi] = 1.0;
    p.set_bounds(phi, 0.0, 100.0);
    p.set_bounds(t, 1e-9, 1.0);
    p.set_bounds(u, 0.0, 1.0);
    p.set_bounds(s, 0.0, smax);
    p.linear.push(LinearRow { family: RowFamily::Time, coeffs: vec![(t, 1.0), (u, 1.0)], sense: Sense::Le, rhs: 1.0 });
    p.perspective.push(PerspectiveRow {
        family: RowFamily::MinRate,
        time_var: t,
        slack_var: s,
        gain: g,
        weight: 1.0,
        rhs: AffineExpr { constant: 0.0, coeffs: vec![(phi, 1.0)] },
    });
    p
}

#[test]
fn perspective_optimum_uses_all_time_and_energy() {
    for (g, smax) in [(1.0, 1.0), (10.0, 3.0), (1e3, 0.5)] {
        let p = rate_problem(g, smax);
        let out = solver::solve(&p, TOL).unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        let want = (1.0 + g * smax).log2();
        assert!((out.objective - want).abs() <= 1e-6 * want, "{} vs {want}", out.objective);
        assert!(out.kkt_residual <= 1e-6);
    }
}

#[test]
fn two_users_share_time_fairly() {
    // max min(t1 log2(1+1/t1), t2 log2(1+1/t2)), t1 + t2 <= 1: symmetric split
    let mut layout = VarLayout::new();
    let phi = layout.push("phi", 1).start;
    let t = layout.push("t", 2);
    let s = layout.push("s", 2);
    let mut p = ConvexSubproblem::new(layout);
    p.objective[phi] = 1.0;
    p.set_bounds(phi, 0.0, 10.0);
    for k in 0..2 {
        p.set_bounds(t.start + k, 1e-9, 1.0);
        p.fix(s.start + k, 1.0);
        p.perspective.push(PerspectiveRow {
            family: RowFamily::MinRate,
            time_var: t.start + k,
            slack_var: s.start + k,
            gain: 1.0,
            weight: 1.0,
            rhs: AffineExpr { constant: 0.0, coeffs: vec![(phi, 1.0)] },
        });
    }
    p.linear.push(LinearRow {
        family: RowFamily::Time,
        coeffs: vec![(t.start, 1.0), (t.start + 1, 1.0)],
        sense: Sense::Le,
        rhs: 1.0,
    });
    let out = solver::solve(&p, TOL).unwrap();
    let want = 0.5 * 3f64.log2();
    assert!((out.objective - want).abs() <= 1e-6, "{} vs {want}", out.objective);
    assert!((out.x[t.start] - 0.5).abs() <= 1e-4);
}

#[test]
fn infeasible_demand_names_the_row() {
    let mut p = rate_problem(1.0, 1.0);
    p.set_bounds(0, 5.0, 100.0);
    let out = solver::solve(&p, TOL).unwrap();
    assert_eq!(out.status, SolveStatus::Infeasible);
    assert_eq!(out.diagnosis, Some(RowFamily::MinRate));
}

#[test]
fn linear_program_vertex() {
    // max x + 2y s.t. x + y <= 4, x + 3y <= 6, 0 <= x, y <= 10: optimum (3, 1)
    let mut layout = VarLayout::new();
    layout.push("x", 2);
    let mut p = ConvexSubproblem::new(layout);
    p.objective = vec![1.0, 2.0];
    p.set_bounds(0, 0.0, 10.0);
    p.set_bounds(1, 0.0, 10.0);
    p.linear.push(LinearRow { family: RowFamily::Other, coeffs: vec![(0, 1.0), (1, 1.0)], sense: Sense::Le, rhs: 4.0 });
    p.linear.push(LinearRow { family: RowFamily::Other, coeffs: vec![(0, 1.0), (1, 3.0)], sense: Sense::Le, rhs: 6.0 });
    let out = solver::solve(&p, TOL).unwrap();
    assert!((out.objective - 5.0).abs() <= 1e-6);
    assert!((out.x[0] - 3.0).abs() <= 1e-5 && (out.x[1] - 1.0).abs() <= 1e-5);
}

#[test]
fn optimum_dominates_random_feasible_points() {
    let p = rate_problem(7.0, 2.0);
    let out = solver::solve(&p, TOL).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10_000 {
        let t: f64 = rng.random_range(1e-6..1.0);
        let s: f64 = rng.random_range(0.0..2.0);
        let phi = q(t, 7.0 * s);
        assert!(phi <= out.objective * (1.0 + 1e-9));
    }
}

#[test]
fn repeated_solves_are_bit_identical() {
    let p = rate_problem(3.0, 1.5);
    let a = solver::solve(&p, TOL).unwrap();
    let b = solver::solve(&p, TOL).unwrap();
    assert_eq!(a.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(a.newton_steps, b.newton_steps);
}

#[test]
fn probe_rejects_sign_flipped_control() {
    let p = rate_problem(2.0, 5.0);
    assert!(concavity_probe(&p, 10_000, 1));
    // -q is convex; midpoint concavity must fail
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violated = false;
    for _ in 0..10_000 {
        let (a0, b0): (f64, f64) = (rng.random_range(1e-6..1.0), rng.random_range(0.0..5.0));
        let (a1, b1): (f64, f64) = (rng.random_range(1e-6..1.0), rng.random_range(0.0..5.0));
        let mid = -q(0.5 * (a0 + a1), 0.5 * (b0 + b1));
        let chord = 0.5 * (-q(a0, b0) - q(a1, b1));
        if mid < chord - 1e-10 * (1.0 + chord.abs()) {
            violated = true;
            break;
        }
    }
    assert!(violated);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn q_is_midpoint_concave(a0 in 1e-9f64..10.0, b0 in 0.0f64..1e3, a1 in 1e-9f64..10.0, b1 in 0.0f64..1e3) {
        let mid = q(0.5 * (a0 + a1), 0.5 * (b0 + b1));
        let chord = 0.5 * (q(a0, b0) + q(a1, b1));
        prop_assert!(mid >= chord - 1e-12 * (1.0 + chord.abs()));
    }

    #[test]
    fn q_hessian_is_negative_semidefinite(a in 1e-3f64..10.0, b in 0.0f64..1e3) {
        // closed form: -(1/ln2) / (a+b)^2 * [[b^2/a, -b], [-b, a]]
        let c = 1.0 / (std::f64::consts::LN_2 * (a + b).powi(2));
        let (haa, hab, hbb) = (-c * b * b / a, c * b, -c * a);
        prop_assert!(haa <= 0.0 && hbb <= 0.0);
        prop_assert!(haa * hbb - hab * hab >= -1e-12 * (haa * hbb).abs().max(1e-300));
    }
}
