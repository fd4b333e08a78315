use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::*;
use crate::rng;
use crate::solver::{solve, SolveStatus, SolverOptions};

fn midpoint(family: Family) -> ProblemInstance {
    let n = family_spec(family).priors.len();
    ProblemInstance::from_unit(family, 4, &vec![0.5; n]).unwrap()
}

#[test]
fn fixed_parameters_and_priors() {
    for f in Family::ALL {
        let spec = family_spec(f);
        assert!(spec.priors.iter().all(|&(_, lo, hi)| lo < hi));
        assert_eq!(spec.state_labels.len(), f.state_dim());
    }
    let ep = family_spec(Family::Energy);
    assert_eq!(ep.fixed_params[0], ("r0_init", 40.0));
    assert_eq!(family_spec(Family::Financial).priors.len(), 2);
    assert_eq!(family_spec(Family::Production).priors.len(), 6);
}

#[test]
fn prior_midpoints() {
    let ep = midpoint(Family::Energy);
    assert_eq!(ep.lambda.values(), vec![20.0, 5.0]);
    let pp = midpoint(Family::Production);
    assert_eq!(pp.mean_realization(2).0, vec![4.5, 2.75, 1.5]);
    let fp = midpoint(Family::Financial);
    assert!((fp.lambda.get("mu").unwrap() - 0.06).abs() < 1e-15);
    assert!((fp.lambda.get("sigma").unwrap() - 0.2).abs() < 1e-15);
}

#[test]
fn sampled_instances_stay_inside_priors() {
    let mut r = rng::stream(3, 0);
    for f in Family::ALL {
        let spec = family_spec(f);
        for _ in 0..50 {
            let inst = ProblemInstance::sample(f, 5, &mut r).unwrap();
            for ((_, v), &(_, lo, hi)) in inst.lambda.entries.iter().zip(&spec.priors) {
                assert!(*v >= lo && *v <= hi);
            }
        }
    }
}

#[test]
fn rejects_bad_instances() {
    assert!(ProblemInstance::new(Family::Energy, 1, &[20.0, 5.0]).is_err());
    assert!(ProblemInstance::new(Family::Energy, 3, &[20.0]).is_err());
    assert!(ProblemInstance::new(Family::Energy, 3, &[20.0, -1.0]).is_err());
}

#[test]
fn energy_last_stage_structure() {
    let inst = ProblemInstance::new(Family::Energy, 4, &[20.0, 5.0]).unwrap();
    let sp = inst.build_stage_subproblem(4, &[40.0], &Realization(vec![20.0]), None).unwrap();
    let p = &sp.program;
    assert_eq!(p.eq_rows[0].coeffs, vec![(0, 1.0)]);
    assert_eq!(p.eq_rows[0].rhs, 60.0);
    assert_eq!(p.eq_rows[0].coupling, vec![1.0]);
    assert_eq!(p.ineq_rows[0].sense, Sense::Ge);
    assert_eq!(p.ineq_rows[0].row.rhs, 20.0);
    assert_eq!(&p.linear_cost[2..4], &[2.0, 7.0]);
    assert_eq!(p.convex_terms[0].kind, ConvexKind::ExpAffine { a: -0.1, b: 5.0 });
    assert!(sp.epigraph.is_none());
}

#[test]
fn financial_first_stage_budget() {
    let inst = midpoint(Family::Financial);
    let sp = inst.build_stage_subproblem(1, &[], &Realization::empty(), Some(&inst.initial_cutset(2))).unwrap();
    let row = &sp.program.eq_rows[0];
    assert_eq!(row.coeffs, vec![(0, 1.0), (1, 1.0), (2, 1.0)]);
    assert_eq!(row.rhs, 100.0);
}

#[test]
fn trivial_cut_adds_one_epigraph_row() {
    for f in Family::ALL {
        let inst = midpoint(f);
        let cs = inst.initial_cutset(2);
        let sp = inst.build_stage_subproblem(1, &[], &Realization::empty(), Some(&cs)).unwrap();
        let e = sp.epigraph.clone().unwrap();
        assert_eq!(e.num_cuts, 1);
        assert_eq!(sp.program.linear_cost[e.theta_var], 1.0);
        let rows = &sp.program.ineq_rows[e.first_cut_row..];
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].row.coeffs, vec![(e.theta_var, 1.0)]);
        assert_eq!(rows[0].row.rhs, inst.trivial_alpha());
        assert_eq!(sp.program.nonneg[e.theta_var], f != Family::Financial);
    }
}

#[test]
fn stage_and_dimension_errors() {
    let inst = midpoint(Family::Energy);
    let cs = inst.initial_cutset(2);
    let xi = Realization(vec![20.0]);
    assert!(matches!(
        inst.build_stage_subproblem(0, &[], &xi, Some(&cs)),
        Err(Error::StageOutOfRange { .. })
    ));
    assert!(matches!(inst.build_stage_subproblem(5, &[1.0], &xi, None), Err(Error::StageOutOfRange { .. })));
    assert!(matches!(
        inst.build_stage_subproblem(2, &[1.0, 2.0], &xi, Some(&cs)),
        Err(Error::DimensionMismatch { .. })
    ));
    assert!(inst.build_stage_subproblem(4, &[1.0], &xi, Some(&cs)).is_err());
    assert!(inst.build_stage_subproblem(2, &[1.0], &xi, None).is_err());
}

#[test]
fn builders_are_pure() {
    let inst = midpoint(Family::Production);
    let cs = inst.initial_cutset(3);
    let xi = Realization(vec![4.0, 2.0, 1.0]);
    let a = inst.build_stage_subproblem(2, &[1.0, 0.5, 0.0], &xi, Some(&cs)).unwrap();
    let b = inst.build_stage_subproblem(2, &[1.0, 0.5, 0.0], &xi, Some(&cs)).unwrap();
    assert_eq!(a, b);
}

/// Feasible stage decision constructed by hand from the formulation.
fn feasible_point(r: &mut rng::StreamRng, inst: &ProblemInstance, t: usize, x_prev: &[f64], xi: &Realization) -> Vec<f64> {
    match inst.family {
        Family::Energy => {
            let r_init = if t == 1 { 40.0 } else { x_prev[0] + xi.0[0] };
            let w = r.random_range(0.0..=r_init);
            let h = (20.0 - w).max(0.0) + r.random_range(0.0..5.0);
            vec![r_init, r_init - w, w, h]
        }
        Family::Financial => {
            let wealth = if t == 1 { 100.0 } else { xi.0[0] * x_prev[0] + 1.03 * x_prev[1] };
            let mut parts: Vec<f64> = (0..3).map(|_| r.random_range(0.1..1.0)).collect();
            let s: f64 = parts.iter().sum();
            parts.iter_mut().for_each(|p| *p *= wealth / s);
            if t == inst.stages {
                vec![parts[0], parts[1] + parts[2]]
            } else {
                parts
            }
        }
        Family::Production => {
            let mut x = vec![0.0; 9];
            let budget = r.random_range(0.0..10.0);
            let share: Vec<f64> = (0..3).map(|_| r.random_range(0.0..1.0)).collect();
            let tot: f64 = share.iter().sum::<f64>() + 1e-12;
            for i in 0..3 {
                x[i] = budget * share[i] / tot / production::RESOURCE_USE[i];
                let base = if t == 1 { x[i] } else { x_prev[i] + x[i] - xi.0[i] };
                x[3 + i] = (-base).max(0.0) + r.random_range(0.0..2.0);
                x[6 + i] = base + x[3 + i];
            }
            x
        }
    }
}

fn random_prev(r: &mut rng::StreamRng, f: Family) -> Vec<f64> {
    (0..f.state_dim()).map(|_| r.random_range(0.0..50.0)).collect()
}

#[test]
fn folded_rhs_is_exact_and_objective_convex() {
    let mut r = rng::stream(17, 0);
    for f in Family::ALL {
        for _ in 0..50 {
            let inst = ProblemInstance::sample(f, 4, &mut r).unwrap();
            let t = r.random_range(1..=4);
            let x_prev = random_prev(&mut r, f);
            let xi = inst.sample_realization(t, &mut r);
            let sp = inst.stage_program(t, &x_prev, &xi).unwrap();
            let a = feasible_point(&mut r, &inst, t, &x_prev, &xi);
            let b = feasible_point(&mut r, &inst, t, &x_prev, &xi);
            assert!(sp.program.max_violation(&a) < 1e-10, "{f} t={t}");
            assert!(sp.program.max_violation(&b) < 1e-10);
            let mid: Vec<f64> = a.iter().zip(&b).map(|(u, v)| (u + v) / 2.0).collect();
            let (fa, fb, fm) = (sp.objective(&a), sp.objective(&b), sp.objective(&mid));
            assert!(fm <= (fa + fb) / 2.0 + 1e-9 * (1.0 + fa.abs() + fb.abs()));
        }
    }
}

#[test]
fn stage_objective_examples() {
    let ep = midpoint(Family::Energy);
    let v = ep.stage_objective_value(4, &[60.0, 40.0, 20.0, 0.0], &Realization(vec![20.0])).unwrap();
    assert!((v - (40.0 + core::f64::consts::E)).abs() < 1e-12);
    let fp = midpoint(Family::Financial);
    assert_eq!(fp.stage_objective_value(2, &[0.0, 0.0, 1.0], &Realization(vec![1.0])).unwrap(), 0.0);
    assert!(matches!(
        fp.stage_objective_value(2, &[0.0, 0.0, 0.0], &Realization(vec![1.0])),
        Err(Error::Domain(_))
    ));
    let pp = midpoint(Family::Production);
    let x = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    assert_eq!(pp.stage_objective_value(4, &x, &Realization(vec![0.0; 3])).unwrap(), 6.0);
    assert_eq!(pp.stage_objective_value(2, &x, &Realization(vec![0.0; 3])).unwrap(), 6.0);
}

#[test]
fn stage_cost_agrees_with_exact_formula_at_interior_points() {
    let mut r = rng::stream(23, 0);
    for f in Family::ALL {
        let inst = ProblemInstance::sample(f, 3, &mut r).unwrap();
        let x_prev = random_prev(&mut r, f);
        let xi = inst.sample_realization(2, &mut r);
        let sp = inst.build_stage_subproblem(2, &x_prev, &xi, Some(&inst.initial_cutset(3))).unwrap();
        let res = solve(&sp, &SolverOptions::default()).unwrap();
        let exact = inst.stage_objective_value(2, &res.x, &xi).unwrap();
        assert!((sp.stage_cost(&res.x) - exact).abs() < 1e-6 * (1.0 + exact.abs()));
    }
}

#[test]
fn stock_return_is_log_normal() {
    let inst = ProblemInstance::new(Family::Financial, 5, &[0.06, 0.2]).unwrap();
    let dt: f64 = 0.25;
    let mut r = rng::stream(31, 0);
    let logs: Vec<f64> = (0..20000).map(|_| inst.sample_realization(2, &mut r).0[0].ln()).collect();
    let (m, s) = crate::math::mean_std(&logs);
    let (tm, ts) = ((0.06 - 0.02) * dt, 0.2 * dt.sqrt());
    assert!((m - tm).abs() < 4.0 * ts / (20000f64).sqrt());
    assert!((s - ts).abs() < 0.02 * ts);
}

#[test]
fn inflows_and_demands_are_nonnegative() {
    let ep = ProblemInstance::new(Family::Energy, 3, &[15.0, 6.0]).unwrap();
    let pp = ProblemInstance::new(Family::Production, 3, &[3.0, 0.4, 1.5, 0.2, 1.0, 0.1]).unwrap();
    let mut r = rng::stream(2, 0);
    for _ in 0..5000 {
        assert!(ep.sample_realization(2, &mut r).0[0] >= 0.0);
        assert!(pp.sample_realization(3, &mut r).0.iter().all(|&d| d >= 0.0));
    }
    assert!(ep.sample_realization(1, &mut r).0.is_empty());
}

#[test]
fn bond_only_wealth_grows_by_risk_free_factor() {
    let inst = midpoint(Family::Financial);
    let sp = inst.build_stage_subproblem(2, &[0.0, 80.0], &Realization(vec![1.1]), Some(&inst.initial_cutset(3))).unwrap();
    assert!((sp.program.eq_rows[0].rhs - 80.0 * 1.03).abs() < 1e-12);
}

#[test]
fn relatively_complete_recourse_at_adversarial_states() {
    let opts = SolverOptions::default();
    let mut r = rng::stream(19, 0);
    for f in Family::ALL {
        for k in 0..100 {
            let inst = ProblemInstance::sample(f, 4, &mut r).unwrap();
            let t = r.random_range(2..=4);
            let x_prev: Vec<f64> = match k % 3 {
                0 => vec![0.0; f.state_dim()],
                1 => vec![1e3; f.state_dim()],
                _ => random_prev(&mut r, f),
            };
            let xi = inst.sample_realization(t, &mut r);
            let cuts = (t < 4).then(|| inst.initial_cutset(t + 1));
            let sp = inst.build_stage_subproblem(t, &x_prev, &xi, cuts.as_ref()).unwrap();
            let res = solve(&sp, &opts).unwrap();
            assert_ne!(res.status, SolveStatus::Infeasible, "{f} t={t} x={x_prev:?}");
            assert_eq!(res.status, SolveStatus::Optimal, "{f} t={t} x={x_prev:?}");
        }
    }
}
