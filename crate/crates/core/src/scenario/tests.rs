use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::*;
use crate::model::Family;

fn ep(stages: usize) -> ProblemInstance {
    ProblemInstance::new(Family::Energy, stages, &[20.0, 5.0]).unwrap()
}

#[test]
fn single_branch_tree_is_a_path() {
    let t = build_tree(&ep(3), 1, 0).unwrap();
    assert_eq!(t.len(), 3);
    assert_eq!(t.nodes[2].parent, Some(1));
    assert!(t.path_probabilities().iter().all(|&p| p == 1.0));
}

#[test]
fn binary_tree_counts() {
    let t = build_tree(&ep(3), 2, 0).unwrap();
    assert_eq!(t.len(), 7);
    let p = t.path_probabilities();
    let leaves: Vec<usize> = t.leaves().collect();
    assert_eq!(leaves.len(), 4);
    assert!(leaves.iter().all(|&l| p[l] == 0.25));
    t.validate().unwrap();
}

#[test]
fn trees_are_seed_deterministic() {
    let a = build_tree(&ep(4), 3, 11).unwrap();
    let b = build_tree(&ep(4), 3, 11).unwrap();
    let c = build_tree(&ep(4), 3, 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn zero_branches_rejected() {
    assert!(build_tree(&ep(3), 0, 0).is_err());
}

proptest! {
    #[test]
    fn node_count_and_child_probabilities(stages in 2usize..6, branches in 1usize..5, seed in 0u64..1000) {
        let t = build_tree(&ep(stages), branches, seed).unwrap();
        let expected: usize = (0..stages).map(|k| branches.pow(k as u32)).sum();
        prop_assert_eq!(t.len(), expected);
        for ch in t.children() {
            if !ch.is_empty() {
                let s: f64 = ch.iter().map(|&c| t.nodes[c].probability).sum();
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
        }
        prop_assert_eq!(t.lattice().unwrap().num_stages(), stages);
    }
}

#[test]
fn lattice_round_trip_and_non_recombining_trees() {
    let t = build_tree(&ep(3), 2, 5).unwrap();
    let l = t.lattice().unwrap();
    assert_eq!(ScenarioTree::from_lattice(&l).unwrap(), t);
    let mut bad = t.clone();
    bad.nodes[6].realization = Realization(vec![99.0]);
    assert!(bad.lattice().is_err());
    let mut worse = t;
    worse.nodes[6].probability = 0.9;
    assert!(worse.validate().is_err());
}

#[test]
fn full_scale_energy_size_and_guardrail() {
    let t7 = ScenarioTree::from_lattice(&Lattice {
        stages: (1..=7)
            .map(|t| if t == 1 { vec![(Realization::empty(), 1.0)] } else { vec![(Realization(vec![20.0]), 0.2); 5] })
            .collect(),
    })
    .unwrap();
    assert_eq!(detequiv_size(&ep(7), &t7).unwrap(), 78_124);
    let t8 = build_tree(&ep(8), 5, 0).unwrap();
    assert!(matches!(
        solve_detequiv(&ep(8), &t8, &SolverOptions::default()),
        Err(Error::TooLarge { .. })
    ));
}

/// Minimum of a convex function on `[lo, hi]` by golden-section search.
fn golden(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..iters {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    f((lo + hi) / 2.0).min(fa).min(fb)
}

/// Energy stage cost once the release `w` is chosen from level `avail`.
fn ep_cost(w: f64, avail: f64) -> f64 {
    2.0 * w + 7.0 * (20.0 - w).max(0.0) + (-0.1 * (avail - w) + 5.0).exp()
}

/// Exact dynamic programme over a remaining inflow path.
fn ep_value(avail: f64, inflows: &[f64], iters: usize) -> f64 {
    let f = |w: f64| {
        ep_cost(w, avail) + inflows.first().map_or(0.0, |&i| ep_value(avail - w + i, &inflows[1..], iters))
    };
    let k = 20f64.min(avail);
    golden(&f, 0.0, k, iters).min(golden(&f, k, avail, iters))
}

#[test]
fn single_path_matches_sequential_dynamic_programming() {
    let inst = ep(3);
    let lattice = Lattice {
        stages: vec![
            vec![(Realization::empty(), 1.0)],
            vec![(Realization(vec![12.0]), 1.0)],
            vec![(Realization(vec![27.0]), 1.0)],
        ],
    };
    let tree = ScenarioTree::from_lattice(&lattice).unwrap();
    let de = solve_detequiv(&inst, &tree, &SolverOptions::default()).unwrap();
    let oracle = ep_value(40.0, &[12.0, 27.0], 60);
    assert!((de.objective - oracle).abs() < 1e-6 * (1.0 + oracle.abs()), "{} vs {oracle}", de.objective);
}

#[test]
fn two_scenario_energy_matches_nested_search() {
    let inst = ep(2);
    let lattice = Lattice {
        stages: vec![
            vec![(Realization::empty(), 1.0)],
            vec![(Realization(vec![15.0]), 0.5), (Realization(vec![25.0]), 0.5)],
        ],
    };
    let tree = ScenarioTree::from_lattice(&lattice).unwrap();
    let de = solve_detequiv(&inst, &tree, &SolverOptions::default()).unwrap();
    let f = |w1: f64| {
        let r = 40.0 - w1;
        ep_cost(w1, 40.0) + 0.5 * ep_value(r + 15.0, &[], 100) + 0.5 * ep_value(r + 25.0, &[], 100)
    };
    let oracle = golden(&f, 0.0, 20.0, 100).min(golden(&f, 20.0, 40.0, 100));
    assert!((de.objective - oracle).abs() < 1e-6 * (1.0 + oracle.abs()), "{} vs {oracle}", de.objective);
    assert_eq!(de.node_solutions.len(), 3);
    // first-stage release is shared by both scenarios
    assert_eq!(de.first_stage.len(), 4);
}

#[test]
fn dense_and_sparse_detequiv_agree() {
    for f in Family::ALL {
        let inst = ProblemInstance::from_unit(f, 3, &vec![0.4; crate::problems::family_spec(f).priors.len()]).unwrap();
        let tree = build_tree(&inst, 3, 1).unwrap();
        let dense = SolverOptions { backend: Backend::Dense, ..SolverOptions::default() };
        let sparse = SolverOptions { backend: Backend::Sparse, ..SolverOptions::default() };
        let a = solve_detequiv(&inst, &tree, &dense).unwrap();
        let b = solve_detequiv(&inst, &tree, &sparse).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-7 * (1.0 + a.objective.abs()), "{f}");
    }
}

#[test]
fn renormalized_probabilities_keep_first_stage() {
    for f in Family::ALL {
        let inst = ProblemInstance::from_unit(f, 3, &vec![0.6; crate::problems::family_spec(f).priors.len()]).unwrap();
        let tree = build_tree(&inst, 2, 4).unwrap();
        let mut scaled = tree.clone();
        for n in scaled.nodes.iter_mut() {
            n.probability *= 3.7;
        }
        let children = scaled.children();
        let mut renorm = scaled.clone();
        for ch in &children {
            let s: f64 = ch.iter().map(|&c| scaled.nodes[c].probability).sum();
            for &c in ch {
                renorm.nodes[c].probability = scaled.nodes[c].probability / s;
            }
        }
        renorm.nodes[0].probability = 1.0;
        let opts = SolverOptions::default();
        let a = solve_detequiv(&inst, &tree, &opts).unwrap();
        let b = solve_detequiv(&inst, &renorm, &opts).unwrap();
        let dist = a.first_stage.iter().zip(&b.first_stage).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(dist < 1e-6, "{f}: {dist}");
    }
}

#[test]
fn larger_energy_tree_solves_with_sparse_backend() {
    let inst = ep(5);
    let tree = build_tree(&inst, 4, 3).unwrap();
    let de = solve_detequiv(&inst, &tree, &detequiv_options()).unwrap();
    assert_eq!(de.num_vars, 4 * 341);
    assert!(de.objective.is_finite());
}
