mod common;

use approx::assert_abs_diff_eq;
use common::oracles::{separable_socp, DenseLp, SocPiece};
use gridmpc::socp::{
    dump_program, kkt_residuals, load_program, solve, ConeBlock, ConicProgram, Duals, SolveStatus, SolverOptions,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn opts() -> SolverOptions {
    SolverOptions::default()
}

#[test]
fn box_only_lp() {
    let mut p = ConicProgram::new(1);
    p.cost = vec![1.0];
    p.lower = vec![1.0];
    p.upper = vec![2.0];
    let r = solve(&p, &opts()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert_abs_diff_eq!(r.u_star[0], 1.0, epsilon = 1e-7);
    assert_abs_diff_eq!(r.objective, 1.0, epsilon = 1e-7);
}

#[test]
fn projection_onto_interval() {
    // min t  s.t. |x − 3| ≤ t, x ∈ [0, 2]
    let mut p = ConicProgram::new(2);
    p.cost = vec![0.0, 1.0];
    p.lower = vec![0.0, f64::NEG_INFINITY];
    p.upper = vec![2.0, f64::INFINITY];
    p.cones
        .push(ConeBlock::from_triplets(2, &[(0, 0, 1.0)], vec![3.0], &[(1, 1.0)], 0.0));
    let r = solve(&p, &opts()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert_abs_diff_eq!(r.u_star[0], 2.0, epsilon = 1e-6);
    assert_abs_diff_eq!(r.u_star[1], 1.0, epsilon = 1e-6);
}

#[test]
fn random_lps_match_vertex_enumeration() {
    for seed in 0..12 {
        let n_eq = (seed % 3) as usize;
        let lp = DenseLp::random(seed, 3, 6, n_eq.min(1));
        let reference = lp.vertex_optimum().expect("feasible by construction");
        let r = solve(&lp.to_program(), &opts()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal, "seed {seed}");
        assert_abs_diff_eq!(r.objective, reference, epsilon = 1e-6);
    }
}

#[test]
fn separable_socp_matches_grid_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pieces: Vec<SocPiece> = (0..10).map(|_| SocPiece::random(&mut rng)).collect();
    let prog = separable_socp(&pieces);
    let r = solve(&prog, &opts()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    for (k, pc) in pieces.iter().enumerate() {
        let x = [r.u_star[2 * k], r.u_star[2 * k + 1]];
        let got = pc.objective(x);
        let grid = pc.grid_optimum();
        assert!(got <= grid + 1e-7, "piece {k}: solver {got} above grid {grid}");
        assert!(got >= grid - 2e-3, "piece {k}: solver {got} far below grid {grid}");
    }
}

#[test]
fn optimal_point_has_small_kkt_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pieces: Vec<SocPiece> = (0..4).map(|_| SocPiece::random(&mut rng)).collect();
    let mut prog = separable_socp(&pieces);
    let lp = DenseLp::random(11, 8, 5, 0);
    prog.ineq = lp.to_program().ineq;
    prog.ineq_rhs = lp.to_program().ineq_rhs;
    let r = solve(&prog, &opts()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    let res = kkt_residuals(&prog, &r.u_star, &r.duals);
    assert!(res.primal() <= 1e-8, "{res:?}");
    assert!(res.dual <= 1e-8, "{res:?}");
    assert!(res.dual_cone <= 1e-8, "{res:?}");
    assert!(res.complementarity <= 1e-7, "{res:?}");
}

#[test]
fn perturbing_an_active_bound_shows_in_box_residual() {
    let mut p = ConicProgram::new(2);
    p.cost = vec![1.0, 1.0];
    p.lower = vec![0.0, 0.0];
    p.upper = vec![1.0, 1.0];
    let r = solve(&p, &opts()).unwrap();
    let mut u = r.u_star.clone();
    u[0] -= 1e-3;
    let res = kkt_residuals(&p, &u, &r.duals);
    assert_abs_diff_eq!(res.bounds, 1e-3, epsilon = 1e-8);
}

#[test]
fn zero_duals_give_cost_as_dual_residual() {
    let mut p = ConicProgram::new(3);
    p.cost = vec![0.5, -2.0, 1.0];
    p.lower = vec![-1.0; 3];
    p.upper = vec![1.0; 3];
    let res = kkt_residuals(&p, &[0.0; 3], &Duals::default());
    assert_abs_diff_eq!(res.dual, 2.0, epsilon = 1e-15);
    assert_eq!(res.primal(), 0.0);
}

#[test]
fn infeasible_and_unbounded_are_reported() {
    // x ≥ 1 and x ≤ 0
    let lp = DenseLp {
        c: vec![1.0],
        ineq: vec![(vec![-1.0], -1.0), (vec![1.0], 0.0)],
        eq: vec![],
    };
    let r = solve(&lp.to_program(), &opts()).unwrap();
    assert_eq!(r.status, SolveStatus::Infeasible);

    let lp = DenseLp {
        c: vec![-1.0, 0.0],
        ineq: vec![(vec![0.0, 1.0], 1.0), (vec![0.0, -1.0], 1.0)],
        eq: vec![],
    };
    let r = solve(&lp.to_program(), &opts()).unwrap();
    assert_eq!(r.status, SolveStatus::Unbounded);
}

#[test]
fn iteration_limit_is_reported() {
    let lp = DenseLp::random(5, 4, 8, 0);
    let r = solve(&lp.to_program(), &SolverOptions { max_iter: 2, ..opts() }).unwrap();
    assert_eq!(r.status, SolveStatus::IterationLimit);
    assert_eq!(r.iterations, 2);
}

#[test]
fn sparse_and_dense_paths_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let pieces: Vec<SocPiece> = (0..120).map(|_| SocPiece::random(&mut rng)).collect();
    let prog = separable_socp(&pieces);
    let sparse = solve(
        &prog,
        &SolverOptions {
            dense_threshold: 0,
            ..opts()
        },
    )
    .unwrap();
    let dense = solve(
        &prog,
        &SolverOptions {
            dense_threshold: usize::MAX,
            ..opts()
        },
    )
    .unwrap();
    assert!(sparse.kkt_dim > 500);
    assert_eq!(sparse.status, SolveStatus::Optimal);
    assert_eq!(dense.status, SolveStatus::Optimal);
    assert_abs_diff_eq!(sparse.objective, dense.objective, epsilon = 1e-6);
}

#[test]
fn fixed_path_following_also_converges() {
    let lp = DenseLp::random(9, 3, 6, 1);
    let reference = lp.vertex_optimum().unwrap();
    let r = solve(
        &lp.to_program(),
        &SolverOptions {
            mehrotra: false,
            ..opts()
        },
    )
    .unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert_abs_diff_eq!(r.objective, reference, epsilon = 1e-6);
}

#[test]
fn solves_are_deterministic_and_dump_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pieces: Vec<SocPiece> = (0..6).map(|_| SocPiece::random(&mut rng)).collect();
    let prog = separable_socp(&pieces);
    let text = dump_program(&prog);
    let back = load_program(&text).unwrap();
    assert_eq!(back, prog);
    let a = solve(&prog, &opts()).unwrap();
    let b = solve(&back, &opts()).unwrap();
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.u_star, b.u_star);
}

#[test]
fn malformed_programs_are_rejected() {
    let mut p = ConicProgram::new(2);
    p.lower = vec![1.0, 0.0];
    p.upper = vec![0.0, 1.0];
    assert!(solve(&p, &opts()).is_err());
    assert!(load_program("conic-program 1\ndims 2 0 0 0\ncost\n5 1.0\nend\n").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn positive_cost_scaling_keeps_argmin(seed in 0u64..1000, scale in 0.01f64..100.0) {
        let lp = DenseLp::random(seed, 3, 5, 0);
        let prog = lp.to_program();
        let mut scaled = prog.clone();
        for c in &mut scaled.cost {
            *c *= scale;
        }
        let a = solve(&prog, &opts()).unwrap();
        let b = solve(&scaled, &opts()).unwrap();
        prop_assert_eq!(a.status, SolveStatus::Optimal);
        prop_assert_eq!(b.status, SolveStatus::Optimal);
        prop_assert!((a.objective * scale - b.objective).abs() <= 1e-6 * scale.max(1.0));
        for (x, y) in a.u_star.iter().zip(&b.u_star) {
            prop_assert!((x - y).abs() <= 1e-6, "{} vs {}", x, y);
        }
    }
}
