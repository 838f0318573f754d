use super::*;
use crate::grid::Neighborhood;
use crate::model::Link;
use crate::moments::{Observable, PointMoments, TimeObservable};
use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rows(e: &[&[f64]]) -> TransitionMatrix {
    TransitionMatrix::from_rows(e.iter().map(|r| r.to_vec()).collect()).unwrap()
}

fn record(i: usize, j: usize, grid: &ObservationGrid<f64>) -> ObservationRecord<f64> {
    let d = grid.points();
    ObservationRecord { n: 1, grid_point: d[i], exit_point: d[i], exit_elapsed: 0.1, next_grid_point: d[j] }
}

fn birth_death(up: &[f64]) -> TransitionMatrix {
    let s = up.len() + 2;
    let mut e = vec![vec![0.0; s]; s];
    e[0][1] = 1.0;
    e[s - 1][s - 2] = 1.0;
    for (k, &q) in up.iter().enumerate() {
        e[k + 1][k + 2] = q;
        e[k + 1][k] = 1.0 - q;
    }
    TransitionMatrix::from_rows(e).unwrap()
}

#[test]
fn two_point_stream_alternates() {
    let grid = ObservationGrid::symmetric(vec![0.0, 1.0], 0.2).unwrap();
    let stream: Vec<_> = (0..11).map(|k| record(k % 2, (k + 1) % 2, &grid)).collect();
    let a = estimate_transition_matrix(&stream, &grid).unwrap();
    assert_eq!(a.entries, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    assert_eq!(a.counts.as_ref().unwrap()[0][1], 6);
    assert!(a.unvisited.is_empty());
    assert!(is_type_i(&a) && a.is_tridiagonal_off_diagonal());
}

#[test]
fn three_point_rows_follow_adjacency() {
    let grid = ObservationGrid::symmetric(vec![0.0, 1.0, 2.0], 0.2).unwrap();
    let stream = vec![
        record(0, 1, &grid),
        record(1, 2, &grid),
        record(2, 1, &grid),
        record(1, 0, &grid),
        record(0, 1, &grid),
        record(1, 2, &grid),
    ];
    let a = estimate_transition_matrix(&stream, &grid).unwrap();
    assert_eq!(a.entries[0], vec![0.0, 1.0, 0.0]);
    assert_eq!(a.entries[2], vec![0.0, 1.0, 0.0]);
    assert_relative_eq!(a.entries[1][0] + a.entries[1][2], 1.0);
    assert!(a.entries[1][0] > 0.0 && a.entries[1][2] > 0.0);
    assert!(a.is_stochastic(1e-12));
}

#[test]
fn unvisited_rows_are_flagged() {
    let grid = ObservationGrid::symmetric(vec![0.0, 1.0, 2.0], 0.2).unwrap();
    let a = estimate_transition_matrix(&[record(0, 1, &grid)], &grid).unwrap();
    assert_eq!(a.unvisited, vec![1, 2]);
    assert!(matches!(stationary_vector(&a), Err(Error::Reducible)));
    assert!(estimate_transition_matrix::<f64>(&[], &grid).is_err());
}

#[test]
fn model_matrix_driftless_is_symmetric() {
    let m = ParametricDiffusion::brownian();
    let grid = ObservationGrid::symmetric(vec![0.0, 1.0, 2.0, 3.0], 0.3).unwrap();
    let a = model_transition_matrix(&m, &[0.0, 1.0], &grid, &QuadratureConfig::default()).unwrap();
    for i in 1..3 {
        assert_relative_eq!(a.entries[i][i - 1], 0.5, epsilon = 1e-12);
        assert_relative_eq!(a.entries[i][i + 1], 0.5, epsilon = 1e-12);
    }
    assert_eq!(a.entries[0][1], 1.0);
    assert_eq!(a.entries[3][2], 1.0);
    assert!(is_type_i(&a) && a.is_stochastic(1e-12));
}

#[test]
fn model_matrix_brownian_with_drift() {
    let m = ParametricDiffusion::brownian();
    let grid = ObservationGrid::symmetric(vec![0.0, 1.0, 2.0], 0.3).unwrap();
    let a = model_transition_matrix(&m, &[1.0, 1.0], &grid, &QuadratureConfig::default()).unwrap();
    let expected = (1.0 - (-2.0f64).exp()) / (1.0 - (-4.0f64).exp());
    assert_relative_eq!(a.entries[1][2], expected, epsilon = 1e-10);
    assert_relative_eq!(a.entries[1][2], 0.88080, epsilon = 1e-5);
}

#[test]
fn type_examples() {
    let flip = rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
    assert!(is_type_i(&flip));
    assert!(!is_type_ii(&flip));
    let id = rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
    assert!(!is_type_i(&id));
    assert!(is_type_ii(&id));
    let a = birth_death(&[0.3, 0.6]);
    let b = birth_death(&[0.8, 0.1]);
    assert!(is_type_i(&a) && is_type_i(&b));
    assert!(is_type_ii(&a.mul(&b)));
    assert!(matches!(p_even(&a), Err(Error::NotTypeTwo)));
}

#[test]
fn parity_blocks_of_the_two_step_chain() {
    let a2 = birth_death(&[0.3, 0.6]).pow(2);
    let odd = p_odd(&a2).unwrap();
    let even = p_even(&a2).unwrap();
    assert_eq!((odd.len(), even.len()), (2, 2));
    assert!(odd.is_stochastic(1e-12) && even.is_stochastic(1e-12));
    let a5sq = birth_death(&[0.3, 0.6, 0.45]).pow(2);
    assert_eq!((p_odd(&a5sq).unwrap().len(), p_even(&a5sq).unwrap().len()), (3, 2));
    let lhs = p_even(&a2.mul(&a2)).unwrap();
    let rhs = even.mul(&even);
    for i in 0..2 {
        for j in 0..2 {
            assert!((lhs.entries[i][j] - rhs.entries[i][j]).abs() < 1e-12);
        }
    }
}

#[test]
fn even_powers_converge_to_rank_one() {
    let a2 = birth_death(&[0.3, 0.6]).pow(2);
    let lim = p_even(&a2).unwrap().pow(64);
    let diff: f64 = (0..2).map(|j| (lim.entries[0][j] - lim.entries[1][j]).abs()).sum();
    assert!(diff < 1e-10);
    assert!(lim.entries.iter().flatten().all(|&v| v > 0.0));
    assert!(lim.is_stochastic(1e-12));
}

#[test]
fn stationary_examples() {
    let p = stationary_vector(&rows(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
    assert_relative_eq!(p[0], 0.5, epsilon = 1e-15);
    assert_relative_eq!(p[1], 0.5, epsilon = 1e-15);
    assert!(matches!(stationary_vector(&rows(&[&[1.0, 0.0], &[0.0, 1.0]])), Err(Error::Reducible)));
}

#[test]
fn three_point_stationary_matches_simulated_chain() {
    let q = 0.3;
    let a = birth_death(&[q]);
    let p = stationary_vector(&a).unwrap();
    // p = ((1-q)/2, 1/2, q/2)
    assert_relative_eq!(p[0], (1.0 - q) / 2.0, epsilon = 1e-14);
    assert_relative_eq!(p[1], 0.5, epsilon = 1e-14);
    assert_relative_eq!(p[2], q / 2.0, epsilon = 1e-14);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 1_000_000;
    let mut state = 1usize;
    let mut visits = [0usize; 3];
    for _ in 0..n {
        visits[state] += 1;
        state = match state {
            0 => 1,
            2 => 1,
            _ => {
                if rng.random::<f64>() < q {
                    2
                } else {
                    0
                }
            }
        };
    }
    // visits to the corners are determined by the coin flips at the centre
    for i in 0..3 {
        let f = visits[i] as f64 / n as f64;
        let sd = (p[i] * (1.0 - p[i]) / n as f64).sqrt();
        assert!((f - p[i]).abs() < 3.0 * sd, "state {i}: {f} vs {}", p[i]);
    }
}

#[test]
fn chain_stats_of_a_periodic_stream() {
    let grid = ObservationGrid::symmetric(vec![0.0, 1.0, 2.0], 0.2).unwrap();
    let path = [0usize, 1, 2, 1];
    let stream: Vec<_> = (0..400).map(|k| record(path[k % 4], path[(k + 1) % 4], &grid)).collect();
    let st = chain_stats(&stream, &grid).unwrap();
    assert_eq!(st.n_transitions, 400);
    assert!(st.max_deviation() < 1e-12);
    assert_relative_eq!(st.stationary[1], 0.5, epsilon = 1e-12);
}

#[test]
fn ergodic_average_examples() {
    let grid = ObservationGrid::symmetric(vec![0.0, 1.0], 0.2).unwrap();
    let p = [0.5, 0.5];
    let stream: Vec<_> = (0..1001).map(|k| record(k % 2, (k + 1) % 2, &grid)).collect();
    let one = ergodic_average(&stream, &grid, &p, |_| 1.0).unwrap();
    assert_eq!((one.empirical, one.predicted), (1.0, 1.0));
    let ind = ergodic_average(&stream, &grid, &p, |d| if d == 0.0 { 1.0 } else { 0.0 }).unwrap();
    assert_eq!(ind.predicted, 0.5);
    assert!((ind.empirical - 0.5).abs() <= 0.5 / 1001.0 + 1e-15);
}

fn point(d: f64, var: f64, alpha: Vec<f64>) -> PointMoments<f64> {
    PointMoments {
        d,
        left: d - 0.1,
        right: d + 0.1,
        prob_right: 0.5,
        eta_value: d,
        eta_time: 0.01,
        var_value: var,
        var_time: var,
        cov_value_time: Some(0.0),
        alpha_value: alpha.clone(),
        alpha_time: alpha,
    }
}

fn table(points: Vec<PointMoments<f64>>) -> MomentTable<f64> {
    let s = points[0].alpha_value.len();
    MomentTable { theta: vec![0.0; s], f: Observable::Identity, g: TimeObservable::Identity, points }
}

const VALUE: Response<f64> = Response::Value { f: Observable::Identity };

#[test]
fn scalar_variance_arithmetic() {
    let t = table(vec![point(1.0, 0.04, vec![0.5])]);
    assert_relative_eq!(asymptotic_variance_scalar(&t, &[1.0], Which::Value).unwrap(), 0.16, epsilon = 1e-15);
    assert_relative_eq!(asymptotic_variance_scalar(&t, &[1.0], Which::Time).unwrap(), 0.16, epsilon = 1e-15);
    let z = table(vec![point(1.0, 0.04, vec![0.0])]);
    assert!(matches!(asymptotic_variance_scalar(&z, &[1.0], Which::Value), Err(Error::ZeroAlpha { .. })));
}

#[test]
fn scalar_variance_is_permutation_invariant() {
    let pts = vec![point(1.0, 0.04, vec![0.5]), point(2.0, 0.09, vec![-0.2]), point(3.0, 0.01, vec![1.5])];
    let p = [0.25, 0.5, 0.25];
    let base = asymptotic_variance_scalar(&table(pts.clone()), &p, Which::Value).unwrap();
    let perm = [2usize, 0, 1];
    let permuted = table(perm.iter().map(|&i| pts[i].clone()).collect());
    let pp: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
    assert_relative_eq!(asymptotic_variance_scalar(&permuted, &pp, Which::Value).unwrap(), base, max_relative = 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn one_dimensional_covariance_reduces_to_scalar(var in 1e-4..1.0f64, alpha in prop_oneof![-3.0..-0.05f64, 0.05..3.0f64]) {
        let t = table(vec![point(1.0, var, vec![alpha])]);
        let k = DMatrix::from_element(1, 1, 1.0 / (alpha * alpha));
        let c = asymptotic_covariance_vector(&t, &[1.0], &VALUE, &k).unwrap();
        let s = asymptotic_variance_scalar(&t, &[1.0], Which::Value).unwrap();
        prop_assert!((c.stationary_cov[(0, 0)] - s).abs() <= 1e-12 * s);
    }

    #[test]
    fn constant_alpha_covariance_reduces_to_scalar(
        vars in proptest::collection::vec(1e-4..1.0f64, 2..6),
        alpha in 0.05..3.0f64,
    ) {
        let n = vars.len();
        let pts = vars.iter().enumerate().map(|(i, &v)| point(i as f64, v, vec![alpha])).collect();
        let t = table(pts);
        let p = vec![1.0 / n as f64; n];
        let k = DMatrix::from_element(1, 1, 1.0 / (alpha * alpha));
        let c = asymptotic_covariance_vector(&t, &p, &VALUE, &k).unwrap();
        let s = asymptotic_variance_scalar(&t, &p, Which::Value).unwrap();
        prop_assert!((c.stationary_cov[(0, 0)] - s).abs() <= 1e-12 * s);
    }

    #[test]
    fn parity_blocks_are_multiplicative(s in 2usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut random_type_ii = || {
            let e: Vec<Vec<f64>> = (0..s)
                .map(|i| (0..s).map(|j| if (i + j) % 2 == 0 { rng.random::<f64>() } else { 0.0 }).collect())
                .collect();
            TransitionMatrix::from_rows(e).unwrap()
        };
        let m = random_type_ii();
        let n = random_type_ii();
        let mn = m.mul(&n);
        prop_assert!(is_type_ii(&mn));
        for (block, a, b) in [
            (p_even(&mn).unwrap(), p_even(&m).unwrap(), p_even(&n).unwrap()),
            (p_odd(&mn).unwrap(), p_odd(&m).unwrap(), p_odd(&n).unwrap()),
        ] {
            let prod = a.mul(&b);
            for (r1, r2) in block.entries.iter().zip(&prod.entries) {
                for (x, y) in r1.iter().zip(r2) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn stationary_vector_is_fixed_and_positive(up in proptest::collection::vec(0.02..0.98f64, 0..7)) {
        let a = birth_death(&up);
        let p = stationary_vector(&a).unwrap();
        let pa = DMatrix::from_row_slice(1, p.len(), &p) * a.matrix();
        let defect = p.iter().zip(pa.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(defect < 1e-12);
        prop_assert!(p.iter().all(|&v| v > 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // detailed balance
        for i in 0..p.len() - 1 {
            prop_assert!((p[i] * a.entries[i][i + 1] - p[i + 1] * a.entries[i + 1][i]).abs() < 1e-12);
        }
    }
}

fn two_parameter_table() -> MomentTable<f64> {
    table(vec![
        point(0.0, 0.04, vec![0.5, 0.1]),
        point(1.0, 0.02, vec![0.2, -0.4]),
        point(2.0, 0.06, vec![-0.3, 0.3]),
    ])
}

#[test]
fn inverse_hessian_gain_gives_sandwich_covariance() {
    let t = two_parameter_table();
    let p = [0.3, 0.5, 0.2];
    let (hess, noise) = information_matrices(&t, &p, &VALUE).unwrap();
    let inv = hess.clone().try_inverse().unwrap();
    let c = asymptotic_covariance_vector(&t, &p, &VALUE, &inv).unwrap();
    let sandwich = &inv * noise * inv.transpose();
    assert!((&c.stationary_cov - &sandwich).abs().max() < 1e-10);
    assert!((&c.hessian - &hess).abs().max() < 1e-15);
    for (re, im) in &c.eigenvalues {
        assert_relative_eq!(*re, 1.0, epsilon = 1e-10);
        assert!(im.abs() < 1e-10);
    }
}

#[test]
fn inverse_hessian_minimizes_trace() {
    let t = two_parameter_table();
    let p = [0.3, 0.5, 0.2];
    let (hess, _) = information_matrices(&t, &p, &VALUE).unwrap();
    let inv = hess.clone().try_inverse().unwrap();
    let best = asymptotic_covariance_vector(&t, &p, &VALUE, &inv).unwrap().stationary_cov.trace();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut tried = 0;
    while tried < 10 {
        let k = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-20.0..20.0));
        match asymptotic_covariance_vector(&t, &p, &VALUE, &k) {
            Ok(c) => {
                tried += 1;
                assert!(best <= c.stationary_cov.trace() * (1.0 + 1e-12), "{best} vs {}", c.stationary_cov.trace());
            }
            Err(Error::EigenvalueCondition { .. }) => {}
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn lyapunov_residual_vanishes() {
    let t = two_parameter_table();
    let p = [0.3, 0.5, 0.2];
    let k = DMatrix::from_row_slice(2, 2, &[30.0, 2.0, -1.0, 20.0]);
    let c = asymptotic_covariance_vector(&t, &p, &VALUE, &k).unwrap();
    let m = DMatrix::identity(2, 2) * 0.5 - &c.drift;
    assert!((&c.drift - &k * &c.hessian).abs().max() < 1e-12);
    let r = &m * &c.stationary_cov + &c.stationary_cov * m.transpose() + &c.sigma;
    assert!(r.abs().max() < 1e-12 * c.sigma.abs().max().max(1.0));
}

#[test]
fn weak_gain_violates_eigenvalue_condition() {
    let t = two_parameter_table();
    let k = DMatrix::identity(2, 2);
    match asymptotic_covariance_vector(&t, &[0.3, 0.5, 0.2], &VALUE, &k) {
        Err(Error::EigenvalueCondition { eigenvalue }) => assert!(eigenvalue <= 0.5),
        other => panic!("{other:?}"),
    }
    let flat = table(vec![point(0.0, 0.04, vec![0.5, 1.0]), point(1.0, 0.04, vec![0.25, 0.5])]);
    assert!(matches!(
        asymptotic_covariance_vector(&flat, &[0.5, 0.5], &VALUE, &DMatrix::identity(2, 2)),
        Err(Error::NotPositiveDefinite)
    ));
}

#[test]
fn model_transition_needs_valid_grid() {
    let m = ParametricDiffusion::cir(1.0, Link::Exp, Link::Exp).unwrap();
    let grid = ObservationGrid::new(
        vec![0.7, 1.0],
        vec![Neighborhood { left: 0.6, right: 0.8 }, Neighborhood { left: 0.9, right: 1.1 }],
    )
    .unwrap();
    assert!(matches!(model_transition_matrix(&m, &[0.0, 0.0], &grid, &QuadratureConfig::default()), Err(Error::InvalidGrid(_))));
}

#[test]
fn pointwise_gain_reproduces_normalized_recursion() {
    let t = table(vec![point(0.0, 0.04, vec![0.5]), point(1.0, 0.09, vec![-0.2]), point(2.0, 0.01, vec![1.5])]);
    let p = [0.25, 0.5, 0.25];
    let gains: Vec<DMatrix<f64>> = t.points.iter().map(|q| DMatrix::from_element(1, 1, 1.0 / q.alpha_value[0].powi(2))).collect();
    let c = asymptotic_covariance_pointwise(&t, &p, &VALUE, &gains).unwrap();
    let s = asymptotic_variance_scalar(&t, &p, Which::Value).unwrap();
    assert_relative_eq!(c.drift[(0, 0)], 1.0, epsilon = 1e-14);
    assert_relative_eq!(c.stationary_cov[(0, 0)], s, max_relative = 1e-13);
    // a single gain cannot follow α(d) from point to point
    let (hess, _) = information_matrices(&t, &p, &VALUE).unwrap();
    let k = DMatrix::from_element(1, 1, 1.0 / hess[(0, 0)]);
    let single = asymptotic_covariance_vector(&t, &p, &VALUE, &k).unwrap();
    assert!((single.stationary_cov[(0, 0)] - s).abs() > 1e-3 * s);
}
