//! Convex quadratic programs over the budget simplex:
//!
//! ```text
//!     minimize   xᵀ M x
//!     subject to eᵀx = 1,  0 ≤ x_i ≤ 1   (bounds dropped when short selling is allowed)
//! ```
//!
//! [`solve`] is a primal active-set method. Every returned point carries an
//! explicit KKT residual, which is the actual correctness contract.
//! [`solve_closed_form`] gives `M⁻¹e / eᵀM⁻¹e` for the short-selling case.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::scalar::Scalar;

pub const SYMMETRY_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-8;
pub const KKT_TOL: f64 = 1e-6;
pub const SNAP_TOL: f64 = 1e-10;
pub const MIN_EIGEN_CLOSED_FORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem<T> {
    matrix: Matrix<T>,
    allow_short: bool,
}

impl<T: Scalar> QpProblem<T> {
    /// Checks symmetry and positive semidefiniteness (up to rounding).
    pub fn new(matrix: Matrix<T>, allow_short: bool) -> Result<Self> {
        if !matrix.is_square() || matrix.rows() == 0 {
            return Err(Error::param("matrix", "must be square and non-empty"));
        }
        if matrix.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::param("matrix", "entries must be finite"));
        }
        let scale = matrix.max_abs().max(T::one());
        let asym = matrix.max_asymmetry();
        if asym > T::tol(SYMMETRY_TOL) * scale {
            return Err(Error::NotSymmetric {
                max_asymmetry: asym.as_f64(),
            });
        }
        // M + δI admits a Cholesky factor iff λ_min(M) > −δ
        let delta = T::tol(PSD_TOL);
        let mut shifted = matrix.clone();
        shifted.symmetrize();
        for i in 0..shifted.rows() {
            shifted[(i, i)] += delta;
        }
        if linalg::cholesky(&shifted).is_none() {
            return Err(Error::NotPositiveSemidefinite {
                bound: -delta.as_f64(),
            });
        }
        Ok(Self {
            matrix,
            allow_short,
        })
    }

    pub fn long_only(matrix: Matrix<T>) -> Result<Self> {
        Self::new(matrix, false)
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    pub fn allow_short(&self) -> bool {
        self.allow_short
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn objective(&self, x: &[T]) -> T {
        self.matrix.quad_form(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QpSolution<T> {
    pub weights: Vec<T>,
    pub objective: T,
    /// Max violation of stationarity, complementarity, feasibility on the
    /// problem rescaled to unit maximum diagonal.
    pub kkt_residual: T,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolverOptions {
    /// Defaults to 10·N².
    pub max_iterations: Option<usize>,
}

fn sum<T: Scalar>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |acc, &v| acc + v)
}

/// KKT residual of `x` for `min xᵀMx` on the simplex (or the affine budget
/// set when `bounded` is false). The budget multiplier is taken as xᵀ∇f.
pub fn kkt_residual<T: Scalar>(matrix: &Matrix<T>, x: &[T], bounded: bool) -> T {
    let two = T::lit(2.0);
    let g: Vec<T> = matrix.mul_vec(x).into_iter().map(|v| two * v).collect();
    let mu = linalg::dot(x, &g);
    let mut worst = (sum(x) - T::one()).abs();
    for (&xi, &gi) in x.iter().zip(&g) {
        if bounded {
            worst = worst.max(mu - gi).max(xi * (gi - mu).abs()).max(-xi);
        } else {
            worst = worst.max((gi - mu).abs());
        }
    }
    worst
}

/// Clamps to the feasible set and zeroes entries below the snap tolerance.
fn clean_weights<T: Scalar>(x: &[T], bounded: bool) -> Vec<T> {
    let snap = T::tol(SNAP_TOL);
    let mut w: Vec<T> = x
        .iter()
        .map(|&v| {
            let v = if bounded { v.max(T::zero()) } else { v };
            if v.abs() < snap {
                T::zero()
            } else {
                v
            }
        })
        .collect();
    let total = sum(&w);
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Minimizer on the current free face: solves
/// `[2A_FF  −e; eᵀ 0] [p; μ] = [−g_F; 0]`.
fn face_step<T: Scalar>(a: &Matrix<T>, free: &[usize], g: &[T], ridge: T) -> Option<(Vec<T>, T)> {
    let f = free.len();
    let two = T::lit(2.0);
    let mut k = Matrix::zeros(f + 1, f + 1);
    let mut rhs = vec![T::zero(); f + 1];
    for (r, &i) in free.iter().enumerate() {
        for (c, &j) in free.iter().enumerate() {
            k[(r, c)] = two * a[(i, j)];
        }
        k[(r, r)] += ridge;
        k[(r, f)] = -T::one();
        k[(f, r)] = T::one();
        rhs[r] = -g[i];
    }
    let sol = linalg::lu_solve(&k, &rhs)?;
    let mu = sol[f];
    Some((sol[..f].to_vec(), mu))
}

pub fn solve<T: Scalar>(problem: &QpProblem<T>) -> Result<QpSolution<T>> {
    solve_with(problem, SolverOptions::default())
}

pub fn solve_with<T: Scalar>(
    problem: &QpProblem<T>,
    options: SolverOptions,
) -> Result<QpSolution<T>> {
    let n = problem.n();
    let bounded = !problem.allow_short;
    let max_iter = options.max_iterations.unwrap_or(10 * n * n);

    let max_diag = problem
        .matrix
        .diag()
        .into_iter()
        .fold(T::zero(), |a, b| a.max(b));
    if max_diag <= T::zero() {
        // PSD with zero diagonal means M = 0: every feasible point is optimal
        let weights = vec![T::one() / T::from_count(n); n];
        return Ok(QpSolution {
            objective: problem.objective(&weights),
            weights,
            kkt_residual: T::zero(),
            iterations: 0,
        });
    }
    // the argmin is invariant under positive scaling
    let a = problem.matrix.map(|v| v / max_diag);
    let two = T::lit(2.0);
    let step_tol = T::tol(1e-13);
    let mult_tol = T::tol(1e-11);
    let ridge = T::tol(1e-10);

    let mut x;
    let mut active = vec![false; n];
    if bounded {
        // start at the vertex of smallest variance, all other bounds active
        let start = (0..n).fold(
            0,
            |best, i| if a[(i, i)] < a[(best, best)] { i } else { best },
        );
        x = vec![T::zero(); n];
        x[start] = T::one();
        for (i, flag) in active.iter_mut().enumerate() {
            *flag = i != start;
        }
    } else {
        x = vec![T::one() / T::from_count(n); n];
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let g: Vec<T> = a.mul_vec(&x).into_iter().map(|v| two * v).collect();
        let free: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
        let (p, mu) =
            match face_step(&a, &free, &g, T::zero()).or_else(|| face_step(&a, &free, &g, ridge)) {
                Some(step) => step,
                None => break,
            };
        let step_norm = p.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if step_norm <= step_tol {
            // stationary on the face: release the most negative bound multiplier
            let release = (0..n).filter(|&i| active[i]).map(|i| (i, g[i] - mu)).fold(
                None,
                |best: Option<(usize, T)>, cur| match best {
                    Some(b) if b.1 <= cur.1 => Some(b),
                    _ => Some(cur),
                },
            );
            match release {
                Some((i, nu)) if nu < -mult_tol => active[i] = false,
                _ => {
                    converged = true;
                    break;
                }
            }
            continue;
        }
        let mut alpha = T::one();
        let mut blocking = None;
        if bounded {
            for (r, &i) in free.iter().enumerate() {
                if p[r] < T::zero() {
                    let ratio = -x[i] / p[r];
                    if ratio < alpha {
                        alpha = ratio;
                        blocking = Some(i);
                    }
                }
            }
        }
        for (r, &i) in free.iter().enumerate() {
            x[i] += alpha * p[r];
        }
        if let Some(b) = blocking {
            x[b] = T::zero();
            active[b] = true;
        }
    }

    let weights = clean_weights(&x, bounded);
    let residual = kkt_residual(&a, &weights, bounded);
    if !converged || residual > T::tol(KKT_TOL) {
        return Err(Error::NoConvergence {
            best: weights.iter().map(|v| v.as_f64()).collect(),
            residual: residual.as_f64(),
            iterations,
        });
    }
    Ok(QpSolution {
        objective: problem.objective(&weights),
        weights,
        kkt_residual: residual,
        iterations,
    })
}

/// x = M⁻¹e / (eᵀM⁻¹e), valid when short selling is allowed and M is positive definite.
pub fn solve_closed_form<T: Scalar>(problem: &QpProblem<T>) -> Result<QpSolution<T>> {
    if !problem.allow_short {
        return Err(Error::param(
            "allow_short",
            "closed form requires short selling",
        ));
    }
    let eig = linalg::symmetric_eigenvalues(&problem.matrix);
    let (lo, hi) = (eig[0], eig[eig.len() - 1]);
    let condition = if lo > T::zero() {
        (hi / lo).as_f64()
    } else {
        f64::INFINITY
    };
    if lo.is_nan() || lo <= T::lit(MIN_EIGEN_CLOSED_FORM) {
        return Err(Error::Singular { condition });
    }
    let mut m = problem.matrix.clone();
    m.symmetrize();
    let l = linalg::cholesky(&m).ok_or(Error::Singular { condition })?;
    let y = linalg::cholesky_solve(&l, &vec![T::one(); problem.n()]);
    let total = sum(&y);
    let weights: Vec<T> = y.iter().map(|&v| v / total).collect();
    let max_diag = m.diag().into_iter().fold(T::zero(), |a, b| a.max(b));
    let residual = kkt_residual(&m.map(|v| v / max_diag), &weights, false);
    Ok(QpSolution {
        objective: problem.objective(&weights),
        weights,
        kkt_residual: residual,
        iterations: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[Vec<f64>]) -> Matrix<f64> {
        Matrix::from_rows(rows)
    }

    fn random_pd(n: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
        let b = Matrix::from_fn(n, n + 2, |_, _| rng.random::<f64>() - 0.5);
        let mut a = b.matmul(&b.transpose());
        for i in 0..n {
            a[(i, i)] += 0.01;
        }
        a.symmetrize();
        a
    }

    fn random_simplex(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let e: Vec<f64> = (0..n)
            .map(|_| -rng.random::<f64>().max(1e-300).ln())
            .collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    #[test]
    fn identity_gives_equal_weights() {
        let sol = solve(&QpProblem::long_only(Matrix::<f64>::identity(2)).unwrap()).unwrap();
        assert!((sol.weights[0] - 0.5).abs() < 1e-12);
        assert!((sol.objective - 0.5).abs() < 1e-12);
    }

    #[test]
    fn diagonal_hand_kkt() {
        let sol =
            solve(&QpProblem::long_only(m(&[vec![1.0, 0.0], vec![0.0, 4.0]])).unwrap()).unwrap();
        assert!((sol.weights[0] - 0.8).abs() < 1e-12);
        assert!((sol.weights[1] - 0.2).abs() < 1e-12);
        assert!((sol.objective - 0.8).abs() < 1e-12);
        assert!(sol.kkt_residual <= 1e-6);
    }

    #[test]
    fn exchangeable_matrix() {
        let sol =
            solve(&QpProblem::long_only(m(&[vec![1.0, 0.9], vec![0.9, 1.0]])).unwrap()).unwrap();
        assert!((sol.weights[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn corner_solution_with_active_bound() {
        // asset 1 is a noisier copy of asset 0: all weight on asset 0
        let sol =
            solve(&QpProblem::long_only(m(&[vec![1.0, 1.0], vec![1.0, 2.0]])).unwrap()).unwrap();
        assert_eq!(sol.weights, vec![1.0, 0.0]);
    }

    #[test]
    fn closed_form_examples() {
        let p = QpProblem::new(Matrix::<f64>::identity(4), true).unwrap();
        let sol = solve_closed_form(&p).unwrap();
        assert!(sol.weights.iter().all(|w| (w - 0.25).abs() < 1e-15));
        let p = QpProblem::new(m(&[vec![1.0, 0.0], vec![0.0, 4.0]]), true).unwrap();
        let sol = solve_closed_form(&p).unwrap();
        assert!((sol.weights[0] - 0.8).abs() < 1e-15 && (sol.weights[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn closed_form_short_weights() {
        let p = QpProblem::new(m(&[vec![1.0, 1.2], vec![1.2, 2.0]]), true).unwrap();
        let cf = solve_closed_form(&p).unwrap();
        assert!(
            (cf.weights[0] - 4.0 / 3.0).abs() < 1e-12 && (cf.weights[1] + 1.0 / 3.0).abs() < 1e-12
        );
        let iterative = solve(&p).unwrap();
        assert!((iterative.weights[0] - 4.0 / 3.0).abs() < 1e-10);
        let long = solve(&QpProblem::long_only(p.matrix().clone()).unwrap()).unwrap();
        assert_eq!(long.weights, vec![1.0, 0.0]);
    }

    #[test]
    fn closed_form_rejects_singular_and_long_only() {
        let p = QpProblem::new(m(&[vec![1.0, 1.0], vec![1.0, 1.0]]), true).unwrap();
        assert!(matches!(solve_closed_form(&p), Err(Error::Singular { .. })));
        let p = QpProblem::long_only(Matrix::<f64>::identity(2)).unwrap();
        assert!(solve_closed_form(&p).is_err());
    }

    #[test]
    fn invalid_problems_rejected() {
        assert!(matches!(
            QpProblem::long_only(m(&[vec![1.0, 0.5], vec![0.4, 1.0]])),
            Err(Error::NotSymmetric { .. })
        ));
        assert!(matches!(
            QpProblem::long_only(m(&[vec![1.0, 2.0], vec![2.0, 1.0]])),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn singular_psd_returns_optimal_objective() {
        // rank one: any weights with x0 + x1 = 1 give the same objective
        let sol =
            solve(&QpProblem::long_only(m(&[vec![1.0, 1.0], vec![1.0, 1.0]])).unwrap()).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-12);
        let zero = solve(&QpProblem::long_only(Matrix::<f64>::zeros(3, 3)).unwrap()).unwrap();
        assert_eq!(zero.objective, 0.0);
    }

    #[test]
    fn iteration_budget_exhaustion_reports_feasible_best() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = QpProblem::long_only(random_pd(6, &mut rng)).unwrap();
        match solve_with(
            &p,
            SolverOptions {
                max_iterations: Some(1),
            },
        ) {
            Err(Error::NoConvergence { best, .. }) => {
                assert!((best.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(best.iter().all(|&w| w >= 0.0));
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn single_precision_solve() {
        let a: Matrix<f32> = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 4.0]]);
        let sol = solve(&QpProblem::long_only(a).unwrap()).unwrap();
        assert!((sol.weights[0] - 0.8).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn scale_invariance(seed in 0u64..10_000, alpha in 1e-4f64..1e4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_pd(5, &mut rng);
            let s1 = solve(&QpProblem::long_only(a.clone()).unwrap()).unwrap();
            let s2 = solve(&QpProblem::long_only(a.scale(alpha)).unwrap()).unwrap();
            for (u, v) in s1.weights.iter().zip(&s2.weights) {
                prop_assert!((u - v).abs() < 1e-9);
            }
            prop_assert!((s2.objective - alpha * s1.objective).abs() <= 1e-9 * alpha.max(1.0));
        }

        #[test]
        fn beats_random_feasible_points(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..8);
            let p = QpProblem::long_only(random_pd(n, &mut rng)).unwrap();
            let sol = solve(&p).unwrap();
            prop_assert!((sol.weights.iter().sum::<f64>() - 1.0).abs() < 1e-8);
            prop_assert!(sol.weights.iter().all(|&w| (-1e-10..=1.0 + 1e-10).contains(&w)));
            prop_assert!(sol.kkt_residual <= 1e-6);
            for _ in 0..10_000 {
                let x = random_simplex(n, &mut rng);
                prop_assert!(sol.objective <= p.objective(&x) + 1e-12);
            }
        }

        #[test]
        fn unbounded_solve_matches_closed_form(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..10);
            let p = QpProblem::new(random_pd(n, &mut rng), true).unwrap();
            let a = solve(&p).unwrap();
            let b = solve_closed_form(&p).unwrap();
            for (u, v) in a.weights.iter().zip(&b.weights) {
                prop_assert!((u - v).abs() < 1e-6);
            }
        }
    }
}
