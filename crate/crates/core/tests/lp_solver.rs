use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rmab::lp::{simplex_solve, LinearProgram, LpSolution, LpStatus};

/// Solves the square system `a x = b` by Gaussian elimination with partial pivoting.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut out = subsets(n - 1, k);
    for mut s in subsets(n - 1, k - 1) {
        s.push(n - 1);
        out.push(s);
    }
    out
}

/// Best objective over all basic feasible solutions (rows assumed independent).
fn vertex_enumeration(lp: &LinearProgram) -> Option<f64> {
    let m = lp.num_rows();
    let mut best: Option<f64> = None;
    for basis in subsets(lp.num_vars(), m) {
        let a: Vec<Vec<f64>> = (0..m).map(|i| basis.iter().map(|&j| lp.rows[i][j]).collect()).collect();
        let Some(xb) = solve_square(a, lp.rhs.clone()) else {
            continue;
        };
        if xb.iter().any(|&x| x < -1e-9) {
            continue;
        }
        let value: f64 = basis.iter().zip(&xb).map(|(&j, x)| lp.objective[j] * x).sum();
        best = Some(best.map_or(value, |b: f64| b.max(value)));
    }
    best
}

fn assert_certified(lp: &LinearProgram, sol: &LpSolution) {
    assert_eq!(sol.status, LpStatus::Optimal);
    assert!(sol.primal_residual(lp) <= 1e-8);
    assert!(sol.primal.iter().all(|&x| x >= -1e-10));
    assert!((sol.objective - sol.dual_objective(lp)).abs() <= 1e-7);
    assert!(sol.complementary_slackness(lp) <= 1e-7);
    for j in 0..lp.num_vars() {
        let aty: f64 = lp.rows.iter().zip(&sol.dual).map(|(r, y)| r[j] * y).sum();
        assert!(lp.objective[j] - aty <= 1e-8, "reduced cost of column {j} is positive");
    }
}

#[test]
fn random_lps_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..200 {
        let n = 6;
        let mut rows: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        // a strictly positive row keeps the feasible set bounded
        rows.push((0..n).map(|_| rng.random_range(0.5..1.5)).collect());
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let rhs: Vec<f64> = rows
            .iter()
            .map(|r| r.iter().zip(&x0).map(|(a, x)| a * x).sum())
            .collect();
        let objective: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lp = LinearProgram::new(objective, rows, rhs).unwrap();
        let sol = simplex_solve(&lp);
        assert_certified(&lp, &sol);
        let oracle = vertex_enumeration(&lp).expect("feasible by construction");
        assert!(
            (sol.objective - oracle).abs() <= 1e-8,
            "simplex {} vs vertices {oracle}",
            sol.objective
        );
    }
}

#[test]
fn beale_cycling_instance_terminates() {
    let lp = LinearProgram::new(
        vec![0.0, 0.0, 0.0, 0.75, -20.0, 0.5, -6.0],
        vec![
            vec![1.0, 0.0, 0.0, 0.25, -8.0, -1.0, 9.0],
            vec![0.0, 1.0, 0.0, 0.5, -12.0, -0.5, 3.0],
            vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0],
        ],
        vec![0.0, 0.0, 1.0],
    )
    .unwrap();
    let sol = simplex_solve(&lp);
    assert_certified(&lp, &sol);
    assert!((sol.objective - 1.25).abs() < 1e-12);
    assert!((sol.objective - vertex_enumeration(&lp).unwrap()).abs() < 1e-12);
}

#[test]
fn marshall_suurballe_cycling_instance_terminates() {
    let lp = LinearProgram::new(
        vec![10.0, -57.0, -9.0, -24.0, 0.0, 0.0, 0.0],
        vec![
            vec![0.5, -5.5, -2.5, 9.0, 1.0, 0.0, 0.0],
            vec![0.5, -1.5, -0.5, 1.0, 0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        ],
        vec![0.0, 0.0, 1.0],
    )
    .unwrap();
    let sol = simplex_solve(&lp);
    assert_certified(&lp, &sol);
    assert!((sol.objective - vertex_enumeration(&lp).unwrap()).abs() < 1e-12);
    assert!((sol.objective - 1.0).abs() < 1e-12);
}

#[test]
fn solves_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rows: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..8).map(|_| rng.random_range(0.1..1.0)).collect())
        .collect();
    let rhs: Vec<f64> = rows.iter().map(|r| r.iter().sum()).collect();
    let lp = LinearProgram::new(vec![1.0, -1.0, 0.5, 0.2, 0.0, 0.3, -0.4, 0.9], rows, rhs).unwrap();
    let first = simplex_solve(&lp);
    assert!(first.is_optimal());
    assert_eq!(first, simplex_solve(&lp));
}
