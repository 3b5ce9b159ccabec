//! Small dense float solvers shared by the Newton iterations, the heuristic
//! conjugacy search, and the quadrature of integral terms.

/// Solves `a * x = b` by Gaussian elimination with partial pivoting.
/// Returns None when the matrix is numerically singular.
pub fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().map(|row| row.clone()).collect();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let (pivot, pval) = (col..n)
            .map(|i| (i, m[i][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))?;
        if pval < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for i in col + 1..n {
            let f = m[i][col] / m[col][col];
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                m[i][j] -= f * m[col][j];
            }
            rhs[i] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for j in i + 1..n {
            s -= m[i][j] * x[j];
        }
        x[i] = s / m[i][i];
    }
    Some(x)
}

fn least_squares(cols: &[Vec<f64>], z: &[f64]) -> Option<Vec<f64>> {
    let m = cols.len();
    // Normal equations; fine at these tiny sizes.
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    for i in 0..m {
        for j in 0..m {
            a[i][j] = cols[i].iter().zip(&cols[j]).map(|(x, y)| x * y).sum();
        }
        a[i][i] += 1e-14;
        b[i] = cols[i].iter().zip(z).map(|(x, y)| x * y).sum();
    }
    solve_dense(&a, &b)
}

fn residual_sq(cols: &[Vec<f64>], e: &[f64], z: &[f64]) -> f64 {
    let dim = z.len();
    let mut r = 0.0;
    for d in 0..dim {
        let fit: f64 = cols.iter().zip(e).map(|(c, x)| c[d] * x).sum();
        let diff = fit - z[d];
        r += diff * diff;
    }
    r
}

/// min ||cols * e - z||^2 over e >= 0, by enumerating active sets. Column
/// counts stay below ~10 here so the 2^m enumeration is cheap and exact
/// enough for a feasibility probe.
pub fn nnls(cols: &[Vec<f64>], z: &[f64]) -> (Vec<f64>, f64) {
    let m = cols.len();
    let mut best = (vec![0.0; m], residual_sq(cols, &vec![0.0; m], z));
    for mask in 1u32..(1u32 << m) {
        let subset: Vec<usize> = (0..m).filter(|&j| mask >> j & 1 == 1).collect();
        let sub: Vec<Vec<f64>> = subset.iter().map(|&j| cols[j].clone()).collect();
        let Some(sol) = least_squares(&sub, z) else { continue };
        if sol.iter().any(|&x| x < -1e-12) {
            continue;
        }
        let mut e = vec![0.0; m];
        for (k, &j) in subset.iter().enumerate() {
            e[j] = sol[k].max(0.0);
        }
        let r = residual_sq(cols, &e, z);
        if r < best.1 {
            best = (e, r);
        }
    }
    best
}

/// Squared best-fit residual of the nonnegative problem.
pub fn nnls_residual(cols: &[Vec<f64>], z: &[f64]) -> f64 {
    nnls(cols, z).1
}

/// 16-point Gauss-Legendre nodes and weights on [-1, 1].
pub const GAUSS_LEGENDRE_16: [(f64, f64); 16] = [
    (-0.9894009349916499, 0.0271524594117541),
    (-0.9445750230732326, 0.0622535239386479),
    (-0.8656312023878318, 0.0951585116824928),
    (-0.7554044083550030, 0.1246289712555339),
    (-0.6178762444026438, 0.1495959888165767),
    (-0.4580167776572274, 0.1691565193950025),
    (-0.2816035507792589, 0.1826034150449236),
    (-0.0950125098376374, 0.1894506104550685),
    (0.0950125098376374, 0.1894506104550685),
    (0.2816035507792589, 0.1826034150449236),
    (0.4580167776572274, 0.1691565193950025),
    (0.6178762444026438, 0.1495959888165767),
    (0.7554044083550030, 0.1246289712555339),
    (0.8656312023878318, 0.0951585116824928),
    (0.9445750230732326, 0.0622535239386479),
    (0.9894009349916499, 0.0271524594117541),
];

/// Integrates `f` over [a, b] with 16-node Gauss-Legendre.
pub fn integrate_gl16(a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    GAUSS_LEGENDRE_16.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_solve_small() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = solve_dense(&a, &[5.0, 10.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn nnls_clamps_to_cone() {
        // z = -c1 has best nonnegative fit e = 0 against a single column c1.
        let cols = vec![vec![1.0, 0.0]];
        let (e, r) = nnls(&cols, &[-1.0, 0.0]);
        assert_eq!(e, vec![0.0]);
        assert!((r - 1.0).abs() < 1e-12);
        // Feasible target is matched exactly.
        let cols2 = vec![vec![1.0, 1.0], vec![1.0, 0.0]];
        let (e2, r2) = nnls(&cols2, &[3.0, 2.0]);
        assert!(r2 < 1e-20);
        assert!((e2[0] - 2.0).abs() < 1e-9 && (e2[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gl16_is_exact_on_high_degree_polynomials() {
        // Degree 31 is the exactness limit; x^20 over [0,1] = 1/21.
        let v = integrate_gl16(0.0, 1.0, |x| x.powi(20));
        assert!((v - 1.0 / 21.0).abs() < 1e-15);
        let w = integrate_gl16(-2.0, 3.0, |x| 3.0 * x * x);
        assert!((w - (27.0 + 8.0)).abs() < 1e-12);
    }
}
