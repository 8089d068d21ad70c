//! Dense complex least squares for the small systems that appear in
//! equivalence searches (a handful of unknowns).

use num_complex::Complex64;

/// Solves `a x ≈ b` in the least-squares sense through the normal equations.
/// `a` is row-major with `rows` rows. Returns the solution and the residual
/// max-norm, or `None` when the normal matrix is singular.
pub fn lstsq(a: &[Complex64], rows: usize, cols: usize, b: &[Complex64]) -> Option<(Vec<Complex64>, f64)> {
    assert_eq!(a.len(), rows * cols);
    assert_eq!(b.len(), rows);
    if cols == 0 {
        let r = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
        return Some((Vec::new(), r));
    }
    let mut n = vec![Complex64::new(0.0, 0.0); cols * cols];
    let mut rhs = vec![Complex64::new(0.0, 0.0); cols];
    for i in 0..cols {
        for j in 0..cols {
            let mut s = Complex64::new(0.0, 0.0);
            for r in 0..rows {
                s += a[r * cols + i].conj() * a[r * cols + j];
            }
            n[i * cols + j] = s;
        }
        let mut s = Complex64::new(0.0, 0.0);
        for r in 0..rows {
            s += a[r * cols + i].conj() * b[r];
        }
        rhs[i] = s;
    }
    // Tikhonov-free pseudo-solve: drop directions with negligible pivots so
    // rank-deficient systems still return a minimal consistent answer.
    let x = solve_pivoted(&mut n, &mut rhs, cols)?;
    let mut res = 0.0f64;
    for r in 0..rows {
        let mut s = -b[r];
        for c in 0..cols {
            s += a[r * cols + c] * x[c];
        }
        res = res.max(s.norm());
    }
    Some((x, res))
}

fn solve_pivoted(m: &mut [Complex64], rhs: &mut [Complex64], n: usize) -> Option<Vec<Complex64>> {
    let scale = m.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let eps = 1e-13 * scale.max(1e-300);
    let mut pivot_col = vec![usize::MAX; n];
    let mut row = 0;
    for col in 0..n {
        let (best, mag) = (row..n)
            .map(|r| (r, m[r * n + col].norm()))
            .fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if row >= n || mag <= eps {
            continue;
        }
        for c in 0..n {
            m.swap(row * n + c, best * n + c);
        }
        rhs.swap(row, best);
        let p = m[row * n + col];
        for r in 0..n {
            if r != row {
                let f = m[r * n + col] / p;
                if f.norm() != 0.0 {
                    for c in 0..n {
                        let v = m[row * n + c];
                        m[r * n + c] -= f * v;
                    }
                    let v = rhs[row];
                    rhs[r] -= f * v;
                }
            }
        }
        pivot_col[row] = col;
        row += 1;
    }
    if row == 0 && scale > 0.0 {
        return None;
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for r in 0..row {
        let c = pivot_col[r];
        x[c] = rhs[r] / m[r * n + c];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn square_system() {
        let a = [c(2.0, 0.0), c(1.0, 0.0), c(0.0, 1.0), c(3.0, 0.0)];
        let x_true = [c(1.0, -1.0), c(0.5, 2.0)];
        let b: Vec<_> = (0..2).map(|r| a[2 * r] * x_true[0] + a[2 * r + 1] * x_true[1]).collect();
        let (x, res) = lstsq(&a, 2, 2, &b).unwrap();
        assert!(res < 1e-12);
        for i in 0..2 {
            assert!((x[i] - x_true[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn rank_deficient_consistent() {
        let a = [c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)];
        let b = [c(3.0, 0.0), c(6.0, 0.0)];
        let (_, res) = lstsq(&a, 2, 2, &b).unwrap();
        assert!(res < 1e-10);
    }

    #[test]
    fn inconsistent_reports_residual() {
        let a = [c(0.0, 0.0)];
        let b = [c(1.0, 0.0)];
        let (_, res) = lstsq(&a, 1, 1, &b).unwrap();
        assert!((res - 1.0).abs() < 1e-12);
    }
}
