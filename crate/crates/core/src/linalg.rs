//! Small dense kernels: one-sided Jacobi SVD and a Cholesky solver.

use crate::scalar::Real;

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Orthogonalizes the columns of `cols` in place by plane rotations
/// (Hestenes one-sided Jacobi). Each rotation is mirrored into `basis`
/// when given, so `A · basis = cols` holds throughout. On return column norms
/// are the singular values of the original matrix.
pub(crate) fn one_sided_jacobi<T: Real>(cols: &mut [Vec<T>], mut basis: Option<&mut [Vec<T>]>) {
    const MAX_SWEEPS: usize = 80;
    let p = cols.len();
    if p < 2 {
        return;
    }
    let m = cols[0].len();
    let tol = T::epsilon() * T::from_usize_lossy(m.max(1));
    let mut norms: Vec<T> = cols.iter().map(|c| dot(c, c)).collect();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..p - 1 {
            for j in i + 1..p {
                let alpha = norms[i];
                let beta = norms[j];
                let gamma = dot(&cols[i], &cols[j]);
                if gamma == T::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let two = T::lit(2.0);
                let zeta = (beta - alpha) / (two * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(cols, i, j, c, s);
                if let Some(b) = basis.as_deref_mut() {
                    rotate(b, i, j, c, s);
                }
                norms[i] = dot(&cols[i], &cols[i]);
                norms[j] = dot(&cols[j], &cols[j]);
            }
        }
        if !rotated {
            break;
        }
    }
}

fn rotate<T: Real>(cols: &mut [Vec<T>], i: usize, j: usize, c: T, s: T) {
    let (head, tail) = cols.split_at_mut(j);
    let (ci, cj) = (&mut head[i], &mut tail[0]);
    for (a, b) in ci.iter_mut().zip(cj.iter_mut()) {
        let x = *a;
        let y = *b;
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major, n × n).
/// Returns `None` when `A` is not numerically positive definite.
pub(crate) fn cholesky_solve<T: Real>(a: &[T], b: &[T]) -> Option<Vec<T>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= T::zero() || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_recovers_singular_values_of_a_diagonal_scaled_rotation() {
        // A = R diag(3, 1) with R a 30 degree rotation: singular values 3 and 1.
        let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
        let mut cols = vec![vec![3.0 * c, 3.0 * s], vec![-s, c]];
        let mut basis = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        one_sided_jacobi(&mut cols, Some(&mut basis));
        let mut sv: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((sv[0] - 3.0).abs() < 1e-12 && (sv[1] - 1.0).abs() < 1e-12);
        assert!(dot(&basis[0], &basis[1]).abs() < 1e-14);
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let x = cholesky_solve(&a, &[2.0, 1.0]).unwrap();
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0f64).abs() < 1e-14);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0f64).abs() < 1e-14);
        assert!(cholesky_solve(&[0.0f64], &[1.0]).is_none());
    }
}
