//! Small dense linear-algebra helpers shared by the regression backends.
//!
//! Everything here operates on row-major `Vec<f64>` buffers. Sizes are the
//! modest ones that arise from normal equations and kernel Gram matrices, so
//! plain triple loops are adequate.

/// In-place lower Cholesky factorization of a symmetric matrix stored
/// row-major in `a` (n x n). On success `a` holds L in its lower triangle.
///
/// Fails if a pivot drops below `tol` times the largest initial diagonal,
/// which is how rank deficiency of unregularized normal equations shows up.
pub fn cholesky_in_place(a: &mut [f64], n: usize, tol: f64) -> Result<(), usize> {
    debug_assert_eq!(a.len(), n * n);
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0f64, f64::max).max(1.0);
    let floor = tol * scale;
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= floor {
            return Err(j);
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Ok(())
}

/// Solves L L^T x = b given the lower factor from [`cholesky_in_place`].
pub fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(b.len(), n);
    let mut x = b.to_vec();
    // forward: L y = b
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    // backward: L^T x = y
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Builds the weighted normal equations for a design with implicit leading
/// intercept column: returns (A^T W A, A^T W y) where A = [1 | X].
///
/// `x` is row-major n x d, `w` is `None` for unit weights. The output matrix
/// has side d + 1.
pub fn weighted_normal_equations(
    x: &[f64],
    d: usize,
    y: &[f64],
    w: Option<&[f64]>,
) -> (Vec<f64>, Vec<f64>) {
    let n = y.len();
    let p = d + 1;
    let mut m = vec![0.0; p * p];
    let mut v = vec![0.0; p];
    let mut row = vec![0.0; p];
    for i in 0..n {
        row[0] = 1.0;
        row[1..].copy_from_slice(&x[i * d..(i + 1) * d]);
        let wi = w.map_or(1.0, |w| w[i]);
        for a in 0..p {
            let wa = wi * row[a];
            v[a] += wa * y[i];
            for b in a..p {
                m[a * p + b] += wa * row[b];
            }
        }
    }
    // mirror the upper triangle
    for a in 0..p {
        for b in (a + 1)..p {
            m[b * p + a] = m[a * p + b];
        }
    }
    (m, v)
}

/// Median of a slice, by sorting a copy. Returns the midpoint average for
/// even lengths.
pub fn median(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Euclidean distance between two equal-length slices.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_spd_system() {
        // A = [[4,2],[2,3]], b = [2,1] -> x = [0.5, 0]
        let mut a = vec![4.0, 2.0, 2.0, 3.0];
        cholesky_in_place(&mut a, 2, 1e-12).unwrap();
        let x = cholesky_solve(&a, 2, &[2.0, 1.0]);
        assert!((x[0] - 0.5).abs() < 1e-12);
        assert!(x[1].abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_singular() {
        let mut a = vec![1.0, 1.0, 1.0, 1.0];
        assert!(cholesky_in_place(&mut a, 2, 1e-12).is_err());
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
