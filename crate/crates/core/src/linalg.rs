//! Dense symmetric linear algebra: eigen-decomposition and Cholesky.
//!
//! The eigensolver reduces to tridiagonal form with Householder reflections and
//! then runs implicit QL with Wilkinson shifts. Cholesky is blocked so that the
//! trailing updates go through `ndarray`'s matrix product.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Relative asymmetry accepted by the symmetric routines.
pub const SYMMETRY_TOL: f64 = 1e-9;
const CHOL_BLOCK: usize = 96;

fn check_square(a: &ArrayView2<f64>) -> Result<usize> {
    let (r, c) = a.dim();
    if r != c {
        return Err(Error::DimensionMismatch { expected: r, got: c });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("matrix has non-finite entries".into()));
    }
    Ok(r)
}

/// Largest `|a_ij - a_ji|` relative to the largest entry.
pub fn asymmetry(a: &ArrayView2<f64>) -> f64 {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst / scale
}

fn check_symmetric(a: &ArrayView2<f64>) -> Result<usize> {
    let n = check_square(a)?;
    let asym = asymmetry(a);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(n)
}

/// Eigenvalues in ascending order and the matching orthonormal eigenvectors as
/// columns.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

/// Full eigen-decomposition of a symmetric matrix.
pub fn sym_eig(a: ArrayView2<f64>) -> Result<SymEig> {
    let n = check_symmetric(&a)?;
    let (values, vectors) = decompose(&a, n, true);
    Ok(SymEig { values, vectors: vectors.expect("vectors requested") })
}

/// Eigenvalues only, ascending.
pub fn sym_eigenvalues(a: ArrayView2<f64>) -> Result<Array1<f64>> {
    let n = check_symmetric(&a)?;
    Ok(decompose(&a, n, false).0)
}

/// Largest absolute eigenvalue, the spectral norm of a symmetric matrix.
pub fn sym_spectral_norm(a: ArrayView2<f64>) -> Result<f64> {
    let ev = sym_eigenvalues(a)?;
    Ok(ev.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

fn decompose(a: &ArrayView2<f64>, n: usize, want_vectors: bool) -> (Array1<f64>, Option<Array2<f64>>) {
    if n == 0 {
        return (Array1::zeros(0), want_vectors.then(|| Array2::zeros((0, 0))));
    }
    // symmetrise from both triangles
    let mut v = Array2::from_shape_fn((n, n), |(i, j)| 0.5 * (a[[i, j]] + a[[j, i]]));
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut v, &mut d, &mut e);
    implicit_ql(&mut d, &mut e, if want_vectors { Some(&mut v) } else { None });

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let values = Array1::from_iter(order.iter().map(|&i| d[i]));
    let vectors = want_vectors.then(|| v.select(Axis(1), &order));
    (values, vectors)
}

/// Householder reduction. On return `d` holds the diagonal, `e[1..]` the
/// sub-diagonal and `v` the accumulated orthogonal transform.
fn tridiagonalize(v: &mut Array2<f64>, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[[n - 1, j]];
    }
    for i in (1..n).rev() {
        let scale: f64 = d[..i].iter().map(|x| x.abs()).sum();
        let mut h = 0.0;
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[[i - 1, j]];
                v[[i, j]] = 0.0;
                v[[j, i]] = 0.0;
            }
        } else {
            for x in d[..i].iter_mut() {
                *x /= scale;
                h += *x * *x;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            e[..i].iter_mut().for_each(|x| *x = 0.0);
            for j in 0..i {
                f = d[j];
                v[[j, i]] = f;
                g = e[j] + v[[j, j]] * f;
                for k in j + 1..i {
                    g += v[[k, j]] * d[k];
                    e[k] += v[[k, j]] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[[k, j]] -= f * e[k] + g * d[k];
                }
                d[j] = v[[i - 1, j]];
                v[[i, j]] = 0.0;
            }
        }
        d[i] = h;
    }

    // accumulate transformations
    for i in 0..n - 1 {
        v[[n - 1, i]] = v[[i, i]];
        v[[i, i]] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[[k, i + 1]] / h;
            }
            for j in 0..=i {
                let g: f64 = (0..=i).map(|k| v[[k, i + 1]] * v[[k, j]]).sum();
                for k in 0..=i {
                    v[[k, j]] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[[k, i + 1]] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[[n - 1, j]];
        v[[n - 1, j]] = 0.0;
    }
    v[[n - 1, n - 1]] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL on the tridiagonal `(d, e)`; rotations are applied to `v` when given.
fn implicit_ql(d: &mut [f64], e: &mut [f64], mut v: Option<&mut Array2<f64>>) {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            loop {
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for x in d[l + 2..].iter_mut() {
                    *x -= h;
                }
                f += h;

                p = d[m];
                let (mut c, mut c2, mut c3) = (1.0, 1.0, 1.0);
                let el1 = e[l + 1];
                let (mut s, mut s2) = (0.0, 0.0);
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(v) = v.as_deref_mut() {
                        for k in 0..n {
                            let t = v[[k, i + 1]];
                            v[[k, i + 1]] = s * v[[k, i]] + c * t;
                            v[[k, i]] = c * v[[k, i]] - s * t;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
}

/// Lower Cholesky factor `L` with `A = L L^T`.
pub fn cholesky(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = check_symmetric(&a)?;
    let mut l = a.to_owned();
    let mut k = 0;
    while k < n {
        let b = CHOL_BLOCK.min(n - k);
        // factor the diagonal block
        for j in k..k + b {
            let mut diag = l[[j, j]];
            for p in k..j {
                diag -= l[[j, p]] * l[[j, p]];
            }
            if !(diag > 0.0) {
                return Err(Error::NotPositiveDefinite);
            }
            let diag = diag.sqrt();
            l[[j, j]] = diag;
            for i in j + 1..k + b {
                let mut v = l[[i, j]];
                for p in k..j {
                    v -= l[[i, p]] * l[[j, p]];
                }
                l[[i, j]] = v / diag;
            }
        }
        if k + b < n {
            // panel below: L21 = A21 L11^{-T}
            let l11 = l.slice(s![k..k + b, k..k + b]).to_owned();
            let mut panel = l.slice_mut(s![k + b.., k..k + b]);
            for mut row in panel.rows_mut() {
                for j in 0..b {
                    let mut v = row[j];
                    for p in 0..j {
                        v -= row[p] * l11[[j, p]];
                    }
                    row[j] = v / l11[[j, j]];
                }
            }
            let l21 = l.slice(s![k + b.., k..k + b]).to_owned();
            let update = l21.dot(&l21.t());
            let mut trailing = l.slice_mut(s![k + b.., k + b..]);
            trailing -= &update;
        }
        k += b;
    }
    for i in 0..n {
        for j in i + 1..n {
            l[[i, j]] = 0.0;
        }
    }
    Ok(l)
}

/// Solve `L X = B` for lower-triangular `L`, column by column of `B`.
pub fn solve_lower(l: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for mut col in x.columns_mut() {
        for i in 0..n {
            let mut v = col[i];
            for p in 0..i {
                v -= l[[i, p]] * col[p];
            }
            col[i] = v / l[[i, i]];
        }
    }
    x
}

/// Solve `A x = b` given the Cholesky factor of `A`.
pub fn cholesky_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = b.clone();
    for i in 0..n {
        let mut v = y[i];
        for p in 0..i {
            v -= l[[i, p]] * y[p];
        }
        y[i] = v / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut v = y[i];
        for p in i + 1..n {
            v -= l[[p, i]] * y[p];
        }
        y[i] = v / l[[i, i]];
    }
    y
}

/// `L^{-1} A L^{-T}` for symmetric `A`, symmetrised.
pub fn whiten(l: &Array2<f64>, a: &Array2<f64>) -> Array2<f64> {
    let x = solve_lower(l, a);
    let m = solve_lower(l, &x.t().to_owned());
    let mt = m.t().to_owned();
    (m + mt) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn diagonal_spectrum() {
        let a = array![[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -2.0]];
        let e = sym_eig(a.view()).unwrap();
        assert_eq!(e.values.to_vec(), vec![-2.0, 1.0, 3.0]);
    }

    #[test]
    fn identity_spectrum() {
        let e = sym_eig(Array2::<f64>::eye(5).view()).unwrap();
        assert!(e.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn rejects_asymmetric() {
        let a = array![[1.0, 2.0], [0.0, 1.0]];
        assert!(matches!(sym_eig(a.view()), Err(Error::NotSymmetric(_))));
        assert!(matches!(cholesky(a.view()), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn cholesky_small() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let l = cholesky(a.view()).unwrap();
        assert!((l[[0, 0]] - 2.0).abs() < 1e-15);
        assert!((l[[1, 0]] - 1.0).abs() < 1e-15);
        assert!((l[[1, 1]] - 2f64.sqrt()).abs() < 1e-15);
        let x = cholesky_solve(&l, &array![2.0, 1.0]);
        assert!((a.dot(&x) - array![2.0, 1.0]).iter().all(|v| v.abs() < 1e-14));
        assert!(matches!(cholesky(array![[1.0, 2.0], [2.0, 1.0]].view()), Err(Error::NotPositiveDefinite)));
    }
}
