//! Minimal dense square-matrix helpers (row-major `Vec<R>` of length n*n).

use crate::scalar::Real;

pub(crate) fn identity<R: Real>(n: usize) -> Vec<R> {
    let mut m = vec![R::ZERO; n * n];
    for i in 0..n {
        m[i * n + i] = R::ONE;
    }
    m
}

/// `a * b` for square row-major matrices.
pub(crate) fn mat_mul<R: Real>(a: &[R], b: &[R], n: usize) -> Vec<R> {
    let mut out = vec![R::ZERO; n * n];
    for i in 0..n {
        let out_row = &mut out[i * n..(i + 1) * n];
        for m in 0..n {
            let aim = a[i * n + m];
            if aim == R::ZERO {
                continue;
            }
            let b_row = &b[m * n..(m + 1) * n];
            for (o, &bmj) in out_row.iter_mut().zip(b_row) {
                *o = *o + aim * bmj;
            }
        }
    }
    out
}

/// `[A^0, A^1, ..., A^max]`, each power formed as `A * A^(p-1)`.
pub(crate) fn powers<R: Real>(a: &[R], n: usize, max: usize) -> Vec<Vec<R>> {
    let mut out = Vec::with_capacity(max + 1);
    out.push(identity(n));
    for p in 1..=max {
        let next = mat_mul(a, &out[p - 1], n);
        out.push(next);
    }
    out
}

/// `m * v` (column vector).
pub(crate) fn mat_vec<R: Real>(m: &[R], v: &[R], n: usize) -> Vec<R> {
    (0..n)
        .map(|i| {
            m[i * n..(i + 1) * n]
                .iter()
                .zip(v)
                .map(|(&a, &b)| a * b)
                .sum()
        })
        .collect()
}

/// `v * m` (row vector).
pub(crate) fn vec_mat<R: Real>(v: &[R], m: &[R], n: usize) -> Vec<R> {
    let mut out = vec![R::ZERO; n];
    for (i, &vi) in v.iter().enumerate() {
        if vi == R::ZERO {
            continue;
        }
        for (o, &mij) in out.iter_mut().zip(&m[i * n..(i + 1) * n]) {
            *o = *o + vi * mij;
        }
    }
    out
}

/// Column indices of the nonzero entries of each row.
pub(crate) fn row_supports<R: Real>(m: &[R], n: usize) -> Vec<Vec<u32>> {
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| m[i * n + j] != R::ZERO)
                .map(|j| j as u32)
                .collect()
        })
        .collect()
}
