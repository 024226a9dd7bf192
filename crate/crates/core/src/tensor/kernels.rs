//! Dense matrix kernels. Row-major throughout; every reduction runs in a
//! fixed order so results are bit-reproducible.

/// `out[n×m] += a[n×k] · b[k×m]`
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    debug_assert_eq!(out.len(), n * m);
    for i in 0..n {
        let a_row = &a[i * k..(i + 1) * k];
        let o_row = &mut out[i * m..(i + 1) * m];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * m..(p + 1) * m];
            for (o, &bv) in o_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out[n×k] += g[n×m] · bᵀ` where `b` is `k×m`.
pub(crate) fn matmul_bt_acc(g: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    debug_assert_eq!(g.len(), n * m);
    debug_assert_eq!(b.len(), k * m);
    debug_assert_eq!(out.len(), n * k);
    for i in 0..n {
        let g_row = &g[i * m..(i + 1) * m];
        let o_row = &mut out[i * k..(i + 1) * k];
        for (p, o) in o_row.iter_mut().enumerate() {
            *o += dot(g_row, &b[p * m..(p + 1) * m]);
        }
    }
}

/// `out[k×m] += aᵀ · g` where `a` is `n×k` and `g` is `n×m`.
pub(crate) fn matmul_at_acc(a: &[f64], g: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(g.len(), n * m);
    debug_assert_eq!(out.len(), k * m);
    for i in 0..n {
        let a_row = &a[i * k..(i + 1) * k];
        let g_row = &g[i * m..(i + 1) * m];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let o_row = &mut out[p * m..(p + 1) * m];
            for (o, &gv) in o_row.iter_mut().zip(g_row) {
                *o += av * gv;
            }
        }
    }
}

/// Four-lane dot product; the lane split is fixed so the result is deterministic.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Column sums of an `n×m` matrix, accumulated into `out`.
pub(crate) fn col_sum_acc(g: &[f64], out: &mut [f64], n: usize, m: usize) {
    for i in 0..n {
        for (o, &v) in out.iter_mut().zip(&g[i * m..(i + 1) * m]) {
            *o += v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                for p in 0..k {
                    out[i * m + j] += a[i * k + p] * b[p * m + j];
                }
            }
        }
        out
    }

    #[test]
    fn kernels_agree_with_triple_loop() {
        let (n, k, m) = (5, 7, 3);
        let a: Vec<f64> = (0..n * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * m).map(|i| (i as f64 * 0.91).cos()).collect();
        let mut out = vec![0.0; n * m];
        matmul_acc(&a, &b, &mut out, n, k, m);
        for (x, y) in out.iter().zip(naive(&a, &b, n, k, m)) {
            assert!((x - y).abs() < 1e-12);
        }

        // (a·b)·bᵀ through matmul_bt against the explicit transpose.
        let mut bt = vec![0.0; m * k];
        for p in 0..k {
            for j in 0..m {
                bt[j * k + p] = b[p * m + j];
            }
        }
        let mut got = vec![0.0; n * k];
        matmul_bt_acc(&out, &b, &mut got, n, k, m);
        for (x, y) in got.iter().zip(naive(&out, &bt, n, m, k)) {
            assert!((x - y).abs() < 1e-12);
        }

        let mut at = vec![0.0; k * n];
        for i in 0..n {
            for p in 0..k {
                at[p * n + i] = a[i * k + p];
            }
        }
        let mut got = vec![0.0; k * m];
        matmul_at_acc(&a, &out, &mut got, n, k, m);
        for (x, y) in got.iter().zip(naive(&at, &out, k, n, m)) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
