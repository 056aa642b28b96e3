//! Inner loops for row-major matrix/vector products.

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four independent accumulators let the compiler keep the loop in vector
    // registers; the summation order is fixed, so results stay deterministic.
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

/// `out[r] += W[r, :] · x` for a `rows x x.len()` matrix.
#[inline]
pub(crate) fn matvec_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `dx += Wᵀ dy`.
#[inline]
pub(crate) fn matvec_t_acc(w: &[f64], dy: &[f64], dx: &mut [f64]) {
    let cols = dx.len();
    for (&g, row) in dy.iter().zip(w.chunks_exact(cols)) {
        if g == 0.0 {
            continue;
        }
        for (d, &wv) in dx.iter_mut().zip(row) {
            *d += g * wv;
        }
    }
}

/// `dW += dy ⊗ x`.
#[inline]
pub(crate) fn outer_acc(dw: &mut [f64], dy: &[f64], x: &[f64]) {
    let cols = x.len();
    for (&g, row) in dy.iter().zip(dw.chunks_exact_mut(cols)) {
        if g == 0.0 {
            continue;
        }
        for (d, &xv) in row.iter_mut().zip(x) {
            *d += g * xv;
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_handles_tails() {
        let a: Vec<f64> = (1..=7).map(f64::from).collect();
        assert_eq!(dot(&a, &a), 140.0);
    }

    #[test]
    fn transpose_product_matches_explicit() {
        // W = [[1,2,3],[4,5,6]]
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut dx = [0.0; 3];
        matvec_t_acc(&w, &[1.0, -1.0], &mut dx);
        assert_eq!(dx, [-3.0, -3.0, -3.0]);
        let mut y = [0.0; 2];
        matvec_acc(&w, &[1.0, 1.0, 1.0], &mut y);
        assert_eq!(y, [6.0, 15.0]);
        let mut dw = [0.0; 6];
        outer_acc(&mut dw, &[1.0, 2.0], &[3.0, 4.0, 5.0]);
        assert_eq!(dw, [3.0, 4.0, 5.0, 6.0, 8.0, 10.0]);
    }
}
