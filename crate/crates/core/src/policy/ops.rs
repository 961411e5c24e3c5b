//! Dense kernels over row-major `f64` buffers.

/// `c = a' * b' + beta * c` where `a'` is `m x k` and `b'` is `k x n`.
/// With `ta`, `a` is stored as `k x m` and transposed; likewise `tb` for `b`
/// stored as `n x k`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, c: &mut [f64], beta: f64) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above address exactly the m*k, k*n and m*n elements
    // of the checked slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `y[rows x out] = x[rows x in] * w[out x in]^T + bias`.
pub(crate) fn linear(x: &[f64], rows: usize, w: &[f64], bias: &[f64], out: usize) -> Vec<f64> {
    let inp = w.len() / out;
    let mut y = Vec::with_capacity(rows * out);
    for _ in 0..rows {
        y.extend_from_slice(bias);
    }
    gemm(rows, inp, out, x, false, w, true, &mut y, 1.0);
    y
}

/// Accumulates weight and bias gradients of [`linear`] and returns `dx`
/// (skipped when `need_dx` is false).
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward(
    dy: &[f64],
    x: &[f64],
    rows: usize,
    w: &[f64],
    out: usize,
    dw: &mut [f64],
    db: &mut [f64],
    need_dx: bool,
) -> Vec<f64> {
    let inp = w.len() / out;
    gemm(out, rows, inp, dy, true, x, false, dw, 1.0);
    for r in 0..rows {
        for (b, d) in db.iter_mut().zip(&dy[r * out..(r + 1) * out]) {
            *b += d;
        }
    }
    if !need_dx {
        return Vec::new();
    }
    let mut dx = vec![0.0; rows * inp];
    gemm(rows, out, inp, dy, false, w, false, &mut dx, 0.0);
    dx
}

pub(crate) fn conv_out(side: usize) -> usize {
    (side - 1) / 2 + 1
}

/// Patch matrix for a 3x3, stride-2, pad-1 convolution over `n` images laid
/// out as (image, row, col, channel). Rows are output positions, columns
/// (ky, kx, channel).
pub(crate) fn im2col(x: &[f64], n: usize, side: usize, ch: usize) -> Vec<f64> {
    let so = conv_out(side);
    let width = 9 * ch;
    let mut cols = vec![0.0; n * so * so * width];
    for img in 0..n {
        let xb = img * side * side * ch;
        for oy in 0..so {
            for ox in 0..so {
                let row = ((img * so + oy) * so + ox) * width;
                for ky in 0..3 {
                    let iy = (2 * oy + ky) as isize - 1;
                    if iy < 0 || iy >= side as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let ix = (2 * ox + kx) as isize - 1;
                        if ix < 0 || ix >= side as isize {
                            continue;
                        }
                        let src = xb + (iy as usize * side + ix as usize) * ch;
                        let dst = row + (ky * 3 + kx) * ch;
                        cols[dst..dst + ch].copy_from_slice(&x[src..src + ch]);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input grid.
pub(crate) fn col2im(dcols: &[f64], n: usize, side: usize, ch: usize) -> Vec<f64> {
    let so = conv_out(side);
    let width = 9 * ch;
    let mut dx = vec![0.0; n * side * side * ch];
    for img in 0..n {
        let xb = img * side * side * ch;
        for oy in 0..so {
            for ox in 0..so {
                let row = ((img * so + oy) * so + ox) * width;
                for ky in 0..3 {
                    let iy = (2 * oy + ky) as isize - 1;
                    if iy < 0 || iy >= side as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let ix = (2 * ox + kx) as isize - 1;
                        if ix < 0 || ix >= side as isize {
                            continue;
                        }
                        let dst = xb + (iy as usize * side + ix as usize) * ch;
                        let src = row + (ky * 3 + kx) * ch;
                        for c in 0..ch {
                            dx[dst + c] += dcols[src + c];
                        }
                    }
                }
            }
        }
    }
    dx
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// In-place log-softmax of each `width`-wide row.
pub(crate) fn log_softmax_rows(v: &mut [f64], width: usize) {
    for row in v.chunks_mut(width) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
        row.iter_mut().for_each(|x| *x -= lse);
    }
}
