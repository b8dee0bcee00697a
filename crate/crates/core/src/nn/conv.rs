use super::Scalar;

/// Unrolls 3×3, zero-padded neighbourhoods: `col[(c·9 + u·3 + v)·P + i·w + j] = x[c, i+u−1, j+v−1]`.
pub(crate) fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, col: &mut [T]) {
    let p = h * w;
    let zero = T::zero();
    for ci in 0..c {
        let plane = &x[ci * p..(ci + 1) * p];
        for u in 0..3 {
            for v in 0..3 {
                let dst = &mut col[(ci * 9 + u * 3 + v) * p..][..p];
                for i in 0..h {
                    let row = &mut dst[i * w..(i + 1) * w];
                    let ii = i + u;
                    if ii == 0 || ii > h {
                        row.fill(zero);
                        continue;
                    }
                    let src = &plane[(ii - 1) * w..ii * w];
                    match v {
                        0 => {
                            row[0] = zero;
                            row[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => row.copy_from_slice(src),
                        _ => {
                            row[..w - 1].copy_from_slice(&src[1..]);
                            row[w - 1] = zero;
                        }
                    }
                }
            }
        }
    }
}

fn col_buffer<T: Scalar>(buf: &mut Vec<T>, n: usize) -> &mut [T] {
    if buf.len() < n {
        buf.resize(n, T::zero());
    }
    &mut buf[..n]
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn generic_conv3x3<T: Scalar>(
    x: &[T],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[T],
    cout: usize,
    out: &mut [T],
    accumulate: bool,
    scratch: &mut Vec<T>,
) {
    let (p, k) = (h * w, cin * 9);
    let col = col_buffer(scratch, k * p);
    im2col(x, cin, h, w, col);
    T::gemm(cout, k, p, weight, k, 1, col, p, 1, out, p, accumulate);
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn generic_conv3x3_grad_weight<T: Scalar>(
    x: &[T],
    cin: usize,
    h: usize,
    w: usize,
    grad_out: &[T],
    cout: usize,
    grad_w: &mut [T],
    scratch: &mut Vec<T>,
) {
    let (p, k) = (h * w, cin * 9);
    let col = col_buffer(scratch, k * p);
    im2col(x, cin, h, w, col);
    T::gemm(cout, p, k, grad_out, p, 1, col, 1, p, grad_w, k, true);
}

/// Weights of the adjoint convolution: `W'[c, o, u, v] = W[o, c, 2−u, 2−v]`,
/// so that the input gradient is `W' ⋆ grad_out`.
pub(crate) fn adjoint_weights<T: Scalar>(weight: &[T], cin: usize, cout: usize) -> Vec<T> {
    let mut out = vec![T::zero(); weight.len()];
    for o in 0..cout {
        for c in 0..cin {
            for t in 0..9 {
                out[(c * cout + o) * 9 + 8 - t] = weight[(o * cin + c) * 9 + t];
            }
        }
    }
    out
}
