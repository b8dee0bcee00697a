//! Matrix multiply, 3×3 convolution and pooling primitives behind the layers.
//!
//! f32 uses packed AVX-512 kernels when the CPU has them and falls back to
//! `matrixmultiply`; f64 (gradient-check mode) always takes the plain
//! im2col + `matrixmultiply` route, which doubles as the reference path.

use std::fmt::Debug;

use num_traits::Float;

use super::conv::{generic_conv3x3, generic_conv3x3_grad_weight};
use super::layers::{generic_maxpool2x2, generic_unpool2x2};

/// Element type of the network: f32 for training, f64 for gradient checks.
pub trait Scalar: Float + Debug + Default + Send + Sync + 'static {
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `C = A·B` (or `C += A·B` when `accumulate`). A is m×k with strides
    /// (rsa, csa), B is k×n with strides (rsb, csb), C is m×n with row
    /// stride `rsc` and unit column stride.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        rsa: usize,
        csa: usize,
        b: &[Self],
        rsb: usize,
        csb: usize,
        c: &mut [Self],
        rsc: usize,
        accumulate: bool,
    );

    /// `out (+)= W ⋆ x`: 3×3 correlation, stride 1, zero padding 1, no bias.
    /// x is cin × h × w, W is cout × cin × 3 × 3, out is cout × h × w.
    #[allow(clippy::too_many_arguments)]
    fn conv3x3(x: &[Self], cin: usize, h: usize, w: usize, weight: &[Self], cout: usize, out: &mut [Self], accumulate: bool, scratch: &mut Vec<Self>) {
        generic_conv3x3(x, cin, h, w, weight, cout, out, accumulate, scratch);
    }

    /// `grad_w += grad_out · im2col(x)ᵀ`, the weight gradient of [`Scalar::conv3x3`].
    #[allow(clippy::too_many_arguments)]
    fn conv3x3_grad_weight(x: &[Self], cin: usize, h: usize, w: usize, grad_out: &[Self], cout: usize, grad_w: &mut [Self], scratch: &mut Vec<Self>) {
        generic_conv3x3_grad_weight(x, cin, h, w, grad_out, cout, grad_w, scratch);
    }

    /// 2×2 max pool of one c × h × w item, optionally rectifying first;
    /// `idx` receives the winning window offset (first maximum wins).
    #[allow(clippy::too_many_arguments)]
    fn maxpool2x2(x: &[Self], c: usize, h: usize, w: usize, relu: bool, out: &mut [Self], idx: &mut [u8]) {
        generic_maxpool2x2(x, c, h, w, relu, out, idx);
    }

    /// Scatters pooled gradients back to their argmax positions, zeroing the
    /// rest of `grad_in`; positions whose `gate` value is not positive get 0.
    #[allow(clippy::too_many_arguments)]
    fn unpool2x2(grad: &[Self], idx: &[u8], gate: Option<&[Self]>, c: usize, h: usize, w: usize, grad_in: &mut [Self]) {
        generic_unpool2x2(grad, idx, gate, c, h, w, grad_in);
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn check_extents<T>(m: usize, k: usize, n: usize, a: &[T], rsa: usize, csa: usize, b: &[T], rsb: usize, csb: usize, c: &[T], rsc: usize) {
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs + (cols - 1) * cs + 1
        }
    };
    assert!(a.len() >= last(m, k, rsa, csa), "gemm: A too short");
    assert!(b.len() >= last(k, n, rsb, csb), "gemm: B too short");
    assert!(c.len() >= last(m, n, rsc, 1), "gemm: C too short");
}

impl Scalar for f64 {
    fn of(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }

    fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: usize, csa: usize, b: &[f64], rsb: usize, csb: usize, c: &mut [f64], rsc: usize, accumulate: bool) {
        check_extents(m, k, n, a, rsa, csa, b, rsb, csb, c, rsc);
        if m == 0 || n == 0 {
            return;
        }
        let beta = if accumulate { 1.0 } else { 0.0 };
        // SAFETY: extents checked above.
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, 1.0,
                a.as_ptr(), rsa as isize, csa as isize,
                b.as_ptr(), rsb as isize, csb as isize,
                beta, c.as_mut_ptr(), rsc as isize, 1,
            );
        }
    }
}

impl Scalar for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    fn gemm(m: usize, k: usize, n: usize, a: &[f32], rsa: usize, csa: usize, b: &[f32], rsb: usize, csb: usize, c: &mut [f32], rsc: usize, accumulate: bool) {
        check_extents(m, k, n, a, rsa, csa, b, rsb, csb, c, rsc);
        if m == 0 || n == 0 {
            return;
        }
        #[cfg(target_arch = "x86_64")]
        if super::avx512::available() {
            // SAFETY: feature presence checked at runtime, extents checked above.
            unsafe { super::avx512::sgemm(m, k, n, a, rsa, csa, b, rsb, csb, c, rsc, accumulate) };
            return;
        }
        let beta = if accumulate { 1.0 } else { 0.0 };
        // SAFETY: extents checked above.
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, 1.0,
                a.as_ptr(), rsa as isize, csa as isize,
                b.as_ptr(), rsb as isize, csb as isize,
                beta, c.as_mut_ptr(), rsc as isize, 1,
            );
        }
    }

    fn conv3x3(x: &[f32], cin: usize, h: usize, w: usize, weight: &[f32], cout: usize, out: &mut [f32], accumulate: bool, scratch: &mut Vec<f32>) {
        #[cfg(target_arch = "x86_64")]
        if super::avx512::available() {
            super::avx512::conv3x3(x, cin, h, w, weight, cout, out, accumulate);
            return;
        }
        generic_conv3x3(x, cin, h, w, weight, cout, out, accumulate, scratch);
    }

    fn conv3x3_grad_weight(x: &[f32], cin: usize, h: usize, w: usize, grad_out: &[f32], cout: usize, grad_w: &mut [f32], scratch: &mut Vec<f32>) {
        #[cfg(target_arch = "x86_64")]
        if super::avx512::available() {
            super::avx512::conv3x3_grad_weight(x, cin, h, w, grad_out, cout, grad_w);
            return;
        }
        generic_conv3x3_grad_weight(x, cin, h, w, grad_out, cout, grad_w, scratch);
    }

    fn maxpool2x2(x: &[f32], c: usize, h: usize, w: usize, relu: bool, out: &mut [f32], idx: &mut [u8]) {
        #[cfg(target_arch = "x86_64")]
        if super::avx512::available() {
            super::avx512::maxpool2x2(x, c, h, w, relu, out, idx);
            return;
        }
        generic_maxpool2x2(x, c, h, w, relu, out, idx);
    }

    fn unpool2x2(grad: &[f32], idx: &[u8], gate: Option<&[f32]>, c: usize, h: usize, w: usize, grad_in: &mut [f32]) {
        #[cfg(target_arch = "x86_64")]
        if super::avx512::available() {
            super::avx512::unpool2x2(grad, idx, gate, c, h, w, grad_in);
            return;
        }
        generic_unpool2x2(grad, idx, gate, c, h, w, grad_in);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], rsa: usize, csa: usize, b: &[f64], rsb: usize, csb: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                c[i * n + j] = (0..k).map(|p| a[i * rsa + p * csa] * b[p * rsb + j * csb]).sum();
            }
        }
        c
    }

    fn fill(len: usize, seed: u64) -> Vec<f64> {
        let mut s = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
        (0..len)
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn f32_matches_naive(m in 1usize..70, k in 0usize..420, n in 1usize..130, ta: bool, tb: bool, acc: bool, seed: u64) {
            let a = fill(m * k, seed);
            let b = fill(k * n, seed ^ 1);
            let (rsa, csa) = if ta { (1, m) } else { (k, 1) };
            let (rsb, csb) = if tb { (1, k) } else { (n, 1) };
            let c0 = fill(m * n, seed ^ 2);
            let mut want = naive(m, k, n, &a, rsa, csa, &b, rsb, csb);
            if acc {
                for (w, c) in want.iter_mut().zip(&c0) {
                    *w += c;
                }
            }
            let a32: Vec<f32> = a.iter().map(|&v| v as f32).collect();
            let b32: Vec<f32> = b.iter().map(|&v| v as f32).collect();
            let mut c32: Vec<f32> = c0.iter().map(|&v| v as f32).collect();
            f32::gemm(m, k, n, &a32, rsa, csa, &b32, rsb, csb, &mut c32, n, acc);
            let tol = 1e-5 * (k as f64 + 1.0);
            for (g, w) in c32.iter().zip(&want) {
                prop_assert!((*g as f64 - w).abs() < tol, "{} vs {}", g, w);
            }
            let mut c64 = c0.clone();
            f64::gemm(m, k, n, &a, rsa, csa, &b, rsb, csb, &mut c64, n, acc);
            for (g, w) in c64.iter().zip(&want) {
                prop_assert!((g - w).abs() < 1e-12 * (k as f64 + 1.0));
            }
        }
    }

    #[test]
    fn row_stride_larger_than_n() {
        let a = [1.0f32, 2.0];
        let b = [3.0f32, 4.0];
        let mut c = [9.0f32; 6];
        // 2×1 · 1×2 into the first two columns of a 2×3 buffer.
        f32::gemm(2, 1, 2, &a, 1, 1, &b, 2, 1, &mut c, 3, false);
        assert_eq!(c, [3.0, 4.0, 9.0, 6.0, 8.0, 9.0]);
    }
}
