//! Packed AVX-512 f32 kernels. A is packed once per call into 8-row
//! slivers; B is produced one 48-column sliver and ≤128-deep block at a time
//! by a caller-supplied filler, so convolutions never materialize im2col.

use std::arch::x86_64::*;
use std::cell::RefCell;
use std::sync::OnceLock;

const MR: usize = 8;
const NR: usize = 48;
const KC: usize = 128;

pub(super) fn available() -> bool {
    static HAS: OnceLock<bool> = OnceLock::new();
    *HAS.get_or_init(|| std::env::var_os("BINLOC_NO_AVX512").is_none() && is_x86_feature_detected!("avx512f"))
}

thread_local! {
    static PACKED_A: RefCell<Vec<f32>> = const { RefCell::new(Vec::new()) };
}

/// Transposes a 16×16 block held as 16 row vectors.
#[target_feature(enable = "avx512f")]
unsafe fn transpose16(r: &mut [__m512; 16]) {
    let mut t = [_mm512_setzero_ps(); 16];
    for i in 0..8 {
        t[2 * i] = _mm512_unpacklo_ps(r[2 * i], r[2 * i + 1]);
        t[2 * i + 1] = _mm512_unpackhi_ps(r[2 * i], r[2 * i + 1]);
    }
    for i in 0..4 {
        let (a0, a1, b0, b1) = (t[4 * i], t[4 * i + 1], t[4 * i + 2], t[4 * i + 3]);
        let pd = |x: __m512| _mm512_castps_pd(x);
        r[4 * i] = _mm512_castpd_ps(_mm512_unpacklo_pd(pd(a0), pd(b0)));
        r[4 * i + 1] = _mm512_castpd_ps(_mm512_unpackhi_pd(pd(a0), pd(b0)));
        r[4 * i + 2] = _mm512_castpd_ps(_mm512_unpacklo_pd(pd(a1), pd(b1)));
        r[4 * i + 3] = _mm512_castpd_ps(_mm512_unpackhi_pd(pd(a1), pd(b1)));
    }
    for i in 0..2 {
        for j in 0..4 {
            t[8 * i + j] = _mm512_shuffle_f32x4::<0x88>(r[8 * i + j], r[8 * i + 4 + j]);
            t[8 * i + 4 + j] = _mm512_shuffle_f32x4::<0xdd>(r[8 * i + j], r[8 * i + 4 + j]);
        }
    }
    for j in 0..8 {
        r[j] = _mm512_shuffle_f32x4::<0x88>(t[j], t[8 + j]);
        r[8 + j] = _mm512_shuffle_f32x4::<0xdd>(t[j], t[8 + j]);
    }
}

/// Packs 16 contiguous rows (row stride `rsa`, k columns) into two adjacent
/// MR slivers of `out`, which is laid out `[2][k][MR]`.
#[target_feature(enable = "avx512f")]
unsafe fn pack_a_rows16(a: *const f32, rsa: usize, k: usize, out: *mut f32) {
    let mut blk = [_mm512_setzero_ps(); 16];
    let mut kk = 0;
    while kk < k {
        let live = (k - kk).min(16);
        let mk = lane_mask(live);
        for (r, v) in blk.iter_mut().enumerate() {
            *v = _mm512_maskz_loadu_ps(mk, a.add(r * rsa + kk));
        }
        transpose16(&mut blk);
        for (c, v) in blk.iter().enumerate().take(live) {
            let lo = _mm512_castps512_ps256(*v);
            let hi = _mm256_castpd_ps(_mm512_extractf64x4_pd::<1>(_mm512_castps_pd(*v)));
            _mm256_storeu_ps(out.add((kk + c) * MR), lo);
            _mm256_storeu_ps(out.add((k + kk + c) * MR), hi);
        }
        kk += 16;
    }
}

/// Packs m×k A into slivers of MR rows, laid out `[sliver][k][MR]`, zero padded.
unsafe fn pack_a(a: *const f32, rsa: usize, csa: usize, m: usize, k: usize, dst: &mut Vec<f32>) {
    let slivers = m.div_ceil(MR);
    dst.clear();
    dst.resize(slivers * k * MR, 0.0);
    let mut s = 0;
    if csa == 1 {
        while (s + 2) * MR <= m {
            pack_a_rows16(a.add(s * MR * rsa), rsa, k, dst.as_mut_ptr().add(s * k * MR));
            s += 2;
        }
    }
    for s in s..slivers {
        let rows = MR.min(m - s * MR);
        let out = &mut dst[s * k * MR..(s + 1) * k * MR];
        for r in 0..rows {
            let src = a.add((s * MR + r) * rsa);
            if csa == 1 {
                let row = std::slice::from_raw_parts(src, k);
                for (kk, &v) in row.iter().enumerate() {
                    out[kk * MR + r] = v;
                }
            } else {
                for kk in 0..k {
                    out[kk * MR + r] = *src.add(kk * csa);
                }
            }
        }
    }
}

#[target_feature(enable = "avx512f")]
#[allow(clippy::too_many_arguments)]
unsafe fn kernel(kc: usize, ap: *const f32, bp: *const f32, c: *mut f32, rsc: usize, rows: usize, cols: usize, overwrite: bool) {
    let mut acc = [[_mm512_setzero_ps(); 3]; MR];
    for kk in 0..kc {
        let b0 = _mm512_loadu_ps(bp.add(kk * NR));
        let b1 = _mm512_loadu_ps(bp.add(kk * NR + 16));
        let b2 = _mm512_loadu_ps(bp.add(kk * NR + 32));
        let arow = ap.add(kk * MR);
        for (r, acc_r) in acc.iter_mut().enumerate() {
            let av = _mm512_set1_ps(*arow.add(r));
            acc_r[0] = _mm512_fmadd_ps(av, b0, acc_r[0]);
            acc_r[1] = _mm512_fmadd_ps(av, b1, acc_r[1]);
            acc_r[2] = _mm512_fmadd_ps(av, b2, acc_r[2]);
        }
    }
    let masks: [__mmask16; 3] = std::array::from_fn(|q| lane_mask(cols.saturating_sub(q * 16)));
    for (r, acc_r) in acc.iter().enumerate().take(rows) {
        let row = c.add(r * rsc);
        for q in 0..3 {
            let mk = masks[q];
            if mk == 0 {
                continue;
            }
            let p = row.add(q * 16);
            let v = if overwrite { acc_r[q] } else { _mm512_add_ps(_mm512_maskz_loadu_ps(mk, p), acc_r[q]) };
            _mm512_mask_storeu_ps(p, mk, v);
        }
    }
}

fn lane_mask(live: usize) -> u16 {
    if live >= 16 {
        0xffff
    } else {
        ((1u32 << live) - 1) as u16
    }
}

/// `C (+)= A·B` with A pre-packed. `fill(p0, kc, j0, cols, dst)` must write
/// rows p0..p0+kc, columns j0..j0+cols of B into `dst` as `[kc][NR]`,
/// zeroing columns ≥ cols.
#[target_feature(enable = "avx512f")]
unsafe fn engine<F: FnMut(usize, usize, usize, usize, &mut [f32])>(
    m: usize,
    k: usize,
    n: usize,
    apack: &[f32],
    mut fill: F,
    c: *mut f32,
    rsc: usize,
    accumulate: bool,
) {
    if k == 0 {
        if !accumulate {
            for i in 0..m {
                std::ptr::write_bytes(c.add(i * rsc), 0, n);
            }
        }
        return;
    }
    let kc_nominal = k.div_ceil(k.div_ceil(KC)).next_multiple_of(16).min(KC);
    let mut bbuf = [0f32; KC * NR];
    let slivers = m.div_ceil(MR);
    for j0 in (0..n).step_by(NR) {
        let cols = NR.min(n - j0);
        let mut p0 = 0;
        while p0 < k {
            let kc = kc_nominal.min(k - p0);
            fill(p0, kc, j0, cols, &mut bbuf[..kc * NR]);
            for s in 0..slivers {
                kernel(
                    kc,
                    apack.as_ptr().add((s * k + p0) * MR),
                    bbuf.as_ptr(),
                    c.add(s * MR * rsc + j0),
                    rsc,
                    MR.min(m - s * MR),
                    cols,
                    p0 == 0 && !accumulate,
                );
            }
            p0 += kc;
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) unsafe fn sgemm(m: usize, k: usize, n: usize, a: &[f32], rsa: usize, csa: usize, b: &[f32], rsb: usize, csb: usize, c: &mut [f32], rsc: usize, accumulate: bool) {
    PACKED_A.with(|cell| {
        let apack = &mut *cell.borrow_mut();
        pack_a(a.as_ptr(), rsa, csa, m, k, apack);
        let fill = |p0: usize, kc: usize, j0: usize, cols: usize, dst: &mut [f32]| {
            for kk in 0..kc {
                let row = &mut dst[kk * NR..(kk + 1) * NR];
                let base = (p0 + kk) * rsb + j0 * csb;
                if csb == 1 {
                    row[..cols].copy_from_slice(&b[base..base + cols]);
                } else {
                    for (j, slot) in row[..cols].iter_mut().enumerate() {
                        *slot = b[base + j * csb];
                    }
                }
                row[cols..].fill(0.0);
            }
        };
        engine(m, k, n, apack, fill, c.as_mut_ptr(), rsc, accumulate);
    });
}

/// Lane masks for a 48-pixel sliver: which pixels have an in-range
/// neighbour at row offset u−1 (`row[u]`) and column offset v−1 (`col[v]`).
struct SliverMasks {
    row: [[u16; 3]; 3],
    col: [[u16; 3]; 3],
}

fn sliver_masks(j0: usize, h: usize, w: usize) -> SliverMasks {
    let mut m = SliverMasks { row: [[0; 3]; 3], col: [[0; 3]; 3] };
    for l in 0..NR {
        let p = j0 + l;
        if p >= h * w {
            break;
        }
        let (i, j) = (p / w, p % w);
        let bit = 1u16 << (l % 16);
        for t in 0..3 {
            if i + t >= 1 && i + t - 1 < h {
                m.row[t][l / 16] |= bit;
            }
            if j + t >= 1 && j + t - 1 < w {
                m.col[t][l / 16] |= bit;
            }
        }
    }
    m
}

#[target_feature(enable = "avx512f")]
#[allow(clippy::too_many_arguments)]
unsafe fn fill_im2col(x: &[f32], h: usize, w: usize, masks: &SliverMasks, p0: usize, kc: usize, j0: usize, dst: &mut [f32]) {
    let plane = h * w;
    let d = dst.as_mut_ptr();
    for kk in 0..kc {
        let kidx = p0 + kk;
        let (ci, r) = (kidx / 9, kidx % 9);
        let (u, v) = (r / 3, r % 3);
        let off = (ci * plane + j0) as isize + (u as isize - 1) * w as isize + (v as isize - 1);
        // Lanes whose neighbour falls outside the image are masked off and
        // never dereferenced; enabled lanes always address inside `x`.
        let base = x.as_ptr().wrapping_offset(off);
        for q in 0..3 {
            let mk = masks.row[u][q] & masks.col[v][q];
            let val = _mm512_maskz_loadu_ps(mk, base.wrapping_add(q * 16));
            _mm512_storeu_ps(d.add(kk * NR + q * 16), val);
        }
    }
}

fn chunk_masks(p0: usize, h: usize, w: usize) -> ([u16; 3], [u16; 3]) {
    let (mut row, mut col) = ([0u16; 3], [0u16; 3]);
    let (mut i, mut j) = (p0 / w, p0 % w);
    for l in 0..16 {
        if p0 + l >= h * w {
            break;
        }
        for t in 0..3 {
            if i + t >= 1 && i + t - 1 < h {
                row[t] |= 1 << l;
            }
            if j + t >= 1 && j + t - 1 < w {
                col[t] |= 1 << l;
            }
        }
        j += 1;
        if j == w {
            j = 0;
            i += 1;
        }
    }
    (row, col)
}

#[target_feature(enable = "avx512f")]
#[allow(clippy::too_many_arguments)]
unsafe fn fill_patches(x: &[f32], h: usize, w: usize, p0: usize, kc: usize, j0: usize, cols: usize, dst: &mut [f32]) {
    let plane = h * w;
    let mut blk = [_mm512_setzero_ps(); 16];
    let mut tail = [0f32; 16 * NR];
    let mut offs = [0isize; NR];
    let mut taps = [(0usize, 0usize); NR];
    for l in 0..cols {
        let (ci, r) = ((j0 + l) / 9, (j0 + l) % 9);
        taps[l] = (r / 3, r % 3);
        offs[l] = (ci * plane) as isize + (r / 3) as isize * w as isize - w as isize + (r % 3) as isize - 1;
    }
    let mut c0 = 0;
    while c0 < kc {
        let pix = p0 + c0;
        let (row, col) = chunk_masks(pix, h, w);
        let rows_here = (kc - c0).min(16);
        let out: *mut f32 = if rows_here == 16 { dst.as_mut_ptr().add(c0 * NR) } else { tail.as_mut_ptr() };
        for q in 0..3 {
            for (l, v) in blk.iter_mut().enumerate() {
                let lane = q * 16 + l;
                if lane >= cols {
                    *v = _mm512_setzero_ps();
                    continue;
                }
                let (u, vv) = taps[lane];
                // Masked-off lanes are never dereferenced; see `fill_im2col`.
                *v = _mm512_maskz_loadu_ps(row[u] & col[vv], x.as_ptr().wrapping_offset(pix as isize + offs[lane]));
            }
            transpose16(&mut blk);
            for (l, v) in blk.iter().enumerate() {
                _mm512_storeu_ps(out.add(l * NR + q * 16), *v);
            }
        }
        if rows_here < 16 {
            dst[c0 * NR..(c0 + rows_here) * NR].copy_from_slice(&tail[..rows_here * NR]);
        }
        c0 += 16;
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn conv3x3(x: &[f32], cin: usize, h: usize, w: usize, weight: &[f32], cout: usize, out: &mut [f32], accumulate: bool) {
    let (p, k) = (h * w, cin * 9);
    assert!(x.len() >= cin * p && weight.len() >= cout * k && out.len() >= cout * p, "conv3x3: buffer too short");
    PACKED_A.with(|cell| {
        let apack = &mut *cell.borrow_mut();
        // SAFETY: AVX-512 presence checked by the caller; lengths asserted above.
        unsafe {
            pack_a(weight.as_ptr(), k, 1, cout, k, apack);
            let mut cached: Option<(usize, SliverMasks)> = None;
            let fill = |p0: usize, kc: usize, j0: usize, _cols: usize, dst: &mut [f32]| {
                if cached.as_ref().is_none_or(|(j, _)| *j != j0) {
                    cached = Some((j0, sliver_masks(j0, h, w)));
                }
                let masks = &cached.as_ref().expect("just set").1;
                fill_im2col(x, h, w, masks, p0, kc, j0, dst);
            };
            engine(cout, k, p, apack, fill, out.as_mut_ptr(), p, accumulate);
        }
    });
}

#[allow(clippy::too_many_arguments)]
pub(super) fn conv3x3_grad_weight(x: &[f32], cin: usize, h: usize, w: usize, grad_out: &[f32], cout: usize, grad_w: &mut [f32]) {
    let (p, k) = (h * w, cin * 9);
    assert!(x.len() >= cin * p && grad_out.len() >= cout * p && grad_w.len() >= cout * k, "conv3x3_grad_weight: buffer too short");
    PACKED_A.with(|cell| {
        let apack = &mut *cell.borrow_mut();
        // SAFETY: AVX-512 presence checked by the caller; lengths asserted above.
        unsafe {
            pack_a(grad_out.as_ptr(), p, 1, cout, p, apack);
            // B[pixel, (c, u, v)] = x[c, i+u−1, j+v−1]: one patch row per pixel,
            // built as im2col rows for 16 pixels at a time and transposed.
            let fill = |p0: usize, kc: usize, j0: usize, cols: usize, dst: &mut [f32]| {
                fill_patches(x, h, w, p0, kc, j0, cols, dst);
            };
            engine(cout, p, k, apack, fill, grad_w.as_mut_ptr(), k, true);
        }
    });
}

/// Window offsets within a 2×2 block, in row-major order.
const EVEN: [u32; 16] = [0, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24, 26, 28, 30];
const ODD: [u32; 16] = [1, 3, 5, 7, 9, 11, 13, 15, 17, 19, 21, 23, 25, 27, 29, 31];
const ZIP_LO: [u32; 16] = [0, 16, 1, 17, 2, 18, 3, 19, 4, 20, 5, 21, 6, 22, 7, 23];
const ZIP_HI: [u32; 16] = [8, 24, 9, 25, 10, 26, 11, 27, 12, 28, 13, 29, 14, 30, 15, 31];

#[target_feature(enable = "avx512f")]
unsafe fn maxpool_row(r0: *const f32, r1: *const f32, relu: bool, out: *mut f32, idx: *mut u8, wv: usize) {
    let even = _mm512_loadu_si512(EVEN.as_ptr().cast());
    let odd = _mm512_loadu_si512(ODD.as_ptr().cast());
    let zero = _mm512_setzero_ps();
    let mut j = 0;
    while j < wv {
        let (a0, a1) = (_mm512_loadu_ps(r0.add(2 * j)), _mm512_loadu_ps(r0.add(2 * j + 16)));
        let (b0, b1) = (_mm512_loadu_ps(r1.add(2 * j)), _mm512_loadu_ps(r1.add(2 * j + 16)));
        let mut cand = [
            _mm512_permutex2var_ps(a0, even, a1),
            _mm512_permutex2var_ps(a0, odd, a1),
            _mm512_permutex2var_ps(b0, even, b1),
            _mm512_permutex2var_ps(b0, odd, b1),
        ];
        if relu {
            // max_ps returns the second operand for NaN, matching "not > 0 → 0".
            for c in &mut cand {
                *c = _mm512_max_ps(*c, zero);
            }
        }
        let mut best = cand[0];
        let mut bi = _mm512_setzero_si512();
        for (q, &c) in cand.iter().enumerate().skip(1) {
            let m = _mm512_cmp_ps_mask::<_CMP_GT_OQ>(c, best);
            best = _mm512_mask_blend_ps(m, best, c);
            bi = _mm512_mask_blend_epi32(m, bi, _mm512_set1_epi32(q as i32));
        }
        _mm512_storeu_ps(out.add(j), best);
        _mm_storeu_si128(idx.add(j).cast(), _mm512_cvtepi32_epi8(bi));
        j += 16;
    }
}

pub(super) fn maxpool2x2(x: &[f32], c: usize, h: usize, w: usize, relu: bool, out: &mut [f32], idx: &mut [u8]) {
    let (ho, wo) = (h / 2, w / 2);
    assert!(x.len() >= c * h * w && out.len() >= c * ho * wo && idx.len() >= c * ho * wo, "maxpool: buffer too short");
    let wv = wo - wo % 16;
    for ci in 0..c {
        for i in 0..ho {
            let r0 = ci * h * w + 2 * i * w;
            let o = ci * ho * wo + i * wo;
            // SAFETY: AVX-512 checked by the caller; the vector part reads
            // columns < 2·wv ≤ w of rows 2i and 2i+1 and writes wv outputs.
            unsafe { maxpool_row(x.as_ptr().add(r0), x.as_ptr().add(r0 + w), relu, out.as_mut_ptr().add(o), idx.as_mut_ptr().add(o), wv) };
            if wv < wo {
                let rect = |v: f32| if relu && !(v > 0.0) { 0.0 } else { v };
                for j in wv..wo {
                    let cand = [rect(x[r0 + 2 * j]), rect(x[r0 + 2 * j + 1]), rect(x[r0 + w + 2 * j]), rect(x[r0 + w + 2 * j + 1])];
                    let mut best = 0;
                    for q in 1..4 {
                        if cand[q] > cand[best] {
                            best = q;
                        }
                    }
                    out[o + j] = cand[best];
                    idx[o + j] = best as u8;
                }
            }
        }
    }
}

#[target_feature(enable = "avx512f")]
unsafe fn unpool_row(grad: *const f32, idx: *const u8, gate: Option<*const f32>, d0: *mut f32, d1: *mut f32, wv: usize) {
    let zip_lo = _mm512_loadu_si512(ZIP_LO.as_ptr().cast());
    let zip_hi = _mm512_loadu_si512(ZIP_HI.as_ptr().cast());
    let zero = _mm512_setzero_ps();
    let mut j = 0;
    while j < wv {
        let mut g = _mm512_loadu_ps(grad.add(j));
        if let Some(gp) = gate {
            let open = _mm512_cmp_ps_mask::<_CMP_GT_OQ>(_mm512_loadu_ps(gp.add(j)), zero);
            g = _mm512_maskz_mov_ps(open, g);
        }
        let q = _mm512_cvtepu8_epi32(_mm_loadu_si128(idx.add(j).cast()));
        let e: [__m512; 4] = std::array::from_fn(|k| _mm512_maskz_mov_ps(_mm512_cmpeq_epi32_mask(q, _mm512_set1_epi32(k as i32)), g));
        _mm512_storeu_ps(d0.add(2 * j), _mm512_permutex2var_ps(e[0], zip_lo, e[1]));
        _mm512_storeu_ps(d0.add(2 * j + 16), _mm512_permutex2var_ps(e[0], zip_hi, e[1]));
        _mm512_storeu_ps(d1.add(2 * j), _mm512_permutex2var_ps(e[2], zip_lo, e[3]));
        _mm512_storeu_ps(d1.add(2 * j + 16), _mm512_permutex2var_ps(e[2], zip_hi, e[3]));
        j += 16;
    }
}

pub(super) fn unpool2x2(grad: &[f32], idx: &[u8], gate: Option<&[f32]>, c: usize, h: usize, w: usize, grad_in: &mut [f32]) {
    let (ho, wo) = (h / 2, w / 2);
    let n = c * ho * wo;
    assert!(grad.len() >= n && idx.len() >= n && gate.is_none_or(|g| g.len() >= n) && grad_in.len() >= c * h * w, "unpool: buffer too short");
    let wv = wo - wo % 16;
    for ci in 0..c {
        let plane = &mut grad_in[ci * h * w..(ci + 1) * h * w];
        for i in 0..ho {
            let o = ci * ho * wo + i * wo;
            let (r0, r1) = (2 * i * w, (2 * i + 1) * w);
            // SAFETY: AVX-512 checked by the caller; reads wv pooled entries,
            // writes columns < 2·wv of rows 2i and 2i+1 of this plane.
            unsafe {
                unpool_row(
                    grad.as_ptr().add(o),
                    idx.as_ptr().add(o),
                    gate.map(|g| g.as_ptr().add(o)),
                    plane.as_mut_ptr().add(r0),
                    plane.as_mut_ptr().add(r1),
                    wv,
                )
            };
            plane[r0 + 2 * wv..r0 + w].fill(0.0);
            plane[r1 + 2 * wv..r1 + w].fill(0.0);
            for j in wv..wo {
                if gate.is_some_and(|g| !(g[o + j] > 0.0)) {
                    continue;
                }
                let q = idx[o + j] as usize;
                plane[(2 * i + q / 2) * w + 2 * j + q % 2] = grad[o + j];
            }
        }
        plane[2 * ho * w..].fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool_input(c: usize, h: usize, w: usize, seed: usize) -> Vec<f32> {
        // Few distinct levels so that ties occur often.
        (0..c * h * w).map(|i| ((i * 7 + seed * 13) % 5) as f32 - 2.0).collect()
    }

    #[test]
    fn pooling_matches_generic() {
        use crate::nn::layers::{generic_maxpool2x2, generic_unpool2x2};
        if !available() {
            return;
        }
        for &(c, h, w) in &[(1, 2, 2), (2, 9, 33), (3, 64, 64), (2, 17, 70), (1, 5, 97)] {
            for relu in [false, true] {
                let x = pool_input(c, h, w, h + w);
                let n = c * (h / 2) * (w / 2);
                let (mut o1, mut o2) = (vec![0.0; n], vec![0.0; n]);
                let (mut i1, mut i2) = (vec![0u8; n], vec![0u8; n]);
                generic_maxpool2x2(&x, c, h, w, relu, &mut o1, &mut i1);
                maxpool2x2(&x, c, h, w, relu, &mut o2, &mut i2);
                assert_eq!((&o1, &i1), (&o2, &i2));
                let g: Vec<f32> = (0..n).map(|i| i as f32 + 0.5).collect();
                for gate in [None, Some(&o1[..])] {
                    let mut a = vec![9.0; c * h * w];
                    let mut b = vec![7.0; c * h * w];
                    generic_unpool2x2(&g, &i1, gate, c, h, w, &mut a);
                    unpool2x2(&g, &i1, gate, c, h, w, &mut b);
                    assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn transpose16_is_a_transpose() {
        if !available() {
            return;
        }
        let src: Vec<f32> = (0..256).map(|i| i as f32).collect();
        let mut out = [0f32; 256];
        unsafe {
            let mut r: [__m512; 16] = std::array::from_fn(|i| _mm512_loadu_ps(src.as_ptr().add(16 * i)));
            transpose16(&mut r);
            for (i, v) in r.iter().enumerate() {
                _mm512_storeu_ps(out.as_mut_ptr().add(16 * i), *v);
            }
        }
        for i in 0..16 {
            for j in 0..16 {
                assert_eq!(out[i * 16 + j], src[j * 16 + i]);
            }
        }
    }

    #[test]
    fn packing_paths_agree() {
        if !available() {
            return;
        }
        for (m, k) in [(16usize, 37usize), (35, 5), (64, 130)] {
            let a: Vec<f32> = (0..m * k).map(|i| i as f32).collect();
            let mut fast = Vec::new();
            let mut slow = Vec::new();
            unsafe {
                pack_a(a.as_ptr(), k, 1, m, k, &mut fast);
                pack_a(a.as_ptr(), k, 1 + 0 * k, m, k, &mut slow);
            }
            // Reference: element (i, kk) lands at [i / MR][kk][i % MR].
            let mut want = vec![0f32; m.div_ceil(MR) * k * MR];
            for i in 0..m {
                for kk in 0..k {
                    want[(i / MR * k + kk) * MR + i % MR] = a[i * k + kk];
                }
            }
            assert_eq!(fast, want);
        }
    }
}
