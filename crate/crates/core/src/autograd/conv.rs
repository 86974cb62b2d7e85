//! 2-D convolution kernels over NCHW buffers, via im2col.
//!
//! The unfolded input is a `[C_in * k * k, H_out * W_out]` matrix, so every
//! kernel reduces to contiguous row updates and dot products. Work is split
//! across output channels (forward, weight gradient) or unfolded rows (input
//! gradient). Each output element is accumulated by exactly one task in a
//! fixed order, so results are bitwise identical for any thread count.

use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_hw(&self) -> (usize, usize) {
        (
            (self.h + 2 * self.pad - self.k) / self.stride + 1,
            (self.w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    /// Output indices `o` with `o * stride + tap - pad` inside `[0, len)`.
    fn valid_range(&self, tap: usize, len: usize, out_len: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if self.pad > tap {
            (self.pad - tap).div_ceil(s)
        } else {
            0
        };
        let hi_excl = if len + self.pad > tap {
            ((len - 1 + self.pad - tap) / s + 1).min(out_len)
        } else {
            0
        };
        (lo, hi_excl.max(lo))
    }

    fn rows(&self) -> usize {
        self.in_ch * self.k * self.k
    }

    fn cols(&self) -> usize {
        let (ho, wo) = self.out_hw();
        ho * wo
    }
}

/// Unfolds one batch item into `col` (`rows x cols`, zero padded).
fn im2col(g: &ConvGeom, src: &[f64], col: &mut [f64]) {
    let (ho, wo) = g.out_hw();
    let p = ho * wo;
    col.par_chunks_mut(p).enumerate().for_each(|(r, dst)| {
        let ci = r / (g.k * g.k);
        let ky = (r / g.k) % g.k;
        let kx = r % g.k;
        let plane = &src[ci * g.h * g.w..][..g.h * g.w];
        dst.fill(0.0);
        let (oy0, oy1) = g.valid_range(ky, g.h, ho);
        let (ox0, ox1) = g.valid_range(kx, g.w, wo);
        for oy in oy0..oy1 {
            let iy = oy * g.stride + ky - g.pad;
            let row = &plane[iy * g.w..][..g.w];
            let out = &mut dst[oy * wo + ox0..oy * wo + ox1];
            let ix0 = ox0 * g.stride + kx - g.pad;
            if g.stride == 1 {
                out.copy_from_slice(&row[ix0..ix0 + out.len()]);
            } else {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = row[ix0 + j * g.stride];
                }
            }
        }
    });
}

/// Adds the unfolded gradient `col` back onto one input item.
fn col2im(g: &ConvGeom, col: &[f64], dst: &mut [f64]) {
    let (ho, wo) = g.out_hw();
    let p = ho * wo;
    let kk = g.k * g.k;
    dst.par_chunks_mut(g.h * g.w)
        .enumerate()
        .for_each(|(ci, plane)| {
            for t in 0..kk {
                let (ky, kx) = (t / g.k, t % g.k);
                let src = &col[(ci * kk + t) * p..][..p];
                let (oy0, oy1) = g.valid_range(ky, g.h, ho);
                let (ox0, ox1) = g.valid_range(kx, g.w, wo);
                for oy in oy0..oy1 {
                    let iy = oy * g.stride + ky - g.pad;
                    let row = &mut plane[iy * g.w..][..g.w];
                    let s = &src[oy * wo + ox0..oy * wo + ox1];
                    let ix0 = ox0 * g.stride + kx - g.pad;
                    if g.stride == 1 {
                        for (r, &v) in row[ix0..].iter_mut().zip(s) {
                            *r += v;
                        }
                    } else {
                        for (j, &v) in s.iter().enumerate() {
                            row[ix0 + j * g.stride] += v;
                        }
                    }
                }
            }
        });
}

#[inline(always)]
fn axpy(dst: &mut [f64], a: f64, x: &[f64]) {
    for (d, &v) in dst.iter_mut().zip(x) {
        *d += a * v;
    }
}

/// Dot product with eight fixed lanes, reduced in a fixed order.
#[inline(always)]
fn dot_impl(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let (ca, ra) = a.as_chunks::<8>();
    let (cb, rb) = b.as_chunks::<8>();
    for (x, y) in ca.iter().zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

// The AVX2 builds of the two hot loops only widen the vectors: without FMA
// every product and sum is rounded exactly as in the scalar build, so both
// paths give bitwise identical results.
#[cfg(target_arch = "x86_64")]
mod simd {
    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn dot(a: &[f64], b: &[f64]) -> f64 {
        super::dot_impl(a, b)
    }

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn gemv_rows(
        dst: &mut [f64],
        coef: &[f64],
        step: usize,
        mat: &[f64],
        p: usize,
    ) {
        super::gemv_rows_impl(dst, coef, step, mat, p)
    }
}

fn has_avx2() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::is_x86_feature_detected!("avx2")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the CPU supports AVX2, checked at runtime.
        return unsafe { simd::dot(a, b) };
    }
    dot_impl(a, b)
}

fn gemv_rows(dst: &mut [f64], coef: &[f64], step: usize, mat: &[f64], p: usize) {
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the CPU supports AVX2, checked at runtime.
        return unsafe { simd::gemv_rows(dst, coef, step, mat, p) };
    }
    gemv_rows_impl(dst, coef, step, mat, p)
}

pub fn forward(g: &ConvGeom, input: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let (rows, p) = (g.rows(), g.cols());
    let mut out = vec![0.0; g.batch * g.out_ch * p];
    let mut col = vec![0.0; rows * p];
    for b in 0..g.batch {
        im2col(
            g,
            &input[b * g.in_ch * g.h * g.w..][..g.in_ch * g.h * g.w],
            &mut col,
        );
        out[b * g.out_ch * p..][..g.out_ch * p]
            .par_chunks_mut(p)
            .enumerate()
            .for_each(|(co, dst)| {
                dst.fill(bias[co]);
                gemv_rows(dst, &weight[co * rows..][..rows], 1, &col, p);
            });
    }
    out
}

/// `dst += sum_r coef[r * step] * mat[r]` for the rows of `mat` (`p` wide),
/// four rows per pass so each `dst` element is loaded once per four updates.
/// The per-element summation order is still row order.
#[inline(always)]
fn gemv_rows_impl(dst: &mut [f64], coef: &[f64], step: usize, mat: &[f64], p: usize) {
    let rows = mat.len() / p;
    let mut r = 0;
    while r + 4 <= rows {
        let (a0, a1, a2, a3) = (
            coef[r * step],
            coef[(r + 1) * step],
            coef[(r + 2) * step],
            coef[(r + 3) * step],
        );
        let m0 = &mat[r * p..][..p];
        let m1 = &mat[(r + 1) * p..][..p];
        let m2 = &mat[(r + 2) * p..][..p];
        let m3 = &mat[(r + 3) * p..][..p];
        for i in 0..p {
            let mut v = dst[i];
            v += a0 * m0[i];
            v += a1 * m1[i];
            v += a2 * m2[i];
            v += a3 * m3[i];
            dst[i] = v;
        }
        r += 4;
    }
    while r < rows {
        axpy(dst, coef[r * step], &mat[r * p..][..p]);
        r += 1;
    }
}

pub fn backward_input(g: &ConvGeom, grad_out: &[f64], weight: &[f64]) -> Vec<f64> {
    let (rows, p) = (g.rows(), g.cols());
    let plane_in = g.in_ch * g.h * g.w;
    let mut gin = vec![0.0; g.batch * plane_in];
    let mut gcol = vec![0.0; rows * p];
    for b in 0..g.batch {
        let go = &grad_out[b * g.out_ch * p..][..g.out_ch * p];
        gcol.par_chunks_mut(p).enumerate().for_each(|(r, dst)| {
            dst.fill(0.0);
            gemv_rows(dst, &weight[r..], rows, go, p);
        });
        col2im(g, &gcol, &mut gin[b * plane_in..][..plane_in]);
    }
    gin
}

/// Returns `(weight_grad, bias_grad)`.
pub fn backward_params(g: &ConvGeom, grad_out: &[f64], input: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (rows, p) = (g.rows(), g.cols());
    // Accumulated as [rows, out_ch] so one unfolded row stays hot while it
    // meets every output channel; transposed at the end.
    let mut gw_t = vec![0.0; rows * g.out_ch];
    let mut gb = vec![0.0; g.out_ch];
    let mut col = vec![0.0; rows * p];
    for b in 0..g.batch {
        im2col(
            g,
            &input[b * g.in_ch * g.h * g.w..][..g.in_ch * g.h * g.w],
            &mut col,
        );
        let go = &grad_out[b * g.out_ch * p..][..g.out_ch * p];
        for (co, db) in gb.iter_mut().enumerate() {
            *db += go[co * p..][..p].iter().sum::<f64>();
        }
        gw_t.par_chunks_mut(g.out_ch)
            .enumerate()
            .for_each(|(r, dw)| {
                let c = &col[r * p..][..p];
                for (co, d) in dw.iter_mut().enumerate() {
                    *d += dot(&go[co * p..][..p], c);
                }
            });
    }
    let mut gw = vec![0.0; g.out_ch * rows];
    for r in 0..rows {
        for co in 0..g.out_ch {
            gw[co * rows + r] = gw_t[r * g.out_ch + co];
        }
    }
    (gw, gb)
}
