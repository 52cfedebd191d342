//! Slice-level compute kernels behind the tape operations.
//!
//! All kernels take NCHW buffers. Output planes are distributed with
//! [`crate::par`] helpers; each output element is produced by one task with a
//! fixed accumulation order, so results do not depend on the execution mode.

use super::Real;
use crate::par;

/// Geometry of a stride-1, same-padded 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
    pub dilation: usize,
}

impl ConvGeom {
    #[inline]
    fn pad_y(&self) -> isize {
        ((self.kh - 1) / 2 * self.dilation) as isize
    }

    #[inline]
    fn pad_x(&self) -> isize {
        ((self.kw - 1) / 2 * self.dilation) as isize
    }

    /// Offset of tap `k` along an axis with the given padding.
    #[inline]
    fn tap(&self, k: usize, pad: isize) -> isize {
        (k * self.dilation) as isize - pad
    }

    pub fn weight_len(&self) -> usize {
        self.out_ch * self.in_ch * self.kh * self.kw
    }

    pub fn input_len(&self) -> usize {
        self.batch * self.in_ch * self.height * self.width
    }

    pub fn output_len(&self) -> usize {
        self.batch * self.out_ch * self.height * self.width
    }
}

/// Column range `[x0, x1)` of outputs whose shifted input `x + dx` is in bounds.
#[inline]
fn valid_range(len: usize, shift: isize) -> (usize, usize) {
    let x0 = (-shift).max(0) as usize;
    let x1 = (len as isize - shift).clamp(0, len as isize) as usize;
    (x0.min(x1), x1)
}

#[inline]
fn axpy<T: Real>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * xi;
    }
}

/// Dot product with eight interleaved partial sums so the loop vectorises;
/// the combination order is fixed.
#[inline]
fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    let n = x.len().min(y.len());
    let (x, y) = (&x[..n], &y[..n]);
    let mut lanes = [T::zero(); 8];
    let mut xc = x.chunks_exact(8);
    let mut yc = y.chunks_exact(8);
    for (a, b) in (&mut xc).zip(&mut yc) {
        for l in 0..8 {
            lanes[l] = lanes[l] + a[l] * b[l];
        }
    }
    let mut acc = T::zero();
    for (&a, &b) in xc.remainder().iter().zip(yc.remainder()) {
        acc = acc + a * b;
    }
    let pairs = [lanes[0] + lanes[4], lanes[1] + lanes[5], lanes[2] + lanes[6], lanes[3] + lanes[7]];
    acc + (pairs[0] + pairs[2]) + (pairs[1] + pairs[3])
}

pub fn conv2d_forward<T: Real>(g: &ConvGeom, x: &[T], w: &[T], b: &[T], out: &mut [T]) {
    let (h, wd) = (g.height, g.width);
    let plane = h * wd;
    let (pad_y, pad_x) = (g.pad_y(), g.pad_x());
    par::for_each_chunk(out, plane, |idx, o| {
        let (n, co) = (idx / g.out_ch, idx % g.out_ch);
        o.fill(b[co]);
        for y in 0..h {
            let orow = &mut o[y * wd..(y + 1) * wd];
            for ci in 0..g.in_ch {
                let xplane = &x[(n * g.in_ch + ci) * plane..][..plane];
                let wbase = (co * g.in_ch + ci) * g.kh * g.kw;
                for ky in 0..g.kh {
                    let iy = y as isize + g.tap(ky, pad_y);
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let irow = &xplane[iy as usize * wd..][..wd];
                    for kx in 0..g.kw {
                        let dx = g.tap(kx, pad_x);
                        let (x0, x1) = valid_range(wd, dx);
                        if x0 >= x1 {
                            continue;
                        }
                        let s0 = (x0 as isize + dx) as usize;
                        axpy(w[wbase + ky * g.kw + kx], &irow[s0..s0 + (x1 - x0)], &mut orow[x0..x1]);
                    }
                }
            }
        }
    });
}

/// Gradient with respect to the convolution input.
pub fn conv2d_backward_input<T: Real>(g: &ConvGeom, dout: &[T], w: &[T], dx: &mut [T]) {
    let (h, wd) = (g.height, g.width);
    let plane = h * wd;
    let (pad_y, pad_x) = (g.pad_y(), g.pad_x());
    par::for_each_chunk(dx, plane, |idx, d| {
        let (n, ci) = (idx / g.in_ch, idx % g.in_ch);
        d.fill(T::zero());
        for iy in 0..h {
            let drow = &mut d[iy * wd..(iy + 1) * wd];
            for co in 0..g.out_ch {
                let gplane = &dout[(n * g.out_ch + co) * plane..][..plane];
                let wbase = (co * g.in_ch + ci) * g.kh * g.kw;
                for ky in 0..g.kh {
                    // output row y reads input row y + dy
                    let y = iy as isize - g.tap(ky, pad_y);
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    let grow = &gplane[y as usize * wd..][..wd];
                    for kx in 0..g.kw {
                        let shift = -g.tap(kx, pad_x);
                        let (x0, x1) = valid_range(wd, shift);
                        if x0 >= x1 {
                            continue;
                        }
                        let s0 = (x0 as isize + shift) as usize;
                        axpy(w[wbase + ky * g.kw + kx], &grow[s0..s0 + (x1 - x0)], &mut drow[x0..x1]);
                    }
                }
            }
        }
    });
}

/// Gradients with respect to weights and bias.
pub fn conv2d_backward_params<T: Real>(
    g: &ConvGeom,
    x: &[T],
    dout: &[T],
    dw: &mut [T],
    db: &mut [T],
) {
    let (h, wd) = (g.height, g.width);
    let plane = h * wd;
    let (pad_y, pad_x) = (g.pad_y(), g.pad_x());
    let per_out = g.in_ch * g.kh * g.kw;
    par::for_each_chunk(dw, per_out, |co, acc| {
        acc.fill(T::zero());
        for n in 0..g.batch {
            let gplane = &dout[(n * g.out_ch + co) * plane..][..plane];
            for y in 0..h {
                let grow = &gplane[y * wd..(y + 1) * wd];
                for ci in 0..g.in_ch {
                    let xplane = &x[(n * g.in_ch + ci) * plane..][..plane];
                    for ky in 0..g.kh {
                        let iy = y as isize + g.tap(ky, pad_y);
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let irow = &xplane[iy as usize * wd..][..wd];
                        let abase = (ci * g.kh + ky) * g.kw;
                        for kx in 0..g.kw {
                            let dx = g.tap(kx, pad_x);
                            let (x0, x1) = valid_range(wd, dx);
                            if x0 >= x1 {
                                continue;
                            }
                            let s0 = (x0 as isize + dx) as usize;
                            acc[abase + kx] =
                                acc[abase + kx] + dot(&grow[x0..x1], &irow[s0..s0 + (x1 - x0)]);
                        }
                    }
                }
            }
        }
    });
    for (co, dbv) in db.iter_mut().enumerate() {
        let mut s = T::zero();
        for n in 0..g.batch {
            s = s + dout[(n * g.out_ch + co) * plane..][..plane].iter().copied().sum::<T>();
        }
        *dbv = s;
    }
}

/// Geometry of a 2x2, stride-2 transposed convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    /// Input height; the output is twice as tall.
    pub height: usize,
    pub width: usize,
}

/// `w` is laid out `[in_ch, out_ch, 2, 2]`.
pub fn upconv_forward<T: Real>(g: &UpGeom, x: &[T], w: &[T], b: &[T], out: &mut [T]) {
    let (h, wd) = (g.height, g.width);
    let (oh, ow) = (2 * h, 2 * wd);
    par::for_each_chunk(out, oh * ow, |idx, o| {
        let (n, co) = (idx / g.out_ch, idx % g.out_ch);
        o.fill(b[co]);
        for ci in 0..g.in_ch {
            let xplane = &x[(n * g.in_ch + ci) * h * wd..][..h * wd];
            let k = &w[(ci * g.out_ch + co) * 4..][..4];
            for y in 0..h {
                let xrow = &xplane[y * wd..(y + 1) * wd];
                for a in 0..2 {
                    let orow = &mut o[(2 * y + a) * ow..(2 * y + a + 1) * ow];
                    let (k0, k1) = (k[2 * a], k[2 * a + 1]);
                    for (xi, &v) in xrow.iter().enumerate() {
                        orow[2 * xi] = orow[2 * xi] + k0 * v;
                        orow[2 * xi + 1] = orow[2 * xi + 1] + k1 * v;
                    }
                }
            }
        }
    });
}

pub fn upconv_backward_input<T: Real>(g: &UpGeom, dout: &[T], w: &[T], dx: &mut [T]) {
    let (h, wd) = (g.height, g.width);
    let ow = 2 * wd;
    let oplane = 4 * h * wd;
    par::for_each_chunk(dx, h * wd, |idx, d| {
        let (n, ci) = (idx / g.in_ch, idx % g.in_ch);
        d.fill(T::zero());
        for co in 0..g.out_ch {
            let gplane = &dout[(n * g.out_ch + co) * oplane..][..oplane];
            let k = &w[(ci * g.out_ch + co) * 4..][..4];
            for y in 0..h {
                let drow = &mut d[y * wd..(y + 1) * wd];
                for a in 0..2 {
                    let grow = &gplane[(2 * y + a) * ow..(2 * y + a + 1) * ow];
                    let (k0, k1) = (k[2 * a], k[2 * a + 1]);
                    for (xi, dv) in drow.iter_mut().enumerate() {
                        *dv = *dv + k0 * grow[2 * xi] + k1 * grow[2 * xi + 1];
                    }
                }
            }
        }
    });
}

pub fn upconv_backward_params<T: Real>(
    g: &UpGeom,
    x: &[T],
    dout: &[T],
    dw: &mut [T],
    db: &mut [T],
) {
    let (h, wd) = (g.height, g.width);
    let ow = 2 * wd;
    let oplane = 4 * h * wd;
    par::for_each_chunk(dw, g.out_ch * 4, |ci, acc| {
        acc.fill(T::zero());
        for n in 0..g.batch {
            let xplane = &x[(n * g.in_ch + ci) * h * wd..][..h * wd];
            for co in 0..g.out_ch {
                let gplane = &dout[(n * g.out_ch + co) * oplane..][..oplane];
                for y in 0..h {
                    let xrow = &xplane[y * wd..(y + 1) * wd];
                    for a in 0..2 {
                        let grow = &gplane[(2 * y + a) * ow..(2 * y + a + 1) * ow];
                        let (mut s0, mut s1) = (T::zero(), T::zero());
                        for (xi, &v) in xrow.iter().enumerate() {
                            s0 = s0 + v * grow[2 * xi];
                            s1 = s1 + v * grow[2 * xi + 1];
                        }
                        acc[co * 4 + 2 * a] = acc[co * 4 + 2 * a] + s0;
                        acc[co * 4 + 2 * a + 1] = acc[co * 4 + 2 * a + 1] + s1;
                    }
                }
            }
        }
    });
    for (co, dbv) in db.iter_mut().enumerate() {
        let mut s = T::zero();
        for n in 0..g.batch {
            s = s + dout[(n * g.out_ch + co) * oplane..][..oplane].iter().copied().sum::<T>();
        }
        *dbv = s;
    }
}

/// 2x2 stride-2 max pooling over `planes` planes of `height x width`.
/// Writes the flat in-plane index of each window's first maximum to `argmax`.
pub fn maxpool_forward<T: Real>(
    planes: usize,
    height: usize,
    width: usize,
    x: &[T],
    out: &mut [T],
    argmax: &mut [u32],
) {
    let (oh, ow) = (height / 2, width / 2);
    debug_assert_eq!(out.len(), planes * oh * ow);
    for p in 0..planes {
        let xp = &x[p * height * width..][..height * width];
        for y in 0..oh {
            for xx in 0..ow {
                let mut best = 2 * y * width + 2 * xx;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = (2 * y + dy) * width + 2 * xx + dx;
                    if xp[i] > xp[best] {
                        best = i;
                    }
                }
                let o = p * oh * ow + y * ow + xx;
                out[o] = xp[best];
                argmax[o] = best as u32;
            }
        }
    }
}
