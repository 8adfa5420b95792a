//! Dense kernels: GEMM wrappers and image/column rearrangements for
//! convolutions. All matrices are row-major.

/// `c = alpha * op(a) * op(b) + beta * c` where `op` optionally transposes.
/// `a` is stored as `m x k` (or `k x m` when `ta`), `b` as `k x n` (or `n x k` when `tb`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths are checked above and the strides describe
    // exactly the m x k, k x n and m x n row-major (or transposed) layouts.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
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

/// Geometry of a 2-D sliding window between an "image" side and a "grid"
/// side. For a convolution the image is the input and the grid its output;
/// for a transposed convolution the roles swap.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Window {
    pub batch: usize,
    pub channels: usize,
    pub img_h: usize,
    pub img_w: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Window {
    pub fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn cols(&self) -> usize {
        self.batch * self.grid_h * self.grid_w
    }

    #[inline]
    fn source(&self, g: usize, kk: usize) -> Option<usize> {
        let pos = (g * self.stride + kk) as isize - self.padding as isize;
        (pos >= 0).then_some(pos as usize)
    }
}

/// Image `(batch, channels, img_h, img_w)` to columns `(channels*k*k, batch*grid_h*grid_w)`.
pub(crate) fn im2col(w: &Window, img: &[f64]) -> Vec<f64> {
    let cols_n = w.cols();
    let mut out = vec![0.0; w.rows() * cols_n];
    let grid = w.grid_h * w.grid_w;
    for c in 0..w.channels {
        for ki in 0..w.kernel {
            for kj in 0..w.kernel {
                let row = (c * w.kernel + ki) * w.kernel + kj;
                let dst = &mut out[row * cols_n..(row + 1) * cols_n];
                for b in 0..w.batch {
                    let plane = &img[(b * w.channels + c) * w.img_h * w.img_w..][..w.img_h * w.img_w];
                    for gi in 0..w.grid_h {
                        let Some(si) = w.source(gi, ki).filter(|&s| s < w.img_h) else {
                            continue;
                        };
                        for gj in 0..w.grid_w {
                            if let Some(sj) = w.source(gj, kj).filter(|&s| s < w.img_w) {
                                dst[b * grid + gi * w.grid_w + gj] = plane[si * w.img_w + sj];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: accumulates columns back into an image.
pub(crate) fn col2im(w: &Window, cols: &[f64]) -> Vec<f64> {
    let cols_n = w.cols();
    let mut img = vec![0.0; w.batch * w.channels * w.img_h * w.img_w];
    let grid = w.grid_h * w.grid_w;
    for c in 0..w.channels {
        for ki in 0..w.kernel {
            for kj in 0..w.kernel {
                let row = (c * w.kernel + ki) * w.kernel + kj;
                let src = &cols[row * cols_n..(row + 1) * cols_n];
                for b in 0..w.batch {
                    let plane =
                        &mut img[(b * w.channels + c) * w.img_h * w.img_w..][..w.img_h * w.img_w];
                    for gi in 0..w.grid_h {
                        let Some(si) = w.source(gi, ki).filter(|&s| s < w.img_h) else {
                            continue;
                        };
                        for gj in 0..w.grid_w {
                            if let Some(sj) = w.source(gj, kj).filter(|&s| s < w.img_w) {
                                plane[si * w.img_w + sj] += src[b * grid + gi * w.grid_w + gj];
                            }
                        }
                    }
                }
            }
        }
    }
    img
}

/// `(batch, channels, plane)` -> `(channels, batch*plane)`.
pub(crate) fn batch_to_channel_major(x: &[f64], batch: usize, channels: usize, plane: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for b in 0..batch {
        for c in 0..channels {
            let src = &x[(b * channels + c) * plane..][..plane];
            out[c * batch * plane + b * plane..][..plane].copy_from_slice(src);
        }
    }
    out
}

/// `(channels, batch*plane)` -> `(batch, channels, plane)`.
pub(crate) fn channel_to_batch_major(x: &[f64], batch: usize, channels: usize, plane: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for c in 0..channels {
        for b in 0..batch {
            let src = &x[c * batch * plane + b * plane..][..plane];
            out[(b * channels + c) * plane..][..plane].copy_from_slice(src);
        }
    }
    out
}

/// Output side of a convolution, or `None` when the window does not fit.
pub fn conv_output_side(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    (padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

/// Output side of a transposed convolution: `(s - 1) * t - 2p + k`.
pub fn conv_transpose_output_side(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Option<usize> {
    ((input - 1) * stride + kernel).checked_sub(2 * padding).filter(|&s| s > 0)
}
