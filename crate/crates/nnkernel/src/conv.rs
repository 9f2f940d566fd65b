//! Strided 2-D convolution kernels (im2col + GEMM) shared by the 1-D and 2-D
//! graph ops. A 1-D signal `[C, T]` is the special case `H = 1`.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    /// Zero padding before the first row / column.
    pub pad: (usize, usize),
    pub out_h: usize,
    pub out_w: usize,
}

/// Output length and leading pad for "same" padding: `out = ceil(len / stride)`,
/// with the total padding split symmetrically (extra element on the trailing side).
pub fn same_padding(len: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = len.div_ceil(stride);
    let needed = ((out - 1) * stride + kernel).saturating_sub(len);
    (out, needed / 2)
}

impl ConvGeometry {
    pub fn same(
        in_channels: usize,
        in_h: usize,
        in_w: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
    ) -> Self {
        let (out_h, pad_h) = same_padding(in_h, kernel.0, stride.0);
        let (out_w, pad_w) = same_padding(in_w, kernel.1, stride.1);
        Self {
            in_channels,
            in_h,
            in_w,
            out_channels,
            kernel,
            stride,
            pad: (pad_h, pad_w),
            out_h,
            out_w,
        }
    }

    fn patch(&self) -> usize {
        self.in_channels * self.kernel.0 * self.kernel.1
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Input coordinate for output position `o` and kernel tap `k` along one axis.
    #[inline]
    fn src(o: usize, k: usize, stride: usize, pad: usize, len: usize) -> Option<usize> {
        let p = (o * stride + k).checked_sub(pad)?;
        (p < len).then_some(p)
    }

    fn im2col(&self, input: &[f64]) -> Vec<f64> {
        let (kh, kw) = self.kernel;
        let p = self.positions();
        let mut cols = vec![0.0; self.patch() * p];
        for c in 0..self.in_channels {
            let plane = &input[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for i in 0..kh {
                for j in 0..kw {
                    let row = (c * kh + i) * kw + j;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oh in 0..self.out_h {
                        let Some(h) = Self::src(oh, i, self.stride.0, self.pad.0, self.in_h) else {
                            continue;
                        };
                        for ow in 0..self.out_w {
                            if let Some(w) = Self::src(ow, j, self.stride.1, self.pad.1, self.in_w) {
                                dst[oh * self.out_w + ow] = plane[h * self.in_w + w];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], grad_input: &mut [f64]) {
        let (kh, kw) = self.kernel;
        let p = self.positions();
        for c in 0..self.in_channels {
            let plane = &mut grad_input[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for i in 0..kh {
                for j in 0..kw {
                    let row = (c * kh + i) * kw + j;
                    let src = &cols[row * p..(row + 1) * p];
                    for oh in 0..self.out_h {
                        let Some(h) = Self::src(oh, i, self.stride.0, self.pad.0, self.in_h) else {
                            continue;
                        };
                        for ow in 0..self.out_w {
                            if let Some(w) = Self::src(ow, j, self.stride.1, self.pad.1, self.in_w) {
                                plane[h * self.in_w + w] += src[oh * self.out_w + ow];
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, input: &[f64], weight: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
        let p = self.positions();
        let k = self.patch();
        let cols = self.im2col(input);
        let mut out = vec![0.0; self.out_channels * p];
        if let Some(b) = bias {
            for (o, row) in out.chunks_mut(p).enumerate() {
                row.fill(b[o]);
            }
        }
        gemm(self.out_channels, k, p, weight, false, &cols, false, &mut out, 1.0);
        out
    }

    /// Accumulates gradients for input, weight and bias given `grad_out`.
    pub fn backward(
        &self,
        input: &[f64],
        weight: &[f64],
        grad_out: &[f64],
        grad_input: Option<&mut [f64]>,
        grad_weight: Option<&mut [f64]>,
        grad_bias: Option<&mut [f64]>,
    ) {
        let p = self.positions();
        let k = self.patch();
        if let Some(gb) = grad_bias {
            for (o, row) in grad_out.chunks(p).enumerate() {
                gb[o] += row.iter().sum::<f64>();
            }
        }
        if let Some(gw) = grad_weight {
            let cols = self.im2col(input);
            gemm(self.out_channels, p, k, grad_out, false, &cols, true, gw, 1.0);
        }
        if let Some(gi) = grad_input {
            let mut dcols = vec![0.0; k * p];
            gemm(k, self.out_channels, p, weight, true, grad_out, false, &mut dcols, 0.0);
            self.col2im(&dcols, gi);
        }
    }
}

/// `c = a·b + beta·c` where `a` is `m×k` and `b` is `k×n`, both row-major,
/// optionally stored transposed.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_transposed: bool,
    b: &[f64],
    b_transposed: bool,
    c: &mut [f64],
    beta: f64,
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_transposed { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_transposed { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above guarantee every strided access stays in bounds.
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
