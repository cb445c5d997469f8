//! 3-D (transposed) convolution kernels over `[N, C, T, H, W]` buffers.
//!
//! 2-D convolutions are the `kT = 1` special case. All kernels are plain
//! cross-correlation with zero padding; the inner loop runs along a
//! contiguous output row so it vectorizes for unit stride.

use crate::error::{invalid, shape_err, Result};

/// Kernel, stride and padding for one convolution layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: [usize; 3]) -> Self {
        Self {
            kernel,
            stride: [1, 1, 1],
            padding: [0, 0, 0],
            in_channels,
            out_channels,
        }
    }

    /// Stride 1 with `k / 2` padding, which preserves extents for odd kernels.
    pub fn same(in_channels: usize, out_channels: usize, kernel: [usize; 3]) -> Self {
        Self::new(in_channels, out_channels, kernel).with_padding(kernel.map(|k| k / 2))
    }

    pub fn with_stride(mut self, stride: [usize; 3]) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_padding(mut self, padding: [usize; 3]) -> Self {
        self.padding = padding;
        self
    }

    pub fn weight_shape(&self) -> [usize; 5] {
        let [kt, kh, kw] = self.kernel;
        [self.out_channels, self.in_channels, kt, kh, kw]
    }

    /// Weight layout for the transposed direction: `[Cin, Cout, kT, kH, kW]`.
    pub fn transposed_weight_shape(&self) -> [usize; 5] {
        let [kt, kh, kw] = self.kernel;
        [self.in_channels, self.out_channels, kt, kh, kw]
    }

    fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return invalid("convolution with zero channels");
        }
        if self.kernel.contains(&0) || self.stride.contains(&0) {
            return invalid(format!("degenerate conv spec {self:?}"));
        }
        Ok(())
    }

    /// `floor((in + 2p - k) / s) + 1` per axis.
    pub fn output_extents(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        self.validate()?;
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = input[a] + 2 * self.padding[a];
            if padded < self.kernel[a] {
                return shape_err(
                    "conv3d",
                    format!(
                        "kernel {:?} does not fit padded input {input:?} (padding {:?})",
                        self.kernel, self.padding
                    ),
                );
            }
            out[a] = (padded - self.kernel[a]) / self.stride[a] + 1;
        }
        Ok(out)
    }

    /// `(in - 1) * s - 2p + k + output_padding` per axis.
    pub fn transposed_output_extents(
        &self,
        input: [usize; 3],
        output_padding: [usize; 3],
    ) -> Result<[usize; 3]> {
        self.validate()?;
        let mut out = [0; 3];
        for a in 0..3 {
            if output_padding[a] >= self.stride[a] {
                return invalid(format!(
                    "output padding {output_padding:?} must be below stride {:?}",
                    self.stride
                ));
            }
            let full = (input[a] - 1) * self.stride[a] + self.kernel[a] + output_padding[a];
            if full <= 2 * self.padding[a] {
                return shape_err("conv_transpose3d", format!("empty output on axis {a}"));
            }
            out[a] = full - 2 * self.padding[a];
        }
        Ok(out)
    }
}

/// Fully resolved extents of a forward convolution `x -> y`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub input: [usize; 3],
    pub output: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl ConvGeom {
    pub fn forward(spec: &ConvSpec, x_shape: &[usize]) -> Result<Self> {
        if x_shape.len() != 5 {
            return shape_err("conv3d", format!("expected [N,C,T,H,W], got {x_shape:?}"));
        }
        if x_shape[1] != spec.in_channels {
            return shape_err(
                "conv3d",
                format!(
                    "input has {} channels, spec expects {}",
                    x_shape[1], spec.in_channels
                ),
            );
        }
        let input = [x_shape[2], x_shape[3], x_shape[4]];
        Ok(Self {
            batch: x_shape[0],
            cin: spec.in_channels,
            cout: spec.out_channels,
            input,
            output: spec.output_extents(input)?,
            kernel: spec.kernel,
            stride: spec.stride,
            padding: spec.padding,
        })
    }

    /// Geometry of the forward convolution whose adjoint is the requested
    /// transposed convolution: its "input" is the transposed output.
    pub fn transposed(
        spec: &ConvSpec,
        x_shape: &[usize],
        output_padding: [usize; 3],
    ) -> Result<Self> {
        if x_shape.len() != 5 {
            return shape_err(
                "conv_transpose3d",
                format!("expected [N,C,T,H,W], got {x_shape:?}"),
            );
        }
        if x_shape[1] != spec.in_channels {
            return shape_err(
                "conv_transpose3d",
                format!(
                    "input has {} channels, spec expects {}",
                    x_shape[1], spec.in_channels
                ),
            );
        }
        let small = [x_shape[2], x_shape[3], x_shape[4]];
        let big = spec.transposed_output_extents(small, output_padding)?;
        Ok(Self {
            batch: x_shape[0],
            cin: spec.out_channels,
            cout: spec.in_channels,
            input: big,
            output: small,
            kernel: spec.kernel,
            stride: spec.stride,
            padding: spec.padding,
        })
    }

    pub fn x_shape(&self) -> Vec<usize> {
        let [t, h, w] = self.input;
        vec![self.batch, self.cin, t, h, w]
    }

    pub fn y_shape(&self) -> Vec<usize> {
        let [t, h, w] = self.output;
        vec![self.batch, self.cout, t, h, w]
    }

    fn x_plane(&self) -> usize {
        self.input.iter().product()
    }

    fn y_plane(&self) -> usize {
        self.output.iter().product()
    }

    fn k_volume(&self) -> usize {
        self.kernel.iter().product()
    }
}

/// Output indices `o` for which `o * stride + offset - pad` lands in `[0, len)`.
fn valid_range(offset: usize, pad: usize, stride: usize, len: usize, out: usize) -> (usize, usize) {
    // smallest o with o*s + offset >= pad
    let lo = if offset >= pad {
        0
    } else {
        (pad - offset).div_ceil(stride)
    };
    // largest o with o*s + offset - pad <= len - 1
    let top = len - 1 + pad;
    if top < offset {
        return (0, 0);
    }
    let hi = ((top - offset) / stride + 1).min(out);
    (lo.min(hi), hi)
}

/// Visits every (kernel tap, output row) pair that touches valid input.
///
/// The callback receives `(tap index, out row start, in row start, lo, hi, kw offset)`
/// where `lo..hi` is the valid output column range.
#[inline]
fn for_each_row(g: &ConvGeom, mut f: impl FnMut(usize, usize, usize, usize, usize, isize)) {
    let [kt, kh, kw] = g.kernel;
    let [st, sh, sw] = g.stride;
    let [pt, ph, pw] = g.padding;
    let [it, ih, iw] = g.input;
    let [ot, oh, ow] = g.output;
    for a in 0..kt {
        let (t_lo, t_hi) = valid_range(a, pt, st, it, ot);
        for b in 0..kh {
            let (h_lo, h_hi) = valid_range(b, ph, sh, ih, oh);
            for c in 0..kw {
                let (w_lo, w_hi) = valid_range(c, pw, sw, iw, ow);
                if w_lo >= w_hi {
                    continue;
                }
                let tap = (a * kh + b) * kw + c;
                for o_t in t_lo..t_hi {
                    let i_t = o_t * st + a - pt;
                    for o_h in h_lo..h_hi {
                        let i_h = o_h * sh + b - ph;
                        f(
                            tap,
                            (o_t * oh + o_h) * ow,
                            (i_t * ih + i_h) * iw,
                            w_lo,
                            w_hi,
                            c as isize - pw as isize,
                        );
                    }
                }
            }
        }
    }
}

/// Copies one batch item `[Cin, T, H, W]` into columns `[Cin * kvol, out plane]`.
fn im2col(g: &ConvGeom, x: &[f64], cols: &mut [f64]) {
    let (xp, yp, kv) = (g.x_plane(), g.y_plane(), g.k_volume());
    let sw = g.stride[2];
    cols.fill(0.0);
    for ci in 0..g.cin {
        let xs = &x[ci * xp..][..xp];
        let cs = &mut cols[ci * kv * yp..][..kv * yp];
        for_each_row(g, |tap, yrow, xrow, lo, hi, shift| {
            let dst = &mut cs[tap * yp + yrow + lo..tap * yp + yrow + hi];
            let start = (xrow as isize + lo as isize * sw as isize + shift) as usize;
            if sw == 1 {
                dst.copy_from_slice(&xs[start..start + (hi - lo)]);
            } else {
                for (j, d) in dst.iter_mut().enumerate() {
                    *d = xs[start + j * sw];
                }
            }
        });
    }
}

/// Adds columns `[Cin * kvol, out plane]` back into `[Cin, T, H, W]`.
fn col2im(g: &ConvGeom, cols: &[f64], x: &mut [f64]) {
    let (xp, yp, kv) = (g.x_plane(), g.y_plane(), g.k_volume());
    let sw = g.stride[2];
    for ci in 0..g.cin {
        let xs = &mut x[ci * xp..][..xp];
        let cs = &cols[ci * kv * yp..][..kv * yp];
        for_each_row(g, |tap, yrow, xrow, lo, hi, shift| {
            let src = &cs[tap * yp + yrow + lo..tap * yp + yrow + hi];
            let start = (xrow as isize + lo as isize * sw as isize + shift) as usize;
            for (j, v) in src.iter().enumerate() {
                xs[start + j * sw] += v;
            }
        });
    }
}

/// `c = beta * c + a * b` for row-major `a: [m, k]`, `b: [k, n]`; `b_t` reads
/// `b` from a row-major `[n, k]` buffer.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_t {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    // SAFETY: the extents above bound every index the kernel touches.
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

/// `y += conv(x, w)`; `w` is `[Cout, Cin, kT, kH, kW]`.
pub(crate) fn conv_forward(g: &ConvGeom, x: &[f64], w: &[f64], y: &mut [f64]) {
    let (xp, yp) = (g.x_plane(), g.y_plane());
    let k = g.cin * g.k_volume();
    let mut cols = vec![0.0; k * yp];
    for n in 0..g.batch {
        im2col(g, &x[n * g.cin * xp..][..g.cin * xp], &mut cols);
        gemm(
            g.cout,
            k,
            yp,
            w,
            false,
            &cols,
            false,
            1.0,
            &mut y[n * g.cout * yp..][..g.cout * yp],
        );
    }
}

/// `gx += conv^T(gy, w)`: the input gradient, and the transposed-conv forward.
pub(crate) fn conv_backward_input(g: &ConvGeom, gy: &[f64], w: &[f64], gx: &mut [f64]) {
    let (xp, yp) = (g.x_plane(), g.y_plane());
    let k = g.cin * g.k_volume();
    let mut cols = vec![0.0; k * yp];
    for n in 0..g.batch {
        gemm(
            k,
            g.cout,
            yp,
            w,
            true,
            &gy[n * g.cout * yp..][..g.cout * yp],
            false,
            0.0,
            &mut cols,
        );
        col2im(g, &cols, &mut gx[n * g.cin * xp..][..g.cin * xp]);
    }
}

/// `gw += d<y, gy>/dw` for `y = conv(x, w)`.
pub(crate) fn conv_backward_weight(g: &ConvGeom, x: &[f64], gy: &[f64], gw: &mut [f64]) {
    let (xp, yp) = (g.x_plane(), g.y_plane());
    let k = g.cin * g.k_volume();
    let mut cols = vec![0.0; k * yp];
    for n in 0..g.batch {
        im2col(g, &x[n * g.cin * xp..][..g.cin * xp], &mut cols);
        gemm(
            g.cout,
            yp,
            k,
            &gy[n * g.cout * yp..][..g.cout * yp],
            false,
            &cols,
            true,
            1.0,
            gw,
        );
    }
}

/// Adds `bias[c]` to every element of channel `c` in `[N, C, ...]`.
pub(crate) fn add_channel_bias(y: &mut [f64], bias: &[f64], batch: usize, plane: usize) {
    let c = bias.len();
    for n in 0..batch {
        for (ch, &b) in bias.iter().enumerate() {
            for v in &mut y[(n * c + ch) * plane..][..plane] {
                *v += b;
            }
        }
    }
}

pub(crate) fn channel_bias_grad(
    gy: &[f64],
    channels: usize,
    batch: usize,
    plane: usize,
) -> Vec<f64> {
    let mut gb = vec![0.0; channels];
    for n in 0..batch {
        for (ch, acc) in gb.iter_mut().enumerate() {
            *acc += gy[(n * channels + ch) * plane..][..plane]
                .iter()
                .sum::<f64>();
        }
    }
    gb
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_extent_formula() {
        let s = ConvSpec::new(1, 1, [3, 3, 3])
            .with_stride([1, 2, 2])
            .with_padding([1, 1, 1]);
        assert_eq!(s.output_extents([10, 32, 32]).unwrap(), [10, 16, 16]);
        let s = ConvSpec::new(1, 1, [4, 3, 3]).with_padding([0, 1, 1]);
        assert_eq!(s.output_extents([4, 8, 8]).unwrap(), [1, 8, 8]);
        assert!(ConvSpec::new(1, 1, [5, 1, 1])
            .output_extents([4, 1, 1])
            .is_err());
    }

    #[test]
    fn transposed_extent_inverts_strided_conv() {
        let s = ConvSpec::new(2, 2, [1, 3, 3])
            .with_stride([1, 2, 2])
            .with_padding([0, 1, 1]);
        let up = s.transposed_output_extents([1, 8, 8], [0, 1, 1]).unwrap();
        assert_eq!(up, [1, 16, 16]);
        assert_eq!(s.output_extents(up).unwrap(), [1, 8, 8]);
        assert!(s.transposed_output_extents([1, 8, 8], [0, 2, 0]).is_err());
    }

    #[test]
    fn valid_range_bounds() {
        // k offset 0, pad 1: o=0 reads index -1
        assert_eq!(valid_range(0, 1, 1, 5, 5), (1, 5));
        assert_eq!(valid_range(2, 1, 1, 5, 5), (0, 4));
        assert_eq!(valid_range(1, 1, 2, 6, 3), (0, 3));
    }
}
