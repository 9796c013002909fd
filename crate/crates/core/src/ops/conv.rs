use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Scalar, Tensor, Var};

/// One-dimensional convolution with "same" zero padding.
///
/// Output position `i` reads input positions `i·stride + dilation·k − pad_left`
/// for `k = 0..kernel_size`, with `pad_left = floor(pad_total / 2)` and the
/// total padding chosen so the output has `ceil(T / stride)` steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv1dSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub dilation: usize,
}

impl Conv1dSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel_size: usize) -> Self {
        Conv1dSpec {
            in_channels,
            out_channels,
            kernel_size,
            stride: 1,
            dilation: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.in_channels > 0
            && self.out_channels > 0
            && self.kernel_size > 0
            && self.stride > 0
            && self.dilation > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "conv1d: all extents must be positive: {self:?}"
            )))
        }
    }

    pub fn output_len(&self, t: usize) -> usize {
        t.div_ceil(self.stride)
    }

    pub fn pad_left(&self, t: usize) -> usize {
        let t_out = self.output_len(t);
        let span = (t_out.max(1) - 1) * self.stride + (self.kernel_size - 1) * self.dilation + 1;
        span.saturating_sub(t) / 2
    }

    pub fn weight_shape(&self) -> [usize; 3] {
        [self.out_channels, self.in_channels, self.kernel_size]
    }
}

/// Output indices `i` in `[lo, hi)` for which `i·s + off` lies in `[0, t_in)`.
fn valid_range(t_in: usize, t_out: usize, s: usize, off: isize) -> (usize, usize) {
    let lo = if off >= 0 {
        0
    } else {
        ((-off) as usize).div_ceil(s)
    };
    let last = t_in as isize - 1 - off;
    let hi = if last < 0 {
        0
    } else {
        (last as usize / s + 1).min(t_out)
    };
    (lo, hi.max(lo))
}

impl<T: Scalar> Graph<T> {
    /// `x[B, C_in, T] ⊛ w[C_out, C_in, K] + b[C_out] -> [B, C_out, ceil(T/s)]`.
    pub fn conv1d(&mut self, x: Var, w: Var, bias: Var, spec: Conv1dSpec) -> Result<Var> {
        spec.validate()?;
        let xs = self.shape(x).to_vec();
        let [nb, cin, t_in] = xs[..] else {
            return Err(shape_err(format!("input must be [B, C, T], got {xs:?}")));
        };
        if t_in == 0 {
            return Err(Error::ZeroLengthInput("conv1d"));
        }
        if cin != spec.in_channels {
            return Err(shape_err(format!(
                "input has {cin} channels, spec {}",
                spec.in_channels
            )));
        }
        if self.shape(w) != spec.weight_shape() {
            return Err(shape_err(format!(
                "weight {:?}, expected {:?}",
                self.shape(w),
                spec.weight_shape()
            )));
        }
        if self.shape(bias) != [spec.out_channels] {
            return Err(shape_err(format!(
                "bias {:?}, expected [{}]",
                self.shape(bias),
                spec.out_channels
            )));
        }

        let (cout, k_len, s, r) = (
            spec.out_channels,
            spec.kernel_size,
            spec.stride,
            spec.dilation,
        );
        let t_out = spec.output_len(t_in);
        let left = spec.pad_left(t_in) as isize;
        let ranges: Vec<(isize, usize, usize)> = (0..k_len)
            .map(|k| {
                let off = (r * k) as isize - left;
                let (lo, hi) = valid_range(t_in, t_out, s, off);
                (off, lo, hi)
            })
            .collect();

        let (xd, wd, bd) = (
            self.value(x).data(),
            self.value(w).data(),
            self.value(bias).data(),
        );
        let mut out = vec![T::zero(); nb * cout * t_out];
        for b in 0..nb {
            for co in 0..cout {
                let row = &mut out[(b * cout + co) * t_out..][..t_out];
                row.iter_mut().for_each(|v| *v = bd[co]);
                for ci in 0..cin {
                    let xrow = &xd[(b * cin + ci) * t_in..][..t_in];
                    let wrow = &wd[(co * cin + ci) * k_len..][..k_len];
                    for (&wv, &(off, lo, hi)) in wrow.iter().zip(&ranges) {
                        if lo >= hi {
                            continue;
                        } else if s == 1 {
                            let src =
                                &xrow[(lo as isize + off) as usize..(hi as isize + off) as usize];
                            for (o, &xv) in row[lo..hi].iter_mut().zip(src) {
                                *o = *o + wv * xv;
                            }
                        } else {
                            for (i, o) in row.iter_mut().enumerate().take(hi).skip(lo) {
                                *o = *o + wv * xrow[(i as isize * s as isize + off) as usize];
                            }
                        }
                    }
                }
            }
        }
        let out = Tensor::new([nb, cout, t_out], out)?;

        self.record(
            "conv1d",
            &[x, w, bias],
            out,
            move |ins: &[&Tensor<T>], _: &Tensor<T>, g: &[T], needs: &[bool]| {
                let (xd, wd) = (ins[0].data(), ins[1].data());
                let gx = needs[0].then(|| {
                    let mut gx = vec![T::zero(); nb * cin * t_in];
                    for b in 0..nb {
                        for ci in 0..cin {
                            let grow = &mut gx[(b * cin + ci) * t_in..][..t_in];
                            for co in 0..cout {
                                let gout = &g[(b * cout + co) * t_out..][..t_out];
                                let wrow = &wd[(co * cin + ci) * k_len..][..k_len];
                                for (&wv, &(off, lo, hi)) in wrow.iter().zip(&ranges) {
                                    if lo >= hi {
                                        continue;
                                    } else if s == 1 {
                                        let dst = &mut grow[(lo as isize + off) as usize
                                            ..(hi as isize + off) as usize];
                                        for (d, &gv) in dst.iter_mut().zip(&gout[lo..hi]) {
                                            *d = *d + wv * gv;
                                        }
                                    } else {
                                        for (i, &gv) in gout.iter().enumerate().take(hi).skip(lo) {
                                            let j = (i as isize * s as isize + off) as usize;
                                            grow[j] = grow[j] + wv * gv;
                                        }
                                    }
                                }
                            }
                        }
                    }
                    gx
                });
                let gw = needs[1].then(|| {
                    let mut gw = vec![T::zero(); cout * cin * k_len];
                    for co in 0..cout {
                        for ci in 0..cin {
                            for (k, &(off, lo, hi)) in ranges.iter().enumerate() {
                                let mut acc = T::zero();
                                for b in 0..nb {
                                    let gout = &g[(b * cout + co) * t_out..][..t_out];
                                    let xrow = &xd[(b * cin + ci) * t_in..][..t_in];
                                    if lo >= hi {
                                        continue;
                                    } else if s == 1 {
                                        let src = &xrow[(lo as isize + off) as usize
                                            ..(hi as isize + off) as usize];
                                        acc = acc + dot(&gout[lo..hi], src);
                                    } else {
                                        for (i, &gv) in gout.iter().enumerate().take(hi).skip(lo) {
                                            acc = acc
                                                + gv * xrow
                                                    [(i as isize * s as isize + off) as usize];
                                        }
                                    }
                                }
                                gw[(co * cin + ci) * k_len + k] = acc;
                            }
                        }
                    }
                    gw
                });
                let gb = needs[2].then(|| {
                    (0..cout)
                        .map(|co| {
                            (0..nb)
                                .map(|b| {
                                    g[(b * cout + co) * t_out..][..t_out]
                                        .iter()
                                        .copied()
                                        .sum::<T>()
                                })
                                .sum()
                        })
                        .collect()
                });
                vec![gx, gw, gb]
            },
        )
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] = acc[l] + a[c * 4 + l] * b[c * 4 + l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 4..a.len() {
        tail = tail + a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn shape_err(detail: String) -> Error {
    Error::ShapeMismatch {
        node: "conv1d".into(),
        detail,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Explicitly zero-padded nested-loop cross-correlation.
    fn naive(x: &[f64], w: &[f64], b: f64, s: usize, r: usize) -> Vec<f64> {
        let spec = Conv1dSpec::new(1, 1, w.len())
            .with_stride(s)
            .with_dilation(r);
        let left = spec.pad_left(x.len());
        let t_out = spec.output_len(x.len());
        let mut padded = vec![0.0; left];
        padded.extend_from_slice(x);
        padded.extend(std::iter::repeat_n(0.0, w.len() * r + s * t_out));
        (0..t_out)
            .map(|i| {
                b + (0..w.len())
                    .map(|k| padded[i * s + r * k] * w[k])
                    .sum::<f64>()
            })
            .collect()
    }

    fn run(x: &[f64], w: &[f64], b: f64, s: usize, r: usize) -> Vec<f64> {
        let spec = Conv1dSpec::new(1, 1, w.len())
            .with_stride(s)
            .with_dilation(r);
        let mut g = Graph::<f64>::new();
        let xv = g.constant(Tensor::new([1, 1, x.len()], x.to_vec()).unwrap());
        let wv = g.constant(Tensor::new([1, 1, w.len()], w.to_vec()).unwrap());
        let bv = g.constant(Tensor::from_slice(&[b]));
        let y = g.conv1d(xv, wv, bv, spec).unwrap();
        g.value(y).data().to_vec()
    }

    #[test]
    fn identity_kernel() {
        let x = [0.5, -1.0, 2.0, 3.5];
        assert_eq!(run(&x, &[1.0], 0.0, 1, 1), x);
    }

    #[test]
    fn box_filter_same_padding() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(
            naive(&x, &[1.0, 1.0, 1.0], 0.0, 1, 1),
            vec![3.0, 6.0, 9.0, 12.0, 9.0]
        );
        assert_eq!(
            run(&x, &[1.0, 1.0, 1.0], 0.0, 1, 1),
            vec![3.0, 6.0, 9.0, 12.0, 9.0]
        );
    }

    #[test]
    fn matches_naive_over_strides_and_dilations() {
        let x: Vec<f64> = (0..23).map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.3).collect();
        let w = [0.2, -0.7, 1.1, 0.4, -0.3];
        for s in 1..=4 {
            for r in 1..=4 {
                for k in 1..=5 {
                    let got = run(&x, &w[..k], 0.25, s, r);
                    let want = naive(&x, &w[..k], 0.25, s, r);
                    assert_eq!(got.len(), x.len().div_ceil(s));
                    for (a, b) in got.iter().zip(&want) {
                        assert!((a - b).abs() < 1e-12, "s={s} r={r} k={k}");
                    }
                }
            }
        }
    }

    #[test]
    fn unit_dilation_is_textbook_correlation() {
        // Textbook "same" correlation: y[i] = Σ_j x[i + j - (K-1)/2] w[j], zeros outside.
        let x: Vec<f64> = (0..17).map(|i| (i as f64 * 0.37).sin()).collect();
        let w = [0.3, -0.1, 0.8];
        let got = run(&x, &w, 0.0, 1, 1);
        for (i, v) in got.iter().enumerate() {
            let mut want = 0.0;
            for (j, &wj) in w.iter().enumerate() {
                let p = i as isize + j as isize - 1;
                if (0..x.len() as isize).contains(&p) {
                    want += x[p as usize] * wj;
                }
            }
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_length_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros([1, 1, 0]));
        let w = g.constant(Tensor::zeros([1, 1, 3]));
        let b = g.constant(Tensor::zeros([1]));
        assert!(matches!(
            g.conv1d(x, w, b, Conv1dSpec::new(1, 1, 3)),
            Err(Error::ZeroLengthInput(_))
        ));
    }

    #[test]
    fn wrong_weight_shape_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros([1, 2, 8]));
        let w = g.constant(Tensor::zeros([1, 1, 3]));
        let b = g.constant(Tensor::zeros([1]));
        assert!(matches!(
            g.conv1d(x, w, b, Conv1dSpec::new(2, 1, 3)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn stride_one_preserves_length() {
        for t in 1..40 {
            for r in [1, 2, 4] {
                for k in [1, 3, 5, 15] {
                    let spec = Conv1dSpec::new(1, 1, k).with_dilation(r);
                    assert_eq!(spec.output_len(t), t);
                    assert_eq!(spec.pad_left(t), (k - 1) * r / 2);
                }
            }
        }
    }
}
