//! Time-axis decimation and linear upsampling, plus channel concatenation
//! for skip connections. All operate on `[B, C, T]`.

use crate::error::{Error, Result};
use crate::tensor::{Graph, Scalar, Tensor, Var};

fn rank3<T: Scalar>(g: &Graph<T>, x: Var, op: &str) -> Result<[usize; 3]> {
    match g.shape(x) {
        &[b, c, t] => Ok([b, c, t]),
        s => Err(Error::ShapeMismatch {
            node: op.into(),
            detail: format!("expected [B, C, T], got {s:?}"),
        }),
    }
}

impl<T: Scalar> Graph<T> {
    /// Keeps time steps 0, 2, 4, …
    pub fn decimate(&mut self, x: Var) -> Result<Var> {
        let [nb, c, t] = rank3(self, x, "decimate")?;
        if t == 0 {
            return Err(Error::ZeroLengthInput("decimate"));
        }
        let t_out = t.div_ceil(2);
        let data = self
            .value(x)
            .data()
            .chunks(t)
            .flat_map(|row| row.iter().step_by(2).copied())
            .collect();
        let out = Tensor::new([nb, c, t_out], data)?;
        self.record(
            "decimate",
            &[x],
            out,
            move |_: &[&Tensor<T>], _: &Tensor<T>, g: &[T], _: &[bool]| {
                let mut gi = vec![T::zero(); nb * c * t];
                for (dst, src) in gi.chunks_mut(t).zip(g.chunks(t_out)) {
                    for (i, &v) in src.iter().enumerate() {
                        dst[2 * i] = v;
                    }
                }
                vec![Some(gi)]
            },
        )
    }

    /// Doubles the time resolution: even outputs copy the input, odd outputs
    /// are midpoints, and the last output repeats the last input.
    pub fn upsample_linear2x(&mut self, x: Var) -> Result<Var> {
        let [nb, c, t] = rank3(self, x, "upsample_linear2x")?;
        if t == 0 {
            return Err(Error::ZeroLengthInput("upsample_linear2x"));
        }
        let half = T::of(0.5);
        let mut data = Vec::with_capacity(nb * c * t * 2);
        for row in self.value(x).data().chunks(t) {
            for i in 0..t {
                data.push(row[i]);
                data.push(if i + 1 < t {
                    (row[i] + row[i + 1]) * half
                } else {
                    row[i]
                });
            }
        }
        let out = Tensor::new([nb, c, 2 * t], data)?;
        self.record(
            "upsample_linear2x",
            &[x],
            out,
            move |_: &[&Tensor<T>], _: &Tensor<T>, g: &[T], _: &[bool]| {
                let mut gi = vec![T::zero(); nb * c * t];
                for (dst, src) in gi.chunks_mut(t).zip(g.chunks(2 * t)) {
                    for i in 0..t {
                        dst[i] = dst[i] + src[2 * i];
                        if i + 1 < t {
                            let h = src[2 * i + 1] * half;
                            dst[i] = dst[i] + h;
                            dst[i + 1] = dst[i + 1] + h;
                        } else {
                            dst[i] = dst[i] + src[2 * i + 1];
                        }
                    }
                }
                vec![Some(gi)]
            },
        )
    }

    /// `[B, C1, T] ⊕ [B, C2, T] -> [B, C1 + C2, T]`.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let [na, ca, ta] = rank3(self, a, "concat_channels")?;
        let [nb, cb, tb] = rank3(self, b, "concat_channels")?;
        if na != nb || ta != tb {
            return Err(Error::ShapeMismatch {
                node: "concat_channels".into(),
                detail: format!("batch/time extents differ: [{na}, _, {ta}] vs [{nb}, _, {tb}]"),
            });
        }
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(ad.len() + bd.len());
        for i in 0..na {
            data.extend_from_slice(&ad[i * ca * ta..(i + 1) * ca * ta]);
            data.extend_from_slice(&bd[i * cb * tb..(i + 1) * cb * tb]);
        }
        let out = Tensor::new([na, ca + cb, ta], data)?;
        let (sa, sb) = (ca * ta, cb * tb);
        self.record(
            "concat_channels",
            &[a, b],
            out,
            move |_: &[&Tensor<T>], _: &Tensor<T>, g: &[T], needs: &[bool]| {
                let split = |first: bool| {
                    g.chunks(sa + sb)
                        .flat_map(|c| if first { &c[..sa] } else { &c[sa..] }.iter().copied())
                        .collect()
                };
                vec![
                    needs[0].then(|| split(true)),
                    needs[1].then(|| split(false)),
                ]
            },
        )
    }

    /// Channels `[start, end)` of `[B, C, T]`.
    pub fn slice_channels(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let [nb, c, t] = rank3(self, x, "slice_channels")?;
        if start > end || end > c {
            return Err(Error::ShapeMismatch {
                node: "slice_channels".into(),
                detail: format!("range {start}..{end} of {c} channels"),
            });
        }
        let width = end - start;
        let data = self
            .value(x)
            .data()
            .chunks(c * t)
            .flat_map(|ex| ex[start * t..end * t].iter().copied())
            .collect();
        let out = Tensor::new([nb, width, t], data)?;
        self.record(
            "slice_channels",
            &[x],
            out,
            move |_: &[&Tensor<T>], _: &Tensor<T>, g: &[T], _: &[bool]| {
                let mut gi = vec![T::zero(); nb * c * t];
                for (dst, src) in gi.chunks_mut(c * t).zip(g.chunks(width * t)) {
                    dst[start * t..end * t].copy_from_slice(src);
                }
                vec![Some(gi)]
            },
        )
    }
}
