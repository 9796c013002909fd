//! Elementwise arithmetic, reductions and the dense head.

use super::graph::shape_err;
use super::{Graph, Scalar, Tensor, Var};
use crate::error::Result;

impl<T: Scalar> Graph<T> {
    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(ta.shape().to_vec(), data).expect("same shape")
    }

    fn map(&self, a: Var, f: impl Fn(T) -> T) -> Tensor<T> {
        let ta = self.value(a);
        Tensor::new(
            ta.shape().to_vec(),
            ta.data().iter().map(|&x| f(x)).collect(),
        )
        .expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_map(a, b, |x, y| x + y);
        self.record(
            "add",
            &[a, b],
            out,
            |_: &[&Tensor<T>], _: &Tensor<T>, g: &[T], _: &[bool]| {
                vec![Some(g.to_vec()), Some(g.to_vec())]
            },
        )
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_map(a, b, |x, y| x - y);
        self.record(
            "sub",
            &[a, b],
            out,
            |_: &[&Tensor<T>], _: &Tensor<T>, g: &[T], needs: &[bool]| {
                vec![
                    Some(g.to_vec()),
                    needs[1].then(|| g.iter().map(|&v| -v).collect()),
                ]
            },
        )
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_map(a, b, |x, y| x * y);
        self.record(
            "mul",
            &[a, b],
            out,
            |ins: &[&Tensor<T>], _: &Tensor<T>, g: &[T], needs: &[bool]| {
                let prod =
                    |other: &Tensor<T>| g.iter().zip(other.data()).map(|(&g, &o)| g * o).collect();
                vec![
                    needs[0].then(|| prod(ins[1])),
                    needs[1].then(|| prod(ins[0])),
                ]
            },
        )
    }

    /// `mul * a + add`, elementwise.
    pub fn affine(&mut self, a: Var, mul: T, add: T) -> Result<Var> {
        let out = self.map(a, |x| mul * x + add);
        self.record(
            "affine",
            &[a],
            out,
            move |_: &[&Tensor<T>], _: &Tensor<T>, g: &[T], _: &[bool]| {
                vec![Some(g.iter().map(|&v| v * mul).collect())]
            },
        )
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Result<Var> {
        self.affine(a, factor, T::zero())
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().copied().sum();
        self.record(
            "sum",
            &[a],
            Tensor::scalar(s),
            |ins: &[&Tensor<T>], _: &Tensor<T>, g: &[T], _: &[bool]| {
                vec![Some(vec![g[0]; ins[0].len()])]
            },
        )
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(crate::error::Error::ZeroLengthInput("mean"));
        }
        let s: T = self.value(a).data().iter().copied().sum();
        let out = Tensor::scalar(s / T::of(n as f64));
        self.record(
            "mean",
            &[a],
            out,
            move |_: &[&Tensor<T>], _: &Tensor<T>, g: &[T], _: &[bool]| {
                vec![Some(vec![g[0] / T::of(n as f64); n])]
            },
        )
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let out = self.map(a, |x| x.ln());
        self.record(
            "log",
            &[a],
            out,
            |ins: &[&Tensor<T>], _: &Tensor<T>, g: &[T], _: &[bool]| {
                vec![Some(
                    g.iter().zip(ins[0].data()).map(|(&g, &x)| g / x).collect(),
                )]
            },
        )
    }

    /// Clamp into `[lo, hi]`; the gradient is zero where the bound is active.
    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Result<Var> {
        let out = self.map(a, |x| x.max(lo).min(hi));
        self.record(
            "clamp",
            &[a],
            out,
            move |ins: &[&Tensor<T>], _: &Tensor<T>, g: &[T], _: &[bool]| {
                let gi = g
                    .iter()
                    .zip(ins[0].data())
                    .map(|(&g, &x)| if x < lo || x > hi { T::zero() } else { g })
                    .collect();
                vec![Some(gi)]
            },
        )
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self
            .value(a)
            .clone()
            .with_requires_grad(false)
            .reshape(shape.to_vec())?;
        self.record(
            "reshape",
            &[a],
            out,
            |_: &[&Tensor<T>], _: &Tensor<T>, g: &[T], _: &[bool]| vec![Some(g.to_vec())],
        )
    }

    /// Mean squared difference over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        self.mean(sq)
    }

    /// `[B, C, T] -> [B, C]` average over time.
    pub fn mean_time(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let [b, c, t] = shape[..] else {
            return Err(shape_err(
                "mean_time",
                format!("expected rank 3, got {shape:?}"),
            ));
        };
        if t == 0 {
            return Err(crate::error::Error::ZeroLengthInput("mean_time"));
        }
        let inv = T::of(1.0 / t as f64);
        let data = self
            .value(a)
            .data()
            .chunks(t)
            .map(|row| row.iter().copied().sum::<T>() * inv)
            .collect();
        let out = Tensor::new([b, c], data)?;
        self.record(
            "mean_time",
            &[a],
            out,
            move |_: &[&Tensor<T>], _: &Tensor<T>, g: &[T], _: &[bool]| {
                let gi = g
                    .iter()
                    .flat_map(|&v| std::iter::repeat_n(v * inv, t))
                    .collect();
                vec![Some(gi)]
            },
        )
    }

    /// Fully connected layer: `x[B, C] · w[O, C]ᵀ + b[O] -> [B, O]`.
    pub fn dense(&mut self, x: Var, w: Var, bias: Var) -> Result<Var> {
        let (xs, ws, bs) = (
            self.shape(x).to_vec(),
            self.shape(w).to_vec(),
            self.shape(bias).to_vec(),
        );
        let ([nb, c], [o, wc], [bo]) = (&xs[..], &ws[..], &bs[..]) else {
            return Err(shape_err("dense", format!("x {xs:?}, w {ws:?}, b {bs:?}")));
        };
        let (nb, c, o) = (*nb, *c, *o);
        if *wc != c || *bo != o {
            return Err(shape_err("dense", format!("x {xs:?}, w {ws:?}, b {bs:?}")));
        }
        let (xd, wd, bd) = (
            self.value(x).data(),
            self.value(w).data(),
            self.value(bias).data(),
        );
        let mut out = Vec::with_capacity(nb * o);
        for row in xd.chunks(c) {
            for (j, wrow) in wd.chunks(c).enumerate() {
                out.push(row.iter().zip(wrow).map(|(&a, &b)| a * b).sum::<T>() + bd[j]);
            }
        }
        let out = Tensor::new([nb, o], out)?;
        self.record(
            "dense",
            &[x, w, bias],
            out,
            move |ins: &[&Tensor<T>], _: &Tensor<T>, g: &[T], needs: &[bool]| {
                let (xd, wd) = (ins[0].data(), ins[1].data());
                let gx = needs[0].then(|| {
                    let mut gx = vec![T::zero(); nb * c];
                    for i in 0..nb {
                        for j in 0..o {
                            let gv = g[i * o + j];
                            for k in 0..c {
                                gx[i * c + k] = gx[i * c + k] + gv * wd[j * c + k];
                            }
                        }
                    }
                    gx
                });
                let gw = needs[1].then(|| {
                    let mut gw = vec![T::zero(); o * c];
                    for i in 0..nb {
                        for j in 0..o {
                            let gv = g[i * o + j];
                            for k in 0..c {
                                gw[j * c + k] = gw[j * c + k] + gv * xd[i * c + k];
                            }
                        }
                    }
                    gw
                });
                let gb = needs[2].then(|| {
                    (0..o)
                        .map(|j| (0..nb).map(|i| g[i * o + j]).sum())
                        .collect()
                });
                vec![gx, gw, gb]
            },
        )
    }
}
