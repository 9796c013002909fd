use crate::error::Result;
use crate::tensor::{Graph, Scalar, Tensor, Var};

impl<T: Scalar> Graph<T> {
    /// `x` for `x ≥ 0`, `slope·x` otherwise. The derivative at exactly zero
    /// takes the negative branch.
    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Result<Var> {
        let xt = self.value(x);
        let data = xt
            .data()
            .iter()
            .map(|&v| if v >= T::zero() { v } else { slope * v })
            .collect();
        let out = Tensor::new(xt.shape().to_vec(), data)?;
        self.record(
            "leaky_relu",
            &[x],
            out,
            move |ins: &[&Tensor<T>], _: &Tensor<T>, g: &[T], _: &[bool]| {
                let gi = g
                    .iter()
                    .zip(ins[0].data())
                    .map(|(&g, &v)| if v > T::zero() { g } else { slope * g })
                    .collect();
                vec![Some(gi)]
            },
        )
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let xt = self.value(x);
        let out = Tensor::new(
            xt.shape().to_vec(),
            xt.data().iter().map(|v| v.tanh()).collect(),
        )?;
        self.record(
            "tanh",
            &[x],
            out,
            |_: &[&Tensor<T>], out: &Tensor<T>, g: &[T], _: &[bool]| {
                let gi = g
                    .iter()
                    .zip(out.data())
                    .map(|(&g, &y)| g * (T::one() - y * y))
                    .collect();
                vec![Some(gi)]
            },
        )
    }

    /// Logistic function kept inside the open interval `(ε, 1 − ε)`, with
    /// `ε` the machine epsilon of `T`, so a saturated unit never reports an
    /// exact 0 or 1.
    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let eps = T::epsilon();
        let (lo, hi) = (eps, T::one() - eps);
        let xt = self.value(x);
        let data = xt
            .data()
            .iter()
            .map(|&z| {
                let s = if z >= T::zero() {
                    T::one() / (T::one() + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (T::one() + e)
                };
                s.max(lo).min(hi)
            })
            .collect();
        let out = Tensor::new(xt.shape().to_vec(), data)?;
        self.record(
            "sigmoid",
            &[x],
            out,
            |_: &[&Tensor<T>], out: &Tensor<T>, g: &[T], _: &[bool]| {
                let gi = g
                    .iter()
                    .zip(out.data())
                    .map(|(&g, &s)| g * s * (T::one() - s))
                    .collect();
                vec![Some(gi)]
            },
        )
    }
}
