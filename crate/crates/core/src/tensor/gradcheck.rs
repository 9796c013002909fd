//! Central finite-difference gradient checking in `f64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Graph, Tensor, Var};
use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Worst disagreement found by [`check`].
#[derive(Clone, Debug)]
pub struct GradReport {
    pub max_rel_error: f64,
    /// `(input, element)` of the worst entry.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// `|a − n| / max(|a|, |n|, 1e-6)`; the floor keeps exactly-zero gradients
/// from dividing by zero.
pub fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Reduces a tensor to a scalar with fixed pseudo-random weights so every
/// output element contributes a distinct amount.
pub fn project(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = g.shape(y).to_vec();
    let n = g.value(y).len();
    let w = Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let w = g.constant(w);
    let p = g.mul(y, w)?;
    g.sum(p)
}

/// Compares backward-mode gradients of `f` against central differences for
/// every element of every input. `f` must return a scalar.
pub fn check<F>(inputs: &[Tensor<f64>], f: F, step: f64) -> Result<GradReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor<f64>], track: bool| -> Result<(Graph<f64>, Vec<Var>, Var)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals
            .iter()
            .map(|t| g.leaf(t.clone().with_requires_grad(track)))
            .collect();
        let out = f(&mut g, &vars)?;
        Ok((g, vars, out))
    };

    let (mut g, vars, out) = eval(inputs, true)?;
    g.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| {
            g.grad(*v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; t.len()])
        })
        .collect();

    let mut report = GradReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut vals = inputs.to_vec();
    for i in 0..inputs.len() {
        for j in 0..inputs[i].len() {
            let x0 = vals[i].data()[j];
            vals[i].data_mut()[j] = x0 + step;
            let (gp, _, op) = eval(&vals, false)?;
            vals[i].data_mut()[j] = x0 - step;
            let (gm, _, om) = eval(&vals, false)?;
            vals[i].data_mut()[j] = x0;
            let numeric = (gp.value(op).item() - gm.value(om).item()) / (2.0 * step);
            let a = analytic[i][j];
            let e = rel_error(a, numeric);
            report.checked += 1;
            if e > report.max_rel_error {
                report.max_rel_error = e;
                report.worst = (i, j);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

/// Uniform random tensor in `[-scale, scale]`, optionally pushed away from
/// zero by `gap` (for kinks such as leaky ReLU).
pub fn random_tensor(shape: &[usize], scale: f64, gap: f64, rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(-scale..scale);
            if v.abs() < gap {
                v.signum() * gap + v
            } else {
                v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}
