//! Adversarial objectives on discriminator probabilities.

use crate::error::Result;
use crate::tensor::{Graph, Scalar, Var};

/// Terms of the generator objective, kept separate for logging.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorLoss {
    pub total: Var,
    pub adversarial: Var,
    pub mse: Var,
}

fn clamped_log<T: Scalar>(g: &mut Graph<T>, p: Var, eps: f64, complement: bool) -> Result<Var> {
    let p = g.clamp(p, T::of(eps), T::of(1.0 - eps))?;
    let q = if complement {
        g.affine(p, -T::one(), T::one())?
    } else {
        p
    };
    g.log(q)
}

/// `mean(log(1 − D(x, ŷ))) + λ·mean((y − ŷ)²)`, with probabilities clamped
/// to `[eps, 1 − eps]` first.
pub fn loss_generator<T: Scalar>(
    g: &mut Graph<T>,
    d_fake: Var,
    clean: Var,
    enhanced: Var,
    lambda_mse: f64,
    eps: f64,
) -> Result<GeneratorLoss> {
    let l = clamped_log(g, d_fake, eps, true)?;
    let adversarial = g.mean(l)?;
    let mse = g.mse(clean, enhanced)?;
    let weighted = g.scale(mse, T::of(lambda_mse))?;
    let total = g.add(adversarial, weighted)?;
    Ok(GeneratorLoss {
        total,
        adversarial,
        mse,
    })
}

/// `−mean(log(1 − D(x, ŷ))) − mean(log D(x, y))`, clamped as above.
pub fn loss_discriminator<T: Scalar>(
    g: &mut Graph<T>,
    d_real: Var,
    d_fake: Var,
    eps: f64,
) -> Result<Var> {
    let lf = clamped_log(g, d_fake, eps, true)?;
    let lr = clamped_log(g, d_real, eps, false)?;
    let mf = g.mean(lf)?;
    let mr = g.mean(lr)?;
    let s = g.add(mf, mr)?;
    g.scale(s, -T::one())
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::tensor::{gradcheck, Tensor};

    const EPS: f64 = 1e-7;

    fn clamp(p: f64) -> f64 {
        p.clamp(EPS, 1.0 - EPS)
    }

    fn oracle_g(d: &[f64], y: &[f64], yh: &[f64], lambda: f64) -> f64 {
        let mut adv = 0.0;
        for &p in d {
            adv += (1.0 - clamp(p)).ln();
        }
        let mut se = 0.0;
        for i in 0..y.len() {
            se += (y[i] - yh[i]) * (y[i] - yh[i]);
        }
        adv / d.len() as f64 + lambda * se / y.len() as f64
    }

    fn oracle_d(real: &[f64], fake: &[f64]) -> f64 {
        let mut a = 0.0;
        for &p in fake {
            a += (1.0 - clamp(p)).ln();
        }
        let mut b = 0.0;
        for &p in real {
            b += clamp(p).ln();
        }
        -a / fake.len() as f64 - b / real.len() as f64
    }

    fn eval_g(d: &[f64], y: &[f64], yh: &[f64], lambda: f64) -> f64 {
        let mut g = Graph::<f64>::new();
        let dv = g.constant(Tensor::from_slice(d));
        let yv = g.constant(Tensor::from_slice(y));
        let hv = g.constant(Tensor::from_slice(yh));
        let l = loss_generator(&mut g, dv, yv, hv, lambda, EPS).unwrap();
        g.value(l.total).item()
    }

    fn eval_d(real: &[f64], fake: &[f64]) -> f64 {
        let mut g = Graph::<f64>::new();
        let r = g.constant(Tensor::from_slice(real));
        let f = g.constant(Tensor::from_slice(fake));
        let l = loss_discriminator(&mut g, r, f, EPS).unwrap();
        g.value(l).item()
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn spot_values() {
        let y = [0.1, -0.2, 0.3, 0.0];
        assert!((eval_g(&[0.5, 0.5], &y, &y, 20.0) - 0.5f64.ln()).abs() < 1e-12);
        assert!((eval_g(&[0.5], &y, &y, 20.0) + 0.6931).abs() < 1e-4);
        // every residual 0.1, so the squared error averages 0.01
        let yh: Vec<f64> = y.iter().map(|v| v + 0.1).collect();
        assert!((eval_g(&[0.5], &y, &yh, 20.0) - (0.5f64.ln() + 0.2)).abs() < 1e-12);
        assert!((eval_g(&[0.5], &y, &yh, 20.0) + 0.4931).abs() < 1e-4);
        assert!((eval_d(&[0.5, 0.5], &[0.5, 0.5]) - 1.3863).abs() < 1e-4);
        assert!(eval_d(&[1.0 - EPS], &[EPS]) < 1e-6);
        assert!(eval_d(&[1.0], &[0.0]).is_finite());
        assert!(eval_g(&[1.0], &y, &y, 0.0).is_finite());
    }

    #[test]
    fn lambda_zero_is_adversarial_only() {
        let y = [0.5, -0.5];
        let yh = [0.0, 0.0];
        assert_eq!(eval_g(&[0.3], &y, &yh, 0.0), (0.7f64).ln());
    }

    #[test]
    fn matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let b = rng.gen_range(1..9);
            let n = b * rng.gen_range(1..17);
            let p = |rng: &mut ChaCha8Rng| {
                (0..b)
                    .map(|_| rng.gen_range(0.0..1.0))
                    .collect::<Vec<f64>>()
            };
            let (real, fake) = (p(&mut rng), p(&mut rng));
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let yh: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lambda = rng.gen_range(0.0..40.0);
            assert!(
                (eval_g(&fake, &y, &yh, lambda) - oracle_g(&fake, &y, &yh, lambda)).abs() < 1e-6
            );
            assert!((eval_d(&real, &fake) - oracle_d(&real, &fake)).abs() < 1e-6);
            // The discriminator loss is the negated inner value of the
            // min-max objective estimated on the same batch.
            let inner = real.iter().map(|&p| clamp(p).ln()).sum::<f64>() / b as f64
                + fake.iter().map(|&p| (1.0 - clamp(p)).ln()).sum::<f64>() / b as f64;
            assert!((eval_d(&real, &fake) + inner).abs() < 1e-9);
        }
    }

    #[test]
    fn discriminator_loss_monotone() {
        let base_r = [0.3, 0.6, 0.8];
        let base_f = [0.2, 0.5, 0.7];
        let l0 = eval_d(&base_r, &base_f);
        for i in 0..3 {
            let mut r = base_r;
            r[i] += 0.05;
            assert!(eval_d(&r, &base_f) < l0);
            let mut f = base_f;
            f[i] += 0.05;
            assert!(eval_d(&base_r, &f) > l0);
        }
    }

    #[test]
    fn gradients_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let probs = |rng: &mut ChaCha8Rng| {
            Tensor::from_slice(
                &(0..4)
                    .map(|_| rng.gen_range(0.05..0.95))
                    .collect::<Vec<f64>>(),
            )
        };
        let (pr, pf) = (probs(&mut rng), probs(&mut rng));
        let y = gradcheck::random_tensor(&[2, 1, 8], 1.0, 0.0, &mut rng);
        let yh = gradcheck::random_tensor(&[2, 1, 8], 1.0, 0.0, &mut rng);
        let r = gradcheck::check(
            &[pf.clone(), y, yh],
            |g, v| Ok(loss_generator(g, v[0], v[1], v[2], 20.0, EPS)?.total),
            gradcheck::DEFAULT_STEP,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
        let r = gradcheck::check(
            &[pr, pf],
            |g, v| loss_discriminator(g, v[0], v[1], EPS),
            gradcheck::DEFAULT_STEP,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
}
