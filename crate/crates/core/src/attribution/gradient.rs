//! Gradient-based methods over token embeddings.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{check_finite, task_rng, AttributionError, Explainable, Explanation, Method, MethodOptions, Task};
use crate::numerics::{BackwardPolicy, Tape, Tensor};

/// Gradient of the `target` logit with respect to `embeddings`.
fn logit_gradient<M: Explainable + ?Sized>(
    model: &M,
    embeddings: &Tensor,
    target: usize,
    policy: Policy<'_>,
) -> Result<Tensor, AttributionError> {
    let mut tape = Tape::new();
    let e = tape.leaf(embeddings.clone())?;
    let logits = model.record(&mut tape, e)?;
    let out = tape.pick(logits, target)?;
    let grads = match policy {
        Policy::Standard => tape.grad(out, &BackwardPolicy::standard())?,
        Policy::Guided => tape.grad(out, &BackwardPolicy::guided())?,
        Policy::Rescale(baseline) => {
            let mut reference = Tape::new();
            let b = reference.leaf(baseline.clone())?;
            let ref_logits = model.record(&mut reference, b)?;
            reference.pick(ref_logits, target)?;
            tape.grad(out, &BackwardPolicy::rescale(&reference))?
        }
    };
    Ok(grads.wrt(e))
}

#[derive(Clone, Copy)]
enum Policy<'a> {
    Standard,
    Guided,
    /// DeepLift rescale against this reference input.
    Rescale(&'a Tensor),
}

fn row_norms(g: &Tensor) -> Vec<f64> {
    let (l, _) = g.dims2().expect("rank 2");
    (0..l).map(|r| g.row_slice(r).iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
}

/// `sum_k a[t, k] * b[t, k]` for every row `t`.
fn row_dots(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let (l, _) = a.dims2().expect("rank 2");
    (0..l)
        .map(|r| a.row_slice(r).iter().zip(b.row_slice(r)).map(|(x, y)| x * y).sum())
        .collect()
}

/// Saliency and Guided Backpropagation reduce the embedding-axis gradient by
/// its L2 norm; the product-form methods sum `(x - b) * g` over that axis.
pub fn gradient_attribution<M: Explainable + ?Sized>(
    model: &M,
    ids: &[usize],
    task: Task,
    method: Method,
    opts: &MethodOptions,
) -> Result<Explanation, AttributionError> {
    if !method.is_gradient() {
        return Err(AttributionError::WrongFamily {
            method,
            family: "gradient",
        });
    }
    opts.validate()?;
    let x = model.embed(ids)?;
    let (l, d) = x.dims2()?;
    let target = model.predicted_class(&x)?;
    let baseline = || model.baseline(opts.baseline, l, d);

    let token_scores = match method {
        Method::Saliency => row_norms(&logit_gradient(model, &x, target, Policy::Standard)?),
        Method::GuidedBackprop => row_norms(&logit_gradient(model, &x, target, Policy::Guided)?),
        Method::InputXGradient => row_dots(&x, &logit_gradient(model, &x, target, Policy::Standard)?),
        Method::IntegratedGradients => {
            let b = baseline()?;
            let delta = x.zip_map(&b, |a, c| a - c);
            let steps = opts.ig_steps;
            let mut avg = Tensor::zeros(&[l, d]);
            for i in 0..steps {
                let alpha = (i as f64 + 0.5) / steps as f64;
                let point = b.zip_map(&delta, |c, dv| c + alpha * dv);
                let g = logit_gradient(model, &point, target, Policy::Standard)?;
                for (acc, v) in avg.data_mut().iter_mut().zip(g.data()) {
                    *acc += v / steps as f64;
                }
            }
            row_dots(&delta, &avg)
        }
        Method::DeepLift => {
            let b = baseline()?;
            let g = logit_gradient(model, &x, target, Policy::Rescale(&b))?;
            row_dots(&x.zip_map(&b, |a, c| a - c), &g)
        }
        Method::GradientShap => {
            let b = baseline()?;
            let mut rng = task_rng(opts.seed, task, method);
            let noise = Normal::new(0.0, opts.gradshap_sigma).map_err(|e| AttributionError::Options(e.to_string()))?;
            let n = opts.gradshap_samples;
            let mut acc = vec![0.0; l];
            for _ in 0..n {
                let mut noisy = x.clone();
                for v in noisy.data_mut() {
                    *v += noise.sample(&mut rng);
                }
                let alpha: f64 = rng.random();
                let delta = noisy.zip_map(&b, |a, c| a - c);
                let point = b.zip_map(&delta, |c, dv| c + alpha * dv);
                let g = logit_gradient(model, &point, target, Policy::Standard)?;
                for (a, v) in acc.iter_mut().zip(row_dots(&delta, &g)) {
                    *a += v / n as f64;
                }
            }
            acc
        }
        _ => unreachable!("checked above"),
    };
    check_finite(&token_scores, task)?;
    Ok(Explanation {
        method,
        target,
        token_scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::toy::LinearScorer;
    use crate::attribution::Baseline;

    fn opts() -> MethodOptions {
        MethodOptions {
            baseline: Baseline::ZeroEmbedding,
            ..MethodOptions::default()
        }
    }

    #[test]
    fn linear_scorer_closed_forms() {
        let m = LinearScorer::new(10, 5, 3, 1);
        let ids = [1, 4, 7, 2];
        let x = m.embed(&ids).unwrap();
        let target = m.predicted_class(&x).unwrap();
        let w: Vec<f64> = (0..5).map(|k| m.weights.get2(k, target)).collect();
        let expected: Vec<f64> = (0..4)
            .map(|t| x.row_slice(t).iter().zip(&w).map(|(a, b)| a * b).sum())
            .collect();
        let ixg = gradient_attribution(&m, &ids, Task::new(0, 0), Method::InputXGradient, &opts()).unwrap();
        let ig = gradient_attribution(&m, &ids, Task::new(0, 0), Method::IntegratedGradients, &opts()).unwrap();
        for (t, e) in expected.iter().enumerate() {
            assert!((ixg.token_scores[t] - e).abs() < 1e-12);
            assert!((ig.token_scores[t] - e).abs() < 1e-12);
        }
        let sal = gradient_attribution(&m, &ids, Task::new(0, 0), Method::Saliency, &opts()).unwrap();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(sal.token_scores.iter().all(|s| (s - norm).abs() < 1e-12));
    }

    #[test]
    fn guided_equals_saliency_without_relu() {
        let m = LinearScorer::new(8, 4, 3, 2);
        let a = gradient_attribution(&m, &[1, 2, 3], Task::new(0, 0), Method::Saliency, &opts()).unwrap();
        let b = gradient_attribution(&m, &[1, 2, 3], Task::new(0, 0), Method::GuidedBackprop, &opts()).unwrap();
        assert_eq!(a.token_scores, b.token_scores);
    }

    #[test]
    fn gradient_shap_collapses_to_input_x_gradient() {
        let m = LinearScorer::new(8, 4, 3, 3);
        let o = MethodOptions {
            gradshap_sigma: 0.0,
            gradshap_samples: 1,
            ..opts()
        };
        let a = gradient_attribution(&m, &[5, 6, 1], Task::new(0, 0), Method::GradientShap, &o).unwrap();
        let b = gradient_attribution(&m, &[5, 6, 1], Task::new(0, 0), Method::InputXGradient, &o).unwrap();
        for (x, y) in a.token_scores.iter().zip(&b.token_scores) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn deep_lift_is_exact_difference_on_linear_model() {
        let m = LinearScorer::new(8, 4, 3, 4);
        let ids = [2, 3, 4, 5];
        let o = MethodOptions::default();
        let e = gradient_attribution(&m, &ids, Task::new(0, 0), Method::DeepLift, &o).unwrap();
        let x = m.embed(&ids).unwrap();
        let b = m.baseline(Baseline::MaskToken, 4, 4).unwrap();
        let gap = m.logits(&x).unwrap()[e.target] - m.logits(&b).unwrap()[e.target];
        assert!((e.token_scores.iter().sum::<f64>() - gap).abs() < 1e-12);
    }

    #[test]
    fn rejects_surrogate_method() {
        let m = LinearScorer::new(8, 4, 3, 5);
        assert!(matches!(
            gradient_attribution(&m, &[1], Task::new(0, 0), Method::Lime, &opts()),
            Err(AttributionError::WrongFamily { .. })
        ));
    }
}
