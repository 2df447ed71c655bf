//! Perturbation surrogates: KernelSHAP and LIME over token presence.
//!
//! A coalition `z` keeps token `t` when `z[t]` is true and otherwise swaps
//! in the `[MASK]` embedding at that position.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;

use super::linalg::{solve_normal_equations, weighted_ridge};
use super::{check_finite, task_rng, AttributionError, Baseline, Explainable, Explanation, Method, MethodOptions, Task};

/// Above this many tokens coalitions are always sampled.
const MAX_ENUMERATED_TOKENS: usize = 24;

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `pi(z) = (d - 1) / (C(d, |z|) |z| (d - |z|))`.
fn shapley_kernel(d: usize, size: usize) -> f64 {
    (d - 1) as f64 / (binomial(d, size) * size as f64 * (d - size) as f64)
}

fn coalition(d: usize, members: impl IntoIterator<Item = usize>) -> Vec<bool> {
    let mut z = vec![false; d];
    for i in members {
        z[i] = true;
    }
    z
}

/// Non-trivial coalitions with their regression weights. Small `d` is
/// enumerated with exact kernel weights; otherwise coalition sizes are drawn
/// in proportion to their total kernel mass and members uniformly, each draw
/// carrying unit weight.
fn kernel_shap_coalitions(d: usize, budget: usize, rng: &mut impl Rng) -> BTreeMap<Vec<bool>, f64> {
    let mut out = BTreeMap::new();
    let nontrivial = if d <= MAX_ENUMERATED_TOKENS { (1usize << d) - 2 } else { usize::MAX };
    if nontrivial <= budget {
        for mask in 1..(1usize << d) - 1 {
            let z = coalition(d, (0..d).filter(|i| mask >> i & 1 == 1));
            let size = mask.count_ones() as usize;
            out.insert(z, shapley_kernel(d, size));
        }
        return out;
    }
    let size_mass: Vec<f64> = (1..d).map(|s| (d - 1) as f64 / (s * (d - s)) as f64).collect();
    let total: f64 = size_mass.iter().sum();
    for _ in 0..budget {
        let mut u = rng.random::<f64>() * total;
        let mut size = d - 1;
        for (i, m) in size_mass.iter().enumerate() {
            if u < *m {
                size = i + 1;
                break;
            }
            u -= m;
        }
        let z = coalition(d, sample(rng, d, size));
        *out.entry(z).or_insert(0.0) += 1.0;
    }
    out
}

/// Constrained weighted least squares: minimizes
/// `sum_z w(z) (f(z) - f(empty) - sum_i z_i phi_i)^2` subject to
/// `sum_i phi_i = f(full) - f(empty)`, eliminating the last coefficient.
fn kernel_shap_solve(d: usize, coalitions: &[(Vec<bool>, f64, f64)], f_full: f64, f_empty: f64) -> Vec<f64> {
    let delta = f_full - f_empty;
    if d == 1 {
        return vec![delta];
    }
    let p = d - 1;
    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    let mut x = vec![0.0; p];
    for (z, w, fz) in coalitions {
        let last = if z[p] { 1.0 } else { 0.0 };
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = (if z[i] { 1.0 } else { 0.0 }) - last;
        }
        let y = fz - f_empty - last * delta;
        for i in 0..p {
            let wi = w * x[i];
            rhs[i] += wi * y;
            for j in 0..p {
                gram[i * p + j] += wi * x[j];
            }
        }
    }
    let mut phi = solve_normal_equations(gram, rhs, 0.0);
    let rest: f64 = phi.iter().sum();
    phi.push(delta - rest);
    phi
}

fn cosine_distance_to_full(z: &[bool]) -> f64 {
    let kept = z.iter().filter(|k| **k).count() as f64;
    if kept == 0.0 {
        return 1.0;
    }
    1.0 - kept / (kept.sqrt() * (z.len() as f64).sqrt())
}

/// KernelSHAP and LIME coefficients, one per token.
pub fn surrogate_attribution<M: Explainable + ?Sized>(
    model: &M,
    ids: &[usize],
    task: Task,
    method: Method,
    opts: &MethodOptions,
) -> Result<Explanation, AttributionError> {
    if !method.is_surrogate() {
        return Err(AttributionError::WrongFamily {
            method,
            family: "surrogate",
        });
    }
    opts.validate()?;
    let x = model.embed(ids)?;
    let (d, dim) = x.dims2()?;
    let target = model.predicted_class(&x)?;
    let masked = model.baseline(Baseline::MaskToken, d, dim)?;
    let mut rng = task_rng(opts.seed, task, method);

    let token_scores = match method {
        Method::KernelShap => {
            let ends = model.substitution_scores(&x, &masked, &[vec![true; d], vec![false; d]], target)?;
            let (f_full, f_empty) = (ends[0], ends[1]);
            let weighted: Vec<(Vec<bool>, f64)> = if d == 1 {
                Vec::new()
            } else {
                kernel_shap_coalitions(d, opts.shap_samples, &mut rng).into_iter().collect()
            };
            let keeps: Vec<Vec<bool>> = weighted.iter().map(|(z, _)| z.clone()).collect();
            let values = model.substitution_scores(&x, &masked, &keeps, target)?;
            let rows: Vec<(Vec<bool>, f64, f64)> =
                weighted.into_iter().zip(values).map(|((z, w), f)| (z, w, f)).collect();
            kernel_shap_solve(d, &rows, f_full, f_empty)
        }
        Method::Lime => {
            let mut keeps = vec![vec![true; d]];
            for _ in 1..opts.lime_samples {
                let removed = rng.random_range(1..=d);
                let mut z = vec![true; d];
                for i in sample(&mut rng, d, removed) {
                    z[i] = false;
                }
                keeps.push(z);
            }
            let values = model.substitution_scores(&x, &masked, &keeps, target)?;
            let weights: Vec<f64> = keeps
                .iter()
                .map(|z| match opts.lime_kernel_width {
                    Some(width) => {
                        let dist = 100.0 * cosine_distance_to_full(z);
                        (-(dist * dist) / (width * width)).exp()
                    }
                    None => 1.0,
                })
                .collect();
            let rows: Vec<Vec<f64>> = keeps
                .iter()
                .map(|z| z.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect())
                .collect();
            weighted_ridge(&rows, &values, &weights, opts.lime_ridge_alpha).0
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
    use crate::numerics::{NodeId, Tape, Tensor};

    /// Shapley values by the permutation-free subset formula over all `2^d`
    /// coalitions, computed independently of the regression.
    fn brute_force_shapley(d: usize, f: impl Fn(&[bool]) -> f64) -> Vec<f64> {
        let fact = |n: usize| (1..=n).map(|v| v as f64).product::<f64>();
        (0..d)
            .map(|i| {
                let mut phi = 0.0;
                for mask in 0..(1usize << d) {
                    if mask >> i & 1 == 1 {
                        continue;
                    }
                    let s = mask.count_ones() as usize;
                    let without: Vec<bool> = (0..d).map(|j| mask >> j & 1 == 1).collect();
                    let mut with = without.clone();
                    with[i] = true;
                    phi += fact(s) * fact(d - s - 1) / fact(d) * (f(&with) - f(&without));
                }
                phi
            })
            .collect()
    }

    fn scorer_value(m: &impl Explainable, ids: &[usize], keep: &[bool], target: usize) -> f64 {
        let masked: Vec<usize> = ids
            .iter()
            .zip(keep)
            .map(|(&i, &k)| if k { i } else { m.mask_id() })
            .collect();
        m.logits(&m.embed(&masked).unwrap()).unwrap()[target]
    }

    #[test]
    fn kernel_weights_match_closed_form() {
        assert!((shapley_kernel(6, 1) - 5.0 / (6.0 * 5.0)).abs() < 1e-15);
        assert!((shapley_kernel(6, 3) - 5.0 / (20.0 * 9.0)).abs() < 1e-15);
        assert_eq!(binomial(6, 3), 20.0);
    }

    #[test]
    fn kernel_shap_matches_brute_force_on_linear_model() {
        let m = LinearScorer::new(12, 4, 3, 7);
        let ids = [1, 3, 5, 7, 9, 11];
        let e = surrogate_attribution(&m, &ids, Task::new(0, 0), Method::KernelShap, &MethodOptions::default()).unwrap();
        let oracle = brute_force_shapley(6, |keep| scorer_value(&m, &ids, keep, e.target));
        for (a, b) in e.token_scores.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    /// A scorer with interactions, so Shapley values differ from marginal effects.
    struct Product {
        inner: LinearScorer,
    }

    impl Explainable for Product {
        fn embed(&self, ids: &[usize]) -> Result<Tensor, AttributionError> {
            self.inner.embed(ids)
        }
        fn mask_id(&self) -> usize {
            0
        }
        fn logits(&self, embeddings: &Tensor) -> Result<Vec<f64>, AttributionError> {
            let z = self.inner.logits(embeddings)?;
            Ok(z.iter().map(|v| v * v.abs() + v.sin()).collect())
        }
        fn record(&self, _: &mut Tape, _: NodeId) -> Result<NodeId, AttributionError> {
            unreachable!("surrogates never differentiate")
        }
    }

    #[test]
    fn kernel_shap_is_exact_when_enumerated_for_nonlinear_model() {
        let m = Product {
            inner: LinearScorer::new(10, 3, 3, 8),
        };
        let ids = [2, 4, 6, 8, 9];
        let e = surrogate_attribution(&m, &ids, Task::new(0, 0), Method::KernelShap, &MethodOptions::default()).unwrap();
        let oracle = brute_force_shapley(5, |keep| scorer_value(&m, &ids, keep, e.target));
        for (a, b) in e.token_scores.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn kernel_shap_efficiency_holds_when_sampled() {
        let m = Product {
            inner: LinearScorer::new(30, 3, 3, 9),
        };
        let ids: Vec<usize> = (1..15).collect();
        let opts = MethodOptions {
            shap_samples: 300,
            ..MethodOptions::default()
        };
        let e = surrogate_attribution(&m, &ids, Task::new(0, 0), Method::KernelShap, &opts).unwrap();
        let full = scorer_value(&m, &ids, &[true; 14], e.target);
        let empty = scorer_value(&m, &ids, &[false; 14], e.target);
        assert!((e.token_scores.iter().sum::<f64>() - (full - empty)).abs() < 1e-9);
    }

    #[test]
    fn single_token_gets_whole_difference() {
        let m = LinearScorer::new(5, 3, 3, 10);
        let e = surrogate_attribution(&m, &[3], Task::new(0, 0), Method::KernelShap, &MethodOptions::default()).unwrap();
        let full = scorer_value(&m, &[3], &[true], e.target);
        let empty = scorer_value(&m, &[3], &[false], e.target);
        assert!((e.token_scores[0] - (full - empty)).abs() < 1e-12);
    }

    struct Constant;

    impl Explainable for Constant {
        fn embed(&self, ids: &[usize]) -> Result<Tensor, AttributionError> {
            Ok(Tensor::matrix(ids.len(), 2, ids.iter().flat_map(|&i| [i as f64, 1.0]).collect()))
        }
        fn mask_id(&self) -> usize {
            0
        }
        fn logits(&self, _: &Tensor) -> Result<Vec<f64>, AttributionError> {
            Ok(vec![0.3, -1.0, 2.0])
        }
        fn record(&self, _: &mut Tape, _: NodeId) -> Result<NodeId, AttributionError> {
            unreachable!()
        }
    }

    #[test]
    fn constant_model_gets_zero_coefficients() {
        for method in [Method::KernelShap, Method::Lime] {
            let e = surrogate_attribution(&Constant, &[1, 2, 3, 4], Task::new(0, 0), method, &MethodOptions::default()).unwrap();
            assert_eq!(e.target, 2);
            assert!(e.token_scores.iter().all(|v| v.abs() < 1e-12), "{method}: {:?}", e.token_scores);
        }
    }

    #[test]
    fn lime_without_kernel_or_penalty_recovers_linear_effects() {
        let m = LinearScorer::new(12, 4, 3, 11);
        let ids = [1, 2, 3, 4, 5, 6];
        let opts = MethodOptions {
            lime_kernel_width: None,
            lime_ridge_alpha: 0.0,
            ..MethodOptions::default()
        };
        let e = surrogate_attribution(&m, &ids, Task::new(0, 0), Method::Lime, &opts).unwrap();
        // Least-squares oracle: effect of token t is f(all) - f(all but t).
        let all = [true; 6];
        for t in 0..6 {
            let mut drop = all;
            drop[t] = false;
            let effect = scorer_value(&m, &ids, &all, e.target) - scorer_value(&m, &ids, &drop, e.target);
            assert!((e.token_scores[t] - effect).abs() < 1e-9);
        }
    }

    #[test]
    fn lime_is_deterministic_per_seed() {
        let m = LinearScorer::new(12, 4, 3, 12);
        let o = MethodOptions {
            lime_samples: 50,
            ..MethodOptions::default()
        };
        let a = surrogate_attribution(&m, &[1, 2, 3], Task::new(4, 0), Method::Lime, &o).unwrap();
        let b = surrogate_attribution(&m, &[1, 2, 3], Task::new(4, 0), Method::Lime, &o).unwrap();
        assert_eq!(a, b);
    }
}
