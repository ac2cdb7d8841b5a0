//! Central finite-difference verification of the analytic gradient.

use serde::Serialize;

use super::model::{sample_coordinates, FcnModel, FcnParams};
use super::tensor::Tensor;
use crate::par::Execution;
use crate::raster::LabelMask;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamError {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    /// Largest errors first, at most ten.
    pub worst: Vec<ParamError>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub samples: usize,
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            samples: 200,
            step: 1e-5,
            tolerance: 1e-3,
            seed: 0,
        }
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of the inference-mode
/// loss at sampled coordinates.
pub fn compare_gradients(
    model: &FcnModel<f64>,
    analytic: &FcnParams<f64>,
    x: &Tensor<f64>,
    label: &LabelMask,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let coords = sample_coordinates(&model.params, cfg.samples, cfg.seed);
    let names: Vec<String> = model.params.tensors().into_iter().map(|(n, _)| n).collect();
    let analytic = analytic.tensors();
    let mut probe = model.clone();
    let mut errors = Vec::with_capacity(coords.len());
    for (t, i) in coords {
        let original = model.params.tensors()[t].1[i];
        let mut eval = |v: f64| -> Result<f64> {
            probe.params.tensors_mut()[t][i] = v;
            probe.eval_loss(x, label, Execution::Sequential)
        };
        let plus = eval(original + cfg.step)?;
        let minus = eval(original - cfg.step)?;
        eval(original)?;
        let numeric = (plus - minus) / (2.0 * cfg.step);
        let a = analytic[t].1[i];
        errors.push(ParamError {
            tensor: names[t].clone(),
            index: i,
            analytic: a,
            numeric,
            rel_error: relative_error(a, numeric),
        });
    }
    errors.sort_by(|a, b| b.rel_error.total_cmp(&a.rel_error));
    Ok(GradCheckReport {
        checked: errors.len(),
        max_rel_error: errors.first().map_or(0.0, |e| e.rel_error),
        tolerance: cfg.tolerance,
        worst: errors.into_iter().take(10).collect(),
    })
}

/// Full check: analytic gradient without dropout, then [`compare_gradients`].
pub fn gradient_check(
    model: &FcnModel<f64>,
    x: &Tensor<f64>,
    label: &LabelMask,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    if cfg.step <= 0.0 || cfg.samples == 0 {
        return Err(Error::Config("gradient check needs a positive step and sample count".into()));
    }
    let (_, grads) = model.loss_and_gradient(x, label, None, Execution::Sequential)?;
    compare_gradients(model, &grads, x, label, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_instance, Bounds};
    use crate::net::model::{image_to_tensor, ArchConfig};
    use crate::raster::{render_input, render_label, RenderConfig};
    use crate::solvers::solve_dp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample() -> (Tensor<f64>, LabelMask) {
        let inst = generate_instance(5, 3, Bounds::default()).unwrap();
        let tour = solve_dp(&inst).unwrap();
        let cfg = RenderConfig { width: 32, height: 32, ..RenderConfig::desk() };
        (
            image_to_tensor(&render_input(&inst, &cfg).unwrap()),
            render_label(&inst, &tour, &cfg).unwrap(),
        )
    }

    /// Seeded noise keeps max-pool windows free of ties, where the loss
    /// has a kink.
    fn jitter(x: &Tensor<f64>, amount: f64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let data = x.data().iter().map(|v| v + rng.gen_range(0.0..amount)).collect();
        Tensor::from_vec(x.shape(), data).unwrap()
    }

    fn small() -> ArchConfig {
        ArchConfig {
            channels: vec![2, 3, 4, 4, 4],
            convs_per_block: vec![1, 1, 2, 1, 1],
            head_channels: 4,
            ..ArchConfig::tiny()
        }
    }

    #[test]
    fn small_net_passes() {
        let (x, label) = sample();
        let model = FcnModel::<f64>::init(small(), 2).unwrap();
        let cfg = GradCheckConfig { samples: 60, ..Default::default() };
        let report = gradient_check(&model, &x, &label, &cfg).unwrap();
        assert!(report.passed(), "{:?}", report.worst);
        assert_eq!(report.checked, 60);
    }

    /// With positive weights and inputs every ReLU is in its linear
    /// piece, so finite differences are near exact.
    #[test]
    fn linear_regime_is_near_exact() {
        let (x, label) = sample();
        let x = jitter(&x, 0.05);
        let mut model = FcnModel::<f64>::init(small(), 3).unwrap();
        for t in model.params.tensors_mut() {
            let mean = t.iter().map(|v| v.abs()).sum::<f64>() / t.len() as f64;
            for v in t.iter_mut() {
                *v = v.abs() / mean * 0.05;
            }
        }
        // opposite signs on the two fused logits so their difference, which
        // is all the paired output sees, does not cancel
        let cin = model.params.fuse.cin;
        model.params.fuse.weight[..cin].iter_mut().for_each(|w| *w = -*w);
        // centre the logit difference where softplus is nearly quadratic
        let z = model.forward(&x, None, Execution::Sequential).unwrap().logits;
        let half = z.len() / 2;
        let mean_diff = (0..half).map(|k| z.data()[half + k] - z.data()[k]).sum::<f64>() / half as f64;
        model.params.fuse.bias[1] -= mean_diff;
        // the loss is close to quadratic here, so a wide step costs no
        // truncation error and keeps rounding noise well under the tolerance
        let cfg = GradCheckConfig { samples: 40, tolerance: 1e-6, step: 1e-3, ..Default::default() };
        let report = gradient_check(&model, &x, &label, &cfg).unwrap();
        assert!(report.passed(), "{:?}", report.worst);
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let (x, label) = sample();
        let model = FcnModel::<f64>::init(small(), 2).unwrap();
        let (_, mut grads) = model.loss_and_gradient(&x, &label, None, Execution::Sequential).unwrap();
        let cfg = GradCheckConfig { samples: 40, ..Default::default() };
        // sample_coordinates always includes one index of the fusion bias
        let coords = sample_coordinates(&model.params, cfg.samples, cfg.seed);
        let last = model.params.tensors().len() - 1;
        let (_, i) = *coords.iter().find(|(t, _)| *t == last).unwrap();
        grads.fuse.bias[i] = grads.fuse.bias[i] * 1.5 + 1e-3;
        let report = compare_gradients(&model, &grads, &x, &label, &cfg).unwrap();
        assert!(!report.passed());
        assert_eq!(report.worst[0].tensor, "fuse.bias");
    }
}
