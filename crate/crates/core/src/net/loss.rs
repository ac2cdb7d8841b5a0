//! Output activation and the per-pixel two-class cross-entropy.
//!
//! Channel 0 is background, channel 1 is path-or-city, matching
//! [`LabelMask::one_hot`].

use serde::{Deserialize, Serialize};

use super::tensor::{Real, Tensor};
use crate::raster::{LabelMask, ProbMap};
use crate::{Error, Result};

/// Clamp applied to probabilities inside the logarithm.
pub const LOG_EPS: f64 = 1e-12;

/// How the two fused logits become probabilities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputActivation {
    /// `p1 = sigmoid(z1 - z0)`, `p0 = sigmoid(z0 - z1)`. Each channel is a
    /// sigmoid and the pair sums to one, so the loss pulls on both logits.
    #[default]
    Paired,
    /// `pk = sigmoid(zk)` per channel independently.
    Independent,
}

fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

/// Maps `[2, h, w]` logits to probabilities.
pub fn activate<T: Real>(z: &Tensor<T>, act: OutputActivation) -> Result<Tensor<T>> {
    let (c, h, w) = z.chw()?;
    if c != 2 {
        return Err(Error::Shape(format!("expected 2 output channels, got {c}")));
    }
    let plane = h * w;
    let (z0, z1) = z.data().split_at(plane);
    let mut out = Vec::with_capacity(2 * plane);
    match act {
        OutputActivation::Paired => {
            out.extend(z0.iter().zip(z1).map(|(&a, &b)| sigmoid(a - b)));
            out.extend(z0.iter().zip(z1).map(|(&a, &b)| sigmoid(b - a)));
        }
        OutputActivation::Independent => out.extend(z.data().iter().map(|&v| sigmoid(v))),
    }
    Tensor::from_vec(&[2, h, w], out)
}

fn check_label(h: usize, w: usize, label: &LabelMask) -> Result<()> {
    if (label.width(), label.height()) != (w, h) {
        return Err(Error::Shape(format!(
            "{}x{} label for {w}x{h} prediction",
            label.width(),
            label.height()
        )));
    }
    Ok(())
}

fn clamped_log(p: f64) -> f64 {
    p.clamp(LOG_EPS, 1.0 - LOG_EPS).ln()
}

fn loss_planes(background: impl Iterator<Item = f64>, path: impl Iterator<Item = f64>, label: &LabelMask) -> Result<f64> {
    // Neumaier-compensated, so finite differences of J see its true change
    let (mut total, mut carry) = (0.0f64, 0.0f64);
    for ((p0, p1), &is_path) in background.zip(path).zip(label.path_flags()) {
        let term = -if is_path { clamped_log(p1) } else { clamped_log(p0) };
        let t = total + term;
        carry += if total.abs() >= term.abs() { (total - t) + term } else { (term - t) + total };
        total = t;
    }
    let total = total + carry;
    let area = (label.width() * label.height()) as f64;
    let j = total / (2.0 * area);
    if j.is_finite() {
        Ok(j)
    } else {
        Err(Error::Numeric("non-finite loss".into()))
    }
}

/// `J = -sum(y' * log(clamp(y))) / (2 w h)`, accumulated in f64.
pub fn loss<T: Real>(probs: &Tensor<T>, label: &LabelMask) -> Result<f64> {
    let (c, h, w) = probs.chw()?;
    if c != 2 {
        return Err(Error::Shape(format!("expected 2 probability channels, got {c}")));
    }
    check_label(h, w, label)?;
    let (bg, path) = probs.data().split_at(h * w);
    loss_planes(bg.iter().map(|v| v.f64()), path.iter().map(|v| v.f64()), label)
}

pub fn loss_map(probs: &ProbMap, label: &LabelMask) -> Result<f64> {
    check_label(probs.height, probs.width, label)?;
    loss_planes(
        probs.background.iter().map(|&v| v as f64),
        probs.path.iter().map(|&v| v as f64),
        label,
    )
}

/// Gradient of the loss with respect to the logits.
pub fn logit_gradient<T: Real>(probs: &Tensor<T>, label: &LabelMask, act: OutputActivation) -> Result<Tensor<T>> {
    let (_, h, w) = probs.chw()?;
    check_label(h, w, label)?;
    let plane = h * w;
    let scale = T::of(1.0 / (2.0 * plane as f64));
    let (p0, p1) = probs.data().split_at(plane);
    let mut g = vec![T::zero(); 2 * plane];
    let (g0, g1) = g.split_at_mut(plane);
    for i in 0..plane {
        let y1 = if label.path_flags()[i] { T::one() } else { T::zero() };
        let y0 = T::one() - y1;
        match act {
            OutputActivation::Paired => {
                let d = (p1[i] - y1) * scale;
                g1[i] = d;
                g0[i] = -d;
            }
            OutputActivation::Independent => {
                g0[i] = -y0 * (T::one() - p0[i]) * scale;
                g1[i] = -y1 * (T::one() - p1[i]) * scale;
            }
        }
    }
    Tensor::from_vec(&[2, h, w], g)
}

pub fn to_prob_map<T: Real>(probs: &Tensor<T>) -> Result<ProbMap> {
    let (_, h, w) = probs.chw()?;
    let (bg, path) = probs.data().split_at(h * w);
    let cast = |s: &[T]| s.iter().map(|v| v.f64() as f32).collect();
    ProbMap::new(w, h, cast(bg), cast(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stripe_label() -> LabelMask {
        let mut m = LabelMask::empty(6, 4);
        for x in 0..6 {
            m.set_path(x, 1, true);
        }
        m
    }

    #[test]
    fn half_everywhere_is_ln2_over_2() {
        let label = stripe_label();
        let probs = Tensor::from_vec(&[2, 4, 6], vec![0.5f32; 48]).unwrap();
        let j = loss(&probs, &label).unwrap();
        assert!((j - std::f64::consts::LN_2 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn exact_label_is_near_zero() {
        let label = stripe_label();
        let map = ProbMap::from_label(&label);
        assert!(loss_map(&map, &label).unwrap() <= 1e-11);
        let probs = Tensor::from_vec(&[2, 4, 6], label.one_hot()).unwrap();
        assert!(loss(&probs, &label).unwrap() <= 1e-11);
    }

    #[test]
    fn matches_naive_triple_loop() {
        let label = stripe_label();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<f64> = (0..48).map(|_| rng.gen_range(0.001..0.999)).collect();
        let probs = Tensor::from_vec(&[2, 4, 6], data.clone()).unwrap();
        let onehot = label.one_hot();
        let mut naive = 0.0;
        for x in 0..6 {
            for y in 0..4 {
                for k in 0..2 {
                    let idx = k * 24 + y * 6 + x;
                    naive -= onehot[idx] as f64 * data[idx].ln();
                }
            }
        }
        naive /= 2.0 * 24.0;
        assert!((loss(&probs, &label).unwrap() - naive).abs() < 1e-12);
    }

    #[test]
    fn loss_is_bounded_by_clamp() {
        let label = stripe_label();
        let wrong = Tensor::from_vec(&[2, 4, 6], label.one_hot().iter().map(|v| 1.0 - v).collect()).unwrap();
        let j = loss::<f32>(&wrong, &label).unwrap();
        assert!(j <= -LOG_EPS.ln() / 2.0 + 1e-9 && j > 13.0);
    }

    #[test]
    fn logit_gradient_matches_finite_difference() {
        let label = stripe_label();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for act in [OutputActivation::Paired, OutputActivation::Independent] {
            let z: Vec<f64> = (0..48).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let zt = Tensor::from_vec(&[2, 4, 6], z.clone()).unwrap();
            let g = logit_gradient(&activate(&zt, act).unwrap(), &label, act).unwrap();
            for i in [0, 7, 13, 30, 47] {
                let f = |d: f64| {
                    let mut zz = z.clone();
                    zz[i] += d;
                    let t = Tensor::from_vec(&[2, 4, 6], zz).unwrap();
                    loss(&activate(&t, act).unwrap(), &label).unwrap()
                };
                let fd = (f(1e-6) - f(-1e-6)) / 2e-6;
                assert!((fd - g.data()[i]).abs() < 1e-8, "{act:?} {i}: {fd} vs {}", g.data()[i]);
            }
        }
    }

    #[test]
    fn paired_probabilities_sum_to_one() {
        let z = Tensor::from_vec(&[2, 1, 3], vec![0.0, 3.0, -1.0, 1.0, -2.0, 4.0]).unwrap();
        let p = activate(&z, OutputActivation::Paired).unwrap();
        for i in 0..3 {
            assert!((p.data()[i] + p.data()[3 + i] - 1.0f64).abs() < 1e-15);
            assert!(p.data()[i] > 0.0 && p.data()[i] < 1.0);
        }
        assert!(loss(&p, &LabelMask::empty(2, 2)).is_err());
    }
}
