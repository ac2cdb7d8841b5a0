//! Scaled VGG-style FCN with three skip heads (pool3, pool4, head output),
//! learned transposed-conv upsamplers and a 1x1 fusion to two classes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    concat_channels, dropout_inplace, max_pool2, max_pool2_backward, relu_backward_inplace, relu_inplace,
    split_channels, Conv2d, ConvTranspose2d,
};
use super::loss::{activate, logit_gradient, loss, to_prob_map, OutputActivation};
use super::tensor::{Real, Tensor};
use crate::par::Execution;
use crate::raster::{LabelMask, ProbMap, RasterImage};
use crate::{Error, Result};

/// Bias value every layer starts from.
pub const INIT_BIAS: f64 = 0.1;

const UPSAMPLE: [usize; 3] = [8, 16, 32];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Square input side; must be divisible by 32.
    pub input_size: usize,
    /// Output channels of the five conv blocks.
    pub channels: Vec<usize>,
    pub convs_per_block: Vec<usize>,
    /// Width of the two convolutions after pool5.
    pub head_channels: usize,
    pub head_kernel: usize,
    /// Channels of each skip score map.
    pub score_channels: usize,
    pub dropout_rate: f64,
    #[serde(default)]
    pub output: OutputActivation,
}

impl ArchConfig {
    /// VGG16 widths with a 1024-deep head.
    pub fn full() -> Self {
        ArchConfig {
            input_size: 224,
            channels: vec![64, 128, 256, 512, 512],
            convs_per_block: vec![2, 2, 3, 3, 3],
            head_channels: 1024,
            head_kernel: 3,
            score_channels: 1,
            dropout_rate: 0.5,
            output: OutputActivation::Paired,
        }
    }

    /// Narrow widths at 64x64. Four channels per skip head; with one the
    /// 8-sample memorization run stalls near a fifth of its initial loss.
    pub fn desk() -> Self {
        ArchConfig {
            input_size: 64,
            channels: vec![8, 16, 32, 64, 128],
            head_channels: 256,
            score_channels: 4,
            ..ArchConfig::full()
        }
    }

    /// Desk widths at 32x32, for gradient checks.
    pub fn tiny() -> Self {
        ArchConfig {
            input_size: 32,
            head_channels: 32,
            ..ArchConfig::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.input_size == 0 || !self.input_size.is_multiple_of(32) {
            return bad(format!("input size {} is not a positive multiple of 32", self.input_size));
        }
        if self.channels.len() != 5 || self.convs_per_block.len() != 5 {
            return bad("channel schedule and convs per block need 5 entries".into());
        }
        if self.channels.iter().chain(&self.convs_per_block).any(|&c| c == 0) {
            return bad("zero entry in channel schedule".into());
        }
        if self.head_channels == 0 || self.score_channels == 0 {
            return bad("head and score channels must be positive".into());
        }
        if self.head_kernel.is_multiple_of(2) {
            return bad("head kernel must be odd".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        Ok(())
    }
}

/// All learnable tensors. Also used to hold gradients and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct FcnParams<T> {
    pub blocks: Vec<Vec<Conv2d<T>>>,
    pub head1: Conv2d<T>,
    pub head2: Conv2d<T>,
    pub score3: Conv2d<T>,
    pub score4: Conv2d<T>,
    pub score5: Conv2d<T>,
    pub up8: ConvTranspose2d<T>,
    pub up16: ConvTranspose2d<T>,
    pub up32: ConvTranspose2d<T>,
    pub fuse: Conv2d<T>,
}

impl<T: Real> FcnParams<T> {
    pub fn zeros_like(&self) -> Self {
        FcnParams {
            blocks: self.blocks.iter().map(|b| b.iter().map(Conv2d::zeros_like).collect()).collect(),
            head1: self.head1.zeros_like(),
            head2: self.head2.zeros_like(),
            score3: self.score3.zeros_like(),
            score4: self.score4.zeros_like(),
            score5: self.score5.zeros_like(),
            up8: self.up8.zeros_like(),
            up16: self.up16.zeros_like(),
            up32: self.up32.zeros_like(),
            fuse: self.fuse.zeros_like(),
        }
    }

    /// Parameter tensors in declared (checkpoint) order with their names.
    pub fn tensors(&self) -> Vec<(String, &[T])> {
        let mut out: Vec<(String, &[T])> = Vec::new();
        for (b, block) in self.blocks.iter().enumerate() {
            for (j, conv) in block.iter().enumerate() {
                out.push((format!("block{}.conv{}.weight", b + 1, j + 1), &conv.weight));
                out.push((format!("block{}.conv{}.bias", b + 1, j + 1), &conv.bias));
            }
        }
        let convs = [
            ("head1", &self.head1),
            ("head2", &self.head2),
            ("score3", &self.score3),
            ("score4", &self.score4),
            ("score5", &self.score5),
        ];
        for (name, c) in convs {
            out.push((format!("{name}.weight"), &c.weight));
            out.push((format!("{name}.bias"), &c.bias));
        }
        for (name, d) in [("up8", &self.up8), ("up16", &self.up16), ("up32", &self.up32)] {
            out.push((format!("{name}.weight"), &d.weight));
            out.push((format!("{name}.bias"), &d.bias));
        }
        out.push(("fuse.weight".into(), &self.fuse.weight));
        out.push(("fuse.bias".into(), &self.fuse.bias));
        out
    }

    /// Mutable views in the same order as [`FcnParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out: Vec<&mut Vec<T>> = Vec::new();
        for block in &mut self.blocks {
            for conv in block {
                out.push(&mut conv.weight);
                out.push(&mut conv.bias);
            }
        }
        for c in [
            &mut self.head1,
            &mut self.head2,
            &mut self.score3,
            &mut self.score4,
            &mut self.score5,
        ] {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        for d in [&mut self.up8, &mut self.up16, &mut self.up32] {
            out.push(&mut d.weight);
            out.push(&mut d.bias);
        }
        out.push(&mut self.fuse.weight);
        out.push(&mut self.fuse.bias);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> FcnParams<U> {
        let mut out = FcnParams::<U>::zeros_from(self);
        for (dst, (_, src)) in out.tensors_mut().into_iter().zip(self.tensors()) {
            *dst = src.iter().map(|v| U::of(v.f64())).collect();
        }
        out
    }

    fn zeros_from<S: Real>(p: &FcnParams<S>) -> Self {
        let conv = |c: &Conv2d<S>| Conv2d::<T>::zeros(c.cin, c.cout, c.k, c.pad);
        let deconv = |d: &ConvTranspose2d<S>| ConvTranspose2d::<T>::zeros(d.cin, d.cout, d.k, d.stride, d.pad);
        FcnParams {
            blocks: p.blocks.iter().map(|b| b.iter().map(conv).collect()).collect(),
            head1: conv(&p.head1),
            head2: conv(&p.head2),
            score3: conv(&p.score3),
            score4: conv(&p.score4),
            score5: conv(&p.score5),
            up8: deconv(&p.up8),
            up16: deconv(&p.up16),
            up32: deconv(&p.up32),
            fuse: conv(&p.fuse),
        }
    }

    /// Xavier-initialized parameters for `cfg`.
    fn init(cfg: &ArchConfig, rng: &mut ChaCha8Rng) -> Self {
        let conv = |cin, cout, k, pad, rng: &mut ChaCha8Rng| Conv2d::xavier(cin, cout, k, pad, INIT_BIAS, rng);
        let up = |c, f, rng: &mut ChaCha8Rng| ConvTranspose2d::upsampler(c, f, INIT_BIAS, rng);
        let mut cin = 3;
        let mut blocks = Vec::with_capacity(5);
        for (&cout, &reps) in cfg.channels.iter().zip(&cfg.convs_per_block) {
            let mut block = Vec::with_capacity(reps);
            for _ in 0..reps {
                block.push(conv(cin, cout, 3, 1, rng));
                cin = cout;
            }
            blocks.push(block);
        }
        let (s, hc) = (cfg.score_channels, cfg.head_channels);
        FcnParams {
            blocks,
            head1: conv(cin, hc, cfg.head_kernel, cfg.head_kernel / 2, rng),
            head2: conv(hc, hc, 1, 0, rng),
            score3: conv(cfg.channels[2], s, 1, 0, rng),
            score4: conv(cfg.channels[3], s, 1, 0, rng),
            score5: conv(hc, s, 1, 0, rng),
            up8: up(s, UPSAMPLE[0], rng),
            up16: up(s, UPSAMPLE[1], rng),
            up32: up(s, UPSAMPLE[2], rng),
            fuse: conv(3 * s, 2, 1, 0, rng),
        }
    }
}

/// Parameters plus architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct FcnModel<T> {
    pub config: ArchConfig,
    pub params: FcnParams<T>,
}

/// Intermediate activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Trace<T> {
    pub input: Tensor<T>,
    /// Post-ReLU output of every block convolution.
    pub block_outputs: Vec<Vec<Tensor<T>>>,
    /// Pooled output of each block and its argmax indices.
    pub pools: Vec<(Tensor<T>, Vec<u32>)>,
    pub head1_relu: Tensor<T>,
    pub head1: Tensor<T>,
    pub head1_mask: Option<Vec<T>>,
    pub head2_relu: Tensor<T>,
    pub head2: Tensor<T>,
    pub head2_mask: Option<Vec<T>>,
    /// Score maps for pool3, pool4 and the head, before upsampling.
    pub scores: [Tensor<T>; 3],
    /// Upsampled and concatenated score maps, input of the fusion conv.
    pub fused_input: Tensor<T>,
    pub logits: Tensor<T>,
    pub probs: Tensor<T>,
}

/// RGB bytes to a `[3, h, w]` tensor scaled to `[0, 1]`.
pub fn image_to_tensor<T: Real>(image: &RasterImage) -> Tensor<T> {
    let (w, h) = (image.width(), image.height());
    let plane = w * h;
    let mut data = vec![T::zero(); 3 * plane];
    let scale = T::of(1.0 / 255.0);
    for (k, px) in image.pixels().chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * plane + k] = T::of(px[c] as f64) * scale;
        }
    }
    Tensor::from_vec(&[3, h, w], data).expect("image dimensions are consistent")
}

fn mask_apply<T: Real>(t: &mut Tensor<T>, mask: &[T]) {
    for (v, &m) in t.data_mut().iter_mut().zip(mask) {
        *v *= m;
    }
}

impl<T: Real> FcnModel<T> {
    /// Xavier-uniform weights, every bias [`INIT_BIAS`].
    pub fn init(config: ArchConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = FcnParams::init(&config, &mut ChaCha8Rng::seed_from_u64(seed));
        Ok(FcnModel { config, params })
    }

    pub fn cast<U: Real>(&self) -> FcnModel<U> {
        FcnModel {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    /// Zero-filled parameter set of this architecture.
    pub fn zero_params(&self) -> FcnParams<T> {
        self.params.zeros_like()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let s = self.config.input_size;
        if x.shape() != [3, s, s] {
            return Err(Error::Shape(format!("model expects [3, {s}, {s}] input, got {:?}", x.shape())));
        }
        x.check_finite("input")
    }

    /// Forward pass. Dropout is applied iff `dropout` carries an RNG.
    pub fn forward(&self, x: &Tensor<T>, mut dropout: Option<&mut ChaCha8Rng>, exec: Execution) -> Result<Trace<T>> {
        self.check_input(x)?;
        let p = &self.params;
        let mut block_outputs = Vec::with_capacity(5);
        let mut pools: Vec<(Tensor<T>, Vec<u32>)> = Vec::with_capacity(5);
        for block in &p.blocks {
            let mut outs: Vec<Tensor<T>> = Vec::with_capacity(block.len());
            for conv in block {
                let input = outs.last().or(pools.last().map(|(t, _)| t)).unwrap_or(x);
                let mut y = conv.forward(input, exec)?;
                relu_inplace(&mut y);
                outs.push(y);
            }
            pools.push(max_pool2(outs.last().expect("blocks are non-empty"))?);
            block_outputs.push(outs);
        }

        let rate = self.config.dropout_rate;
        let mut drop = |t: &mut Tensor<T>| -> Option<Vec<T>> {
            match dropout.as_deref_mut() {
                Some(rng) if rate > 0.0 => Some(dropout_inplace(t, rate, rng)),
                _ => None,
            }
        };
        let mut head1_relu = p.head1.forward(&pools[4].0, exec)?;
        relu_inplace(&mut head1_relu);
        let mut head1 = head1_relu.clone();
        let head1_mask = drop(&mut head1);
        let mut head2_relu = p.head2.forward(&head1, exec)?;
        relu_inplace(&mut head2_relu);
        let mut head2 = head2_relu.clone();
        let head2_mask = drop(&mut head2);

        let scores = [
            p.score3.forward(&pools[2].0, exec)?,
            p.score4.forward(&pools[3].0, exec)?,
            p.score5.forward(&head2, exec)?,
        ];
        let ups = [
            p.up8.forward(&scores[0], exec)?,
            p.up16.forward(&scores[1], exec)?,
            p.up32.forward(&scores[2], exec)?,
        ];
        let fused_input = concat_channels(&[&ups[0], &ups[1], &ups[2]])?;
        let logits = p.fuse.forward(&fused_input, exec)?;
        logits.check_finite("logits")?;
        let probs = activate(&logits, self.config.output)?;
        Ok(Trace {
            input: x.clone(),
            block_outputs,
            pools,
            head1_relu,
            head1,
            head1_mask,
            head2_relu,
            head2,
            head2_mask,
            scores,
            fused_input,
            logits,
            probs,
        })
    }

    /// Backpropagates `dlogits` through a recorded trace, accumulating
    /// into `grads`.
    pub fn backward(&self, trace: &Trace<T>, dlogits: &Tensor<T>, grads: &mut FcnParams<T>, exec: Execution) -> Result<()> {
        let p = &self.params;
        let s = self.config.score_channels;
        let dcat = p
            .fuse
            .backward(&trace.fused_input, dlogits, &mut grads.fuse, true, exec)?
            .expect("requested input gradient");
        let dups = split_channels(&dcat, &[s, s, s])?;
        let ds3 = p.up8.backward(&trace.scores[0], &dups[0], &mut grads.up8, exec)?;
        let ds4 = p.up16.backward(&trace.scores[1], &dups[1], &mut grads.up16, exec)?;
        let ds5 = p.up32.backward(&trace.scores[2], &dups[2], &mut grads.up32, exec)?;

        let input_grad = |r: Option<Tensor<T>>| r.expect("requested input gradient");
        let mut dh2 = input_grad(p.score5.backward(&trace.head2, &ds5, &mut grads.score5, true, exec)?);
        if let Some(m) = &trace.head2_mask {
            mask_apply(&mut dh2, m);
        }
        relu_backward_inplace(&mut dh2, &trace.head2_relu);
        let mut dh1 = input_grad(p.head2.backward(&trace.head1, &dh2, &mut grads.head2, true, exec)?);
        if let Some(m) = &trace.head1_mask {
            mask_apply(&mut dh1, m);
        }
        relu_backward_inplace(&mut dh1, &trace.head1_relu);
        let mut dpool = input_grad(p.head1.backward(&trace.pools[4].0, &dh1, &mut grads.head1, true, exec)?);

        for b in (0..5).rev() {
            let skip = match b {
                3 => Some(p.score4.backward(&trace.pools[3].0, &ds4, &mut grads.score4, true, exec)?),
                2 => Some(p.score3.backward(&trace.pools[2].0, &ds3, &mut grads.score3, true, exec)?),
                _ => None,
            };
            if let Some(extra) = skip.map(input_grad) {
                for (d, &e) in dpool.data_mut().iter_mut().zip(extra.data()) {
                    *d += e;
                }
            }
            let outs = &trace.block_outputs[b];
            let last = outs.last().expect("blocks are non-empty");
            let mut d = max_pool2_backward(&dpool, &trace.pools[b].1, last.shape())?;
            for j in (0..outs.len()).rev() {
                relu_backward_inplace(&mut d, &outs[j]);
                let input = match (j, b) {
                    (0, 0) => &trace.input,
                    (0, _) => &trace.pools[b - 1].0,
                    _ => &outs[j - 1],
                };
                let need_dx = !(b == 0 && j == 0);
                let dx = p.blocks[b][j].backward(input, &d, &mut grads.blocks[b][j], need_dx, exec)?;
                if let Some(dx) = dx {
                    d = dx;
                }
            }
            dpool = d;
        }
        for (name, g) in grads.tensors() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient in {name}")));
            }
        }
        Ok(())
    }

    /// Loss and full parameter gradient for one sample.
    pub fn loss_and_gradient(
        &self,
        x: &Tensor<T>,
        label: &LabelMask,
        dropout: Option<&mut ChaCha8Rng>,
        exec: Execution,
    ) -> Result<(f64, FcnParams<T>)> {
        let trace = self.forward(x, dropout, exec)?;
        let j = loss(&trace.probs, label)?;
        let dz = logit_gradient(&trace.probs, label, self.config.output)?;
        let mut grads = self.zero_params();
        self.backward(&trace, &dz, &mut grads, exec)?;
        Ok((j, grads))
    }

    /// Inference-mode loss of one sample.
    pub fn eval_loss(&self, x: &Tensor<T>, label: &LabelMask, exec: Execution) -> Result<f64> {
        loss(&self.forward(x, None, exec)?.probs, label)
    }

    /// Inference on a rendered image.
    pub fn predict(&self, image: &RasterImage, exec: Execution) -> Result<ProbMap> {
        let s = self.config.input_size;
        if (image.width(), image.height()) != (s, s) {
            return Err(Error::Shape(format!(
                "{}x{} image for a {s}x{s} model",
                image.width(),
                image.height()
            )));
        }
        let trace = self.forward(&image_to_tensor(image), None, exec)?;
        to_prob_map(&trace.probs)
    }
}

/// Draws a seeded random sample of parameter coordinates, covering every
/// tensor at least once.
pub fn sample_coordinates<T: Real>(params: &FcnParams<T>, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
    let mut out: Vec<(usize, usize)> = sizes.iter().enumerate().map(|(t, &n)| (t, rng.gen_range(0..n))).collect();
    let total: usize = sizes.iter().sum();
    while out.len() < count {
        let mut flat = rng.gen_range(0..total);
        let mut t = 0;
        while flat >= sizes[t] {
            flat -= sizes[t];
            t += 1;
        }
        if !out.contains(&(t, flat)) {
            out.push((t, flat));
        }
    }
    out
}
