//! Convolution, transposed convolution, pooling, ReLU and dropout kernels
//! over single CHW samples.
//!
//! Parallel variants split work by output channel (forward, weight
//! gradients) or input channel (input gradients). Each element is still
//! accumulated in the same order, so serial and parallel results match
//! bitwise.

use rand::Rng;

use super::tensor::{Real, Tensor};
use crate::par::{self, Execution};
use crate::{Error, Result};

fn xavier_uniform<T: Real>(len: usize, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Vec<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len).map(|_| T::of(rng.gen_range(-limit..limit))).collect()
}

/// Stride-1 2-D convolution with zero padding.
///
/// `weight` is laid out `[cout][cin][k][k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub pad: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv2d<T> {
    pub fn zeros(cin: usize, cout: usize, k: usize, pad: usize) -> Self {
        Conv2d {
            cin,
            cout,
            k,
            pad,
            weight: vec![T::zero(); cout * cin * k * k],
            bias: vec![T::zero(); cout],
        }
    }

    pub fn xavier(cin: usize, cout: usize, k: usize, pad: usize, bias: f64, rng: &mut impl Rng) -> Self {
        Conv2d {
            weight: xavier_uniform(cout * cin * k * k, cin * k * k, cout * k * k, rng),
            bias: vec![T::of(bias); cout],
            ..Conv2d::zeros(cin, cout, k, pad)
        }
    }

    pub fn zeros_like(&self) -> Self {
        Conv2d::zeros(self.cin, self.cout, self.k, self.pad)
    }

    fn out_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (hp, wp) = (h + 2 * self.pad, w + 2 * self.pad);
        if hp < self.k || wp < self.k {
            return Err(Error::Shape(format!("{h}x{w} input too small for {0}x{0} kernel", self.k)));
        }
        Ok((hp - self.k + 1, wp - self.k + 1))
    }

    /// Input element read by output pixel `(oy, ox)` at kernel offset
    /// `(ky, kx)`, or `None` in the zero padding.
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize, h: usize, w: usize) -> Option<usize> {
        let iy = (oy + ky).checked_sub(self.pad).filter(|&v| v < h)?;
        let ix = (ox + kx).checked_sub(self.pad).filter(|&v| v < w)?;
        Some(iy * w + ix)
    }

    /// Transposed im2col: row `p` holds the `cin * k * k` inputs seen by
    /// output pixel `p`.
    fn patches(&self, input: &[T], h: usize, w: usize, oh: usize, ow: usize, exec: Execution) -> Vec<T> {
        let (k, r) = (self.k, self.cin * self.k * self.k);
        let mut col = vec![T::zero(); oh * ow * r];
        par::for_each_chunk_mut(exec, &mut col, ow * r, |oy, rows| {
            for ox in 0..ow {
                let row = &mut rows[ox * r..(ox + 1) * r];
                for ci in 0..self.cin {
                    let plane = &input[ci * h * w..(ci + 1) * h * w];
                    for ky in 0..k {
                        for kx in 0..k {
                            if let Some(s) = self.source(oy, ox, ky, kx, h, w) {
                                row[(ci * k + ky) * k + kx] = plane[s];
                            }
                        }
                    }
                }
            }
        });
        col
    }

    pub fn forward(&self, x: &Tensor<T>, exec: Execution) -> Result<Tensor<T>> {
        let (c, h, w) = x.chw()?;
        if c != self.cin {
            return Err(Error::Shape(format!("conv expects {} channels, got {c}", self.cin)));
        }
        let (oh, ow) = self.out_dims(h, w)?;
        let r = self.cin * self.k * self.k;
        let col = self.patches(x.data(), h, w, oh, ow, exec);
        let mut out = vec![T::zero(); self.cout * oh * ow];
        par::for_each_chunk_mut(exec, &mut out, oh * ow, |o, plane| {
            let wrow = &self.weight[o * r..(o + 1) * r];
            for (p, v) in plane.iter_mut().enumerate() {
                *v = self.bias[o] + dot(wrow, &col[p * r..(p + 1) * r]);
            }
        });
        Tensor::from_vec(&[self.cout, oh, ow], out)
    }

    /// Accumulates parameter gradients into `grad`; returns the input
    /// gradient when `need_dx`.
    pub fn backward(
        &self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        grad: &mut Conv2d<T>,
        need_dx: bool,
        exec: Execution,
    ) -> Result<Option<Tensor<T>>> {
        let (_, h, w) = x.chw()?;
        let (oh, ow) = self.out_dims(h, w)?;
        if dy.shape() != [self.cout, oh, ow] {
            return Err(Error::Shape(format!("conv output gradient shape {:?}", dy.shape())));
        }
        let (k, cin, np) = (self.k, self.cin, oh * ow);
        let r = cin * k * k;
        let dout = dy.data();
        let col = self.patches(x.data(), h, w, oh, ow, exec);

        par::for_each_chunk_pair_mut(exec, &mut grad.weight, r, &mut grad.bias, 1, |o, gw, gb| {
            let dplane = &dout[o * np..(o + 1) * np];
            gb[0] += dplane.iter().copied().sum::<T>();
            for (p, &g) in dplane.iter().enumerate() {
                if g != T::zero() {
                    axpy(gw, g, &col[p * r..(p + 1) * r]);
                }
            }
        });

        if !need_dx {
            return Ok(None);
        }
        let mut dcol = vec![T::zero(); np * r];
        par::for_each_chunk_mut(exec, &mut dcol, r, |p, row| {
            for o in 0..self.cout {
                let g = dout[o * np + p];
                if g != T::zero() {
                    axpy(row, g, &self.weight[o * r..(o + 1) * r]);
                }
            }
        });
        let mut dx = vec![T::zero(); cin * h * w];
        par::for_each_chunk_mut(exec, &mut dx, h * w, |ci, plane| {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = &dcol[(oy * ow + ox) * r..(oy * ow + ox + 1) * r];
                    for ky in 0..k {
                        for kx in 0..k {
                            if let Some(s) = self.source(oy, ox, ky, kx, h, w) {
                                plane[s] += row[(ci * k + ky) * k + kx];
                            }
                        }
                    }
                }
            }
        });
        Ok(Some(Tensor::from_vec(&[cin, h, w], dx)?))
    }
}

/// Dot product with eight independent partial sums so the loop
/// vectorizes.
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: T = ca.remainder().iter().zip(cb.remainder()).map(|(&x, &y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`.
fn axpy<T: Real>(y: &mut [T], alpha: T, x: &[T]) {
    for (a, &b) in y.iter_mut().zip(x) {
        *a += alpha * b;
    }
}

/// Transposed convolution (fractionally strided), used for upsampling.
///
/// `weight` is laid out `[cin][cout][k][k]`. Output size is
/// `(in - 1) * stride - 2 * pad + k`; with `k = 2s` and `pad = s/2` that
/// is exactly `in * s`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvTranspose2d<T> {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvTranspose2d<T> {
    pub fn zeros(cin: usize, cout: usize, k: usize, stride: usize, pad: usize) -> Self {
        ConvTranspose2d {
            cin,
            cout,
            k,
            stride,
            pad,
            weight: vec![T::zero(); cin * cout * k * k],
            bias: vec![T::zero(); cout],
        }
    }

    /// `factor`x upsampler: kernel `2 * factor`, stride `factor`.
    pub fn upsampler(channels: usize, factor: usize, bias: f64, rng: &mut impl Rng) -> Self {
        let k = 2 * factor;
        ConvTranspose2d {
            weight: xavier_uniform(channels * channels * k * k, channels * k * k, channels * k * k, rng),
            bias: vec![T::of(bias); channels],
            ..ConvTranspose2d::zeros(channels, channels, k, factor, factor / 2)
        }
    }

    pub fn zeros_like(&self) -> Self {
        ConvTranspose2d::zeros(self.cin, self.cout, self.k, self.stride, self.pad)
    }

    fn out_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let grow = |n: usize| ((n - 1) * self.stride + self.k).checked_sub(2 * self.pad);
        match (grow(h), grow(w)) {
            (Some(a), Some(b)) if h > 0 && w > 0 && a > 0 && b > 0 => Ok((a, b)),
            _ => Err(Error::Shape(format!("{h}x{w} input too small for transposed conv"))),
        }
    }

    /// Output index hit by input index `i` and kernel offset `kk`.
    fn target(&self, i: usize, kk: usize, out_len: usize) -> Option<usize> {
        let t = (i * self.stride + kk).checked_sub(self.pad)?;
        (t < out_len).then_some(t)
    }

    pub fn forward(&self, x: &Tensor<T>, exec: Execution) -> Result<Tensor<T>> {
        let (c, h, w) = x.chw()?;
        if c != self.cin {
            return Err(Error::Shape(format!("deconv expects {} channels, got {c}", self.cin)));
        }
        let (oh, ow) = self.out_dims(h, w)?;
        let (k, cout) = (self.k, self.cout);
        let input = x.data();
        let mut out = vec![T::zero(); cout * oh * ow];
        par::for_each_chunk_mut(exec, &mut out, oh * ow, |o, plane| {
            plane.fill(self.bias[o]);
            for ci in 0..self.cin {
                let kern = &self.weight[(ci * cout + o) * k * k..(ci * cout + o + 1) * k * k];
                for y in 0..h {
                    for xi in 0..w {
                        let v = input[(ci * h + y) * w + xi];
                        for ky in 0..k {
                            let Some(ty) = self.target(y, ky, oh) else { continue };
                            for kx in 0..k {
                                if let Some(tx) = self.target(xi, kx, ow) {
                                    plane[ty * ow + tx] += v * kern[ky * k + kx];
                                }
                            }
                        }
                    }
                }
            }
        });
        Tensor::from_vec(&[cout, oh, ow], out)
    }

    pub fn backward(
        &self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        grad: &mut ConvTranspose2d<T>,
        exec: Execution,
    ) -> Result<Tensor<T>> {
        let (_, h, w) = x.chw()?;
        let (oh, ow) = self.out_dims(h, w)?;
        if dy.shape() != [self.cout, oh, ow] {
            return Err(Error::Shape(format!("deconv output gradient shape {:?}", dy.shape())));
        }
        let (k, cout) = (self.k, self.cout);
        let (input, dout) = (x.data(), dy.data());

        for o in 0..cout {
            grad.bias[o] += dout[o * oh * ow..(o + 1) * oh * ow].iter().copied().sum::<T>();
        }
        par::for_each_chunk_mut(exec, &mut grad.weight, cout * k * k, |ci, gw| {
            for o in 0..cout {
                let dplane = &dout[o * oh * ow..(o + 1) * oh * ow];
                for ky in 0..k {
                    for kx in 0..k {
                        let mut acc = T::zero();
                        for y in 0..h {
                            let Some(ty) = self.target(y, ky, oh) else { continue };
                            for xi in 0..w {
                                if let Some(tx) = self.target(xi, kx, ow) {
                                    acc += input[(ci * h + y) * w + xi] * dplane[ty * ow + tx];
                                }
                            }
                        }
                        gw[(o * k + ky) * k + kx] += acc;
                    }
                }
            }
        });

        let mut dx = vec![T::zero(); self.cin * h * w];
        par::for_each_chunk_mut(exec, &mut dx, h * w, |ci, plane| {
            for o in 0..cout {
                let kern = &self.weight[(ci * cout + o) * k * k..(ci * cout + o + 1) * k * k];
                let dplane = &dout[o * oh * ow..(o + 1) * oh * ow];
                for y in 0..h {
                    for xi in 0..w {
                        let mut acc = T::zero();
                        for ky in 0..k {
                            let Some(ty) = self.target(y, ky, oh) else { continue };
                            for kx in 0..k {
                                if let Some(tx) = self.target(xi, kx, ow) {
                                    acc += kern[ky * k + kx] * dplane[ty * ow + tx];
                                }
                            }
                        }
                        plane[y * w + xi] += acc;
                    }
                }
            }
        });
        Tensor::from_vec(&[self.cin, h, w], dx)
    }
}

/// 2x2 stride-2 max pooling. Returns the pooled tensor and, per output
/// element, the flat in-plane index of the winning input (first maximum
/// in scan order).
pub fn max_pool2<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    let (c, h, w) = x.chw()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!("cannot 2x2-pool a {h}x{w} map")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut idx = Vec::with_capacity(c * oh * ow);
    let data = x.data();
    for ch in 0..c {
        let plane = &data[ch * h * w..(ch + 1) * h * w];
        for y in 0..oh {
            for xo in 0..ow {
                let base = 2 * y * w + 2 * xo;
                let mut best = base;
                for cand in [base + 1, base + w, base + w + 1] {
                    if plane[cand] > plane[best] {
                        best = cand;
                    }
                }
                out.push(plane[best]);
                idx.push(best as u32);
            }
        }
    }
    Ok((Tensor::from_vec(&[c, oh, ow], out)?, idx))
}

pub fn max_pool2_backward<T: Real>(
    dy: &Tensor<T>,
    idx: &[u32],
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    let (c, oh, ow) = dy.chw()?;
    let (h, w) = (input_shape[1], input_shape[2]);
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for ch in 0..c {
        for j in 0..oh * ow {
            let k = ch * oh * ow + j;
            d[ch * h * w + idx[k] as usize] += dy.data()[k];
        }
    }
    Ok(dx)
}

pub fn relu_inplace<T: Real>(x: &mut Tensor<T>) {
    for v in x.data_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes gradient where the ReLU output was not positive.
pub fn relu_backward_inplace<T: Real>(dy: &mut Tensor<T>, out: &Tensor<T>) {
    for (g, &o) in dy.data_mut().iter_mut().zip(out.data()) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)`. Returns
/// the multiplicative mask for the backward pass.
pub fn dropout_inplace<T: Real>(x: &mut Tensor<T>, rate: f64, rng: &mut impl Rng) -> Vec<T> {
    let keep = T::of(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..x.len())
        .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
        .collect();
    for (v, &m) in x.data_mut().iter_mut().zip(&mask) {
        *v *= m;
    }
    mask
}

pub fn concat_channels<T: Real>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let (_, h, w) = parts[0].chw()?;
    let mut channels = 0;
    let mut data = Vec::new();
    for p in parts {
        let (c, ph, pw) = p.chw()?;
        if (ph, pw) != (h, w) {
            return Err(Error::Shape(format!("cannot concatenate {ph}x{pw} with {h}x{w}")));
        }
        channels += c;
        data.extend_from_slice(p.data());
    }
    Tensor::from_vec(&[channels, h, w], data)
}

pub fn split_channels<T: Real>(x: &Tensor<T>, counts: &[usize]) -> Result<Vec<Tensor<T>>> {
    let (_, h, w) = x.chw()?;
    let mut out = Vec::with_capacity(counts.len());
    let mut offset = 0;
    for &c in counts {
        let end = offset + c * h * w;
        out.push(Tensor::from_vec(&[c, h, w], x.data()[offset..end].to_vec())?);
        offset = end;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct definition of zero-padded cross-correlation.
    fn conv_oracle(c: &Conv2d<f64>, x: &Tensor<f64>) -> Vec<f64> {
        let (_, h, w) = x.chw().unwrap();
        let (oh, ow) = (h + 2 * c.pad - c.k + 1, w + 2 * c.pad - c.k + 1);
        let mut out = vec![0.0; c.cout * oh * ow];
        for o in 0..c.cout {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut s = c.bias[o];
                    for ci in 0..c.cin {
                        for ky in 0..c.k {
                            for kx in 0..c.k {
                                let iy = y as isize + ky as isize - c.pad as isize;
                                let ix = xx as isize + kx as isize - c.pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    s += c.weight[((o * c.cin + ci) * c.k + ky) * c.k + kx]
                                        * x.data()[(ci * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                    }
                    out[(o * oh + y) * ow + xx] = s;
                }
            }
        }
        out
    }

    /// Scatter definition of the transposed convolution.
    fn deconv_oracle(d: &ConvTranspose2d<f64>, x: &Tensor<f64>) -> Vec<f64> {
        let (_, h, w) = x.chw().unwrap();
        let oh = (h - 1) * d.stride + d.k - 2 * d.pad;
        let ow = (w - 1) * d.stride + d.k - 2 * d.pad;
        let mut out = vec![0.0; d.cout * oh * ow];
        for o in 0..d.cout {
            for v in &mut out[o * oh * ow..(o + 1) * oh * ow] {
                *v = d.bias[o];
            }
        }
        for ci in 0..d.cin {
            for y in 0..h {
                for xx in 0..w {
                    for o in 0..d.cout {
                        for ky in 0..d.k {
                            for kx in 0..d.k {
                                let ty = (y * d.stride + ky) as isize - d.pad as isize;
                                let tx = (xx * d.stride + kx) as isize - d.pad as isize;
                                if ty >= 0 && tx >= 0 && (ty as usize) < oh && (tx as usize) < ow {
                                    out[(o * oh + ty as usize) * ow + tx as usize] += x.data()[(ci * h + y) * w + xx]
                                        * d.weight[((ci * d.cout + o) * d.k + ky) * d.k + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (k, pad) in [(3, 1), (1, 0), (3, 0)] {
            let c = Conv2d::<f64>::xavier(3, 4, k, pad, 0.1, &mut rng);
            let x = random(&[3, 7, 5], 2);
            let y = c.forward(&x, Execution::Sequential).unwrap();
            for (a, b) in y.data().iter().zip(conv_oracle(&c, &x)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deconv_matches_definition_and_upsamples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for factor in [2, 4, 8] {
            let d = ConvTranspose2d::<f64>::upsampler(2, factor, 0.1, &mut rng);
            let x = random(&[2, 3, 4], 4);
            let y = d.forward(&x, Execution::Sequential).unwrap();
            assert_eq!(y.shape(), &[2, 3 * factor, 4 * factor]);
            for (a, b) in y.data().iter().zip(deconv_oracle(&d, &x)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    /// Backward of a linear map is its adjoint: <A x, g> = <x, A^T g>.
    #[test]
    fn backward_is_adjoint_of_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut c = Conv2d::<f64>::xavier(3, 4, 3, 1, 0.0, &mut rng);
        c.bias.iter_mut().for_each(|b| *b = 0.0);
        let x = random(&[3, 6, 6], 6);
        let g = random(&[4, 6, 6], 7);
        let y = c.forward(&x, Execution::Sequential).unwrap();
        let mut grad = c.zeros_like();
        let dx = c.backward(&x, &g, &mut grad, true, Execution::Sequential).unwrap().unwrap();
        let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(dx.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
        // and <y, g> = <W, dW> since y is linear in W with zero bias
        let rhs_w: f64 = c.weight.iter().zip(&grad.weight).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs_w).abs() < 1e-10);

        let mut d = ConvTranspose2d::<f64>::upsampler(2, 4, 0.0, &mut rng);
        d.bias.iter_mut().for_each(|b| *b = 0.0);
        let x = random(&[2, 2, 3], 8);
        let g = random(&[2, 8, 12], 9);
        let y = d.forward(&x, Execution::Sequential).unwrap();
        let mut dgrad = d.zeros_like();
        let dx = d.backward(&x, &g, &mut dgrad, Execution::Sequential).unwrap();
        let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(dx.data()).map(|(a, b)| a * b).sum();
        let rhs_w: f64 = d.weight.iter().zip(&dgrad.weight).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
        assert!((lhs - rhs_w).abs() < 1e-10);
    }

    #[test]
    fn parallel_kernels_are_bitwise_serial() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let c = Conv2d::<f32>::xavier(4, 6, 3, 1, 0.1, &mut rng);
        let x = random(&[4, 8, 8], 11).cast::<f32>();
        let g = random(&[6, 8, 8], 12).cast::<f32>();
        let (mut g1, mut g2) = (c.zeros_like(), c.zeros_like());
        let a = c.forward(&x, Execution::Sequential).unwrap();
        let b = c.forward(&x, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        let da = c.backward(&x, &g, &mut g1, true, Execution::Sequential).unwrap();
        let db = c.backward(&x, &g, &mut g2, true, Execution::Parallel).unwrap();
        assert_eq!(da, db);
        assert_eq!(g1, g2);
    }

    #[test]
    fn pooling_routes_gradient_to_max() {
        let x = Tensor::from_vec(&[1, 2, 4], vec![1.0, 5.0, 2.0, 2.0, 3.0, 4.0, 2.0, 2.0]).unwrap();
        let (y, idx) = max_pool2::<f64>(&x).unwrap();
        assert_eq!(y.data(), &[5.0, 2.0]);
        assert_eq!(idx, vec![1, 2]);
        let dy = Tensor::from_vec(&[1, 1, 2], vec![1.0, 2.0]).unwrap();
        let dx = max_pool2_backward(&dy, &idx, &[1, 2, 4]).unwrap();
        assert_eq!(dx.data(), &[0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(max_pool2(&Tensor::<f64>::zeros(&[1, 3, 4])).is_err());
    }

    #[test]
    fn dropout_scales_survivors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut x = Tensor::from_vec(&[1, 100, 100], vec![1.0f64; 10_000]).unwrap();
        let mask = dropout_inplace(&mut x, 0.5, &mut rng);
        let kept = mask.iter().filter(|&&m| m > 0.0).count();
        assert!((4500..5500).contains(&kept));
        assert!(x.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn xavier_variance_matches_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let c = Conv2d::<f64>::xavier(8, 16, 3, 1, 0.1, &mut rng);
        let n = c.weight.len() as f64;
        let mean = c.weight.iter().sum::<f64>() / n;
        let var = c.weight.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n;
        let target = 2.0 / (8.0 * 9.0 + 16.0 * 9.0);
        assert!((var - target).abs() < 0.1 * target, "{var} vs {target}");
        assert!(c.bias.iter().all(|&b| b == 0.1));
    }

    #[test]
    fn concat_split_round_trip() {
        let a = random(&[1, 3, 3], 1);
        let b = random(&[2, 3, 3], 2);
        let cat = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape(), &[3, 3, 3]);
        let parts = split_channels(&cat, &[1, 2]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }
}
