//! The five-layer residual up-sampling network.
//!
//! ```text
//! x -> conv L1 -> relu -> { conv L2a -> relu | conv L2b -> relu } -> concat
//!   -> deconv L3 (x2) -> relu -> { conv L4a -> relu | conv L4b -> relu } -> concat
//!   -> conv L5 -> residual (+ DCTIF up-sample)
//! ```
//!
//! The chroma variant takes (Y down-sampled, Cb, Cr) and has two output maps,
//! one per chroma channel; its last layer is a pair of single-map heads,
//! stored as one two-map convolution.

use super::ops::{self, conv_backward, conv_forward, deconv_backward, deconv_forward, relu, relu_backward};
use super::{Real, Tensor};
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Luma,
    Chroma,
}

impl Variant {
    pub fn in_channels(self) -> usize {
        match self {
            Variant::Luma => 1,
            Variant::Chroma => 3,
        }
    }

    pub fn out_channels(self) -> usize {
        match self {
            Variant::Luma => 1,
            Variant::Chroma => 2,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Variant> {
        match c {
            0 => Some(Variant::Luma),
            1 => Some(Variant::Chroma),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Luma => "luma",
            Variant::Chroma => "chroma",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "luma" => Ok(Variant::Luma),
            "chroma" => Ok(Variant::Chroma),
            _ => Err(Error::arg(format!("unknown variant {s:?} (luma|chroma)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub kernel: usize,
    pub channels: usize,
}

const fn br(kernel: usize, channels: usize) -> BranchSpec {
    BranchSpec { kernel, channels }
}

/// Kernel sizes and widths of the five layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub l1: BranchSpec,
    pub l2: [BranchSpec; 2],
    /// Transposed convolution, stride 2.
    pub l3: BranchSpec,
    pub l4: [BranchSpec; 2],
    pub l5_kernel: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            l1: br(5, 64),
            l2: [br(3, 32), br(5, 32)],
            l3: br(9, 32),
            l4: [br(3, 16), br(5, 16)],
            l5_kernel: 3,
        }
    }
}

impl Architecture {
    /// A narrower network with the same topology, cheap enough to train on one core.
    pub fn compact() -> Self {
        Architecture {
            l1: br(5, 16),
            l2: [br(3, 8), br(5, 8)],
            l3: br(9, 8),
            l4: [br(3, 8), br(5, 8)],
            l5_kernel: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let convs = [self.l1, self.l2[0], self.l2[1], self.l4[0], self.l4[1], br(self.l5_kernel, 1)];
        for b in convs {
            if b.kernel % 2 == 0 || b.kernel == 0 || b.channels == 0 {
                return Err(Error::Config(format!(
                    "convolutions need an odd kernel and at least one channel, got {b:?}"
                )));
            }
        }
        if self.l3.kernel < 2 || self.l3.channels == 0 || self.l3.kernel > 255 {
            return Err(Error::Config(format!("invalid deconvolution {:?}", self.l3)));
        }
        if convs.iter().any(|b| b.kernel > 255 || b.channels > u16::MAX as usize) {
            return Err(Error::Config("layer dimensions exceed the model format".into()));
        }
        Ok(())
    }

    fn l2_width(&self) -> usize {
        self.l2[0].channels + self.l2[1].channels
    }

    fn l4_width(&self) -> usize {
        self.l4[0].channels + self.l4[1].channels
    }

    /// Shapes of all parameter tensors, weights then bias per layer.
    pub fn param_shapes(&self, v: Variant) -> Vec<Vec<usize>> {
        let conv = |o: usize, i: usize, k: usize| vec![vec![o, i, k, k], vec![o]];
        let mut s = Vec::new();
        s.extend(conv(self.l1.channels, v.in_channels(), self.l1.kernel));
        for b in self.l2 {
            s.extend(conv(b.channels, self.l1.channels, b.kernel));
        }
        s.push(vec![self.l2_width(), self.l3.channels, self.l3.kernel, self.l3.kernel]);
        s.push(vec![self.l3.channels]);
        for b in self.l4 {
            s.extend(conv(b.channels, self.l3.channels, b.kernel));
        }
        s.extend(conv(v.out_channels(), self.l4_width(), self.l5_kernel));
        s
    }

    /// Layer table as written into model files.
    pub fn layer_table(&self, v: Variant) -> Vec<LayerSpec> {
        let conv = |k: usize, i: usize, o: usize| LayerSpec::new(LayerKind::Conv, k, i, o);
        let relu = |c: usize| LayerSpec::new(LayerKind::Relu, 0, c, c);
        let (c1, c3) = (self.l1.channels, self.l3.channels);
        let [a, b] = self.l2;
        let [d, e] = self.l4;
        vec![
            conv(self.l1.kernel, v.in_channels(), c1),
            relu(c1),
            conv(a.kernel, c1, a.channels),
            relu(a.channels),
            conv(b.kernel, c1, b.channels),
            relu(b.channels),
            LayerSpec::new(LayerKind::Concat, 0, a.channels, self.l2_width()),
            LayerSpec::new(LayerKind::Deconv, self.l3.kernel, self.l2_width(), c3),
            relu(c3),
            conv(d.kernel, c3, d.channels),
            relu(d.channels),
            conv(e.kernel, c3, e.channels),
            relu(e.channels),
            LayerSpec::new(LayerKind::Concat, 0, d.channels, self.l4_width()),
            conv(self.l5_kernel, self.l4_width(), v.out_channels()),
            LayerSpec::new(LayerKind::AddSkip, 0, v.out_channels(), v.out_channels()),
        ]
    }

    /// Recovers the architecture from a layer table, rejecting any other topology.
    pub fn from_layer_table(table: &[LayerSpec], v: Variant) -> Result<Self> {
        let bad = || Error::Format("layer table does not describe the up-sampling network".into());
        if table.len() != 16 {
            return Err(bad());
        }
        let k = |i: usize| table[i].kh as usize;
        let o = |i: usize| table[i].out_ch as usize;
        let arch = Architecture {
            l1: br(k(0), o(0)),
            l2: [br(k(2), o(2)), br(k(4), o(4))],
            l3: br(k(7), o(7)),
            l4: [br(k(9), o(9)), br(k(11), o(11))],
            l5_kernel: k(14),
        };
        arch.validate().map_err(|_| bad())?;
        if arch.layer_table(v) != table {
            return Err(bad());
        }
        Ok(arch)
    }

    /// Input samples on each side that influence an output pixel, in input
    /// (low-resolution) units, rounded up.
    pub fn receptive_radius(&self) -> usize {
        let half = |k: usize| (k - 1) / 2;
        let lr = half(self.l1.kernel) + half(self.l2[0].kernel).max(half(self.l2[1].kernel));
        let hr = half(self.l4[0].kernel).max(half(self.l4[1].kernel)) + half(self.l5_kernel);
        lr + (self.l3.kernel / 2 + hr).div_ceil(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv = 0,
    Deconv = 1,
    Relu = 2,
    Concat = 3,
    AddSkip = 4,
}

impl LayerKind {
    pub fn from_code(c: u8) -> Option<LayerKind> {
        Some(match c {
            0 => LayerKind::Conv,
            1 => LayerKind::Deconv,
            2 => LayerKind::Relu,
            3 => LayerKind::Concat,
            4 => LayerKind::AddSkip,
            _ => return None,
        })
    }
}

/// One row of the layer table. For a concatenation `in_ch` is the width of
/// the first operand and `out_ch` the combined width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kh: u8,
    pub kw: u8,
    pub in_ch: u16,
    pub out_ch: u16,
}

impl LayerSpec {
    fn new(kind: LayerKind, k: usize, in_ch: usize, out_ch: usize) -> Self {
        LayerSpec {
            kind,
            kh: k as u8,
            kw: k as u8,
            in_ch: in_ch as u16,
            out_ch: out_ch as u16,
        }
    }

    pub fn stride(&self) -> usize {
        match self.kind {
            LayerKind::Deconv => ops::DECONV_STRIDE,
            _ => 1,
        }
    }

    pub fn pad(&self) -> usize {
        match self.kind {
            LayerKind::Conv => (self.kh as usize - 1) / 2,
            _ => 0,
        }
    }
}

/// Intermediate activations kept for back-propagation.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    x: Tensor<T>,
    a1: Tensor<T>,
    a2: [Tensor<T>; 2],
    c2: Tensor<T>,
    a3: Tensor<T>,
    a4: [Tensor<T>; 2],
    c4: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpsamplerNet<T> {
    pub variant: Variant,
    pub qp_tag: u8,
    pub arch: Architecture,
    params: Vec<Tensor<T>>,
}

const L1: usize = 0;
const L2: [usize; 2] = [2, 4];
const L3: usize = 6;
const L4: [usize; 2] = [8, 10];
const L5: usize = 12;

impl<T: Real> UpsamplerNet<T> {
    /// All parameters zero: the network output is the DCTIF up-sample.
    pub fn zeros(variant: Variant, arch: Architecture, qp_tag: u8) -> Result<Self> {
        arch.validate()?;
        let params = arch.param_shapes(variant).iter().map(|s| Tensor::zeros(s)).collect();
        Ok(UpsamplerNet {
            variant,
            qp_tag,
            arch,
            params,
        })
    }

    /// He-initialised weights, zero biases, and a zero last layer so that
    /// the untrained network reproduces DCTIF exactly.
    pub fn init(variant: Variant, arch: Architecture, qp_tag: u8, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(variant, arch, qp_tag, &mut rng, true)
    }

    /// Like [`UpsamplerNet::init`] but with a random last layer and small
    /// random biases, so no unit sits exactly on a ReLU kink.
    pub fn random(variant: Variant, arch: Architecture, qp_tag: u8, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(variant, arch, qp_tag, &mut rng, false)
    }

    fn init_with(variant: Variant, arch: Architecture, qp_tag: u8, rng: &mut ChaCha8Rng, zero_last: bool) -> Result<Self> {
        let mut net = Self::zeros(variant, arch, qp_tag)?;
        for (i, t) in net.params.iter_mut().enumerate() {
            if i % 2 == 1 {
                if !zero_last {
                    let u = rand_distr::Uniform::new(-0.1, 0.1);
                    for v in t.data_mut() {
                        *v = T::of(u.sample(rng));
                    }
                }
                continue;
            }
            if zero_last && i == L5 {
                continue;
            }
            let s = t.shape();
            let mut fan_in = (s[1] * s[2] * s[3]) as f64;
            if i == L3 {
                // (in, out, k, k): each output sees about a quarter of the taps
                fan_in = (s[0] * s[2] * s[3]) as f64 / 4.0;
            }
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            for v in t.data_mut() {
                *v = T::of(normal.sample(rng));
            }
        }
        Ok(net)
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    /// Replaces all parameters; shapes must match.
    pub fn set_params(&mut self, params: Vec<Tensor<T>>) -> Result<()> {
        if params.len() != self.params.len()
            || params.iter().zip(&self.params).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::arg("parameter shapes do not match the architecture"));
        }
        self.params = params;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn layer_table(&self) -> Vec<LayerSpec> {
        self.arch.layer_table(self.variant)
    }

    pub fn cast<U: Real>(&self) -> UpsamplerNet<U> {
        UpsamplerNet {
            variant: self.variant,
            qp_tag: self.qp_tag,
            arch: self.arch,
            params: self.params.iter().map(Tensor::cast).collect(),
        }
    }

    fn conv(&self, x: &Tensor<T>, at: usize) -> Result<Tensor<T>> {
        let k = self.params[at].shape()[2];
        conv_forward(x, &self.params[at], &self.params[at + 1], (k - 1) / 2)
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (c, h, w) = x.chw()?;
        if c != self.variant.in_channels() || h == 0 || w == 0 {
            return Err(Error::arg(format!(
                "{} network expects {} input channels, got shape {:?}",
                self.variant.name(),
                self.variant.in_channels(),
                x.shape()
            )));
        }
        Ok(())
    }

    /// Residual `F5(x)`, shape `(out_channels, 2h, 2w)`, with the activations
    /// needed for [`UpsamplerNet::backward`].
    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>)> {
        self.check_input(x)?;
        let a1 = relu(&self.conv(x, L1)?);
        let a2 = [relu(&self.conv(&a1, L2[0])?), relu(&self.conv(&a1, L2[1])?)];
        let c2 = ops::concat(&a2[0], &a2[1])?;
        let a3 = relu(&deconv_forward(&c2, &self.params[L3], &self.params[L3 + 1])?);
        let a4 = [relu(&self.conv(&a3, L4[0])?), relu(&self.conv(&a3, L4[1])?)];
        let c4 = ops::concat(&a4[0], &a4[1])?;
        let out = self.conv(&c4, L5)?;
        Ok((
            out,
            ForwardCache {
                x: x.clone(),
                a1,
                a2,
                c2,
                a3,
                a4,
                c4,
            },
        ))
    }

    pub fn residual(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_cached(x)?.0)
    }

    /// `F5(x) + dctif_up`.
    pub fn forward(&self, x: &Tensor<T>, dctif_up: &Tensor<T>) -> Result<Tensor<T>> {
        let r = self.residual(x)?;
        if r.shape() != dctif_up.shape() {
            return Err(Error::arg(format!(
                "DCTIF up-sample {:?} does not match network output {:?}",
                dctif_up.shape(),
                r.shape()
            )));
        }
        ops::add_skip(&r, dctif_up)
    }

    /// Parameter gradients given the gradient of the residual output.
    pub fn backward(&self, cache: &ForwardCache<T>, d_out: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let p = &self.params;
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; p.len()];
        let mut put = |at: usize, dw: Tensor<T>, db: Tensor<T>| {
            grads[at] = Some(dw);
            grads[at + 1] = Some(db);
        };
        let pad = |at: usize| (p[at].shape()[2] - 1) / 2;

        let (dc4, dw, db) = conv_backward(&cache.c4, &p[L5], pad(L5), d_out, true)?;
        put(L5, dw, db);
        let (d4a, d4b) = ops::concat_backward(&dc4.expect("requested"), cache.a4[0].shape()[0])?;
        let mut da3 = Tensor::zeros(cache.a3.shape());
        for (i, d) in [d4a, d4b].into_iter().enumerate() {
            let dz = relu_backward(&cache.a4[i], &d);
            let (dx, dw, db) = conv_backward(&cache.a3, &p[L4[i]], pad(L4[i]), &dz, true)?;
            put(L4[i], dw, db);
            da3.add_assign(&dx.expect("requested"))?;
        }
        let dz3 = relu_backward(&cache.a3, &da3);
        let (dc2, dw, db) = deconv_backward(&cache.c2, &p[L3], &dz3)?;
        put(L3, dw, db);
        let (d2a, d2b) = ops::concat_backward(&dc2, cache.a2[0].shape()[0])?;
        let mut da1 = Tensor::zeros(cache.a1.shape());
        for (i, d) in [d2a, d2b].into_iter().enumerate() {
            let dz = relu_backward(&cache.a2[i], &d);
            let (dx, dw, db) = conv_backward(&cache.a1, &p[L2[i]], pad(L2[i]), &dz, true)?;
            put(L2[i], dw, db);
            da1.add_assign(&dx.expect("requested"))?;
        }
        let dz1 = relu_backward(&cache.a1, &da1);
        let (_, dw, db) = conv_backward(&cache.x, &p[L1], pad(L1), &dz1, false)?;
        put(L1, dw, db);
        Ok(grads.into_iter().map(|g| g.expect("every layer visited")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny() -> Architecture {
        Architecture {
            l1: br(3, 3),
            l2: [br(3, 2), br(5, 2)],
            l3: br(4, 3),
            l4: [br(3, 2), br(1, 2)],
            l5_kernel: 3,
        }
    }

    fn rand_input(c: usize, h: usize, w: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(&[c, h, w], (0..c * h * w).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn output_shapes() {
        let net = UpsamplerNet::<f32>::init(Variant::Luma, Architecture::default(), 37, 1).unwrap();
        let x = Tensor::zeros(&[1, 32, 32]);
        assert_eq!(net.residual(&x).unwrap().shape(), &[1, 64, 64]);
        let net = UpsamplerNet::<f32>::init(Variant::Chroma, Architecture::compact(), 37, 1).unwrap();
        let x = Tensor::zeros(&[3, 16, 16]);
        assert_eq!(net.residual(&x).unwrap().shape(), &[2, 32, 32]);
        assert!(net.residual(&Tensor::zeros(&[1, 16, 16])).is_err());
    }

    #[test]
    fn zero_last_layer_gives_dctif() {
        let net = UpsamplerNet::<f32>::init(Variant::Luma, Architecture::compact(), 37, 9).unwrap();
        let x = rand_input(1, 12, 10, 3).cast::<f32>();
        let up = rand_input(1, 24, 20, 4).cast::<f32>();
        assert_eq!(net.forward(&x, &up).unwrap(), up);
    }

    #[test]
    fn layer_table_roundtrip() {
        for v in [Variant::Luma, Variant::Chroma] {
            for a in [Architecture::default(), Architecture::compact(), tiny()] {
                assert_eq!(Architecture::from_layer_table(&a.layer_table(v), v).unwrap(), a);
            }
        }
        let mut t = Architecture::default().layer_table(Variant::Luma);
        t.swap(0, 1);
        assert!(Architecture::from_layer_table(&t, Variant::Luma).is_err());
    }

    #[test]
    fn receptive_radius_fits_context() {
        assert!(Architecture::default().receptive_radius() <= crate::resample::CONTEXT);
        assert!(Architecture::compact().receptive_radius() <= crate::resample::CONTEXT);
    }

    #[test]
    fn network_gradients_match_finite_differences() {
        for v in [Variant::Luma, Variant::Chroma] {
            let net = UpsamplerNet::<f64>::random(v, tiny(), 0, 11).unwrap();
            let x = rand_input(v.in_channels(), 4, 5, 12);
            let probe = rand_input(v.out_channels(), 8, 10, 13);
            let obj = |n: &UpsamplerNet<f64>| -> f64 {
                n.residual(&x).unwrap().data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
            };
            let (_, cache) = net.forward_cached(&x).unwrap();
            let grads = net.backward(&cache, &probe).unwrap();
            let eps = 1e-6;
            for (pi, g) in grads.iter().enumerate() {
                for i in 0..g.len() {
                    let mut a = net.clone();
                    a.params_mut()[pi].data_mut()[i] += eps;
                    let mut b = net.clone();
                    b.params_mut()[pi].data_mut()[i] -= eps;
                    let num = (obj(&a) - obj(&b)) / (2.0 * eps);
                    let ana = g.data()[i];
                    let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-6);
                    assert!(rel < 1e-3, "{v:?} param {pi}[{i}]: {num} vs {ana}");
                }
            }
        }
    }

    #[test]
    fn branch_permutation_equivariance() {
        // Swapping the L2 branches and permuting L3's input channels to match
        // leaves the output unchanged.
        let mut arch = tiny();
        arch.l2 = [br(3, 2), br(5, 3)];
        let net = UpsamplerNet::<f64>::random(Variant::Luma, arch, 0, 5).unwrap();
        let mut swapped_arch = arch;
        swapped_arch.l2 = [arch.l2[1], arch.l2[0]];
        let mut swapped = UpsamplerNet::<f64>::zeros(Variant::Luma, swapped_arch, 0).unwrap();
        let p = net.params();
        let mut q: Vec<Tensor<f64>> = p.to_vec();
        q[2] = p[4].clone();
        q[3] = p[5].clone();
        q[4] = p[2].clone();
        q[5] = p[3].clone();
        let (ca, cb) = (arch.l2[0].channels, arch.l2[1].channels);
        let w3 = &p[L3];
        let per = w3.len() / (ca + cb);
        let mut data = w3.data()[ca * per..].to_vec();
        data.extend_from_slice(&w3.data()[..ca * per]);
        q[L3] = Tensor::from_vec(w3.shape(), data).unwrap();
        swapped.set_params(q).unwrap();
        let x = rand_input(1, 6, 6, 2);
        let a = net.residual(&x).unwrap();
        let b = swapped.residual(&x).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}
