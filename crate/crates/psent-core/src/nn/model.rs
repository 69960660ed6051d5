//! SE-ResNet-18 assembly: stem, four two-block stages with channel gating,
//! and a pooled two-logit head.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::layers::{
    global_avg_pool, global_avg_pool_backward, relu, relu_backward, BatchNorm, BnStats, Conv2d,
    Dense, SeBlock, SeCache,
};
use super::tensor::{NamedTensor, Tensor4, TensorRole};
use super::{NnError, Scalar};
use crate::rng::SeedRng;

/// Network shape description, also stored in checkpoints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArchConfig {
    /// Input channels (fused sensor count).
    pub in_channels: usize,
    /// Channel widths of the four stages.
    pub widths: [usize; 4],
    /// Squeeze-and-excitation reduction ratio.
    pub se_ratio: usize,
    /// Output classes.
    pub classes: usize,
}

impl ArchConfig {
    /// Full-size network: widths 64/128/256/512, ratio 16.
    pub fn full(in_channels: usize) -> Self {
        Self {
            in_channels,
            widths: [64, 128, 256, 512],
            se_ratio: 16,
            classes: 2,
        }
    }

    /// Width-scaled variant with the same topology, for fast tests.
    pub fn width_scaled(in_channels: usize) -> Self {
        Self {
            in_channels,
            widths: [8, 16, 32, 64],
            se_ratio: 4,
            classes: 2,
        }
    }

    /// Check the invariants.
    pub fn validate(&self) -> Result<(), NnError> {
        if self.in_channels == 0 {
            return Err(NnError::InvalidParam("input channel count must be positive"));
        }
        if self.classes != 2 {
            return Err(NnError::InvalidParam("the classifier head is two-class"));
        }
        for &w in &self.widths {
            if w == 0 {
                return Err(NnError::InvalidParam("stage widths must be positive"));
            }
            if self.se_ratio == 0 || w % self.se_ratio != 0 {
                return Err(NnError::InvalidParam(
                    "squeeze-excitation ratio must divide every stage width",
                ));
            }
        }
        Ok(())
    }
}

/// Convolution + batch normalization pair.
#[derive(Clone, Debug)]
struct ConvBn<T> {
    conv: Conv2d<T>,
    bn: BatchNorm<T>,
}

impl<T: Scalar> ConvBn<T> {
    fn new(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut SeedRng,
    ) -> Self {
        Self {
            conv: Conv2d::new(c_in, c_out, kernel, stride, padding, rng),
            bn: BatchNorm::new(c_out),
        }
    }

    fn forward_train(&mut self, x: &Tensor4<T>) -> Result<(Tensor4<T>, ConvBnCache<T>), NnError> {
        let conv_out = self.conv.forward(x)?;
        let (bn_out, stats) = self.bn.forward_train(&conv_out)?;
        Ok((
            bn_out.clone(),
            ConvBnCache {
                x: x.clone(),
                conv_out,
                stats,
                bn_out,
            },
        ))
    }

    fn forward_eval(&self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        self.bn.forward_eval(&self.conv.forward(x)?)
    }

    fn backward(&mut self, cache: &ConvBnCache<T>, dy: &Tensor4<T>) -> Tensor4<T> {
        let d_conv_out = self.bn.backward(&cache.conv_out, &cache.stats, dy);
        self.conv.backward(&cache.x, &d_conv_out)
    }

    fn collect<'a>(&'a mut self, prefix: &str, out: &mut Vec<NamedTensor<'a, T>>) {
        out.push(NamedTensor {
            name: format!("{prefix}.conv.weight"),
            role: TensorRole::Trainable,
            param: &mut self.conv.weight,
        });
        out.push(NamedTensor {
            name: format!("{prefix}.bn.gamma"),
            role: TensorRole::Trainable,
            param: &mut self.bn.gamma,
        });
        out.push(NamedTensor {
            name: format!("{prefix}.bn.beta"),
            role: TensorRole::Trainable,
            param: &mut self.bn.beta,
        });
        out.push(NamedTensor {
            name: format!("{prefix}.bn.running_mean"),
            role: TensorRole::Buffer,
            param: &mut self.bn.running_mean,
        });
        out.push(NamedTensor {
            name: format!("{prefix}.bn.running_var"),
            role: TensorRole::Buffer,
            param: &mut self.bn.running_var,
        });
    }
}

#[derive(Clone, Debug)]
struct ConvBnCache<T> {
    x: Tensor4<T>,
    conv_out: Tensor4<T>,
    stats: BnStats<T>,
    bn_out: Tensor4<T>,
}

/// Basic residual block with channel gating.
#[derive(Clone, Debug)]
pub(crate) struct BasicBlock<T> {
    cb1: ConvBn<T>,
    cb2: ConvBn<T>,
    se: SeBlock<T>,
    proj: Option<ConvBn<T>>,
}

pub(crate) struct BlockCache<T> {
    c1: ConvBnCache<T>,
    c2: ConvBnCache<T>,
    se: SeCache<T>,
    proj: Option<ConvBnCache<T>>,
    sum: Tensor4<T>,
}

impl<T: Scalar> BasicBlock<T> {
    pub(crate) fn new(
        c_in: usize,
        c_out: usize,
        stride: usize,
        ratio: usize,
        rng: &mut SeedRng,
    ) -> Result<Self, NnError> {
        let cb1 = ConvBn::new(c_in, c_out, 3, stride, 1, rng);
        let cb2 = ConvBn::new(c_out, c_out, 3, 1, 1, rng);
        let se = SeBlock::new(c_out, ratio, rng)?;
        // Projection shortcut exactly when the shape changes.
        let proj = if stride != 1 || c_in != c_out {
            Some(ConvBn::new(c_in, c_out, 1, stride, 0, rng))
        } else {
            None
        };
        Ok(Self { cb1, cb2, se, proj })
    }

    pub(crate) fn forward_train(&mut self, x: &Tensor4<T>) -> Result<(Tensor4<T>, BlockCache<T>), NnError> {
        let (y1, c1) = self.cb1.forward_train(x)?;
        let r1 = relu(&y1);
        let (y2, c2) = self.cb2.forward_train(&r1)?;
        let (gated, se_cache) = self.se.forward(&y2)?;
        let (short, proj_cache) = match &mut self.proj {
            Some(p) => {
                let (s, c) = p.forward_train(x)?;
                (s, Some(c))
            }
            None => (x.clone(), None),
        };
        let mut sum = gated;
        for (v, &s) in sum.values.iter_mut().zip(&short.values) {
            *v = *v + s;
        }
        let out = relu(&sum);
        Ok((
            out,
            BlockCache {
                c1,
                c2,
                se: se_cache,
                proj: proj_cache,
                sum,
            },
        ))
    }

    fn forward_eval(&self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let r1 = relu(&self.cb1.forward_eval(x)?);
        let y2 = self.cb2.forward_eval(&r1)?;
        let (gated, _) = self.se.forward(&y2)?;
        let short = match &self.proj {
            Some(p) => p.forward_eval(x)?,
            None => x.clone(),
        };
        let mut sum = gated;
        for (v, &s) in sum.values.iter_mut().zip(&short.values) {
            *v = *v + s;
        }
        Ok(relu(&sum))
    }

    pub(crate) fn backward(&mut self, cache: &BlockCache<T>, dy: &Tensor4<T>) -> Tensor4<T> {
        let dsum = relu_backward(&cache.sum, dy);
        // Residual branch.
        let d_gated = self.se.backward(&cache.c2.bn_out, &cache.se, &dsum);
        let d_r1 = self.cb2.backward(&cache.c2, &d_gated);
        let d_y1 = relu_backward(&cache.c1.bn_out, &d_r1);
        let mut dx = self.cb1.backward(&cache.c1, &d_y1);
        // Shortcut branch.
        match (&mut self.proj, &cache.proj) {
            (Some(p), Some(pc)) => {
                let d_short = p.backward(pc, &dsum);
                for (v, &s) in dx.values.iter_mut().zip(&d_short.values) {
                    *v = *v + s;
                }
            }
            _ => {
                for (v, &s) in dx.values.iter_mut().zip(&dsum.values) {
                    *v = *v + s;
                }
            }
        }
        dx
    }

    pub(crate) fn collect<'a>(&'a mut self, prefix: &str, out: &mut Vec<NamedTensor<'a, T>>) {
        self.cb1.collect(&format!("{prefix}.conv1"), out);
        self.cb2.collect(&format!("{prefix}.conv2"), out);
        for (name, param) in [
            ("se.reduce.weight", &mut self.se.reduce_w),
            ("se.reduce.bias", &mut self.se.reduce_b),
            ("se.expand.weight", &mut self.se.expand_w),
            ("se.expand.bias", &mut self.se.expand_b),
        ] {
            out.push(NamedTensor {
                name: format!("{prefix}.{name}"),
                role: TensorRole::Trainable,
                param,
            });
        }
        if let Some(p) = &mut self.proj {
            p.collect(&format!("{prefix}.proj"), out);
        }
    }
}

/// The classifier network.
#[derive(Clone, Debug)]
pub struct SEResNet18<T> {
    cfg: ArchConfig,
    stem: ConvBn<T>,
    stages: Vec<Vec<BasicBlock<T>>>,
    head: Dense<T>,
}

/// Forward intermediates for one training batch.
pub struct ForwardCache<T> {
    stem: ConvBnCache<T>,
    blocks: Vec<BlockCache<T>>,
    gap_in: Tensor4<T>,
    pooled: Vec<T>,
    batch: usize,
}

impl<T: Scalar> SEResNet18<T> {
    /// Build with Kaiming-initialized weights, deterministic in `seed`.
    pub fn new(cfg: &ArchConfig, seed: u64) -> Result<Self, NnError> {
        cfg.validate()?;
        let mut rng = SeedRng::new(seed);
        let stem = ConvBn::new(cfg.in_channels, cfg.widths[0], 7, 2, 3, &mut rng);
        let mut stages = Vec::with_capacity(4);
        let mut c_in = cfg.widths[0];
        for &width in &cfg.widths {
            let entry = BasicBlock::new(c_in, width, 2, cfg.se_ratio, &mut rng)?;
            let second = BasicBlock::new(width, width, 1, cfg.se_ratio, &mut rng)?;
            stages.push(vec![entry, second]);
            c_in = width;
        }
        let head = Dense::new(cfg.widths[3], cfg.classes, &mut rng);
        Ok(Self {
            cfg: cfg.clone(),
            stem,
            stages,
            head,
        })
    }

    /// The architecture this model was built with.
    pub fn config(&self) -> &ArchConfig {
        &self.cfg
    }

    fn check_input(&self, x: &Tensor4<T>) -> Result<(), NnError> {
        if x.c != self.cfg.in_channels {
            return Err(NnError::ChannelMismatch {
                expected: self.cfg.in_channels,
                got: x.c,
            });
        }
        if x.n == 0 {
            return Err(NnError::EmptyDataset);
        }
        if !x.is_finite() {
            return Err(NnError::NonFinite { at: "input" });
        }
        Ok(())
    }

    /// Training-mode forward: batch-statistics normalization, caches kept
    /// for the backward pass. Returns row-major `n x 2` logits.
    pub fn forward_train(
        &mut self,
        x: &Tensor4<T>,
    ) -> Result<(Vec<T>, ForwardCache<T>), NnError> {
        self.check_input(x)?;
        let (y, stem_cache) = self.stem.forward_train(x)?;
        let mut cur = relu(&y);
        let mut blocks = Vec::with_capacity(8);
        for stage in &mut self.stages {
            for block in stage {
                let (next, cache) = block.forward_train(&cur)?;
                blocks.push(cache);
                cur = next;
            }
        }
        let pooled = global_avg_pool(&cur);
        let logits = self.head.forward(&pooled, x.n);
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite { at: "logits" });
        }
        Ok((
            logits,
            ForwardCache {
                stem: stem_cache,
                blocks,
                gap_in: cur,
                pooled,
                batch: x.n,
            },
        ))
    }

    /// Inference-mode forward: running-statistics normalization, no caches.
    pub fn forward_eval(&self, x: &Tensor4<T>) -> Result<Vec<T>, NnError> {
        self.check_input(x)?;
        let mut cur = relu(&self.stem.forward_eval(x)?);
        for stage in &self.stages {
            for block in stage {
                cur = block.forward_eval(&cur)?;
            }
        }
        let pooled = global_avg_pool(&cur);
        let logits = self.head.forward(&pooled, x.n);
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite { at: "logits" });
        }
        Ok(logits)
    }

    /// Backward pass from logit gradients; accumulates into every parameter
    /// gradient.
    pub fn backward(&mut self, cache: &ForwardCache<T>, dlogits: &[T]) -> Result<(), NnError> {
        let dpooled = self.head.backward(&cache.pooled, dlogits, cache.batch);
        let g = &cache.gap_in;
        let mut dcur = global_avg_pool_backward(&dpooled, g.n, g.c, g.h, g.w);
        let mut idx = cache.blocks.len();
        for stage in self.stages.iter_mut().rev() {
            for block in stage.iter_mut().rev() {
                idx -= 1;
                dcur = block.backward(&cache.blocks[idx], &dcur);
            }
        }
        let d_stem_out = relu_backward(&cache.stem.bn_out, &dcur);
        let _ = self.stem.backward(&cache.stem, &d_stem_out);

        for t in self.tensors_mut() {
            if t.role == TensorRole::Trainable && t.param.grad().iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite { at: "gradients" });
            }
        }
        Ok(())
    }

    /// Every parameter and buffer with its stable dotted name, in a fixed
    /// order (stem, stages outside-in, head).
    pub fn tensors_mut(&mut self) -> Vec<NamedTensor<'_, T>> {
        let mut out = Vec::new();
        self.stem.collect("stem", &mut out);
        for (i, stage) in self.stages.iter_mut().enumerate() {
            for (j, block) in stage.iter_mut().enumerate() {
                block.collect(&format!("stage{}.block{}", i + 1, j), &mut out);
            }
        }
        out.push(NamedTensor {
            name: String::from("head.weight"),
            role: TensorRole::Trainable,
            param: &mut self.head.weight,
        });
        out.push(NamedTensor {
            name: String::from("head.bias"),
            role: TensorRole::Trainable,
            param: &mut self.head.bias,
        });
        out
    }

    /// Clear all gradient accumulators.
    pub fn zero_grad(&mut self) {
        for t in self.tensors_mut() {
            t.param.zero_grad();
        }
    }

    /// Trainable parameter count.
    pub fn num_params(&mut self) -> usize {
        self.tensors_mut()
            .iter()
            .filter(|t| t.role == TensorRole::Trainable)
            .map(|t| t.param.len())
            .sum()
    }

    /// Reinitialize the stem convolution from a seed, leaving everything
    /// else untouched (transfer to a different input channel count).
    pub fn reinit_stem(&mut self, seed: u64) {
        let mut rng = SeedRng::new(seed);
        self.stem.conv.reinit(&mut rng);
    }

    /// Convert the whole model to another scalar type (f32 checkpoints
    /// loaded into an f64 model for verification work, and back).
    pub fn cast<U: Scalar>(&mut self) -> SEResNet18<U> {
        let mut target = SEResNet18::<U>::new(&self.cfg, 0).expect("same config revalidates");
        {
            let src = self.tensors_mut();
            let mut dst = target.tensors_mut();
            for (s, d) in src.iter().zip(dst.iter_mut()) {
                debug_assert_eq!(s.name, d.name);
                let cast = s.param.cast::<U>();
                d.param.values_mut().copy_from_slice(cast.values());
            }
        }
        target
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::loss::softmax2;

    fn tiny_cfg() -> ArchConfig {
        ArchConfig {
            in_channels: 2,
            widths: [4, 4, 4, 4],
            se_ratio: 2,
            classes: 2,
        }
    }

    fn rand_input(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Tensor4<f64> {
        let mut rng = SeedRng::new(seed);
        Tensor4::new(n, c, h, w, (0..n * c * h * w).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(ArchConfig::full(7).validate().is_ok());
        assert!(ArchConfig::width_scaled(1).validate().is_ok());
        let mut bad = ArchConfig::full(7);
        bad.se_ratio = 5;
        assert!(bad.validate().is_err());
        bad = ArchConfig::full(0);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn forward_shapes_and_softmax_normalization() {
        let cfg = ArchConfig::width_scaled(2);
        let mut model = SEResNet18::<f64>::new(&cfg, 7).unwrap();
        let x = rand_input(3, 2, 128, 126, 1);
        let (logits, _) = model.forward_train(&x).unwrap();
        assert_eq!(logits.len(), 6);
        for row in logits.chunks(2) {
            let p = softmax2(row[0], row[1]);
            assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        }
        let eval_logits = model.forward_eval(&x).unwrap();
        assert_eq!(eval_logits.len(), 6);
    }

    #[test]
    fn zero_input_yields_symmetric_logits() {
        let cfg = tiny_cfg();
        let mut model = SEResNet18::<f64>::new(&cfg, 3).unwrap();
        let x = Tensor4::zeros(2, 2, 8, 8);
        // Inference mode: zero activations survive every layer (beta = 0,
        // running mean 0), the head sees a zero vector, bias is zero.
        let logits = model.forward_eval(&x).unwrap();
        for &l in &logits {
            assert_eq!(l, 0.0);
        }
        let p = softmax2(logits[0], logits[1]);
        assert!((p[0] - 0.5).abs() < 1e-15);
        // Training mode hits the same fixed point.
        let (logits, _) = model.forward_train(&x).unwrap();
        for &l in &logits {
            assert_eq!(l, 0.0);
        }
    }

    #[test]
    fn inference_is_batch_independent() {
        let cfg = tiny_cfg();
        let model = SEResNet18::<f64>::new(&cfg, 11).unwrap();
        let single = rand_input(1, 2, 8, 8, 5);
        let mut batch = Tensor4::zeros(8, 2, 8, 8);
        for n in 0..8 {
            batch.sample_mut(n).copy_from_slice(single.sample(0));
        }
        let lone = model.forward_eval(&single).unwrap();
        let crowd = model.forward_eval(&batch).unwrap();
        for n in 0..8 {
            for j in 0..2 {
                assert!((crowd[n * 2 + j] - lone[j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn same_seed_same_logits() {
        let cfg = tiny_cfg();
        let a = SEResNet18::<f64>::new(&cfg, 42).unwrap();
        let b = SEResNet18::<f64>::new(&cfg, 42).unwrap();
        let x = rand_input(2, 2, 8, 8, 9);
        let la = a.forward_eval(&x).unwrap();
        let lb = b.forward_eval(&x).unwrap();
        assert_eq!(la, lb, "same seed must give bitwise-identical logits");
        let c = SEResNet18::<f64>::new(&cfg, 43).unwrap();
        assert_ne!(c.forward_eval(&x).unwrap(), la);
    }

    #[test]
    fn tensor_names_are_stable_and_complete() {
        let cfg = tiny_cfg();
        let mut model = SEResNet18::<f64>::new(&cfg, 1).unwrap();
        let names: Vec<String> = model.tensors_mut().iter().map(|t| t.name.clone()).collect();
        assert!(names.contains(&String::from("stem.conv.weight")));
        assert!(names.contains(&String::from("stage1.block0.proj.conv.weight")));
        assert!(names.contains(&String::from("stage4.block1.se.expand.bias")));
        assert!(names.contains(&String::from("head.bias")));
        // Second blocks keep identity shortcuts.
        assert!(!names.iter().any(|n| n.contains("block1.proj")));
        // Names unique.
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());

        // Running stats are buffers, everything else trainable.
        for t in model.tensors_mut() {
            let is_buffer = t.name.contains("running_");
            assert_eq!(t.role == TensorRole::Buffer, is_buffer, "{}", t.name);
        }
    }

    #[test]
    fn full_architecture_parameter_count_is_plausible() {
        let cfg = ArchConfig::full(7);
        let mut model = SEResNet18::<f32>::new(&cfg, 0).unwrap();
        let n = model.num_params();
        // ResNet-18 trunk is ~11.2M parameters; SE gates add ~90K.
        assert!(n > 11_000_000 && n < 12_500_000, "got {n}");
    }

    #[test]
    fn input_validation_errors() {
        let cfg = tiny_cfg();
        let mut model = SEResNet18::<f64>::new(&cfg, 1).unwrap();
        let wrong = Tensor4::<f64>::zeros(1, 3, 8, 8);
        assert!(matches!(
            model.forward_train(&wrong),
            Err(NnError::ChannelMismatch { .. })
        ));
        let mut bad = Tensor4::<f64>::zeros(1, 2, 8, 8);
        bad.values[5] = f64::NAN;
        assert!(matches!(
            model.forward_eval(&bad),
            Err(NnError::NonFinite { at: "input" })
        ));
    }
}
