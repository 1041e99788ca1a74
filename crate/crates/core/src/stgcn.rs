//! Spatio-temporal graph convolutional backbone.
//!
//! A block maps `x: [B, P, L, C_in]` to `[B, P, L, C_out]`: every time slice
//! is mixed over nodes by the normalized adjacency and projected by `W`, then
//! each node is convolved along time with a same-padded kernel, biased and
//! rectified. The feature extractor stacks three blocks; each head is one
//! more block, a mean over nodes and time, and a dense layer.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};
use crate::rng::{derive, seeded, Rng};

/// Tensors per block: spatial weight, temporal kernel, bias.
const BLOCK_TENSORS: usize = 3;
/// Blocks in the feature extractor.
pub const EXTRACTOR_BLOCKS: usize = 3;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    /// Channel plan `[1, c1, c2, c3]` of the extractor.
    pub channels: [usize; 4],
    /// Odd temporal kernel width.
    pub temporal_kernel: usize,
    /// Output width of the source head (embedding size, or 2 for a
    /// supervised source task).
    pub source_out: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { channels: [1, 16, 16, 16], temporal_kernel: 9, source_out: 32 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels[0] != 1 {
            return Err(Error::invalid("channel plan", format!("input channels must be 1, got {}", self.channels[0])));
        }
        if self.channels.contains(&0) || self.source_out == 0 {
            return Err(Error::invalid("channel plan", "widths must be positive"));
        }
        if self.temporal_kernel.is_multiple_of(2) {
            return Err(Error::invalid("temporal kernel", format!("{} is not odd", self.temporal_kernel)));
        }
        Ok(())
    }

    pub fn feature_channels(&self) -> usize {
        self.channels[3]
    }
}

/// Borrowed view of one block's tensors.
#[derive(Debug, Clone, Copy)]
pub struct BlockParams<'a> {
    /// `[C_in, C_out]`
    pub weight: &'a Tensor,
    /// `[C_out, C_out, K]`
    pub temporal: &'a Tensor,
    /// `[C_out]`
    pub bias: &'a Tensor,
}

fn uniform(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor {
    let bound = libm::sqrt(1.0 / fan_in as f64);
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::from_parts(shape.to_vec(), data)
}

fn init_block(cin: usize, cout: usize, k: usize, rng: &mut Rng) -> [Tensor; 3] {
    [uniform(&[cin, cout], cin, rng), uniform(&[cout, cout, k], cout * k, rng), Tensor::zeros(&[cout])]
}

fn check_block(ts: &[Tensor], cin: usize) -> Result<usize> {
    let (w, k, b) = (&ts[0], &ts[1], &ts[2]);
    let bad = || Error::shape("block parameters", format!("{:?} / {:?} / {:?} for C_in {cin}", w.shape(), k.shape(), b.shape()));
    if w.ndim() != 2 || w.shape()[0] != cin {
        return Err(bad());
    }
    let cout = w.shape()[1];
    if k.ndim() != 3 || k.shape()[0] != cout || k.shape()[1] != cout || k.shape()[2] % 2 == 0 || b.shape() != [cout] {
        return Err(bad());
    }
    Ok(cout)
}

/// The feature extractor `f(phi)`: three blocks, nine tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorParams {
    tensors: Vec<Tensor>,
}

impl ExtractorParams {
    pub fn init(config: &ModelConfig, rng: &mut Rng) -> Self {
        let c = config.channels;
        let tensors = (0..EXTRACTOR_BLOCKS)
            .flat_map(|i| init_block(c[i], c[i + 1], config.temporal_kernel, rng))
            .collect();
        ExtractorParams { tensors }
    }

    /// Validates the block chain `1 -> c1 -> c2 -> c3`.
    pub fn from_tensors(tensors: Vec<Tensor>) -> Result<Self> {
        if tensors.len() != EXTRACTOR_BLOCKS * BLOCK_TENSORS {
            return Err(Error::shape("extractor", format!("expected 9 tensors, got {}", tensors.len())));
        }
        let mut cin = 1;
        for chunk in tensors.chunks(BLOCK_TENSORS) {
            cin = check_block(chunk, cin)?;
        }
        Ok(ExtractorParams { tensors })
    }

    pub fn block(&self, i: usize) -> BlockParams<'_> {
        let t = &self.tensors[i * BLOCK_TENSORS..(i + 1) * BLOCK_TENSORS];
        BlockParams { weight: &t[0], temporal: &t[1], bias: &t[2] }
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn set_tensors(&mut self, tensors: Vec<Tensor>) {
        debug_assert!(tensors.iter().zip(&self.tensors).all(|(a, b)| a.shape() == b.shape()));
        self.tensors = tensors;
    }

    pub fn out_channels(&self) -> usize {
        self.tensors[BLOCK_TENSORS * (EXTRACTOR_BLOCKS - 1)].shape()[1]
    }
}

/// A head `h(theta)`: one block plus a dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    tensors: Vec<Tensor>,
}

impl HeadParams {
    pub fn init(config: &ModelConfig, out_dim: usize, rng: &mut Rng) -> Self {
        let c = config.feature_channels();
        let mut tensors: Vec<Tensor> = init_block(c, c, config.temporal_kernel, rng).into();
        tensors.push(uniform(&[c, out_dim], c, rng));
        tensors.push(Tensor::zeros(&[out_dim]));
        HeadParams { tensors }
    }

    pub fn from_tensors(tensors: Vec<Tensor>, in_channels: usize) -> Result<Self> {
        if tensors.len() != BLOCK_TENSORS + 2 {
            return Err(Error::shape("head", format!("expected 5 tensors, got {}", tensors.len())));
        }
        let c = check_block(&tensors[..BLOCK_TENSORS], in_channels)?;
        let (w, b) = (&tensors[3], &tensors[4]);
        if w.ndim() != 2 || w.shape()[0] != c || b.shape() != [w.shape()[1]] {
            return Err(Error::shape("head dense layer", format!("{:?} / {:?} after {c} channels", w.shape(), b.shape())));
        }
        Ok(HeadParams { tensors })
    }

    pub fn block(&self) -> BlockParams<'_> {
        BlockParams { weight: &self.tensors[0], temporal: &self.tensors[1], bias: &self.tensors[2] }
    }

    pub fn dense_weight(&self) -> &Tensor {
        &self.tensors[3]
    }

    pub fn dense_bias(&self) -> &Tensor {
        &self.tensors[4]
    }

    pub fn out_dim(&self) -> usize {
        self.tensors[4].len()
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn set_tensors(&mut self, tensors: Vec<Tensor>) {
        debug_assert!(tensors.iter().zip(&self.tensors).all(|(a, b)| a.shape() == b.shape()));
        self.tensors = tensors;
    }
}

/// Extractor `phi`, source head `theta_s` (absent when a strategy drops the
/// source task) and target head `theta_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub extractor: ExtractorParams,
    pub source_head: Option<HeadParams>,
    pub target_head: HeadParams,
}

/// Width of the target head output: two class logits.
pub const TARGET_CLASSES: usize = 2;

impl ModelParams {
    /// Uniform `±sqrt(1/fan_in)` weights, zero biases. Extractor and heads
    /// draw from separate streams of `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let extractor = ExtractorParams::init(config, &mut seeded(derive(seed, 1)));
        let source_head = Some(HeadParams::init(config, config.source_out, &mut seeded(derive(seed, 2))));
        let target_head = HeadParams::init(config, TARGET_CLASSES, &mut seeded(derive(seed, 3)));
        Ok(ModelParams { extractor, source_head, target_head })
    }

    /// Redraws `theta_t` only.
    pub fn reinit_target_head(&mut self, config: &ModelConfig, seed: u64) {
        self.target_head = HeadParams::init(config, TARGET_CLASSES, &mut seeded(seed));
    }

    /// `(name, tensor)` for every parameter in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        const BLOCK: [&str; 3] = ["weight", "temporal", "bias"];
        const HEAD: [&str; 5] = ["weight", "temporal", "bias", "dense_weight", "dense_bias"];
        let mut out = Vec::new();
        for (i, t) in self.extractor.tensors().iter().enumerate() {
            out.push((format!("extractor.{}.{}", i / BLOCK_TENSORS, BLOCK[i % BLOCK_TENSORS]), t));
        }
        if let Some(h) = &self.source_head {
            for (name, t) in HEAD.iter().zip(h.tensors()) {
                out.push((format!("source_head.{name}"), t));
            }
        }
        for (name, t) in HEAD.iter().zip(self.target_head.tensors()) {
            out.push((format!("target_head.{name}"), t));
        }
        out
    }

    /// Inverse of [`ModelParams::named_tensors`]; names must appear in the
    /// same order.
    pub fn from_named(named: Vec<(String, Tensor)>) -> Result<Self> {
        let mut ext = Vec::new();
        let mut src = Vec::new();
        let mut tgt = Vec::new();
        for (name, t) in named {
            let bucket = match name.split('.').next() {
                Some("extractor") => &mut ext,
                Some("source_head") => &mut src,
                Some("target_head") => &mut tgt,
                _ => return Err(Error::invalid("parameter name", name)),
            };
            bucket.push(t);
        }
        let extractor = ExtractorParams::from_tensors(ext)?;
        let c = extractor.out_channels();
        let source_head = if src.is_empty() { None } else { Some(HeadParams::from_tensors(src, c)?) };
        let target_head = HeadParams::from_tensors(tgt, c)?;
        if target_head.out_dim() != TARGET_CLASSES {
            return Err(Error::shape("target head", format!("{} logits", target_head.out_dim())));
        }
        Ok(ModelParams { extractor, source_head, target_head })
    }

    pub fn fingerprint_extractor(&self) -> u64 {
        crate::rng::fingerprint(self.extractor.tensors().iter().flat_map(|t| t.data().iter().copied()))
    }

    pub fn fingerprint_source_head(&self) -> u64 {
        match &self.source_head {
            Some(h) => crate::rng::fingerprint(h.tensors().iter().flat_map(|t| t.data().iter().copied())),
            None => 0,
        }
    }

    pub fn fingerprint_target_head(&self) -> u64 {
        crate::rng::fingerprint(self.target_head.tensors().iter().flat_map(|t| t.data().iter().copied()))
    }
}

/// Stacked model inputs: `x: [B, P, L, 1]` and one normalized adjacency per
/// sample, `graphs: [B, P, P]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBatch {
    pub x: Tensor,
    pub graphs: Tensor,
}

impl InputBatch {
    pub fn new(windows: &[&Tensor], graphs: &[&Tensor]) -> Result<Self> {
        if windows.len() != graphs.len() || windows.is_empty() {
            return Err(Error::shape("InputBatch", format!("{} windows, {} graphs", windows.len(), graphs.len())));
        }
        let x = Tensor::stack(&windows.iter().map(|w| (*w).clone()).collect::<Vec<_>>())?;
        let g = Tensor::stack(&graphs.iter().map(|g| (*g).clone()).collect::<Vec<_>>())?;
        if x.ndim() != 4 || x.shape()[3] != 1 || g.shape()[1] != x.shape()[1] || g.shape()[2] != x.shape()[1] {
            return Err(Error::shape("InputBatch", format!("windows {:?}, graphs {:?}", x.shape(), g.shape())));
        }
        Ok(InputBatch { x, graphs: g })
    }

    pub fn len(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Block handles on a tape, in `[weight, temporal, bias]` order.
pub fn block_forward(tape: &mut Tape, x: Var, graphs: Var, block: &[Var]) -> Result<Var> {
    let xs = tape.shape(x).to_vec();
    if xs.len() != 4 {
        return Err(Error::shape("stgcn_block", format!("input {xs:?} is not [B, P, L, C]")));
    }
    let (b, p, l, cin) = (xs[0], xs[1], xs[2], xs[3]);
    let ws = tape.shape(block[0]).to_vec();
    if ws[0] != cin {
        return Err(Error::shape("stgcn_block", format!("input has {cin} channels, weight expects {}", ws[0])));
    }
    if tape.shape(graphs) != [b, p, p] {
        return Err(Error::shape("stgcn_block", format!("graphs {:?} for {b} samples of {p} nodes", tape.shape(graphs))));
    }
    let cout = ws[1];
    let flat = tape.reshape(x, &[b, p, l * cin])?;
    let mixed = tape.batch_matmul(graphs, flat)?;
    let rows = tape.reshape(mixed, &[b * p * l, cin])?;
    let projected = tape.matmul(rows, block[0])?;
    let spatial = tape.reshape(projected, &[b, p, l, cout])?;
    let temporal = tape.conv_time(spatial, block[1])?;
    let biased = tape.add_bias(temporal, block[2])?;
    Ok(tape.relu(biased))
}

/// Three blocks; `phi` holds nine handles.
pub fn extractor_forward(tape: &mut Tape, x: Var, graphs: Var, phi: &[Var]) -> Result<Var> {
    let mut h = x;
    for block in phi.chunks(BLOCK_TENSORS) {
        h = block_forward(tape, h, graphs, block)?;
    }
    Ok(h)
}

/// Block, mean over nodes and time, dense layer. Returns `[B, out]`.
pub fn head_forward(tape: &mut Tape, features: Var, graphs: Var, head: &[Var]) -> Result<Var> {
    let h = block_forward(tape, features, graphs, &head[..BLOCK_TENSORS])?;
    let over_nodes = tape.mean_axis(h, 1)?;
    let pooled = tape.mean_axis(over_nodes, 1)?;
    let dense = tape.matmul(pooled, head[3])?;
    tape.add_bias(dense, head[4])
}

/// Registers tensors on `tape`, as parameters or constants.
pub fn attach(tape: &mut Tape, tensors: &[Tensor], trainable: bool) -> Vec<Var> {
    tensors
        .iter()
        .map(|t| if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) })
        .collect()
}

/// Extractor output for a batch as a plain tensor `[B, P, L, c3]`.
pub fn extract(batch: &InputBatch, extractor: &ExtractorParams) -> Result<Tensor> {
    let mut tape = Tape::new();
    let x = tape.constant(batch.x.clone());
    let g = tape.constant(batch.graphs.clone());
    let phi = attach(&mut tape, extractor.tensors(), false);
    let out = extractor_forward(&mut tape, x, g, &phi)?;
    Ok(tape.value(out).clone())
}

/// Head output for precomputed extractor features.
pub fn head_outputs(features: &Tensor, graphs: &Tensor, head: &HeadParams) -> Result<Tensor> {
    let mut tape = Tape::new();
    let f = tape.constant(features.clone());
    let g = tape.constant(graphs.clone());
    let h = attach(&mut tape, head.tensors(), false);
    let out = head_forward(&mut tape, f, g, &h)?;
    Ok(tape.value(out).clone())
}

/// Combines per-window logits of one subject: softmax each, average, argmax
/// with ties going to class 0.
///
/// The average is taken in a canonical order so the result does not depend
/// on the order of `logits`.
pub fn vote(logits: &[[f64; 2]]) -> Result<([f64; 2], usize)> {
    if logits.is_empty() {
        return Err(Error::invalid("vote", "no sub-sequence predictions"));
    }
    let mut probs: Vec<[f64; 2]> = logits
        .iter()
        .map(|l| {
            let mut p = [0.0; 2];
            crate::numerics::softmax_row(l, &mut p);
            p
        })
        .collect();
    probs.sort_by(|a, b| (a[0].to_bits(), a[1].to_bits()).cmp(&(b[0].to_bits(), b[1].to_bits())));
    let n = probs.len() as f64;
    let mean = [probs.iter().map(|p| p[0]).sum::<f64>() / n, probs.iter().map(|p| p[1]).sum::<f64>() / n];
    let class = usize::from(mean[1] > mean[0]);
    Ok((mean, class))
}
