use alloc::format;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::numerics::{AdamState, Tape, Tensor, Var};
use crate::objectives::cross_entropy_on_tape;
use crate::rng::seeded;

/// Dense ReLU network ending in two logits. No hidden layers gives logistic
/// regression.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// `[weight in x out, bias out]` per layer.
    pub params: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub iters: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig { hidden: alloc::vec![32, 16, 16], iters: 500, learning_rate: 0.001, seed: 0 }
    }
}

fn forward(tape: &mut Tape, x: Var, params: &[Var]) -> Result<Var> {
    let layers = params.len() / 2;
    let mut h = x;
    for (i, pair) in params.chunks(2).enumerate() {
        let z = tape.matmul(h, pair[0])?;
        h = tape.add_bias(z, pair[1])?;
        if i + 1 < layers {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

fn as_matrix(x: &[Vec<f64>]) -> Result<Tensor> {
    let d = x.first().map(Vec::len).unwrap_or(0);
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(Error::shape("mlp input", "rows must share a positive width"));
    }
    Tensor::new(&[x.len(), d], x.concat())
}

impl Mlp {
    pub fn init(input: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = seeded(seed);
        let mut widths = alloc::vec![input];
        widths.extend_from_slice(hidden);
        widths.push(2);
        let mut params = Vec::new();
        for w in widths.windows(2) {
            let bound = libm::sqrt(1.0 / w[0] as f64);
            let data = (0..w[0] * w[1]).map(|_| rng.random_range(-bound..=bound)).collect();
            params.push(Tensor::from_parts(alloc::vec![w[0], w[1]], data));
            params.push(Tensor::zeros(&[w[1]]));
        }
        Mlp { params }
    }

    pub fn logits(&self, x: &[Vec<f64>]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let xv = tape.constant(as_matrix(x)?);
        let p: Vec<Var> = self.params.iter().map(|t| tape.constant(t.clone())).collect();
        let out = forward(&mut tape, xv, &p)?;
        Ok(tape.value(out).clone())
    }

    /// Probability of class 1 per row.
    pub fn scores(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        let l = self.logits(x)?;
        Ok(l.data().chunks(2).map(|c| 1.0 / (1.0 + libm::exp(c[0] - c[1]))).collect())
    }
}

/// Full-batch Adam on mean cross-entropy.
pub fn train_mlp(x: &[Vec<f64>], labels: &[u8], config: &MlpConfig) -> Result<Mlp> {
    if x.len() != labels.len() {
        return Err(Error::shape("mlp", format!("{} rows for {} labels", x.len(), labels.len())));
    }
    if labels.iter().any(|&l| l > 1) || !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::degenerate("mlp", "both classes 0 and 1 are required"));
    }
    let xm = as_matrix(x)?;
    let mut mlp = Mlp::init(xm.shape()[1], &config.hidden, config.seed);
    let mut adam = AdamState::new(&mlp.params);
    for _ in 0..config.iters {
        let mut tape = Tape::new();
        let xv = tape.constant(xm.clone());
        let p: Vec<Var> = mlp.params.iter().map(|t| tape.param(t.clone())).collect();
        let logits = forward(&mut tape, xv, &p)?;
        let loss = cross_entropy_on_tape(&mut tape, logits, labels)?;
        let grads = tape.backward(loss)?;
        let g: Vec<Tensor> = p.iter().map(|&v| grads.get(v)).collect();
        adam.step(&mut mlp.params, &g, config.learning_rate)?;
    }
    Ok(mlp)
}
