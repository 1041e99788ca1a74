//! Cosine similarity, the graph contrastive loss, cross-entropy and the
//! combined meta objective.

use alloc::format;
use alloc::vec;

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Two views of `N` subjects' embeddings at temperature `tau`.
#[derive(Debug, Clone)]
pub struct ContrastiveBatch {
    /// `[N, E]`, first window of each subject.
    pub view1: Tensor,
    /// `[N, E]`, second window of each subject, same row order.
    pub view2: Tensor,
    pub tau: f64,
}

/// `u.v / (|u| |v|)`.
pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::shape("cosine_sim", format!("lengths {} and {}", u.len(), v.len())));
    }
    let nu = libm::sqrt(u.iter().map(|x| x * x).sum());
    let nv = libm::sqrt(v.iter().map(|x| x * x).sum());
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::degenerate("cosine similarity", "zero-norm input"));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Contrastive loss recorded on a tape.
///
/// For subject `n` the positive pair is `(view1[n], view2[n])`; the
/// denominator runs over `view2[m]` for `m != n` only, so the positive pair
/// is not part of it and the loss can go negative.
pub fn contrastive_on_tape(tape: &mut Tape, view1: Var, view2: Var, tau: f64) -> Result<Var> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid("temperature", format!("{tau}")));
    }
    let s1 = tape.shape(view1).to_vec();
    if s1.len() != 2 || tape.shape(view2) != s1.as_slice() {
        return Err(Error::shape("contrastive_loss", format!("{s1:?} vs {:?}", tape.shape(view2))));
    }
    let n = s1[0];
    if n < 2 {
        return Err(Error::invalid("contrastive batch", "need at least two subjects"));
    }
    let sim = tape.cosine_rows(view1, view2)?;
    let logits = tape.scale(sim, 1.0 / tau);
    let exps = tape.exp(logits)?;
    let eye = Tensor::identity(n);
    let off_diag = tape.constant(eye.map(|v| 1.0 - v));
    let negatives = tape.mul(exps, off_diag)?;
    let denom = tape.sum_axis(negatives, 1)?;
    let log_denom = tape.log(denom)?;
    let diag_mask = tape.constant(eye);
    let diag = tape.mul(logits, diag_mask)?;
    let positives = tape.sum_axis(diag, 1)?;
    let per_subject = tape.sub(log_denom, positives)?;
    Ok(tape.mean(per_subject))
}

/// Mean of `-log softmax(logits)[label]` recorded on a tape.
pub fn cross_entropy_on_tape(tape: &mut Tape, logits: Var, labels: &[u8]) -> Result<Var> {
    let shape = tape.shape(logits).to_vec();
    if shape.len() != 2 || shape[0] != labels.len() || labels.is_empty() {
        return Err(Error::shape("cross_entropy", format!("logits {shape:?} for {} labels", labels.len())));
    }
    let classes = shape[1];
    let mut onehot = vec![0.0; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        if usize::from(l) >= classes {
            return Err(Error::invalid("label", format!("{l} outside 0..{classes}")));
        }
        onehot[i * classes + usize::from(l)] = 1.0;
    }
    let logp = tape.log_softmax(logits)?;
    let mask = tape.constant(Tensor::new(&shape, onehot)?);
    let picked = tape.mul(logp, mask)?;
    let total = tape.mean(picked);
    // mean over B*C entries; rescale to a mean over B.
    Ok(tape.scale(total, -(classes as f64)))
}

pub fn contrastive_loss(batch: &ContrastiveBatch) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.constant(batch.view1.clone());
    let b = tape.constant(batch.view2.clone());
    let l = contrastive_on_tape(&mut tape, a, b, batch.tau)?;
    Ok(tape.value(l).item())
}

pub fn cross_entropy(logits: &Tensor, labels: &[u8]) -> Result<f64> {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let out = cross_entropy_on_tape(&mut tape, l, labels)?;
    Ok(tape.value(out).item())
}

/// `L_S + lambda * L_T`.
pub fn meta_loss(source_loss: f64, target_loss: f64, lambda: f64) -> f64 {
    source_loss + lambda * target_loss
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_check;

    fn m(rows: &[&[f64]]) -> Tensor {
        Tensor::matrix(rows).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_sim(&[3.0, 4.0], &[3.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[-2.0, 0.0]).unwrap(), -1.0);
        assert!(cosine_sim(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn cosine_gradient_matches_finite_differences() {
        let p = [Tensor::matrix(&[&[1.0, 0.0]]).unwrap(), Tensor::matrix(&[&[0.6, 0.8]]).unwrap()];
        let r = finite_diff_check(
            |t, v| {
                let s = t.cosine_rows(v[0], v[1])?;
                Ok(t.sum(s))
            },
            &p,
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn contrastive_hand_values() {
        let same = ContrastiveBatch { view1: m(&[&[1.0, 2.0], &[1.0, 2.0]]), view2: m(&[&[1.0, 2.0], &[1.0, 2.0]]), tau: 1.0 };
        assert!(contrastive_loss(&same).unwrap().abs() < 1e-12);
        let e = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let b = ContrastiveBatch { view1: e.clone(), view2: e.clone(), tau: 1.0 };
        assert!((contrastive_loss(&b).unwrap() + 1.0).abs() < 1e-12);
        let b = ContrastiveBatch { view1: e.clone(), view2: e, tau: 30.0 };
        assert!((contrastive_loss(&b).unwrap() + 1.0 / 30.0).abs() < 1e-12);
    }

    #[test]
    fn contrastive_needs_two_subjects() {
        let b = ContrastiveBatch { view1: m(&[&[1.0, 0.0]]), view2: m(&[&[1.0, 0.0]]), tau: 1.0 };
        assert!(contrastive_loss(&b).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let sat = cross_entropy(&m(&[&[1000.0, 0.0]]), &[0]).unwrap();
        assert!(sat.abs() < 1e-12);
        let flat = cross_entropy(&m(&[&[0.0, 0.0]]), &[1]).unwrap();
        assert!((flat - core::f64::consts::LN_2).abs() < 1e-12);
        let both = cross_entropy(&m(&[&[1000.0, 0.0], &[0.0, 0.0]]), &[0, 1]).unwrap();
        assert!((both - 0.346_573_590_279_972_65).abs() < 1e-12);
        assert!(cross_entropy(&m(&[&[0.0, 0.0]]), &[2]).is_err());
    }

    #[test]
    fn meta_loss_examples() {
        assert!((meta_loss(0.5, 0.02, 30.0) - 1.1).abs() < 1e-12);
        assert_eq!(meta_loss(0.7, 5.0, 0.0), 0.7);
        assert!((meta_loss(-0.0333, core::f64::consts::LN_2, 30.0) - 20.76).abs() < 1e-2);
    }
}
