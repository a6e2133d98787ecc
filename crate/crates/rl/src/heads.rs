//! Independent action heads read from one network output row. Each head
//! owns a contiguous slice of the row; Gaussian heads also carry a
//! state-independent log standard deviation.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RlError};
use crate::scalar::Scalar;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadSpec {
    /// One logit; the action is 0.0 or 1.0.
    Bernoulli,
    /// `k` logits; the action is the chosen index as a float.
    Categorical(usize),
    /// One mean; the action is a real number.
    Gaussian,
}

impl HeadSpec {
    pub fn width(self) -> usize {
        match self {
            HeadSpec::Bernoulli | HeadSpec::Gaussian => 1,
            HeadSpec::Categorical(k) => k,
        }
    }
}

/// Layout of a set of heads inside an output row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Heads {
    specs: Vec<HeadSpec>,
    offsets: Vec<usize>,
    std_index: Vec<Option<usize>>,
    width: usize,
    gaussians: usize,
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

impl Heads {
    pub fn new(specs: Vec<HeadSpec>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(specs.len());
        let mut std_index = Vec::with_capacity(specs.len());
        let mut width = 0;
        let mut gaussians = 0;
        for s in &specs {
            if s.width() == 0 {
                return Err(RlError::InvalidSpec("categorical head with no choices".into()));
            }
            offsets.push(width);
            width += s.width();
            if *s == HeadSpec::Gaussian {
                std_index.push(Some(gaussians));
                gaussians += 1;
            } else {
                std_index.push(None);
            }
        }
        Ok(Self {
            specs,
            offsets,
            std_index,
            width,
            gaussians,
        })
    }

    pub fn specs(&self) -> &[HeadSpec] {
        &self.specs
    }

    /// Number of output units the heads occupy.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of log-std parameters.
    pub fn gaussians(&self) -> usize {
        self.gaussians
    }

    fn check<F: Scalar>(&self, row: &[F], log_std: &[F], action: Option<&[f64]>) -> Result<()> {
        if row.len() < self.width {
            return Err(RlError::DimensionMismatch {
                expected: self.width,
                found: row.len(),
            });
        }
        if log_std.len() != self.gaussians {
            return Err(RlError::DimensionMismatch {
                expected: self.gaussians,
                found: log_std.len(),
            });
        }
        if let Some(a) = action {
            if a.len() != self.specs.len() {
                return Err(RlError::DimensionMismatch {
                    expected: self.specs.len(),
                    found: a.len(),
                });
            }
            for (s, v) in self.specs.iter().zip(a) {
                let ok = match s {
                    HeadSpec::Bernoulli => *v == 0.0 || *v == 1.0,
                    HeadSpec::Categorical(k) => v.fract() == 0.0 && *v >= 0.0 && (*v as usize) < *k,
                    HeadSpec::Gaussian => v.is_finite(),
                };
                if !ok {
                    return Err(RlError::InvalidAction(format!("{v} for {s:?}")));
                }
            }
        }
        Ok(())
    }

    fn slice<F: Scalar>(&self, h: usize, row: &[F]) -> Vec<f64> {
        row[self.offsets[h]..self.offsets[h] + self.specs[h].width()].iter().map(|v| v.f64()).collect()
    }

    pub fn sample<F: Scalar, R: Rng + ?Sized>(&self, row: &[F], log_std: &[F], rng: &mut R) -> Result<Vec<f64>> {
        self.check(row, log_std, None)?;
        let mut out = Vec::with_capacity(self.specs.len());
        for (h, s) in self.specs.iter().enumerate() {
            let z = self.slice(h, row);
            out.push(match s {
                HeadSpec::Bernoulli => (rng.random::<f64>() < sigmoid(z[0])) as u8 as f64,
                HeadSpec::Categorical(_) => {
                    let p = softmax(&z);
                    let u = rng.random::<f64>();
                    let mut acc = 0.0;
                    let mut pick = p.len() - 1;
                    for (i, pi) in p.iter().enumerate() {
                        acc += pi;
                        if u < acc {
                            pick = i;
                            break;
                        }
                    }
                    pick as f64
                }
                HeadSpec::Gaussian => {
                    let sd = log_std[self.std_index[h].unwrap()].f64().exp();
                    let n: f64 = StandardNormal.sample(rng);
                    z[0] + sd * n
                }
            });
        }
        Ok(out)
    }

    /// Most likely action: logit sign, argmax, or the mean.
    pub fn mode<F: Scalar>(&self, row: &[F], log_std: &[F]) -> Result<Vec<f64>> {
        self.check(row, log_std, None)?;
        Ok(self
            .specs
            .iter()
            .enumerate()
            .map(|(h, s)| {
                let z = self.slice(h, row);
                match s {
                    HeadSpec::Bernoulli => (z[0] > 0.0) as u8 as f64,
                    HeadSpec::Categorical(_) => {
                        let mut best = 0;
                        for i in 1..z.len() {
                            if z[i] > z[best] {
                                best = i;
                            }
                        }
                        best as f64
                    }
                    HeadSpec::Gaussian => z[0],
                }
            })
            .collect())
    }

    /// Joint log-probability: the sum over heads.
    pub fn log_prob<F: Scalar>(&self, row: &[F], log_std: &[F], action: &[f64]) -> Result<f64> {
        self.check(row, log_std, Some(action))?;
        let mut total = 0.0;
        for (h, s) in self.specs.iter().enumerate() {
            let z = self.slice(h, row);
            total += match s {
                HeadSpec::Bernoulli => {
                    if action[h] == 1.0 {
                        -softplus(-z[0])
                    } else {
                        -softplus(z[0])
                    }
                }
                HeadSpec::Categorical(_) => log_softmax(&z)[action[h] as usize],
                HeadSpec::Gaussian => {
                    let ls = log_std[self.std_index[h].unwrap()].f64();
                    let d = (action[h] - z[0]) / ls.exp();
                    -0.5 * d * d - ls - 0.5 * LN_2PI
                }
            };
        }
        Ok(total)
    }

    pub fn entropy<F: Scalar>(&self, row: &[F], log_std: &[F]) -> Result<f64> {
        self.check(row, log_std, None)?;
        let mut total = 0.0;
        for (h, s) in self.specs.iter().enumerate() {
            let z = self.slice(h, row);
            total += match s {
                HeadSpec::Bernoulli => {
                    let p = sigmoid(z[0]);
                    // -p ln p - (1-p) ln(1-p) written with softplus for stability.
                    p * softplus(-z[0]) + (1.0 - p) * softplus(z[0])
                }
                HeadSpec::Categorical(_) => {
                    let lp = log_softmax(&z);
                    -lp.iter().map(|l| l.exp() * l).sum::<f64>()
                }
                HeadSpec::Gaussian => log_std[self.std_index[h].unwrap()].f64() + 0.5 * (LN_2PI + 1.0),
            };
        }
        Ok(total)
    }

    /// Adds `scale · ∂ log π(action)` to the row and log-std gradients.
    pub fn add_log_prob_grad<F: Scalar>(
        &self,
        row: &[F],
        log_std: &[F],
        action: &[f64],
        scale: f64,
        d_row: &mut [F],
        d_log_std: &mut [F],
    ) -> Result<()> {
        self.check(row, log_std, Some(action))?;
        for (h, s) in self.specs.iter().enumerate() {
            let z = self.slice(h, row);
            let o = self.offsets[h];
            match s {
                HeadSpec::Bernoulli => d_row[o] += F::of(scale * (action[h] - sigmoid(z[0]))),
                HeadSpec::Categorical(_) => {
                    let p = softmax(&z);
                    let a = action[h] as usize;
                    for (j, pj) in p.iter().enumerate() {
                        let ind = if j == a { 1.0 } else { 0.0 };
                        d_row[o + j] += F::of(scale * (ind - pj));
                    }
                }
                HeadSpec::Gaussian => {
                    let si = self.std_index[h].unwrap();
                    let var = (2.0 * log_std[si].f64()).exp();
                    let diff = action[h] - z[0];
                    d_row[o] += F::of(scale * diff / var);
                    d_log_std[si] += F::of(scale * (diff * diff / var - 1.0));
                }
            }
        }
        Ok(())
    }

    /// Adds `scale · ∂ H` to the row and log-std gradients.
    pub fn add_entropy_grad<F: Scalar>(&self, row: &[F], log_std: &[F], scale: f64, d_row: &mut [F], d_log_std: &mut [F]) -> Result<()> {
        self.check(row, log_std, None)?;
        for (h, s) in self.specs.iter().enumerate() {
            let z = self.slice(h, row);
            let o = self.offsets[h];
            match s {
                HeadSpec::Bernoulli => {
                    let p = sigmoid(z[0]);
                    d_row[o] += F::of(-scale * z[0] * p * (1.0 - p));
                }
                HeadSpec::Categorical(_) => {
                    let lp = log_softmax(&z);
                    let ent = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
                    for (j, l) in lp.iter().enumerate() {
                        d_row[o + j] += F::of(-scale * l.exp() * (l + ent));
                    }
                }
                HeadSpec::Gaussian => d_log_std[self.std_index[h].unwrap()] += F::of(scale),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn saturated_bernoulli_is_deterministic() {
        let heads = Heads::new(vec![HeadSpec::Bernoulli; 3]).unwrap();
        let row = [60.0f64, 60.0, 60.0];
        let mut rng = rand::rngs::StdRng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(heads.sample(&row, &[], &mut rng).unwrap(), vec![1.0; 3]);
        }
        assert!(heads.log_prob(&row, &[], &[1.0; 3]).unwrap().abs() < 1e-20);
    }

    #[test]
    fn dominant_logit_wins() {
        let heads = Heads::new(vec![HeadSpec::Categorical(3)]).unwrap();
        let row = [1000.0f64, 0.0, 0.0];
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        assert_eq!(heads.sample(&row, &[], &mut rng).unwrap(), vec![0.0]);
        assert!(heads.log_prob(&row, &[], &[0.0]).unwrap().abs() < 1e-12);
        assert!(heads.log_prob(&row, &[], &[3.0]).is_err());
    }

    #[test]
    fn log_prob_is_additive() {
        let heads = Heads::new(vec![HeadSpec::Bernoulli, HeadSpec::Categorical(4), HeadSpec::Gaussian]).unwrap();
        let row = [0.3f64, 0.1, -0.2, 0.5, 0.0, 1.5];
        let ls = [-0.4f64];
        let a = [1.0, 2.0, 1.2];
        let parts: f64 = [
            Heads::new(vec![HeadSpec::Bernoulli]).unwrap().log_prob(&row[0..1], &[], &a[0..1]).unwrap(),
            Heads::new(vec![HeadSpec::Categorical(4)]).unwrap().log_prob(&row[1..5], &[], &a[1..2]).unwrap(),
            Heads::new(vec![HeadSpec::Gaussian]).unwrap().log_prob(&row[5..6], &ls, &a[2..3]).unwrap(),
        ]
        .iter()
        .sum();
        assert!((heads.log_prob(&row, &ls, &a).unwrap() - parts).abs() < 1e-12);
    }
}
