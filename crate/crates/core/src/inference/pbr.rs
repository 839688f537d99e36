use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BLOCK_SIZE: usize = 1000;

const WEIGHT_TOL: f64 = 1e-10;
const MAX_ITER: usize = 5000;

/// Value of the mixture `w_0 + sum_i w_{i+1} R_i`.
#[inline]
fn mixture(weights: &[f64], row: &[f64]) -> f64 {
    weights[0] + weights[1..].iter().zip(row).map(|(w, r)| w * r).sum::<f64>()
}

fn mean_log2(weights: &[f64], rows: &[Vec<f64>]) -> f64 {
    rows.iter().map(|r| mixture(weights, r).log2()).sum::<f64>() / rows.len() as f64
}

/// Convex weights (trivial factor first) maximizing the mean `log2` of the
/// mixture over `rows`, each row holding one trial's candidate values.
///
/// The trivial vertex is returned whenever it is optimal, which happens
/// exactly when no candidate has mean above 1.
pub fn optimize_weights(rows: &[Vec<f64>], start: Option<&[f64]>) -> Vec<f64> {
    let m = rows.first().map_or(0, |r| r.len());
    let mut trivial = vec![0.0; m + 1];
    trivial[0] = 1.0;
    if rows.is_empty() || m == 0 {
        return trivial;
    }
    let n = rows.len() as f64;
    let means: Vec<f64> = (0..m).map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / n).collect();
    if means.iter().all(|&x| x <= 1.0) {
        return trivial;
    }

    // Multiplicative fixed-point iteration w_i <- w_i mean(R_i / mix).
    let mut w = match start {
        Some(s) if s.len() == m + 1 && s.iter().all(|&x| x > 0.0) => s.to_vec(),
        _ => vec![1.0 / (m + 1) as f64; m + 1],
    };
    let mut obj = mean_log2(&w, rows);
    for _ in 0..MAX_ITER {
        let mut acc = vec![0.0; m + 1];
        for r in rows {
            let inv = 1.0 / mixture(&w, r);
            acc[0] += inv;
            for i in 0..m {
                acc[i + 1] += r[i] * inv;
            }
        }
        for (wi, a) in w.iter_mut().zip(&acc) {
            *wi *= a / n;
        }
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        let next = mean_log2(&w, rows);
        let done = (next - obj).abs() < WEIGHT_TOL;
        obj = next;
        if done {
            break;
        }
    }
    if obj <= WEIGHT_TOL {
        trivial
    } else {
        w
    }
}

/// Weights and running bound after a block of analysis trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub block: usize,
    pub trials: usize,
    pub weights: Vec<f64>,
    /// Running `log2` of the product of test factors, clamped at 0.
    pub log_p: f64,
}

/// Sequential state of the simplified PBR protocol.
#[derive(Debug, Clone)]
pub struct PbrState {
    weights: Vec<f64>,
    training: Vec<Vec<f64>>,
    history: Vec<Vec<f64>>,
    block_size: usize,
    sum_log2: f64,
    trials: usize,
    blocks: Vec<BlockReport>,
}

impl PbrState {
    /// Initial weights come from the training rows only.
    pub fn new(training: Vec<Vec<f64>>, block_size: usize) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::invalid("block_size", "must be positive"));
        }
        let weights = optimize_weights(&training, None);
        Ok(PbrState {
            weights,
            training,
            history: Vec::new(),
            block_size,
            sum_log2: 0.0,
            trials: 0,
            blocks: Vec::new(),
        })
    }

    /// Starts from fixed weights, for replay from a parameter file.
    pub fn with_weights(training: Vec<Vec<f64>>, weights: Vec<f64>, block_size: usize) -> Result<Self> {
        let mut s = Self::new(Vec::new(), block_size)?;
        s.training = training;
        s.weights = weights;
        Ok(s)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The current bound `max(0, sum_k log2 P_k)`.
    pub fn log_p(&self) -> f64 {
        self.sum_log2.max(0.0)
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    pub fn blocks(&self) -> &[BlockReport] {
        &self.blocks
    }

    /// Applies the current mixture to one analysis trial. Weights are
    /// re-fitted on training plus all analysis trials at block ends.
    pub fn process(&mut self, row: Vec<f64>) -> Result<f64> {
        if let Some((i, &v)) = row.iter().enumerate().find(|(_, &v)| !(v >= 0.0)) {
            return Err(Error::NegativeTestFactor {
                candidate: i + 1,
                trial: self.trials,
                value: v,
            });
        }
        let p = mixture(&self.weights, &row);
        self.sum_log2 += p.log2();
        self.trials += 1;
        self.history.push(row);
        if self.trials % self.block_size == 0 {
            self.blocks.push(BlockReport {
                block: self.blocks.len(),
                trials: self.trials,
                weights: self.weights.clone(),
                log_p: self.log_p(),
            });
            let all: Vec<Vec<f64>> = self.training.iter().chain(&self.history).cloned().collect();
            self.weights = optimize_weights(&all, Some(&self.weights));
        }
        Ok(p)
    }

    /// Finishes the run, recording a final partial block if present.
    pub fn finish(mut self) -> PbrRun {
        if self.trials % self.block_size != 0 || self.trials == 0 {
            self.blocks.push(BlockReport {
                block: self.blocks.len(),
                trials: self.trials,
                weights: self.weights.clone(),
                log_p: self.log_p(),
            });
        }
        PbrRun {
            log_p: self.log_p(),
            trials: self.trials,
            blocks: self.blocks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbrRun {
    pub log_p: f64,
    pub trials: usize,
    pub blocks: Vec<BlockReport>,
}

impl PbrRun {
    pub fn p_value(&self) -> f64 {
        (-self.log_p).exp2()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_weights_give_p_one() {
        let rows = vec![vec![0.5, 0.9]; 20];
        let mut s = PbrState::new(rows.clone(), 5).unwrap();
        for r in rows {
            assert_eq!(s.process(r).unwrap(), 1.0);
        }
        let run = s.finish();
        assert_eq!(run.log_p, 0.0);
        assert_eq!(run.p_value(), 1.0);
    }

    #[test]
    fn single_trial_markov_bound() {
        let mut s = PbrState::with_weights(vec![], vec![0.0, 1.0], 1000).unwrap();
        s.process(vec![2.0]).unwrap();
        assert!((s.finish().p_value() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_four_thirds() {
        let mut s = PbrState::with_weights(vec![], vec![0.0, 1.0], 1000).unwrap();
        for _ in 0..10 {
            s.process(vec![4.0 / 3.0]).unwrap();
        }
        let run = s.finish();
        assert!((run.p_value() - 0.75f64.powi(10)).abs() < 1e-12);
        assert!((run.log_p - 4.150).abs() < 1e-3);
    }

    #[test]
    fn negative_factor_aborts() {
        let mut s = PbrState::with_weights(vec![], vec![0.5, 0.25, 0.25], 10).unwrap();
        s.process(vec![1.0, 1.0]).unwrap();
        match s.process(vec![1.0, -0.1]) {
            Err(Error::NegativeTestFactor { candidate, trial, .. }) => {
                assert_eq!(candidate, 2);
                assert_eq!(trial, 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn weights_maximize_log_mixture() {
        // Two outcomes with R in {2, 0.5}; the optimum puts weight on the
        // candidate only when its mean exceeds 1.
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![if i % 3 == 0 { 0.25 } else { 1.6 }]).collect();
        let w = optimize_weights(&rows, None);
        let obj = mean_log2(&w, &rows);
        for k in 0..=100 {
            let lam = k as f64 / 100.0;
            assert!(mean_log2(&[1.0 - lam, lam], &rows) <= obj + 1e-8);
        }
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn extra_ones_leave_bound_unchanged() {
        let mut a = PbrState::with_weights(vec![], vec![0.2, 0.8], 1000).unwrap();
        let mut b = a.clone();
        for r in [1.2, 0.9, 1.4] {
            a.process(vec![r]).unwrap();
            b.process(vec![r]).unwrap();
        }
        // After a stop every later factor is 1.
        let mut stopped = PbrState::with_weights(vec![], vec![1.0, 0.0], 1000).unwrap();
        stopped.sum_log2 = b.sum_log2;
        for _ in 0..5 {
            stopped.process(vec![3.0]).unwrap();
        }
        assert_eq!(stopped.log_p(), a.log_p());
    }
}
