use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trial::{PerSetting, SettingsDistribution, SettingsPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrEstimate {
    /// Estimated total Bell value over the analysis trials.
    pub b_tot: f64,
    /// Variance estimate `sum delta_i^2`.
    pub v: f64,
    /// `-b_tot / sqrt(v)`: positive when the estimate violates.
    pub snr: f64,
    pub trials: usize,
}

/// Adaptive estimator of the total Bell value. Each trial is predicted by
/// the per-setting mean of training plus all earlier analysis trials.
#[derive(Debug, Clone)]
pub struct SnrState {
    dist: SettingsDistribution,
    sums: PerSetting<f64>,
    counts: PerSetting<f64>,
    fixed: Option<PerSetting<f64>>,
    sum_delta: f64,
    sum_delta2: f64,
    sum_pred: f64,
    trials: usize,
}

impl SnrState {
    pub fn from_training(training: &[(SettingsPair, f64)], dist: SettingsDistribution) -> Result<Self> {
        let mut sums = PerSetting::splat(0.0);
        let mut counts = PerSetting::splat(0.0);
        for &(ab, b) in training {
            sums[ab] += b;
            counts[ab] += 1.0;
        }
        Self::from_sums(sums, counts, dist)
    }

    /// Starts from stored training sums and counts per setting.
    pub fn from_sums(
        sums: PerSetting<f64>,
        counts: PerSetting<f64>,
        dist: SettingsDistribution,
    ) -> Result<Self> {
        if let Some((ab, _)) = counts.iter().find(|(_, &n)| n == 0.0) {
            return Err(Error::EmptySettingsClass(ab));
        }
        Ok(SnrState {
            dist,
            sums,
            counts,
            fixed: None,
            sum_delta: 0.0,
            sum_delta2: 0.0,
            sum_pred: 0.0,
            trials: 0,
        })
    }

    /// Uses the given predictions for every trial instead of running means.
    pub fn with_fixed_predictions(pred: PerSetting<f64>, dist: SettingsDistribution) -> Self {
        SnrState {
            dist,
            sums: PerSetting::splat(0.0),
            counts: PerSetting::splat(1.0),
            fixed: Some(pred),
            sum_delta: 0.0,
            sum_delta2: 0.0,
            sum_pred: 0.0,
            trials: 0,
        }
    }

    pub fn dist(&self) -> &SettingsDistribution {
        &self.dist
    }

    fn prediction(&self, ab: SettingsPair) -> f64 {
        match &self.fixed {
            Some(p) => p[ab],
            None => self.sums[ab] / self.counts[ab],
        }
    }

    pub fn push(&mut self, ab: SettingsPair, b: f64) {
        let delta = b - self.prediction(ab);
        self.sum_delta += delta;
        self.sum_delta2 += delta * delta;
        self.sum_pred += SettingsPair::ALL
            .iter()
            .map(|&s| self.dist.prob(s) * self.prediction(s))
            .sum::<f64>();
        self.sums[ab] += b;
        self.counts[ab] += 1.0;
        self.trials += 1;
    }

    pub fn estimate(&self) -> SnrEstimate {
        let b_tot = self.sum_delta + self.sum_pred;
        let v = self.sum_delta2;
        let snr = if v > 0.0 {
            -b_tot / v.sqrt()
        } else if b_tot == 0.0 {
            0.0
        } else {
            -b_tot.signum() * f64::INFINITY
        };
        SnrEstimate {
            b_tot,
            v,
            snr,
            trials: self.trials,
        }
    }
}

pub fn estimate_snr(
    training: &[(SettingsPair, f64)],
    analysis: impl IntoIterator<Item = (SettingsPair, f64)>,
    dist: SettingsDistribution,
) -> Result<SnrEstimate> {
    let mut s = SnrState::from_training(training, dist)?;
    for (ab, b) in analysis {
        s.push(ab, b);
    }
    Ok(s.estimate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use SettingsPair as S;

    #[test]
    fn zero_predictions_sum_raw_values() {
        let mut s = SnrState::with_fixed_predictions(PerSetting::splat(0.0), SettingsDistribution::uniform());
        let data = [(S::S11, 1.0), (S::S22, -3.0), (S::S12, 0.5)];
        for (ab, b) in data {
            s.push(ab, b);
        }
        assert_eq!(s.estimate().b_tot, -1.5);
    }

    #[test]
    fn constant_data_has_zero_variance() {
        let training: Vec<_> = S::ALL.iter().map(|&ab| (ab, 2.0)).collect();
        let analysis = (0..40).map(|i| (S::from_index(i % 4), 2.0));
        let e = estimate_snr(&training, analysis, SettingsDistribution::uniform()).unwrap();
        assert_eq!(e.v, 0.0);
        assert_eq!(e.b_tot, 80.0);
    }

    #[test]
    fn missing_class_rejected() {
        let training = [(S::S11, 1.0), (S::S12, 1.0), (S::S21, 1.0)];
        assert!(matches!(
            estimate_snr(&training, [], SettingsDistribution::uniform()),
            Err(Error::EmptySettingsClass(S::S22))
        ));
    }
}
