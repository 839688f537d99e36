//! Conventional coincidence-window analysis and binned correlation
//! functions.
//!
//! The conventional analysis is NOT loophole-free: an LR source can fake a
//! violation by shifting detection times with the settings. It is provided
//! as the baseline that the timetag analysis is compared against.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::{apply_ns_adjustment, Adjusted, BellFunction, ChFunction, NsAdjustment};
use crate::distance::{min_cost_with, split_at_gaps, distance_split};
use crate::error::{Error, Result};
use crate::inference::{SnrEstimate, SnrState};
use crate::trial::{PerSetting, Setting, SettingsDistribution, SettingsPair, TrialRecord};

#[inline]
fn outside(w: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| if x.abs() < w { 0.0 } else { 1.0 }
}

/// Number of coincidences `|t_l - r_k| < w` in a maximum one-to-one
/// matching. Non-crossing matchings suffice for this objective.
pub fn coincidence_count(r: &[f64], t: &[f64], w: f64) -> usize {
    let cost = distance_split(outside(w), r, t, w);
    (r.len() as f64 - cost).round() as usize
}

/// Coincidence count and the matched index pairs `(k, l)`.
pub fn count_coincidences(r: &[f64], t: &[f64], w: f64) -> Result<(usize, Vec<(usize, usize)>)> {
    if !(w > 0.0) {
        return Err(Error::invalid("w", "coincidence window must be positive"));
    }
    let mut pairs = Vec::new();
    for seg in split_at_gaps(r, t, w) {
        let (rs, ts) = (&r[seg.r.clone()], &t[seg.t.clone()]);
        let res = min_cost_with(outside(w), rs, ts);
        for &(k, l) in &res.matching.pairs {
            if (ts[l] - rs[k]).abs() < w {
                pairs.push((k + seg.r.start, l + seg.t.start));
            }
        }
    }
    Ok((pairs.len(), pairs))
}

/// `l_ab(r, t) = |r| - coincidences(r, t)`: the two-point CH function
/// `max(x - y, 0)` summed over coincidence-identified pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceCh {
    pub w: f64,
}

impl ChFunction<[f64]> for CoincidenceCh {
    fn eval(&self, _ab: SettingsPair, r: &[f64], t: &[f64]) -> f64 {
        (r.len() - coincidence_count(r, t, self.w)) as f64
    }
}

/// Conventional Bell function with the standard non-signaling adjustment.
pub fn conventional_bell(w: f64, dist: SettingsDistribution) -> BellFunction<Adjusted<CoincidenceCh>> {
    BellFunction::new(apply_ns_adjustment(CoincidenceCh { w }, NsAdjustment::standard()), dist)
}

pub fn conventional_values(trials: &[TrialRecord], w: f64, dist: &SettingsDistribution) -> Vec<(SettingsPair, f64)> {
    let b = conventional_bell(w, dist.clone());
    trials.par_iter().map(|t| (t.settings, b.trial_value(t))).collect()
}

/// Stratified estimate `sum_ab p_ab mean(B | ab)` per trial and its SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratifiedEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub snr: f64,
}

pub fn stratified_estimate(values: &[(SettingsPair, f64)], dist: &SettingsDistribution) -> Result<StratifiedEstimate> {
    let mut s = PerSetting::splat(0.0);
    let mut s2 = PerSetting::splat(0.0);
    let mut n = PerSetting::splat(0.0);
    for &(ab, b) in values {
        s[ab] += b;
        s2[ab] += b * b;
        n[ab] += 1.0;
    }
    let mut mean = 0.0;
    let mut var = 0.0;
    for ab in SettingsPair::ALL {
        if n[ab] < 2.0 {
            return Err(Error::EmptySettingsClass(ab));
        }
        let m = s[ab] / n[ab];
        let v = (s2[ab] - n[ab] * m * m) / (n[ab] - 1.0);
        let p = dist.prob(ab);
        mean += p * m;
        var += p * p * v.max(0.0) / n[ab];
    }
    let se = var.sqrt();
    let snr = if se > 0.0 {
        -mean / se
    } else if mean == 0.0 {
        0.0
    } else {
        -mean.signum() * f64::INFINITY
    };
    Ok(StratifiedEstimate { mean, std_error: se, snr })
}

/// Report of the conventional analysis on an analysis set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConventionalReport {
    pub window: f64,
    pub estimate: SnrEstimate,
    pub coincidences: PerSetting<f64>,
    pub trials: PerSetting<usize>,
    /// Always `false`; carried into every emitted report.
    pub loophole_free: bool,
}

/// Conventional analysis of `analysis`, with predictions seeded from
/// `training` for the SNR estimator.
pub fn conventional_analysis(
    training: &[TrialRecord],
    analysis: &[TrialRecord],
    w: f64,
    dist: &SettingsDistribution,
) -> Result<ConventionalReport> {
    let tr = conventional_values(training, w, dist);
    conventional_report(analysis, w, SnrState::from_training(&tr, dist.clone())?)
}

/// Conventional analysis continuing from an SNR state built on training
/// values.
pub fn conventional_report(analysis: &[TrialRecord], w: f64, mut snr: SnrState) -> Result<ConventionalReport> {
    let b = conventional_bell(w, snr.dist().clone());
    let rows: Vec<(SettingsPair, f64, usize)> = analysis
        .par_iter()
        .map(|t| {
            let c = coincidence_count(t.a.as_slice(), t.b.as_slice(), w);
            (t.settings, b.trial_value(t), c)
        })
        .collect();
    let mut coincidences = PerSetting::splat(0.0);
    let mut trials = PerSetting::splat(0usize);
    for (ab, v, c) in rows {
        snr.push(ab, v);
        coincidences[ab] += c as f64;
        trials[ab] += 1;
    }
    Ok(ConventionalReport {
        window: w,
        estimate: snr.estimate(),
        coincidences,
        trials,
        loophole_free: false,
    })
}

/// Search range and resolution for [`optimize_window`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for WindowGrid {
    fn default() -> Self {
        WindowGrid { min: 1e-4, max: 1.0, points: 64 }
    }
}

fn window_snr(training: &[TrialRecord], w: f64, dist: &SettingsDistribution) -> f64 {
    let v = conventional_values(training, w, dist);
    stratified_estimate(&v, dist).map_or(f64::NEG_INFINITY, |e| e.snr)
}

/// Windows whose training SNR is within this fraction of the best count as
/// optimal.
pub const PLATEAU_TOLERANCE: f64 = 0.01;

/// Window width maximizing the stratified training SNR of the conventional
/// analysis. The objective is nearly piecewise constant in `w` (accidental
/// coincidences tilt it slightly), so after the grid the edges of the
/// near-optimal plateau are located by bisection and its midpoint is
/// returned.
pub fn optimize_window(training: &[TrialRecord], dist: &SettingsDistribution, grid: WindowGrid) -> Result<f64> {
    if training.is_empty() {
        return Err(Error::invalid("training", "empty training set"));
    }
    if !(grid.min > 0.0 && grid.max > grid.min && grid.points >= 2) {
        return Err(Error::invalid("grid", "need 0 < min < max and at least two points"));
    }
    let ratio = (grid.max / grid.min).ln() / (grid.points - 1) as f64;
    let ws: Vec<f64> = (0..grid.points).map(|i| grid.min * (ratio * i as f64).exp()).collect();
    let vals: Vec<f64> = ws.iter().map(|&w| window_snr(training, w, dist)).collect();
    let (k, &best) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("nonempty grid");
    let same = |v: f64| v >= best - PLATEAU_TOLERANCE * best.abs();
    let mut lo_k = k;
    while lo_k > 0 && same(vals[lo_k - 1]) {
        lo_k -= 1;
    }
    let mut hi_k = k;
    while hi_k + 1 < ws.len() && same(vals[hi_k + 1]) {
        hi_k += 1;
    }
    // Bisect for the plateau edges, in log space.
    let edge = |inside: f64, out: Option<f64>| -> f64 {
        let Some(mut out) = out else { return inside };
        let mut inside = inside;
        for _ in 0..40 {
            let mid = (inside * out).sqrt();
            if same(window_snr(training, mid, dist)) {
                inside = mid;
            } else {
                out = mid;
            }
        }
        inside
    };
    let lo = edge(ws[lo_k], lo_k.checked_sub(1).map(|i| ws[i]));
    let hi = edge(ws[hi_k], ws.get(hi_k + 1).copied());
    Ok(0.5 * (lo + hi))
}

/// Which sequences [`correlation_estimate`] correlates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrelationKind {
    /// Party A's sequence at the given setting against itself.
    AutoA(Setting),
    AutoB(Setting),
    /// A against B at the given settings pair.
    Cross(SettingsPair),
}

impl CorrelationKind {
    pub fn label(&self) -> String {
        match self {
            CorrelationKind::AutoA(s) => format!("acf_a{}", s.code()),
            CorrelationKind::AutoB(s) => format!("acf_b{}", s.code()),
            CorrelationKind::Cross(ab) => format!("ccf_{ab}"),
        }
    }

    /// The eight panels: four autocorrelations and four cross-correlations.
    pub fn all() -> Vec<CorrelationKind> {
        let mut v = Vec::new();
        for s in Setting::ALL {
            v.push(CorrelationKind::AutoA(s));
        }
        for s in Setting::ALL {
            v.push(CorrelationKind::AutoB(s));
        }
        for ab in SettingsPair::ALL {
            v.push(CorrelationKind::Cross(ab));
        }
        v
    }

    fn select<'a>(&self, t: &'a TrialRecord) -> Option<(&'a [f64], &'a [f64])> {
        match *self {
            CorrelationKind::AutoA(s) if t.settings.a == s => Some((t.a.as_slice(), t.a.as_slice())),
            CorrelationKind::AutoB(s) if t.settings.b == s => Some((t.b.as_slice(), t.b.as_slice())),
            CorrelationKind::Cross(ab) if t.settings == ab => Some((t.a.as_slice(), t.b.as_slice())),
            _ => None,
        }
    }

    fn is_auto(&self) -> bool {
        !matches!(self, CorrelationKind::Cross(_))
    }
}

/// Unnormalized binned correlation averaged over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub kind: CorrelationKind,
    pub bin_width: f64,
    pub lags: Vec<i64>,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub trials: usize,
}

/// `c(d, r, t) = sum_i b_r(i) b_t(i + d)` for `|d| <= max_lag`, index `d + max_lag`.
pub fn correlation(r: &[f64], t: &[f64], bin_width: f64, max_lag: usize) -> Vec<f64> {
    let m = max_lag as i64;
    let mut c = vec![0.0; 2 * max_lag + 1];
    let bins_t: Vec<i64> = t.iter().map(|x| (x / bin_width).floor() as i64).collect();
    let mut lo = 0;
    for x in r {
        let i = (x / bin_width).floor() as i64;
        while lo < bins_t.len() && bins_t[lo] < i - m {
            lo += 1;
        }
        for &j in &bins_t[lo..] {
            if j > i + m {
                break;
            }
            c[(j - i + m) as usize] += 1.0;
        }
    }
    c
}

/// Mean and standard error of [`correlation`] over the trials selected by
/// `kind`. Autocorrelations keep only `d >= 0`.
pub fn correlation_estimate(
    trials: &[TrialRecord],
    kind: CorrelationKind,
    bin_width: f64,
    max_lag: usize,
) -> Result<CorrelationEstimate> {
    if !(bin_width > 0.0) {
        return Err(Error::invalid("bin_width", "must be positive"));
    }
    let width = 2 * max_lag + 1;
    let (s, s2, n) = trials
        .par_iter()
        .filter_map(|t| kind.select(t).map(|(r, y)| correlation(r, y, bin_width, max_lag)))
        .fold(
            || (vec![0.0; width], vec![0.0; width], 0usize),
            |(mut s, mut s2, n), c| {
                for k in 0..width {
                    s[k] += c[k];
                    s2[k] += c[k] * c[k];
                }
                (s, s2, n + 1)
            },
        )
        .reduce(
            || (vec![0.0; width], vec![0.0; width], 0usize),
            |(mut a, mut a2, n), (b, b2, m)| {
                for k in 0..width {
                    a[k] += b[k];
                    a2[k] += b2[k];
                }
                (a, a2, n + m)
            },
        );
    let nf = n as f64;
    let first = if kind.is_auto() { max_lag } else { 0 };
    let mut est = CorrelationEstimate {
        kind,
        bin_width,
        lags: Vec::new(),
        mean: Vec::new(),
        std_error: Vec::new(),
        trials: n,
    };
    for k in first..width {
        let mean = if n > 0 { s[k] / nf } else { 0.0 };
        let se = if n > 1 {
            ((s2[k] - nf * mean * mean).max(0.0) / (nf - 1.0) / nf).sqrt()
        } else {
            0.0
        };
        est.lags.push(k as i64 - max_lag as i64);
        est.mean.push(mean);
        est.std_error.push(se);
    }
    Ok(est)
}

/// Long-format CSV: `panel,lag,lag_time,mean,stderr`.
pub fn write_correlation_csv(mut out: impl Write, estimates: &[CorrelationEstimate]) -> Result<()> {
    writeln!(out, "panel,lag,lag_time,mean,stderr")?;
    for e in estimates {
        let label = e.kind.label();
        for ((&d, &m), &s) in e.lags.iter().zip(&e.mean).zip(&e.std_error) {
            writeln!(out, "{label},{d},{},{m},{s}", d as f64 * e.bin_width)?;
        }
    }
    Ok(())
}

/// CSV of a conventional analysis: one row per setting plus a summary.
pub fn write_conventional_csv(mut out: impl Write, r: &ConventionalReport) -> Result<()> {
    writeln!(out, "# conventional coincidence analysis: not loophole-free")?;
    writeln!(out, "setting,trials,coincidences,coincidences_per_trial")?;
    for ab in SettingsPair::ALL {
        let n = r.trials[ab];
        let per = if n > 0 { r.coincidences[ab] / n as f64 } else { 0.0 };
        writeln!(out, "{ab},{n},{},{per}", r.coincidences[ab])?;
    }
    writeln!(out, "window,b_tot,v,snr,loophole_free")?;
    writeln!(out, "{},{},{},{},{}", r.window, r.estimate.b_tot, r.estimate.v, r.estimate.snr, r.loophole_free)?;
    Ok(())
}
