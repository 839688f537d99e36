//! Train-then-analyze protocol: simulate, fix analysis parameters on the
//! training trials, then run the conventional, timetag and PBR analyses on
//! the analysis trials only.

use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::{apply_ns_adjustment, Adjusted, ChFunction, NsAdjustment, TupleDistance};
use crate::diagnostics::{self, conventional_values, ConventionalReport, WindowGrid};
use crate::distance::{min_cost_with, split_at_gaps};
use crate::error::{Error, Result};
use crate::inference::{
    logp_to_sigma, make_candidates, PbrRun, PbrState, SnrEstimate, SnrState, TestFactor, DEFAULT_BLOCK_SIZE,
    DEFAULT_W_FRACTIONS,
};
use crate::lrsource::{calibrate_delta_c, CalibrationReport, LrSource};
use crate::optim::nelder_mead;
use crate::simsrc::{generate_trials, DeltaShiftSource, JitterModel, QuantumSource, SourceConfig, TrialSource};
use crate::trial::{PerSetting, SettingsDistribution, SettingsPair, TrialRecord};
use crate::tuples::{FunctionTuple, LinearEdgeWindowParams};

/// Trial counts and window length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub training_trials: usize,
    pub analysis_trials: usize,
    pub window: f64,
}

impl Scale {
    /// Minutes on a desktop.
    pub const DESK: Scale = Scale {
        training_trials: 2000,
        analysis_trials: 20000,
        window: 200.0,
    };
    /// The full-size study.
    pub const FULL: Scale = Scale {
        training_trials: 10000,
        analysis_trials: 200000,
        window: 1000.0,
    };
}

/// Which source generates the trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSpec {
    /// Photon pairs from the state and settings optimal at `efficiency`.
    Quantum { efficiency: f64, jitter: JitterModel },
    /// The LR source imitating the quantum source with uniform jitter.
    Lr {
        efficiency: f64,
        jitter_width: f64,
        #[serde(default = "default_calibration_trials")]
        calibration_trials: usize,
    },
    DeltaShift {
        delta: f64,
        #[serde(default = "default_jitter")]
        jitter: JitterModel,
    },
}

fn default_calibration_trials() -> usize {
    50
}

fn default_jitter() -> JitterModel {
    JitterModel::None
}

impl SourceSpec {
    pub fn jitter(&self) -> JitterModel {
        match self {
            SourceSpec::Quantum { jitter, .. } | SourceSpec::DeltaShift { jitter, .. } => *jitter,
            SourceSpec::Lr { jitter_width, .. } => JitterModel::Uniform { width: *jitter_width },
        }
    }

    /// The same source with a different jitter. The LR source only imitates
    /// uniform jitter.
    pub fn with_jitter(&self, j: JitterModel) -> Result<SourceSpec> {
        let mut s = self.clone();
        match &mut s {
            SourceSpec::Quantum { jitter, .. } | SourceSpec::DeltaShift { jitter, .. } => *jitter = j,
            SourceSpec::Lr { jitter_width, .. } => match j {
                JitterModel::Uniform { width } => *jitter_width = width,
                _ => return Err(Error::invalid("jitter", "the LR source imitates uniform jitter only")),
            },
        }
        Ok(s)
    }

    pub fn label(&self) -> &'static str {
        match self {
            SourceSpec::Quantum { .. } => "quantum",
            SourceSpec::Lr { .. } => "lr",
            SourceSpec::DeltaShift { .. } => "delta_shift",
        }
    }
}

/// A built source, ready to generate trials.
pub enum BuiltSource {
    Quantum(QuantumSource),
    Lr(LrSource, CalibrationReport),
    DeltaShift(DeltaShiftSource),
}

impl BuiltSource {
    pub fn as_trial_source(&self) -> &dyn TrialSource {
        match self {
            BuiltSource::Quantum(s) => s,
            BuiltSource::Lr(s, _) => s,
            BuiltSource::DeltaShift(s) => s,
        }
    }

    pub fn calibration(&self) -> Option<&CalibrationReport> {
        match self {
            BuiltSource::Lr(_, r) => Some(r),
            _ => None,
        }
    }
}

pub fn build_source(spec: &SourceSpec, window: f64, seed: u64) -> Result<BuiltSource> {
    Ok(match spec {
        SourceSpec::Quantum { efficiency, jitter } => {
            BuiltSource::Quantum(QuantumSource::new(SourceConfig::optimized(*efficiency, window, *jitter)?)?)
        }
        SourceSpec::Lr {
            efficiency,
            jitter_width,
            calibration_trials,
        } => {
            let target = SourceConfig::optimized(*efficiency, window, JitterModel::Uniform { width: *jitter_width })?
                .probabilities();
            let (template, report) = calibrate_delta_c(&target, *jitter_width, window, *calibration_trials, seed)?;
            BuiltSource::Lr(LrSource::new(template, window)?, report)
        }
        SourceSpec::DeltaShift { delta, jitter } => {
            let mut s = DeltaShiftSource::new(*delta, window)?;
            s.jitter = *jitter;
            BuiltSource::DeltaShift(s)
        }
    })
}

/// Everything that determines a protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub scale: Scale,
    pub source: SourceSpec,
    pub seed: u64,
    #[serde(default)]
    pub training: TrainingOptions,
}

impl ProtocolConfig {
    pub fn desk(source: SourceSpec, seed: u64) -> Self {
        ProtocolConfig {
            scale: Scale::DESK,
            source,
            seed,
            training: TrainingOptions::default(),
        }
    }

    pub fn full(source: SourceSpec, seed: u64) -> Self {
        ProtocolConfig {
            scale: Scale::FULL,
            ..Self::desk(source, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale.training_trials == 0 || self.scale.analysis_trials == 0 {
            return Err(Error::invalid("trials", "training and analysis counts must be positive"));
        }
        if !(self.scale.window > 0.0) {
            return Err(Error::invalid("window", "must be positive"));
        }
        self.training.validate()
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let c: ProtocolConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Knobs of the training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingOptions {
    pub settings: SettingsDistribution,
    /// Slope of the compression tuple `min(lambda |x|, 1)`.
    pub lambda: f64,
    pub block_size: usize,
    pub w_fractions: Vec<f64>,
    pub window_grid: WindowGrid,
    pub tuple_grid: TupleGrid,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        TrainingOptions {
            settings: SettingsDistribution::uniform(),
            lambda: 1.0,
            block_size: DEFAULT_BLOCK_SIZE,
            w_fractions: DEFAULT_W_FRACTIONS.to_vec(),
            window_grid: WindowGrid::default(),
            tuple_grid: TupleGrid::default(),
        }
    }
}

impl TrainingOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        if self.block_size == 0 {
            return Err(Error::invalid("block_size", "must be positive"));
        }
        if self.w_fractions.iter().any(|&f| !(f >= 0.0)) {
            return Err(Error::invalid("w_fractions", "must be nonnegative"));
        }
        Ok(())
    }
}

/// Grid for the symmetric linear-edge window: `t` log-spaced, slopes given
/// as `m * t` so the edge width scales with the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TupleGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub t_points: usize,
    pub mt: Vec<f64>,
    pub refine_iterations: usize,
}

impl Default for TupleGrid {
    fn default() -> Self {
        TupleGrid {
            t_min: 1e-3,
            t_max: 0.5,
            t_points: 32,
            mt: vec![0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
            refine_iterations: 300,
        }
    }
}

/// Timetag differences of compression-optimal matchings, per setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferencePools {
    /// Sorted `|x|` values.
    pub abs_diffs: PerSetting<Vec<f64>>,
    /// `X_ab`: total number of deletable tags.
    pub deletable: PerSetting<f64>,
    pub trials: PerSetting<f64>,
}

/// The two sequences in CH-function argument order: B first at 11.
#[inline]
pub fn ch_arguments(t: &TrialRecord) -> (&[f64], &[f64]) {
    if t.settings == SettingsPair::S11 {
        (t.b.as_slice(), t.a.as_slice())
    } else {
        (t.a.as_slice(), t.b.as_slice())
    }
}

/// Matched differences `t_{M(k)} - r_k` of the compression-optimal
/// matching.
pub fn compression_differences(r: &[f64], t: &[f64], lambda: f64) -> Vec<f64> {
    let g = |x: f64| (lambda * x.abs()).min(1.0);
    let mut out = Vec::new();
    for seg in split_at_gaps(r, t, 1.0 / lambda) {
        let (rs, ts) = (&r[seg.r.clone()], &t[seg.t.clone()]);
        let res = min_cost_with(g, rs, ts);
        out.extend(res.matching.pairs.iter().map(|&(k, l)| ts[l] - rs[k]));
    }
    out
}

pub fn difference_pools(training: &[TrialRecord], lambda: f64) -> Result<DifferencePools> {
    let per: Vec<(SettingsPair, usize, Vec<f64>)> = training
        .par_iter()
        .map(|t| {
            let (r, y) = ch_arguments(t);
            (t.settings, r.len(), compression_differences(r, y, lambda))
        })
        .collect();
    let mut abs_diffs: PerSetting<Vec<f64>> = PerSetting::from_fn(|_| Vec::new());
    let mut deletable = PerSetting::splat(0.0);
    let mut trials = PerSetting::splat(0.0);
    for (ab, n, d) in per {
        deletable[ab] += n as f64;
        trials[ab] += 1.0;
        abs_diffs[ab].extend(d.into_iter().map(f64::abs));
    }
    for ab in SettingsPair::ALL {
        if abs_diffs[ab].is_empty() {
            return Err(Error::precondition(
                "optimize_tuple_params",
                format!("empty difference pool at setting {ab}"),
            ));
        }
        abs_diffs[ab].sort_by(f64::total_cmp);
    }
    Ok(DifferencePools {
        abs_diffs,
        deletable,
        trials,
    })
}

impl DifferencePools {
    /// Approximate cost `X_ab - |y_ab| + sum g_ab(y)` at one setting.
    pub fn approximate_cost(&self, p: &LinearEdgeWindowParams, ab: SettingsPair) -> f64 {
        let y = &self.abs_diffs[ab];
        self.deletable[ab] - y.len() as f64 + y.iter().map(|&x| p.eval(ab, x)).sum::<f64>()
    }

    /// Approximate per-trial mean of the unadjusted Bell function,
    /// `sum_ab sign_ab cost_ab / n_ab`. Adjustment terms depend only on the
    /// tag counts and are left out.
    pub fn objective(&self, p: &LinearEdgeWindowParams) -> f64 {
        SettingsPair::ALL
            .iter()
            .map(|&ab| ab.sign() * self.fast_cost(p, ab) / self.trials[ab])
            .sum()
    }

    /// [`Self::approximate_cost`] for symmetric windows using the sorted
    /// pool: only the differences on the sloped edge are summed.
    fn fast_cost(&self, p: &LinearEdgeWindowParams, ab: SettingsPair) -> f64 {
        let y = &self.abs_diffs[ab];
        let (t, m) = (p.t_h[ab], p.m_h);
        if p.t_l[ab] != -t || p.m_l != m {
            return self.approximate_cost(p, ab);
        }
        let lo = y.partition_point(|&x| x <= t);
        let hi = y.partition_point(|&x| x < t + 1.0 / m);
        let edge: f64 = y[lo..hi].iter().map(|&x| (m * (x - t)).min(1.0)).sum();
        self.deletable[ab] - y.len() as f64 + edge + (y.len() - hi) as f64
    }
}

/// Result of the tuple optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TupleFit {
    pub t: f64,
    pub m: f64,
    pub params: LinearEdgeWindowParams,
    /// Approximate training Bell mean at the optimum.
    pub objective: f64,
}

/// Symmetric linear-edge window minimizing the approximate training Bell
/// mean: grid over `(t, m t)`, then simplex refinement in `(ln t, ln m)`.
pub fn optimize_tuple_params(pools: &DifferencePools, grid: &TupleGrid) -> Result<TupleFit> {
    if grid.t_points < 2 || !(grid.t_min > 0.0 && grid.t_max > grid.t_min) || grid.mt.is_empty() {
        return Err(Error::invalid("tuple_grid", "need 0 < t_min < t_max, two t points and a slope"));
    }
    let obj = |t: f64, m: f64| pools.objective(&LinearEdgeWindowParams::symmetric(t, m));
    let ratio = (grid.t_max / grid.t_min).ln() / (grid.t_points - 1) as f64;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..grid.t_points {
        let t = grid.t_min * (ratio * i as f64).exp();
        for &mt in &grid.mt {
            let v = obj(t, mt / t);
            if v < best.0 {
                best = (v, t, mt / t);
            }
        }
    }
    if grid.refine_iterations > 0 {
        let f = |x: &[f64]| obj(x[0].exp(), x[1].exp());
        let res = nelder_mead(f, &[best.1.ln(), best.2.ln()], &[0.2, 0.3], 1e-12, grid.refine_iterations);
        // Refinement must strictly improve on the grid; the objective is
        // flat where no difference falls on an edge.
        if res.fx < best.0 - 1e-12 * best.0.abs().max(1.0) {
            best = (res.fx, res.x[0].exp(), res.x[1].exp());
        }
    }
    let (objective, t, m) = best;
    Ok(TupleFit {
        t,
        m,
        params: LinearEdgeWindowParams::symmetric(t, m),
        objective,
    })
}

/// The timetag CH function: tuple distance with the standard adjustment.
pub type TimetagCh = Adjusted<TupleDistance>;

pub fn timetag_ch(params: &LinearEdgeWindowParams) -> Result<TimetagCh> {
    let f = FunctionTuple::linear_edge_window(params.clone())?;
    Ok(apply_ns_adjustment(TupleDistance::new(f), NsAdjustment::standard()))
}

/// `l~'_ab` for every trial.
pub fn ch_values(l: &TimetagCh, trials: &[TrialRecord]) -> Vec<(SettingsPair, f64)> {
    trials
        .par_iter()
        .map(|t| (t.settings, l.eval_trial(t.settings, t.a.as_slice(), t.b.as_slice())))
        .collect()
}

fn bell_values(ch: &[(SettingsPair, f64)], dist: &SettingsDistribution) -> Vec<(SettingsPair, f64)> {
    ch.iter().map(|&(ab, l)| (ab, ab.sign() * l / dist.prob(ab))).collect()
}

/// Per-setting sums and counts, enough to seed [`SnrState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSums {
    pub sums: PerSetting<f64>,
    pub counts: PerSetting<f64>,
}

impl PredictionSums {
    pub fn from_values(values: &[(SettingsPair, f64)]) -> Self {
        let mut sums = PerSetting::splat(0.0);
        let mut counts = PerSetting::splat(0.0);
        for &(ab, b) in values {
            sums[ab] += b;
            counts[ab] += 1.0;
        }
        PredictionSums { sums, counts }
    }

    pub fn state(&self, dist: &SettingsDistribution) -> Result<SnrState> {
        SnrState::from_sums(self.sums, self.counts, dist.clone())
    }
}

/// All analysis parameters fixed by the training set. The analysis step
/// depends on nothing else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedParams {
    pub settings: SettingsDistribution,
    pub conventional_window: f64,
    pub tuple: TupleFit,
    pub lambda: f64,
    pub candidates: Vec<TestFactor>,
    pub pbr_weights: Vec<f64>,
    /// Test-factor rows of the training trials, used when re-fitting weights.
    pub pbr_training_rows: Vec<Vec<f64>>,
    pub block_size: usize,
    pub conventional_training: PredictionSums,
    pub timetag_training: PredictionSums,
}

impl TrainedParams {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::parse("params", e.to_string()))
    }

    pub fn timetag_ch(&self) -> Result<TimetagCh> {
        timetag_ch(&self.tuple.params)
    }
}

fn factor_row(cands: &[TestFactor], ab: SettingsPair, l: f64) -> Vec<f64> {
    cands.iter().map(|c| c.value(ab, l)).collect()
}

/// Step 2: determine every analysis parameter from the training trials.
pub fn train(training: &[TrialRecord], opts: &TrainingOptions) -> Result<TrainedParams> {
    opts.validate()?;
    let dist = &opts.settings;
    let conventional_window = diagnostics::optimize_window(training, dist, opts.window_grid)?;
    let conventional_training = PredictionSums::from_values(&conventional_values(training, conventional_window, dist));

    let pools = difference_pools(training, opts.lambda)?;
    let tuple = optimize_tuple_params(&pools, &opts.tuple_grid)?;
    let l = timetag_ch(&tuple.params)?;
    let ch = ch_values(&l, training);
    let timetag_training = PredictionSums::from_values(&bell_values(&ch, dist));

    let mut grouped: PerSetting<Vec<f64>> = PerSetting::from_fn(|_| Vec::new());
    for &(ab, v) in &ch {
        grouped[ab].push(v);
    }
    // Only candidates that still violate on training data can help.
    let candidates: Vec<TestFactor> = make_candidates(&grouped, &opts.w_fractions, dist)?
        .into_iter()
        .filter(|c| c.params.is_helpful())
        .collect();
    let rows: Vec<Vec<f64>> = ch.iter().map(|&(ab, v)| factor_row(&candidates, ab, v)).collect();
    let pbr = PbrState::new(rows.clone(), opts.block_size)?;
    Ok(TrainedParams {
        settings: dist.clone(),
        conventional_window,
        tuple,
        lambda: opts.lambda,
        candidates,
        pbr_weights: pbr.weights().to_vec(),
        pbr_training_rows: rows,
        block_size: opts.block_size,
        conventional_training,
        timetag_training,
    })
}

pub fn analyze_conventional(p: &TrainedParams, analysis: &[TrialRecord]) -> Result<ConventionalReport> {
    diagnostics::conventional_report(analysis, p.conventional_window, p.conventional_training.state(&p.settings)?)
}

/// Timetag SNR from precomputed CH values of the analysis trials.
pub fn analyze_timetag_values(p: &TrainedParams, ch: &[(SettingsPair, f64)]) -> Result<SnrEstimate> {
    let mut s = p.timetag_training.state(&p.settings)?;
    for (ab, b) in bell_values(ch, &p.settings) {
        s.push(ab, b);
    }
    Ok(s.estimate())
}

pub fn analyze_pbr_values(p: &TrainedParams, ch: &[(SettingsPair, f64)]) -> Result<PbrRun> {
    let mut s = PbrState::with_weights(p.pbr_training_rows.clone(), p.pbr_weights.clone(), p.block_size)?;
    for &(ab, l) in ch {
        s.process(factor_row(&p.candidates, ab, l))?;
    }
    Ok(s.finish())
}

pub fn analyze_timetag(p: &TrainedParams, analysis: &[TrialRecord]) -> Result<SnrEstimate> {
    analyze_timetag_values(p, &ch_values(&p.timetag_ch()?, analysis))
}

pub fn analyze_pbr(p: &TrainedParams, analysis: &[TrialRecord]) -> Result<PbrRun> {
    analyze_pbr_values(p, &ch_values(&p.timetag_ch()?, analysis))
}

/// One line of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub source: String,
    pub jitter: JitterModel,
    pub median_jitter: f64,
    pub conventional_snr: f64,
    pub timetag_snr: f64,
    pub log_p: f64,
    /// Gaussian-equivalent significance of the PBR bound.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub conventional: ConventionalReport,
    pub timetag: SnrEstimate,
    pub pbr: PbrRun,
}

/// Step 3: the three analyses of the analysis trials.
pub fn analyze(p: &TrainedParams, analysis: &[TrialRecord]) -> Result<AnalysisReport> {
    let ch = ch_values(&p.timetag_ch()?, analysis);
    Ok(AnalysisReport {
        conventional: analyze_conventional(p, analysis)?,
        timetag: analyze_timetag_values(p, &ch)?,
        pbr: analyze_pbr_values(p, &ch)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub row: SweepRow,
    pub trained: TrainedParams,
    pub analysis: AnalysisReport,
    pub calibration: Option<CalibrationReport>,
}

/// Training trials have ids `0..N_t`, analysis trials follow.
pub fn simulate(config: &ProtocolConfig) -> Result<(Vec<TrialRecord>, Vec<TrialRecord>, Option<CalibrationReport>)> {
    config.validate()?;
    let src = build_source(&config.source, config.scale.window, config.seed)?;
    let dist = &config.training.settings;
    let s = src.as_trial_source();
    let nt = config.scale.training_trials;
    let training = generate_trials(s, dist, config.seed, 0, nt);
    let analysis = generate_trials(s, dist, config.seed, nt as u64, config.scale.analysis_trials);
    Ok((training, analysis, src.calibration().cloned()))
}

/// Generate, train, analyze.
pub fn run_protocol(config: &ProtocolConfig) -> Result<ProtocolReport> {
    let (training, analysis, calibration) = simulate(config)?;
    let trained = train(&training, &config.training)?;
    drop(training);
    let analysis = analyze(&trained, &analysis)?;
    let jitter = config.source.jitter();
    let row = SweepRow {
        source: config.source.label().to_string(),
        jitter,
        median_jitter: jitter.median(),
        conventional_snr: analysis.conventional.estimate.snr,
        timetag_snr: analysis.timetag.snr,
        log_p: analysis.pbr.log_p,
        sigma: logp_to_sigma(analysis.pbr.log_p),
    };
    Ok(ProtocolReport {
        row,
        trained,
        analysis,
        calibration,
    })
}

/// Independent, reproducible seed for sweep point `index`.
pub fn point_seed(master: u64, index: usize) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(master);
    r.set_stream(1 + index as u64);
    r.next_u64()
}

/// One protocol run per jitter value, in parallel.
pub fn sweep(config: &ProtocolConfig, grid: &[JitterModel]) -> Result<Vec<ProtocolReport>> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "empty jitter grid"));
    }
    grid.par_iter()
        .enumerate()
        .map(|(i, &j)| {
            let mut c = config.clone();
            c.source = config.source.with_jitter(j)?;
            c.seed = point_seed(config.seed, i);
            run_protocol(&c)
        })
        .collect()
}

/// Largest grid jitter (by median) whose PBR bound is positive.
pub fn jitter_threshold(rows: &[SweepRow]) -> Option<f64> {
    rows.iter().filter(|r| r.log_p > 0.0).map(|r| r.median_jitter).fold(None, |a, m| {
        Some(a.map_or(m, |x: f64| x.max(m)))
    })
}

pub fn write_sweep_csv(mut out: impl Write, rows: &[SweepRow]) -> Result<()> {
    writeln!(out, "source,jitter,median_jitter,conventional_snr,timetag_snr,log_p,sigma")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.source, r.jitter, r.median_jitter, r.conventional_snr, r.timetag_snr, r.log_p, r.sigma
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pools(y11: Vec<f64>) -> DifferencePools {
        let mut abs = PerSetting::from_fn(|_| vec![0.0]);
        abs.s11 = y11;
        DifferencePools {
            abs_diffs: abs,
            deletable: PerSetting::splat(3.0),
            trials: PerSetting::splat(1.0),
        }
    }

    #[test]
    fn synthetic_pool_cost() {
        let p = pools(vec![0.0, 0.05, 0.2]);
        let w = LinearEdgeWindowParams::symmetric(0.1, 20.0);
        assert!((p.approximate_cost(&w, SettingsPair::S11) - 1.0).abs() < 1e-12);
        assert!((p.fast_cost(&w, SettingsPair::S11) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fast_cost_matches_direct_sum() {
        let y: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin().abs() * 0.3).collect();
        let mut p = pools(y.clone());
        p.abs_diffs.s11.sort_by(f64::total_cmp);
        for &(t, m) in &[(0.01, 10.0), (0.05, 40.0), (0.2, 3.0), (0.1, 1000.0)] {
            let w = LinearEdgeWindowParams::symmetric(t, m);
            let a = p.approximate_cost(&w, SettingsPair::S11);
            let b = p.fast_cost(&w, SettingsPair::S11);
            assert!((a - b).abs() < 1e-9, "{t} {m}: {a} {b}");
        }
    }

    #[test]
    fn zero_jitter_pool_picks_smallest_t() {
        let mut p = pools(vec![0.0; 10]);
        p.abs_diffs = PerSetting::splat(vec![0.0; 10]);
        let fit = optimize_tuple_params(&p, &TupleGrid::default()).unwrap();
        assert_eq!(fit.t, TupleGrid::default().t_min);
    }

    #[test]
    fn compression_differences_simple() {
        let d = compression_differences(&[1.0, 5.0], &[1.02, 5.3, 9.0], 1.0);
        assert_eq!(d.len(), 2);
        assert!((d[0] - 0.02).abs() < 1e-12 && (d[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn point_seeds_differ() {
        let s: Vec<u64> = (0..5).map(|i| point_seed(7, i)).collect();
        for i in 0..5 {
            for j in 0..i {
                assert_ne!(s[i], s[j]);
            }
        }
        assert_eq!(point_seed(7, 3), s[3]);
    }

    #[test]
    fn config_toml_roundtrip() {
        let c = ProtocolConfig::desk(
            SourceSpec::Quantum {
                efficiency: 0.8,
                jitter: JitterModel::Uniform { width: 0.02 },
            },
            11,
        );
        let s = c.to_toml().unwrap();
        assert_eq!(ProtocolConfig::from_toml(&s).unwrap(), c);
        let minimal = "seed = 3\n[scale]\ntraining_trials = 10\nanalysis_trials = 20\nwindow = 5.0\n[source]\nkind = \"delta_shift\"\ndelta = 0.001\n";
        let c = ProtocolConfig::from_toml(minimal).unwrap();
        assert_eq!(c.training, TrainingOptions::default());
    }

    #[test]
    fn small_quantum_protocol_runs() {
        let mut c = ProtocolConfig::desk(
            SourceSpec::Quantum {
                efficiency: 0.8,
                jitter: JitterModel::Uniform { width: 0.01 },
            },
            5,
        );
        c.scale = Scale {
            training_trials: 200,
            analysis_trials: 400,
            window: 50.0,
        };
        let r = run_protocol(&c).unwrap();
        assert!(r.row.log_p >= 0.0);
        let again = run_protocol(&c).unwrap();
        assert_eq!(r, again);
        let json = r.trained.to_json().unwrap();
        assert_eq!(TrainedParams::from_json(&json).unwrap(), r.trained);
    }
}
