//! Poisson photon-pair source with detector jitter, and the delta-shift LR
//! toy source.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::nelder_mead;
use crate::trial::{PerSetting, Setting, SettingsDistribution, SettingsPair, TimetagSequence, TrialRecord};

/// Pairs are generated from this long before the window opens.
pub const DEFAULT_LEAD: f64 = 2.0;

/// Delay between a photon's arrival and its recorded timetag. Serialized
/// as `none`, `uniform:J` or `exp:G`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum JitterModel {
    None,
    /// Uniform on `[0, width]`.
    Uniform { width: f64 },
    /// Density `rate * exp(-rate * d)` for `d >= 0`.
    Exponential { rate: f64 },
}

impl JitterModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            JitterModel::None => Ok(()),
            JitterModel::Uniform { width } if width > 0.0 && width.is_finite() => Ok(()),
            JitterModel::Exponential { rate } if rate > 0.0 && rate.is_finite() => Ok(()),
            _ => Err(Error::invalid("jitter", "width or rate must be positive")),
        }
    }

    #[inline]
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            JitterModel::None => 0.0,
            JitterModel::Uniform { width } => width * rng.random::<f64>(),
            JitterModel::Exponential { rate } => -(1.0 - rng.random::<f64>()).ln() / rate,
        }
    }

    pub fn median(&self) -> f64 {
        match *self {
            JitterModel::None => 0.0,
            JitterModel::Uniform { width } => width / 2.0,
            JitterModel::Exponential { rate } => std::f64::consts::LN_2 / rate,
        }
    }

    /// The model of the same family whose median delay is `median`.
    pub fn with_median(&self, median: f64) -> JitterModel {
        match self {
            JitterModel::None => JitterModel::None,
            JitterModel::Uniform { .. } => JitterModel::Uniform { width: 2.0 * median },
            JitterModel::Exponential { .. } => JitterModel::Exponential {
                rate: std::f64::consts::LN_2 / median,
            },
        }
    }
}

impl fmt::Display for JitterModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JitterModel::None => write!(f, "none"),
            JitterModel::Uniform { width } => write!(f, "uniform:{width}"),
            JitterModel::Exponential { rate } => write!(f, "exp:{rate}"),
        }
    }
}

impl From<JitterModel> for String {
    fn from(m: JitterModel) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for JitterModel {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for JitterModel {
    type Err = Error;

    /// `none`, `uniform:J` or `exp:G`.
    fn from_str(s: &str) -> Result<Self> {
        let m = match s.split_once(':') {
            None if s == "none" => JitterModel::None,
            Some(("uniform", v)) => JitterModel::Uniform {
                width: v.parse().map_err(|_| Error::parse("jitter", format!("bad width `{v}`")))?,
            },
            Some(("exp", v)) => JitterModel::Exponential {
                rate: v.parse().map_err(|_| Error::parse("jitter", format!("bad rate `{v}`")))?,
            },
            _ => return Err(Error::parse("jitter", format!("expected none, uniform:J or exp:G, got `{s}`"))),
        };
        m.validate()?;
        Ok(m)
    }
}

/// Polarizer angles for each party and setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Angles {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

/// Single-pair outcome probabilities `p[ab][o_A][o_B]`, 1 = detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeProbabilities {
    pub p: PerSetting<[[f64; 2]; 2]>,
}

impl OutcomeProbabilities {
    pub fn get(&self, ab: SettingsPair, oa: usize, ob: usize) -> f64 {
        self.p[ab][oa][ob]
    }

    /// Detection probability of A at setting `ab.a`, read from column `ab`.
    pub fn marginal_a(&self, ab: SettingsPair) -> f64 {
        self.p[ab][1][0] + self.p[ab][1][1]
    }

    pub fn marginal_b(&self, ab: SettingsPair) -> f64 {
        self.p[ab][0][1] + self.p[ab][1][1]
    }

    /// `p^A_a`, taken from the column with B at setting 1.
    pub fn p_a(&self, a: Setting) -> f64 {
        self.marginal_a(SettingsPair::new(a, Setting::S1))
    }

    pub fn p_b(&self, b: Setting) -> f64 {
        self.marginal_b(SettingsPair::new(Setting::S1, b))
    }

    /// `E_ab` with no detection mapped to -1.
    pub fn correlator(&self, ab: SettingsPair) -> f64 {
        let q = &self.p[ab];
        q[0][0] + q[1][1] - q[0][1] - q[1][0]
    }

    /// `E_22 - E_21 - E_11 - E_12`; LR models give at least -2.
    pub fn chsh(&self) -> f64 {
        use SettingsPair as S;
        self.correlator(S::S22) - self.correlator(S::S21) - self.correlator(S::S11) - self.correlator(S::S12)
    }

    /// Largest deviation from normalization and from equal marginals.
    pub fn consistency_error(&self) -> f64 {
        use SettingsPair as S;
        let mut e: f64 = 0.0;
        for ab in S::ALL {
            let s: f64 = self.p[ab].iter().flatten().sum();
            e = e.max((s - 1.0).abs());
        }
        for a in Setting::ALL {
            e = e.max((self.marginal_a(S::new(a, Setting::S1)) - self.marginal_a(S::new(a, Setting::S2))).abs());
            e = e.max((self.marginal_b(S::new(Setting::S1, a)) - self.marginal_b(S::new(Setting::S2, a))).abs());
        }
        e
    }
}

/// Probabilities for the state `cos(theta)|00> + sin(theta)|11>` with
/// linear polarizers at the given angles and detection efficiency `eta`.
pub fn outcome_probabilities(theta: f64, angles: &Angles, eta: f64) -> OutcomeProbabilities {
    let (ct, st) = (theta.cos(), theta.sin());
    let pass_a = |al: f64| (ct * al.cos()).powi(2) + (st * al.sin()).powi(2);
    let p = PerSetting::from_fn(|ab| {
        let al = angles.a[ab.a.index()];
        let be = angles.b[ab.b.index()];
        let pab = (ct * al.cos() * be.cos() + st * al.sin() * be.sin()).powi(2);
        let p11 = eta * eta * pab;
        let p10 = eta * pass_a(al) - p11;
        let p01 = eta * pass_a(be) - p11;
        let p00 = 1.0 - p11 - p10 - p01;
        [[p00, p01], [p10, p11]]
    });
    OutcomeProbabilities { p }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizedSource {
    pub theta: f64,
    pub angles: Angles,
    pub probs: OutcomeProbabilities,
    pub chsh: f64,
}

fn unpack(x: &[f64]) -> (f64, Angles) {
    (x[0], Angles { a: [x[1], x[2]], b: [x[3], x[4]] })
}

/// State angle and polarizer angles minimizing the CHSH value at
/// efficiency `eta`: coarse grid, then simplex refinement.
pub fn optimize_source(eta: f64) -> Result<OptimizedSource> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::invalid("efficiency", "must lie in [0, 1]"));
    }
    let obj = |x: &[f64]| {
        let (th, ang) = unpack(x);
        outcome_probabilities(th.clamp(0.0, FRAC_PI_2), &ang, eta).chsh()
    };
    let thetas: Vec<f64> = (1..=12).map(|i| i as f64 * FRAC_PI_2 / 13.0).collect();
    let ang: Vec<f64> = (0..10).map(|i| -FRAC_PI_2 + i as f64 * PI / 10.0).collect();
    let mut starts: Vec<(f64, [f64; 5])> = thetas
        .par_iter()
        .flat_map_iter(|&th| {
            let ang = &ang;
            ang.iter().flat_map(move |&a1| {
                ang.iter().flat_map(move |&a2| {
                    ang.iter().flat_map(move |&b1| {
                        ang.iter().map(move |&b2| {
                            let x = [th, a1, a2, b1, b2];
                            (obj(&x), x)
                        })
                    })
                })
            })
        })
        .collect();
    starts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.partial_cmp(&b.1).unwrap()));
    let mut best: Option<(f64, Vec<f64>)> = None;
    for (_, x0) in starts.iter().take(8) {
        let m = nelder_mead(obj, x0, &[0.05; 5], 1e-14, 20_000);
        if best.as_ref().is_none_or(|(f, _)| m.fx < *f) {
            best = Some((m.fx, m.x));
        }
    }
    let (fx, x) = best.expect("grid is nonempty");
    let (theta, angles) = unpack(&x);
    let theta = theta.clamp(0.0, FRAC_PI_2);
    if fx >= -2.0 {
        return Err(Error::NoViolation { efficiency: eta, best: fx });
    }
    Ok(OptimizedSource {
        theta,
        angles,
        probs: outcome_probabilities(theta, &angles, eta),
        chsh: fx,
    })
}

/// Physical parameters of the photon-pair source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub efficiency: f64,
    pub theta: f64,
    pub angles: Angles,
    /// Pair rate; time is measured in units of the mean inter-arrival time.
    pub rate: f64,
    pub window: f64,
    pub lead: f64,
    pub jitter: JitterModel,
}

impl SourceConfig {
    /// Optimal state and settings for `efficiency`.
    pub fn optimized(efficiency: f64, window: f64, jitter: JitterModel) -> Result<Self> {
        let o = optimize_source(efficiency)?;
        let c = SourceConfig {
            efficiency,
            theta: o.theta,
            angles: o.angles,
            rate: 1.0,
            window,
            lead: DEFAULT_LEAD,
            jitter,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::invalid("efficiency", "must lie in [0, 1]"));
        }
        if !(self.window > 0.0) || !self.window.is_finite() {
            return Err(Error::invalid("window", "must be positive"));
        }
        if !(self.rate > 0.0) || !(self.lead >= 0.0) {
            return Err(Error::invalid("rate", "rate must be positive and lead nonnegative"));
        }
        let finite = self.theta.is_finite() && self.angles.a.iter().chain(&self.angles.b).all(|x| x.is_finite());
        if !finite {
            return Err(Error::invalid("angles", "must be finite"));
        }
        self.jitter.validate()
    }

    pub fn probabilities(&self) -> OutcomeProbabilities {
        outcome_probabilities(self.theta, &self.angles, self.efficiency)
    }
}

/// Per-trial RNG for the physical source, `master ^ id` on stream 0.
pub fn source_rng(master: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(master ^ id);
    r.set_stream(0);
    r
}

/// Per-trial RNG for the settings choice, independent of the source stream.
pub fn settings_rng(master: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(master ^ id);
    r.set_stream(1);
    r
}

pub fn draw_settings(dist: &SettingsDistribution, master: u64, id: u64) -> SettingsPair {
    dist.sample_with(settings_rng(master, id).random::<f64>())
}

/// Anything that produces a trial given its settings and seed.
pub trait TrialSource: Sync {
    fn generate(&self, id: u64, settings: SettingsPair, master_seed: u64) -> TrialRecord;
}

/// Generates trials `first_id .. first_id + n` in parallel. Results depend
/// only on the arguments, not on thread scheduling.
pub fn generate_trials(
    source: &dyn TrialSource,
    dist: &SettingsDistribution,
    master_seed: u64,
    first_id: u64,
    n: usize,
) -> Vec<TrialRecord> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let id = first_id + i;
            source.generate(id, draw_settings(dist, master_seed, id), master_seed)
        })
        .collect()
}

/// Poisson pair arrival times at `rate` on `[start, end)`.
pub fn poisson_arrivals(rng: &mut impl Rng, rate: f64, start: f64, end: f64) -> Vec<f64> {
    let exp = Exp::new(rate).expect("positive rate");
    let mut t = start;
    let mut out = Vec::with_capacity(((end - start) * rate * 1.2) as usize + 8);
    loop {
        t += exp.sample(rng);
        if t >= end {
            return out;
        }
        out.push(t);
    }
}

fn window_tags(mut tags: Vec<f64>, window: f64) -> TimetagSequence {
    tags.retain(|&x| (0.0..=window).contains(&x));
    TimetagSequence::from_unsorted(tags)
}

/// The quantum photon-pair source with cached outcome probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumSource {
    pub config: SourceConfig,
    pub probs: OutcomeProbabilities,
}

impl QuantumSource {
    pub fn new(config: SourceConfig) -> Result<Self> {
        config.validate()?;
        let probs = config.probabilities();
        Ok(QuantumSource { config, probs })
    }
}

impl TrialSource for QuantumSource {
    fn generate(&self, id: u64, settings: SettingsPair, master_seed: u64) -> TrialRecord {
        generate_quantum_trial(&self.config, &self.probs, settings, master_seed, id)
    }
}

pub fn generate_quantum_trial(
    config: &SourceConfig,
    probs: &OutcomeProbabilities,
    settings: SettingsPair,
    master_seed: u64,
    id: u64,
) -> TrialRecord {
    let mut rng = source_rng(master_seed, id);
    let q = probs.p[settings];
    let (c00, c01, c10) = (q[0][0], q[0][0] + q[0][1], q[0][0] + q[0][1] + q[1][0]);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for t in poisson_arrivals(&mut rng, config.rate, -config.lead, config.window) {
        let u = rng.random::<f64>();
        let (da, db) = if u < c00 {
            (false, false)
        } else if u < c01 {
            (false, true)
        } else if u < c10 {
            (true, false)
        } else {
            (true, true)
        };
        if da {
            a.push(t + config.jitter.sample(&mut rng));
        }
        if db {
            b.push(t + config.jitter.sample(&mut rng));
        }
    }
    TrialRecord {
        id,
        settings,
        a: window_tags(a, config.window),
        b: window_tags(b, config.window),
    }
}

/// LR toy source: every pair is detected by both parties; A's tag is
/// delayed by `delta` at setting 2 and B's advanced by `delta` at setting 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaShiftSource {
    pub delta: f64,
    pub rate: f64,
    pub window: f64,
    pub lead: f64,
    pub jitter: JitterModel,
}

impl DeltaShiftSource {
    pub fn new(delta: f64, window: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::invalid("delta", "must be positive"));
        }
        Ok(DeltaShiftSource {
            delta,
            rate: 1.0,
            window,
            lead: DEFAULT_LEAD,
            jitter: JitterModel::None,
        })
    }
}

impl TrialSource for DeltaShiftSource {
    fn generate(&self, id: u64, settings: SettingsPair, master_seed: u64) -> TrialRecord {
        generate_delta_shift_trial(self, settings, master_seed, id)
    }
}

pub fn generate_delta_shift_trial(
    src: &DeltaShiftSource,
    settings: SettingsPair,
    master_seed: u64,
    id: u64,
) -> TrialRecord {
    let mut rng = source_rng(master_seed, id);
    let da = if settings.a == Setting::S2 { src.delta } else { 0.0 };
    let db = if settings.b == Setting::S2 { -src.delta } else { 0.0 };
    let mut a = Vec::new();
    let mut b = Vec::new();
    for t in poisson_arrivals(&mut rng, src.rate, -src.lead, src.window) {
        a.push(t + da + src.jitter.sample(&mut rng));
        b.push(t + db + src.jitter.sample(&mut rng));
    }
    TrialRecord {
        id,
        settings,
        a: window_tags(a, src.window),
        b: window_tags(b, src.window),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::density_matrix_probabilities;
    use std::f64::consts::FRAC_PI_4;
    use SettingsPair as S;

    #[test]
    fn zero_efficiency_never_detects() {
        let ang = Angles { a: [0.1, 0.7], b: [-0.3, 1.2] };
        let p = outcome_probabilities(0.4, &ang, 0.0);
        for ab in S::ALL {
            assert_eq!(p.get(ab, 0, 0), 1.0);
        }
    }

    #[test]
    fn maximally_entangled_aligned() {
        let ang = Angles { a: [0.0, 0.0], b: [0.0, 0.0] };
        let p = outcome_probabilities(FRAC_PI_4, &ang, 1.0);
        assert!((p.get(S::S11, 1, 1) - 0.5).abs() < 1e-12);
        assert!((p.get(S::S11, 0, 0) - 0.5).abs() < 1e-12);
        assert!(p.get(S::S11, 0, 1).abs() < 1e-12);
        assert!(p.get(S::S11, 1, 0).abs() < 1e-12);
    }

    #[test]
    fn matches_density_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let th = rng.random_range(0.0..FRAC_PI_2);
            let ang = Angles {
                a: [rng.random_range(-PI..PI), rng.random_range(-PI..PI)],
                b: [rng.random_range(-PI..PI), rng.random_range(-PI..PI)],
            };
            let eta = rng.random::<f64>();
            let p = outcome_probabilities(th, &ang, eta);
            assert!(p.consistency_error() < 1e-12);
            for ab in S::ALL {
                let q = density_matrix_probabilities(th, ang.a[ab.a.index()], ang.b[ab.b.index()], eta);
                let mine = [p.get(ab, 0, 0), p.get(ab, 0, 1), p.get(ab, 1, 0), p.get(ab, 1, 1)];
                for k in 0..4 {
                    assert!((q[k] - mine[k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn jitter_parse_and_display() {
        assert_eq!("none".parse::<JitterModel>().unwrap(), JitterModel::None);
        assert_eq!("uniform:0.1".parse::<JitterModel>().unwrap(), JitterModel::Uniform { width: 0.1 });
        assert_eq!("exp:20".parse::<JitterModel>().unwrap(), JitterModel::Exponential { rate: 20.0 });
        assert!("uniform:-1".parse::<JitterModel>().is_err());
        assert!("gauss:1".parse::<JitterModel>().is_err());
        let m = JitterModel::Exponential { rate: 3.0 };
        assert!((m.with_median(m.median()).median() - m.median()).abs() < 1e-15);
    }

    #[test]
    fn determinism_and_window() {
        let cfg = SourceConfig {
            efficiency: 0.8,
            theta: 0.3,
            angles: Angles { a: [0.1, -0.5], b: [-0.1, 0.5] },
            rate: 1.0,
            window: 50.0,
            lead: 2.0,
            jitter: JitterModel::None,
        };
        let src = QuantumSource::new(cfg).unwrap();
        let t1 = src.generate(3, S::S21, 99);
        let t2 = src.generate(3, S::S21, 99);
        assert_eq!(t1, t2);
        for x in t1.a.as_slice().iter().chain(t1.b.as_slice()) {
            assert!((0.0..=50.0).contains(x));
        }
    }

    #[test]
    fn delta_shift_tags() {
        let src = DeltaShiftSource::new(0.01, 20.0).unwrap();
        let t = src.generate(0, S::S22, 1);
        let a = t.a.as_slice();
        let b = t.b.as_slice();
        let n = a.len().min(b.len());
        let inner: Vec<f64> = (0..n).map(|i| a[i] - b[i]).filter(|d| d.abs() < 0.5).collect();
        assert!(inner.iter().all(|d| (d - 0.02).abs() < 1e-12));
        let t = src.generate(0, S::S11, 1);
        assert_eq!(t.a, t.b);
    }

    #[test]
    fn ideal_efficiency_reaches_tsirelson() {
        let o = optimize_source(1.0).unwrap();
        assert!((o.chsh + 2.0 * 2f64.sqrt()).abs() < 1e-6, "{}", o.chsh);
        let th = o.theta.rem_euclid(PI);
        assert!((th - FRAC_PI_4).abs() < 1e-3 || (th - 3.0 * FRAC_PI_4).abs() < 1e-3, "{th}");
    }

    #[test]
    fn threshold_efficiency() {
        match optimize_source(0.667) {
            Ok(o) => assert!((o.chsh + 2.0).abs() < 1e-3, "{}", o.chsh),
            Err(Error::NoViolation { best, .. }) => assert!((best + 2.0).abs() < 1e-3),
            Err(e) => panic!("{e}"),
        }
        assert!(matches!(optimize_source(0.6), Err(Error::NoViolation { .. })));
    }

    #[test]
    fn study_efficiency_violates() {
        let o = optimize_source(0.8).unwrap();
        assert!(o.chsh < -2.0 - 1e-3, "{}", o.chsh);
        assert!(o.probs.consistency_error() < 1e-12);
    }

    #[test]
    fn perfect_correlation_gives_equal_tags() {
        let cfg = SourceConfig {
            efficiency: 1.0,
            theta: FRAC_PI_4,
            angles: Angles { a: [0.0, 0.0], b: [0.0, 0.0] },
            rate: 1.0,
            window: 30.0,
            lead: 2.0,
            jitter: JitterModel::None,
        };
        let src = QuantumSource::new(cfg).unwrap();
        for id in 0..100 {
            let t = src.generate(id, S::from_index((id % 4) as usize), 17);
            assert_eq!(t.a, t.b);
        }
    }

    #[test]
    fn tag_counts_follow_thinning() {
        let cfg = SourceConfig {
            efficiency: 0.8,
            theta: 0.35,
            angles: Angles { a: [0.1, -0.4], b: [-0.1, 0.4] },
            rate: 1.0,
            window: 1000.0,
            lead: 2.0,
            jitter: JitterModel::Uniform { width: 0.05 },
        };
        let src = QuantumSource::new(cfg).unwrap();
        let ab = S::S12;
        let (pa, pb) = (src.probs.marginal_a(ab), src.probs.marginal_b(ab));
        let (mut na, mut nb) = (0usize, 0usize);
        for id in 0..100 {
            let t = src.generate(id, ab, 3);
            na += t.a.len();
            nb += t.b.len();
        }
        for (n, p) in [(na, pa), (nb, pb)] {
            let mean = 100.0 * 1000.0 * p;
            assert!((n as f64 - mean).abs() < 5.0 * mean.sqrt(), "{n} vs {mean}");
        }
    }

    fn empirical_median(m: JitterModel, n: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut v: Vec<f64> = (0..n).map(|_| m.sample(&mut rng)).collect();
        v.sort_by(f64::total_cmp);
        v[n / 2]
    }

    #[test]
    fn jitter_medians() {
        let n = 100_000;
        // Standard error of a sample median is 1 / (2 f(m) sqrt(n)).
        let ju = 0.06;
        let se = ju / (2.0 * (n as f64).sqrt());
        assert!((empirical_median(JitterModel::Uniform { width: ju }, n) - ju / 2.0).abs() < 3.0 * se);
        let g = 50.0;
        let se = 1.0 / (2.0 * (g / 2.0) * (n as f64).sqrt());
        let m = empirical_median(JitterModel::Exponential { rate: g }, n);
        assert!((m - std::f64::consts::LN_2 / g).abs() < 3.0 * se);
    }

    #[test]
    fn no_tags_outside_window() {
        let src = DeltaShiftSource::new(0.5, 10.0).unwrap();
        for id in 0..50 {
            let t = src.generate(id, S::from_index((id % 4) as usize), 8);
            for x in t.a.as_slice().iter().chain(t.b.as_slice()) {
                assert!((0.0..=10.0).contains(x));
            }
        }
    }

    #[test]
    fn generation_is_parallel_deterministic() {
        let src = DeltaShiftSource::new(0.1, 5.0).unwrap();
        let d = SettingsDistribution::uniform();
        let a = generate_trials(&src, &d, 42, 10, 64);
        let b: Vec<_> = (10..74).map(|id| src.generate(id, draw_settings(&d, 42, id), 42)).collect();
        assert_eq!(a, b);
    }
}
