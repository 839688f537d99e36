//! Trial records, settings, and the settings distribution.
//!
//! A trial consists of the two parties' settings and the two timetag
//! sequences they recorded during one fixed observation window. Times are in
//! units of the mean pair inter-arrival time.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// One of the two measurement settings available to each party.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Setting {
    S1,
    S2,
}

impl Setting {
    pub const ALL: [Setting; 2] = [Setting::S1, Setting::S2];

    /// Wire encoding: 1 or 2.
    pub fn code(self) -> u8 {
        match self {
            Setting::S1 => 1,
            Setting::S2 => 2,
        }
    }

    pub fn from_code(code: u64) -> Option<Setting> {
        match code {
            1 => Some(Setting::S1),
            2 => Some(Setting::S2),
            _ => None,
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            Setting::S1 => 0,
            Setting::S2 => 1,
        }
    }
}

/// Settings chosen by party A and party B in one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SettingsPair {
    pub a: Setting,
    pub b: Setting,
}

impl SettingsPair {
    pub const S11: SettingsPair = SettingsPair::new(Setting::S1, Setting::S1);
    pub const S12: SettingsPair = SettingsPair::new(Setting::S1, Setting::S2);
    pub const S21: SettingsPair = SettingsPair::new(Setting::S2, Setting::S1);
    pub const S22: SettingsPair = SettingsPair::new(Setting::S2, Setting::S2);

    /// All four settings pairs, in the order 11, 12, 21, 22.
    pub const ALL: [SettingsPair; 4] = [Self::S11, Self::S12, Self::S21, Self::S22];

    pub const fn new(a: Setting, b: Setting) -> Self {
        SettingsPair { a, b }
    }

    pub fn index(self) -> usize {
        2 * self.a.index() + self.b.index()
    }

    pub fn from_index(i: usize) -> SettingsPair {
        Self::ALL[i]
    }

    /// Sign of this setting's term in a CH Bell function: -1 at 22, +1 elsewhere.
    pub fn sign(self) -> f64 {
        if self == Self::S22 {
            -1.0
        } else {
            1.0
        }
    }
}

impl fmt::Display for SettingsPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.a.code(), self.b.code())
    }
}

/// A value for each of the four settings pairs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerSetting<T> {
    pub s11: T,
    pub s12: T,
    pub s21: T,
    pub s22: T,
}

impl<T> PerSetting<T> {
    pub fn new(s11: T, s12: T, s21: T, s22: T) -> Self {
        PerSetting { s11, s12, s21, s22 }
    }

    pub fn from_fn(mut f: impl FnMut(SettingsPair) -> T) -> Self {
        PerSetting {
            s11: f(SettingsPair::S11),
            s12: f(SettingsPair::S12),
            s21: f(SettingsPair::S21),
            s22: f(SettingsPair::S22),
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(SettingsPair, &T) -> U) -> PerSetting<U> {
        PerSetting::from_fn(|ab| f(ab, &self[ab]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (SettingsPair, &T)> {
        SettingsPair::ALL.into_iter().map(move |ab| (ab, &self[ab]))
    }
}

impl<T: Clone> PerSetting<T> {
    pub fn splat(v: T) -> Self {
        PerSetting::new(v.clone(), v.clone(), v.clone(), v)
    }
}

impl PerSetting<f64> {
    /// True when the 22 entry equals the sum of the other three within `tol`.
    pub fn is_exact(&self, tol: f64) -> bool {
        (self.s11 + self.s12 + self.s21 - self.s22).abs() <= tol
    }
}

impl<T> Index<SettingsPair> for PerSetting<T> {
    type Output = T;
    fn index(&self, ab: SettingsPair) -> &T {
        match ab.index() {
            0 => &self.s11,
            1 => &self.s12,
            2 => &self.s21,
            _ => &self.s22,
        }
    }
}

impl<T> IndexMut<SettingsPair> for PerSetting<T> {
    fn index_mut(&mut self, ab: SettingsPair) -> &mut T {
        match ab.index() {
            0 => &mut self.s11,
            1 => &mut self.s12,
            2 => &mut self.s21,
            _ => &mut self.s22,
        }
    }
}

/// A sorted sequence of finite detection times.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(transparent)]
pub struct TimetagSequence(Vec<f64>);

impl TimetagSequence {
    pub fn new(tags: Vec<f64>) -> Result<Self> {
        for (i, t) in tags.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::NonFiniteTimetag { index: i });
            }
        }
        if let Some(i) = tags.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::UnsortedTimetags { index: i + 1 });
        }
        Ok(TimetagSequence(tags))
    }

    /// Sorts the input first. Panics on non-finite values.
    pub fn from_unsorted(mut tags: Vec<f64>) -> Self {
        assert!(tags.iter().all(|t| t.is_finite()), "non-finite timetag");
        tags.sort_by(|a, b| a.partial_cmp(b).unwrap());
        TimetagSequence(tags)
    }

    pub fn empty() -> Self {
        TimetagSequence(Vec::new())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl<'de> Deserialize<'de> for TimetagSequence {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        TimetagSequence::new(v).map_err(serde::de::Error::custom)
    }
}

impl AsRef<[f64]> for TimetagSequence {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// One trial: settings plus both parties' recorded timetags.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub id: u64,
    pub settings: SettingsPair,
    pub a: TimetagSequence,
    pub b: TimetagSequence,
}

impl TrialRecord {
    /// Encodes the trial as one JSON line (no trailing newline).
    ///
    /// Floats are written in shortest round-trip form, so decoding
    /// reproduces every timetag bit for bit.
    pub fn encode(&self) -> String {
        let mut m = Map::new();
        m.insert("id".into(), Value::from(self.id));
        m.insert("sa".into(), Value::from(self.settings.a.code()));
        m.insert("sb".into(), Value::from(self.settings.b.code()));
        m.insert("a".into(), tags_value(&self.a));
        m.insert("b".into(), tags_value(&self.b));
        Value::Object(m).to_string()
    }

    pub fn decode(line: &str) -> Result<TrialRecord> {
        let v: Value =
            serde_json::from_str(line.trim()).map_err(|e| Error::parse("<record>", e.to_string()))?;
        let obj = v
            .as_object()
            .ok_or_else(|| Error::parse("<record>", "expected a JSON object"))?;
        let id = obj
            .get("id")
            .ok_or_else(|| Error::parse("id", "missing"))?
            .as_u64()
            .ok_or_else(|| Error::parse("id", "expected a non-negative integer"))?;
        let sa = decode_setting(obj, "sa")?;
        let sb = decode_setting(obj, "sb")?;
        let a = decode_tags(obj, "a")?;
        let b = decode_tags(obj, "b")?;
        Ok(TrialRecord {
            id,
            settings: SettingsPair::new(sa, sb),
            a,
            b,
        })
    }
}

fn tags_value(s: &TimetagSequence) -> Value {
    Value::Array(
        s.as_slice()
            .iter()
            .map(|&t| serde_json::Number::from_f64(t).map(Value::Number).unwrap())
            .collect(),
    )
}

fn decode_setting(obj: &Map<String, Value>, field: &str) -> Result<Setting> {
    let v = obj
        .get(field)
        .ok_or_else(|| Error::parse(field, "missing"))?;
    v.as_u64()
        .and_then(Setting::from_code)
        .ok_or_else(|| Error::parse(field, format!("setting must be 1 or 2, got {v}")))
}

fn decode_tags(obj: &Map<String, Value>, field: &str) -> Result<TimetagSequence> {
    let arr = obj
        .get(field)
        .ok_or_else(|| Error::parse(field, "missing"))?
        .as_array()
        .ok_or_else(|| Error::parse(field, "expected an array of times"))?;
    let tags = arr
        .iter()
        .enumerate()
        .map(|(i, x)| {
            x.as_f64()
                .ok_or_else(|| Error::parse(field, format!("element {i} is not a number")))
        })
        .collect::<Result<Vec<f64>>>()?;
    TimetagSequence::new(tags).map_err(|e| match e {
        Error::UnsortedTimetags { index } => {
            Error::parse(field, format!("unsorted timetags at index {index}"))
        }
        other => Error::parse(field, other.to_string()),
    })
}

/// Reads a line-delimited trial file. Blank lines are skipped.
pub fn read_trials(reader: impl std::io::BufRead) -> Result<Vec<TrialRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t = TrialRecord::decode(&line).map_err(|e| match e {
            Error::Parse { field, msg } => Error::Parse {
                field,
                msg: format!("line {}: {msg}", lineno + 1),
            },
            other => other,
        })?;
        out.push(t);
    }
    Ok(out)
}

pub fn write_trials<'a>(
    mut writer: impl std::io::Write,
    trials: impl IntoIterator<Item = &'a TrialRecord>,
) -> Result<()> {
    for t in trials {
        writeln!(writer, "{}", t.encode())?;
    }
    Ok(())
}

/// Probability of each settings pair. Settings are drawn independently of
/// the source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PerSetting<f64>", into = "PerSetting<f64>")]
pub struct SettingsDistribution {
    p: PerSetting<f64>,
}

impl SettingsDistribution {
    pub fn uniform() -> Self {
        SettingsDistribution {
            p: PerSetting::splat(0.25),
        }
    }

    pub fn new(p: PerSetting<f64>) -> Result<Self> {
        if p.iter().any(|(_, &x)| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::invalid("settings_dist", "probabilities must be positive"));
        }
        let total: f64 = p.iter().map(|(_, &x)| x).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "settings_dist",
                format!("probabilities sum to {total}, not 1"),
            ));
        }
        Ok(SettingsDistribution { p })
    }

    pub fn prob(&self, ab: SettingsPair) -> f64 {
        self.p[ab]
    }

    pub fn probs(&self) -> &PerSetting<f64> {
        &self.p
    }

    /// Draws a settings pair from a uniform variate in [0, 1).
    pub fn sample_with(&self, u: f64) -> SettingsPair {
        let mut acc = 0.0;
        for ab in SettingsPair::ALL {
            acc += self.p[ab];
            if u < acc {
                return ab;
            }
        }
        SettingsPair::S22
    }
}

impl Default for SettingsDistribution {
    fn default() -> Self {
        Self::uniform()
    }
}

impl TryFrom<PerSetting<f64>> for SettingsDistribution {
    type Error = Error;
    fn try_from(p: PerSetting<f64>) -> Result<Self> {
        SettingsDistribution::new(p)
    }
}

impl From<SettingsDistribution> for PerSetting<f64> {
    fn from(d: SettingsDistribution) -> Self {
        d.p
    }
}

/// Probability of settings pair `ab` under `dist`.
pub fn settings_prob(dist: &SettingsDistribution, ab: SettingsPair) -> f64 {
    dist.prob(ab)
}

/// Outcomes pre-assigned by a deterministic local-realistic model to each
/// party and setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrAssignment<O> {
    pub a1: O,
    pub a2: O,
    pub b1: O,
    pub b2: O,
}

impl<O> LrAssignment<O> {
    pub fn outcome_a(&self, s: Setting) -> &O {
        match s {
            Setting::S1 => &self.a1,
            Setting::S2 => &self.a2,
        }
    }

    pub fn outcome_b(&self, s: Setting) -> &O {
        match s {
            Setting::S1 => &self.b1,
            Setting::S2 => &self.b2,
        }
    }
}

impl LrAssignment<TimetagSequence> {
    /// The trial visible to the parties when they choose `settings`.
    pub fn select(&self, id: u64, settings: SettingsPair) -> TrialRecord {
        TrialRecord {
            id,
            settings,
            a: self.outcome_a(settings.a).clone(),
            b: self.outcome_b(settings.b).clone(),
        }
    }
}
