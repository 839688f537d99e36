use serde::{Deserialize, Serialize};

use crate::bell::ChFunction;
use crate::error::{Error, Result};
use crate::trial::{PerSetting, SettingsDistribution, SettingsPair};
use crate::tuples::FunctionTuple;

/// Candidate safe separations, as fractions of each setting's training
/// standard deviation.
pub const DEFAULT_W_FRACTIONS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

/// Parameters of `g_ab(x) = min(max(x + b_ab, 0), c) - u_ab`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationParams {
    pub b: PerSetting<f64>,
    pub u: PerSetting<f64>,
    pub c: f64,
    pub w: PerSetting<f64>,
    /// Balanced per-setting violation `-v` predicted from training.
    pub neg_v: f64,
}

impl TruncationParams {
    #[inline]
    pub fn g(&self, ab: SettingsPair, x: f64) -> f64 {
        (x + self.b[ab]).max(0.0).min(self.c) - self.u[ab]
    }

    /// `-v < 0`: the truncation still shows a violation on training data.
    pub fn is_helpful(&self) -> bool {
        self.neg_v < 0.0
    }

    /// `v`, the predicted per-setting violation.
    pub fn v(&self) -> f64 {
        -self.neg_v
    }

    /// `g` built from closure combinators, so its membership does not rest
    /// on the closed form above.
    pub fn tuple(&self) -> Result<FunctionTuple> {
        let zero = FunctionTuple::exact_constant(PerSetting::splat(0.0))?;
        let neg_u = FunctionTuple::exact_constant(self.u.map(|_, &x| -x))?;
        Ok(FunctionTuple::linear(1.0)
            .shift(self.b)?
            .max(&zero)
            .clamp_above(self.c)?
            .add(&neg_u))
    }
}

/// Sample mean and standard deviation.
pub fn per_setting_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Chooses `b`, `c` and the balancing shift `u` from training values of
/// `l_ab` (grouped by setting) and safe separations `w`.
pub fn choose_truncation(
    training: &PerSetting<Vec<f64>>,
    w: PerSetting<f64>,
) -> Result<TruncationParams> {
    for ab in SettingsPair::ALL {
        if training[ab].is_empty() {
            return Err(Error::EmptySettingsClass(ab));
        }
    }
    let mean = training.map(|_, v| per_setting_stats(v).0);
    let mut b = PerSetting::from_fn(|ab| w[ab] - mean[ab]);
    b.s22 = b.s11 + b.s12 + b.s21;
    let c = mean.s22 + w.s22 + b.s22;
    if c < 0.0 {
        return Err(Error::invalid(
            "c",
            format!("truncation upper bound {c} is negative; training data look pathological"),
        ));
    }
    let mut p = TruncationParams {
        b,
        u: PerSetting::splat(0.0),
        c,
        w,
        neg_v: 0.0,
    };
    let lp = PerSetting::from_fn(|ab| {
        training[ab].iter().map(|&x| p.g(ab, x)).sum::<f64>() / training[ab].len() as f64
    });
    (p.u, p.neg_v) = balance_shift(&lp);
    Ok(p)
}

/// The shift `u` equalizing the signed truncated means `lp` across settings,
/// and the resulting per-setting value `-v`.
pub fn balance_shift(lp: &PerSetting<f64>) -> (PerSetting<f64>, f64) {
    let s = lp.s11 + lp.s12 + lp.s21 - lp.s22;
    let mut u = PerSetting::from_fn(|ab| lp[ab] - ab.sign() * s / 4.0);
    // Restore exactness lost to rounding.
    u.s22 = u.s11 + u.s12 + u.s21;
    (u, s / 4.0)
}

/// A test factor `R = (z - B) / z` for the truncated Bell function
/// `B = sign_ab g_ab(l) / p_ab`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFactor {
    pub params: TruncationParams,
    pub dist: SettingsDistribution,
    pub z: f64,
}

impl TestFactor {
    /// Truncated Bell value for a trial at `ab` whose CH value is `l`.
    #[inline]
    pub fn bell(&self, ab: SettingsPair, l: f64) -> f64 {
        ab.sign() * self.params.g(ab, l) / self.dist.prob(ab)
    }

    #[inline]
    pub fn value(&self, ab: SettingsPair, l: f64) -> f64 {
        (self.z - self.bell(ab, l)) / self.z
    }

    /// `sum_ab p_ab mean(R | ab)` over grouped training values.
    pub fn predicted_mean(&self, training: &PerSetting<Vec<f64>>) -> f64 {
        SettingsPair::ALL
            .iter()
            .map(|&ab| {
                let v = &training[ab];
                self.dist.prob(ab) * v.iter().map(|&l| self.value(ab, l)).sum::<f64>() / v.len() as f64
            })
            .sum()
    }
}

/// Upper bound `z = max((c - u_ab) / p_ab for ab != 22, u_22 / p_22)`.
pub fn make_test_factor(params: TruncationParams, dist: SettingsDistribution) -> Result<TestFactor> {
    let mut z = params.u.s22 / dist.prob(SettingsPair::S22);
    for ab in [SettingsPair::S11, SettingsPair::S12, SettingsPair::S21] {
        z = z.max((params.c - params.u[ab]) / dist.prob(ab));
    }
    if !(z > 0.0) {
        return Err(Error::invalid("z", format!("test factor bound {z} is not positive")));
    }
    Ok(TestFactor { params, dist, z })
}

/// One candidate per fraction, with `w_ab = fraction * sd_ab`. Candidates
/// whose truncation is pathological (negative `c`) are skipped.
pub fn make_candidates(
    training: &PerSetting<Vec<f64>>,
    fractions: &[f64],
    dist: &SettingsDistribution,
) -> Result<Vec<TestFactor>> {
    for ab in SettingsPair::ALL {
        if training[ab].is_empty() {
            return Err(Error::EmptySettingsClass(ab));
        }
    }
    let sd = training.map(|_, v| per_setting_stats(v).1);
    let mut out = Vec::new();
    for &frac in fractions {
        match choose_truncation(training, sd.map(|_, &s| frac * s)) {
            Ok(p) => out.push(make_test_factor(p, dist.clone())?),
            Err(Error::InvalidParameter { name: "c", .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// A CH function composed with a truncation tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Truncated<L> {
    pub base: L,
    pub params: TruncationParams,
}

impl<O: ?Sized, L: ChFunction<O>> ChFunction<O> for Truncated<L> {
    fn eval(&self, ab: SettingsPair, x: &O, y: &O) -> f64 {
        self.params.g(ab, self.base.eval(ab, x, y))
    }
}
