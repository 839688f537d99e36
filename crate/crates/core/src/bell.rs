//! CH functions, CH Bell functions and non-signaling adjustments.
//!
//! A CH function is a settings-indexed function `l_ab(x, y)` on pairs of
//! outcomes with
//!
//! ```text
//! 0 <= l_21(a2, b1) + l_11(b1, a1) + l_12(a1, b2) - l_22(a2, b2)
//! ```
//!
//! for every assignment `(a1, a2, b1, b2)`. The CH Bell function of `l`
//! evaluates `sign_ab * l~_ab(o_A, o_B) / p_ab` on a trial, where `l~` swaps
//! the arguments at setting 11 and the sign is negative only at 22.

use serde::{Deserialize, Serialize};

use crate::distance;
use crate::error::{Error, Result};
use crate::trial::{LrAssignment, PerSetting, SettingsDistribution, SettingsPair, TrialRecord};
use crate::tuples::FunctionTuple;

/// A settings-indexed function on outcome pairs, `l_ab(x, y)`.
pub trait ChFunction<O: ?Sized>: Sync {
    fn eval(&self, ab: SettingsPair, x: &O, y: &O) -> f64;

    /// `l~_ab(o_A, o_B)`: arguments swapped at setting 11.
    fn eval_trial(&self, ab: SettingsPair, oa: &O, ob: &O) -> f64 {
        if ab == SettingsPair::S11 {
            self.eval(ab, ob, oa)
        } else {
            self.eval(ab, oa, ob)
        }
    }
}

impl<O: ?Sized, L: ChFunction<O> + ?Sized> ChFunction<O> for &L {
    fn eval(&self, ab: SettingsPair, x: &O, y: &O) -> f64 {
        (**self).eval(ab, x, y)
    }
}

impl<O: ?Sized, L: ChFunction<O> + ?Sized> ChFunction<O> for Box<L> {
    fn eval(&self, ab: SettingsPair, x: &O, y: &O) -> f64 {
        (**self).eval(ab, x, y)
    }
}

/// `l_ab(x, y)` given by a closure.
pub struct ChFn<F>(pub F);

impl<O: ?Sized, F: Fn(SettingsPair, &O, &O) -> f64 + Sync> ChFunction<O> for ChFn<F> {
    fn eval(&self, ab: SettingsPair, x: &O, y: &O) -> f64 {
        (self.0)(ab, x, y)
    }
}

/// Binary outcomes, `0` for no detection and `1` for detection.
pub type Binary = u8;

/// Table-backed CH function on binary outcomes, `table[ab][x][y]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryTable {
    pub table: PerSetting<[[f64; 2]; 2]>,
}

impl BinaryTable {
    pub fn from_fn(f: impl Fn(SettingsPair, Binary, Binary) -> f64) -> Self {
        BinaryTable {
            table: PerSetting::from_fn(|ab| {
                [[f(ab, 0, 0), f(ab, 0, 1)], [f(ab, 1, 0), f(ab, 1, 1)]]
            }),
        }
    }

    /// `|x - y|` at every setting.
    pub fn abs_difference() -> Self {
        Self::from_fn(|_, x, y| (x as f64 - y as f64).abs())
    }

    /// `max(x - y, 0)` at every setting.
    pub fn positive_part() -> Self {
        Self::from_fn(|_, x, y| (x as f64 - y as f64).max(0.0))
    }
}

impl ChFunction<Binary> for BinaryTable {
    fn eval(&self, ab: SettingsPair, x: &Binary, y: &Binary) -> f64 {
        self.table[ab][*x as usize][*y as usize]
    }
}

/// The CH function induced by a function-tuple: `l_f,ab(r, t)` is the
/// minimum matching cost with pair cost `f_ab(t - r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TupleDistance {
    pub f: FunctionTuple,
}

impl TupleDistance {
    pub fn new(f: FunctionTuple) -> Self {
        TupleDistance { f }
    }
}

impl ChFunction<[f64]> for TupleDistance {
    fn eval(&self, ab: SettingsPair, r: &[f64], t: &[f64]) -> f64 {
        distance::distance(&self.f, ab, r, t)
    }
}

/// Map from an outcome to a real number. Adjustment functions act on it.
pub trait Countable {
    fn count(&self) -> f64;
}

impl Countable for Binary {
    fn count(&self) -> f64 {
        *self as f64
    }
}

impl Countable for [f64] {
    fn count(&self) -> f64 {
        self.len() as f64
    }
}

impl Countable for Vec<f64> {
    fn count(&self) -> f64 {
        self.len() as f64
    }
}

/// `x -> slope * x + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Affine {
    pub slope: f64,
    pub offset: f64,
}

impl Affine {
    pub const ZERO: Affine = Affine { slope: 0.0, offset: 0.0 };

    pub fn linear(slope: f64) -> Self {
        Affine { slope, offset: 0.0 }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.offset
    }
}

/// Adjustment functions `f_a` (party A) and `g_b` (party B), indexed by
/// setting.
///
/// `l'_11(x, y) = l_11(x, y) - f_1(y) - g_1(x)` and
/// `l'_ab(x, y) = l_ab(x, y) + f_a(x) + g_b(y)` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NsAdjustment {
    pub f: [Affine; 2],
    pub g: [Affine; 2],
}

impl NsAdjustment {
    pub fn none() -> Self {
        Self::default()
    }

    /// `f_2(x) = -x` only.
    pub fn remove_a2() -> Self {
        NsAdjustment {
            f: [Affine::ZERO, Affine::linear(-1.0)],
            g: [Affine::ZERO; 2],
        }
    }

    /// `f_2(x) = -x`, `f_1(x) = -x/2`, `g_1(x) = x/2`.
    pub fn standard() -> Self {
        NsAdjustment {
            f: [Affine::linear(-0.5), Affine::linear(-1.0)],
            g: [Affine::linear(0.5), Affine::ZERO],
        }
    }

    /// The additive term for setting `ab` at arguments whose counts are
    /// `cx`, `cy`.
    #[inline]
    pub fn term(&self, ab: SettingsPair, cx: f64, cy: f64) -> f64 {
        if ab == SettingsPair::S11 {
            -self.f[0].eval(cy) - self.g[0].eval(cx)
        } else {
            self.f[ab.a.index()].eval(cx) + self.g[ab.b.index()].eval(cy)
        }
    }
}

/// A CH function with a non-signaling adjustment applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjusted<L> {
    pub base: L,
    pub adjustment: NsAdjustment,
}

pub fn apply_ns_adjustment<L>(base: L, adjustment: NsAdjustment) -> Adjusted<L> {
    Adjusted { base, adjustment }
}

impl<O: Countable + ?Sized, L: ChFunction<O>> ChFunction<O> for Adjusted<L> {
    fn eval(&self, ab: SettingsPair, x: &O, y: &O) -> f64 {
        self.base.eval(ab, x, y) + self.adjustment.term(ab, x.count(), y.count())
    }
}

/// The CH function `l_B` of an arbitrary Bell function
/// `B(o_A, a, o_B, b)` under settings distribution `dist`.
pub struct FromBell<F> {
    pub b: F,
    pub dist: SettingsDistribution,
}

pub fn bell_to_ch<O: ?Sized, F>(b: F, dist: SettingsDistribution) -> FromBell<F>
where
    F: Fn(&O, SettingsPair, &O) -> f64,
{
    FromBell { b, dist }
}

impl<O: ?Sized, F: Fn(&O, SettingsPair, &O) -> f64 + Sync> ChFunction<O> for FromBell<F> {
    fn eval(&self, ab: SettingsPair, o1: &O, o2: &O) -> f64 {
        let p = self.dist.prob(ab);
        if ab == SettingsPair::S11 {
            (self.b)(o2, ab, o1) * p
        } else {
            ab.sign() * (self.b)(o1, ab, o2) * p
        }
    }
}

/// A CH function together with the settings distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct BellFunction<L> {
    pub l: L,
    pub dist: SettingsDistribution,
}

impl<L> BellFunction<L> {
    pub fn new(l: L, dist: SettingsDistribution) -> Self {
        BellFunction { l, dist }
    }

    pub fn uniform(l: L) -> Self {
        BellFunction {
            l,
            dist: SettingsDistribution::uniform(),
        }
    }

    /// `B_l(o_A, ab, o_B)`.
    pub fn value<O: ?Sized>(&self, ab: SettingsPair, oa: &O, ob: &O) -> f64
    where
        L: ChFunction<O>,
    {
        ab.sign() * self.l.eval_trial(ab, oa, ob) / self.dist.prob(ab)
    }

    pub fn trial_value(&self, t: &TrialRecord) -> f64
    where
        L: ChFunction<[f64]>,
    {
        self.value(t.settings, t.a.as_slice(), t.b.as_slice())
    }

    /// `sum_ab p_ab B(d^A_a, ab, d^B_b)`, the LR expectation of a
    /// deterministic assignment.
    pub fn assignment_value<O: ?Sized>(&self, d: &LrAssignment<&O>) -> f64
    where
        L: ChFunction<O>,
    {
        SettingsPair::ALL
            .iter()
            .map(|&ab| ab.sign() * self.l.eval_trial(ab, d.outcome_a(ab.a), d.outcome_b(ab.b)))
            .sum()
    }

    /// Expectation of the Bell function under a finite behaviour given by
    /// `(o_A, o_B, probability)` lists per setting.
    pub fn expectation<O>(&self, behaviour: &PerSetting<Vec<(O, O, f64)>>) -> f64
    where
        L: ChFunction<O>,
    {
        SettingsPair::ALL
            .iter()
            .map(|&ab| {
                behaviour[ab]
                    .iter()
                    .map(|(oa, ob, p)| p * ab.sign() * self.l.eval_trial(ab, oa, ob))
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Largest assignment count [`lr_oracle`] will enumerate.
pub const LR_ORACLE_BOUND: u128 = 100_000_000;

/// Minimum over every deterministic LR assignment on `space` of the
/// expected Bell value, together with a minimizing assignment.
pub fn lr_oracle<'a, O: ?Sized, L: ChFunction<O>>(
    bell: &BellFunction<L>,
    space: &[&'a O],
) -> Result<(f64, LrAssignment<&'a O>)> {
    let n = space.len();
    let size = (n as u128).pow(4);
    if size > LR_ORACLE_BOUND {
        return Err(Error::SpaceTooLarge {
            size,
            bound: LR_ORACLE_BOUND,
        });
    }
    if n == 0 {
        return Err(Error::invalid("space", "outcome space is empty"));
    }
    // table[ab][i][j] = sign * l~_ab(space[i] as A, space[j] as B)
    let tables: Vec<Vec<f64>> = SettingsPair::ALL
        .iter()
        .map(|&ab| {
            let mut t = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    t[i * n + j] = ab.sign() * bell.l.eval_trial(ab, space[i], space[j]);
                }
            }
            t
        })
        .collect();
    let (t11, t12, t21, t22) = (&tables[0], &tables[1], &tables[2], &tables[3]);
    let mut best = (f64::INFINITY, [0usize; 4]);
    for a1 in 0..n {
        for a2 in 0..n {
            for b1 in 0..n {
                let partial = t11[a1 * n + b1] + t21[a2 * n + b1];
                for b2 in 0..n {
                    let v = partial + t12[a1 * n + b2] + t22[a2 * n + b2];
                    if v < best.0 {
                        best = (v, [a1, a2, b1, b2]);
                    }
                }
            }
        }
    }
    let [a1, a2, b1, b2] = best.1;
    Ok((
        best.0,
        LrAssignment {
            a1: space[a1],
            a2: space[a2],
            b1: space[b1],
            b2: space[b2],
        },
    ))
}

/// The PR box: perfectly correlated at 11, 12 and 21, perfectly
/// anticorrelated at 22, uniform marginals.
pub fn pr_box() -> PerSetting<Vec<(Binary, Binary, f64)>> {
    PerSetting::from_fn(|ab| {
        if ab == SettingsPair::S22 {
            vec![(0, 1, 0.5), (1, 0, 0.5)]
        } else {
            vec![(0, 0, 0.5), (1, 1, 0.5)]
        }
    })
}

/// A binary behaviour from joint tables `p[ab][o_A][o_B]`.
pub fn binary_behaviour(p: &PerSetting<[[f64; 2]; 2]>) -> PerSetting<Vec<(Binary, Binary, f64)>> {
    p.map(|_, q| {
        let mut v = Vec::with_capacity(4);
        for x in 0..2u8 {
            for y in 0..2u8 {
                v.push((x, y, q[x as usize][y as usize]));
            }
        }
        v
    })
}

/// Binary outcome space `{0, 1}`.
pub const BINARY_SPACE: [&Binary; 2] = [&0, &1];

/// The CHSH Bell function with no-click mapped to -1, standardized so its
/// LR expectation is nonnegative: `sign'_ab o_A o_B / p_ab + 2`, with
/// `sign' = +1` at 22 and `-1` elsewhere, outcomes in `{-1, +1}`.
pub fn chsh_bell(dist: SettingsDistribution) -> impl Fn(&Binary, SettingsPair, &Binary) -> f64 + Sync {
    move |oa: &Binary, ab: SettingsPair, ob: &Binary| {
        let pm = |o: &Binary| if *o == 1 { 1.0 } else { -1.0 };
        -ab.sign() * pm(oa) * pm(ob) / dist.prob(ab) + 2.0
    }
}

/// The iterated-triangle value of `l` on an assignment.
pub fn iterated_triangle<O: ?Sized, L: ChFunction<O>>(l: &L, d: &LrAssignment<&O>) -> f64 {
    use SettingsPair as S;
    l.eval(S::S21, d.a2, d.b1) + l.eval(S::S11, d.b1, d.a1) + l.eval(S::S12, d.a1, d.b2)
        - l.eval(S::S22, d.a2, d.b2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::enumerate_sequences;
    use crate::tuples::LinearEdgeWindowParams;
    use SettingsPair as S;

    #[test]
    fn bell_value_examples() {
        let b = BellFunction::uniform(BinaryTable::abs_difference());
        assert_eq!(b.value(S::S22, &1, &1), 0.0);
        assert_eq!(b.value(S::S22, &1, &0), -4.0);
        assert_eq!(b.value(S::S11, &0, &1), 4.0);
        let pos = BellFunction::uniform(BinaryTable::positive_part());
        // Reversed arguments at 11: l(o_B, o_A) = max(1 - 0, 0).
        assert_eq!(pos.value(S::S11, &0, &1), 4.0);
        assert_eq!(pos.value(S::S11, &1, &0), 0.0);
    }

    #[test]
    fn abs_difference_oracle_and_pr_box() {
        let b = BellFunction::uniform(BinaryTable::abs_difference());
        let (min, _) = lr_oracle(&b, &BINARY_SPACE).unwrap();
        assert_eq!(min, 0.0);
        assert_eq!(b.expectation(&pr_box()), -1.0);
    }

    #[test]
    fn oracle_refuses_large_space() {
        let b = BellFunction::uniform(BinaryTable::abs_difference());
        let space: Vec<&Binary> = vec![&0; 101];
        assert!(matches!(lr_oracle(&b, &space), Err(Error::SpaceTooLarge { .. })));
    }

    #[test]
    fn zero_adjustment_is_identity() {
        let base = BinaryTable::positive_part();
        let adj = apply_ns_adjustment(base.clone(), NsAdjustment::none());
        for ab in S::ALL {
            for x in 0..2u8 {
                for y in 0..2u8 {
                    assert_eq!(adj.eval(ab, &x, &y), base.eval(ab, &x, &y));
                }
            }
        }
    }

    #[test]
    fn bell_to_ch_round_trip() {
        let dist = SettingsDistribution::uniform();
        let b = BellFunction::uniform(BinaryTable::abs_difference());
        let l = bell_to_ch(|oa: &Binary, ab, ob: &Binary| b.value(ab, oa, ob), dist);
        let back = BellFunction::uniform(l);
        for ab in S::ALL {
            for x in 0..2u8 {
                for y in 0..2u8 {
                    assert_eq!(back.value(ab, &x, &y), b.value(ab, &x, &y));
                }
            }
        }
    }

    #[test]
    fn constant_bell_function() {
        let dist = SettingsDistribution::uniform();
        let l = bell_to_ch(|_: &Binary, _, _: &Binary| 1.0, dist);
        for ab in S::ALL {
            assert_eq!(l.eval(ab, &0, &1).abs(), 0.25);
        }
        let (min, _) = lr_oracle(&BellFunction::uniform(l), &BINARY_SPACE).unwrap();
        assert!(min >= 0.0);
    }

    #[test]
    fn chsh_oracle_minimum_is_zero() {
        let dist = SettingsDistribution::uniform();
        let l = bell_to_ch(chsh_bell(dist.clone()), dist);
        let (min, _) = lr_oracle(&BellFunction::uniform(l), &BINARY_SPACE).unwrap();
        assert!(min.abs() < 1e-12, "{min}");
    }

    #[test]
    fn tuple_distance_on_small_timetag_space() {
        let f = FunctionTuple::linear_edge_window(LinearEdgeWindowParams::symmetric(0.1, 20.0)).unwrap();
        let seqs = enumerate_sequences(&[0.0, 0.5, 1.0], 2);
        let space: Vec<&[f64]> = seqs.iter().map(|s| s.as_slice()).collect();
        let bell = BellFunction::uniform(TupleDistance::new(f));
        let (min, _) = lr_oracle(&bell, &space).unwrap();
        assert!(min >= -1e-9);
    }

    #[test]
    fn trial_value_uses_reversed_args_at_11() {
        let f = FunctionTuple::compression(1.0).unwrap();
        let bell = BellFunction::uniform(TupleDistance::new(f));
        let t = TrialRecord {
            id: 0,
            settings: S::S11,
            a: crate::trial::TimetagSequence::empty(),
            b: crate::trial::TimetagSequence::new(vec![1.0]).unwrap(),
        };
        // r = B has one unmatched tag.
        assert_eq!(bell.trial_value(&t), 4.0);
    }
}
