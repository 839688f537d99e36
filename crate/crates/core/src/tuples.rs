//! Function-tuples: four real functions `f_ab`, one per settings pair, with
//!
//! ```text
//! f_22(x + y + z) <= f_21(x) + f_11(y) + f_12(z)   for all real x, y, z.
//! ```
//!
//! Tuples are expression trees of primitive constructors and closure
//! combinators. Every combinator checks its precondition, so a tuple built
//! only from admitted primitives is in the class by construction;
//! [`verify_t4`] checks membership empirically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trial::{PerSetting, SettingsPair};

/// Absolute tolerance for exactness constraints on parameters.
pub const EXACTNESS_TOL: f64 = 1e-12;

/// Parameters of a linear-edge window tuple.
///
/// `f_ab(x) = min(1, max(0, m_h (x - t_h,ab), m_l (t_l,ab - x)))`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearEdgeWindowParams {
    pub t_l: PerSetting<f64>,
    pub t_h: PerSetting<f64>,
    pub m_l: f64,
    pub m_h: f64,
}

impl LinearEdgeWindowParams {
    /// Reflection-symmetric window: threshold `t` and slope `m` for the
    /// settings other than 22, threshold `3t` at 22.
    pub fn symmetric(t: f64, m: f64) -> Self {
        let th = PerSetting::new(t, t, t, 3.0 * t);
        LinearEdgeWindowParams {
            t_l: th.map(|_, &x| -x),
            t_h: th,
            m_l: m,
            m_h: m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m_l > 0.0 && self.m_h > 0.0) || !self.m_l.is_finite() || !self.m_h.is_finite() {
            return Err(Error::invalid("linear_edge_window", "slopes must be positive and finite"));
        }
        for ab in SettingsPair::ALL {
            if self.t_l[ab] > self.t_h[ab] {
                return Err(Error::invalid(
                    "linear_edge_window",
                    format!("t_l > t_h at setting {ab}"),
                ));
            }
        }
        if !self.t_l.is_exact(EXACTNESS_TOL) {
            return Err(Error::invalid("linear_edge_window", "t_l violates exactness"));
        }
        if !self.t_h.is_exact(EXACTNESS_TOL) {
            return Err(Error::invalid("linear_edge_window", "t_h violates exactness"));
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, ab: SettingsPair, x: f64) -> f64 {
        let hi = self.m_h * (x - self.t_h[ab]);
        let lo = self.m_l * (self.t_l[ab] - x);
        hi.max(lo).clamp(0.0, 1.0)
    }

    /// Smallest `u` with `f_ab(x) >= 1` for all `|x| > u` and all `ab`.
    pub fn unit_radius(&self) -> f64 {
        SettingsPair::ALL
            .iter()
            .map(|&ab| (self.t_h[ab] + 1.0 / self.m_h).max(-self.t_l[ab] + 1.0 / self.m_l))
            .fold(0.0, f64::max)
    }
}

/// Expression tree for a function-tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TupleExpr {
    /// `f_ab(x) = lambda x`
    Linear { lambda: f64 },
    /// `f_ab(x) = c_ab` with `c_22 = c_11 + c_12 + c_21`.
    Constant { c: PerSetting<f64> },
    /// `f_ab(x) = [x >= 0]`
    Step,
    /// `f_ab(x) = |x|`
    Abs,
    /// `f_ab(x) = [x >= t_ab]` with exact thresholds.
    Threshold { t: PerSetting<f64> },
    /// `f_ab(x) = max(m (x - t_ab), c_ab)`
    HalfLinear {
        m: f64,
        t: PerSetting<f64>,
        c: PerSetting<f64>,
    },
    LinearEdgeWindow(LinearEdgeWindowParams),
    /// `f_ab(x) = [|x| > w_ab]` with `w_22 >= w_11 + w_12 + w_21`.
    HardWindow { w: PerSetting<f64> },
    /// `f_ab(x) = [|x| >= w]` for every setting. Not a member of the class;
    /// this is the conventional coincidence window.
    CoincidenceWindow { w: f64 },
    Sum { a: Box<TupleExpr>, b: Box<TupleExpr> },
    Scale { factor: f64, inner: Box<TupleExpr> },
    /// `f'_ab(x) = f_ab(-x)`
    Reflect { inner: Box<TupleExpr> },
    Max { a: Box<TupleExpr>, b: Box<TupleExpr> },
    /// `f'_ab(x) = f_ab(x + t_ab)` with exact offsets.
    Shift {
        t: PerSetting<f64>,
        inner: Box<TupleExpr>,
    },
    /// `f'_ab(x) = min(f_ab(x), c)` for nonnegative inner tuples.
    ClampAbove { c: f64, inner: Box<TupleExpr> },
    /// `f''_ab = outer_ab o inner_ab`
    Compose {
        outer: Box<TupleExpr>,
        inner: Box<TupleExpr>,
    },
}

/// Monotonicity of one component, tracked structurally.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    Constant,
    NonDecreasing,
    NonIncreasing,
    Unknown,
}

impl Monotonicity {
    fn flip(self) -> Self {
        match self {
            Self::NonDecreasing => Self::NonIncreasing,
            Self::NonIncreasing => Self::NonDecreasing,
            m => m,
        }
    }

    /// Monotonicity of `f + g` (also of `max(f, g)` and `min(f, g)`).
    fn join(self, other: Self) -> Self {
        use Monotonicity::*;
        match (self, other) {
            (Constant, m) | (m, Constant) => m,
            (a, b) if a == b => a,
            _ => Unknown,
        }
    }

    fn compose(outer: Self, inner: Self) -> Self {
        use Monotonicity::*;
        match (outer, inner) {
            (Constant, _) | (_, Constant) => Constant,
            (Unknown, _) | (_, Unknown) => Unknown,
            (a, b) if a == b => NonDecreasing,
            _ => NonIncreasing,
        }
    }

    pub fn is_non_decreasing(self) -> bool {
        matches!(self, Self::Constant | Self::NonDecreasing)
    }
}

impl TupleExpr {
    pub fn eval(&self, ab: SettingsPair, x: f64) -> f64 {
        match self {
            TupleExpr::Linear { lambda } => lambda * x,
            TupleExpr::Constant { c } => c[ab],
            TupleExpr::Step => indicator(x >= 0.0),
            TupleExpr::Abs => x.abs(),
            TupleExpr::Threshold { t } => indicator(x >= t[ab]),
            TupleExpr::HalfLinear { m, t, c } => (m * (x - t[ab])).max(c[ab]),
            TupleExpr::LinearEdgeWindow(p) => p.eval(ab, x),
            TupleExpr::HardWindow { w } => indicator(x.abs() > w[ab]),
            TupleExpr::CoincidenceWindow { w } => indicator(x.abs() >= *w),
            TupleExpr::Sum { a: f, b: g } => f.eval(ab, x) + g.eval(ab, x),
            TupleExpr::Scale { factor, inner } => factor * inner.eval(ab, x),
            TupleExpr::Reflect { inner: f } => f.eval(ab, -x),
            TupleExpr::Max { a: f, b: g } => f.eval(ab, x).max(g.eval(ab, x)),
            TupleExpr::Shift { t, inner } => inner.eval(ab, x + t[ab]),
            TupleExpr::ClampAbove { c, inner } => inner.eval(ab, x).min(*c),
            TupleExpr::Compose { outer, inner } => outer.eval(ab, inner.eval(ab, x)),
        }
    }

    /// A lower bound on component `ab` (possibly `-inf`).
    pub fn lower_bound(&self, ab: SettingsPair) -> f64 {
        match self {
            TupleExpr::Linear { lambda } => {
                if *lambda == 0.0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            TupleExpr::Constant { c } => c[ab],
            TupleExpr::Step
            | TupleExpr::Abs
            | TupleExpr::Threshold { .. }
            | TupleExpr::LinearEdgeWindow(_)
            | TupleExpr::HardWindow { .. }
            | TupleExpr::CoincidenceWindow { .. } => 0.0,
            TupleExpr::HalfLinear { c, .. } => c[ab],
            TupleExpr::Sum { a: f, b: g } => f.lower_bound(ab) + g.lower_bound(ab),
            TupleExpr::Scale { factor, inner } => factor * inner.lower_bound(ab),
            TupleExpr::Reflect { inner: f } | TupleExpr::Shift { inner: f, .. } => f.lower_bound(ab),
            TupleExpr::Max { a: f, b: g } => f.lower_bound(ab).max(g.lower_bound(ab)),
            TupleExpr::ClampAbove { c, inner } => inner.lower_bound(ab).min(*c),
            TupleExpr::Compose { outer, .. } => outer.lower_bound(ab),
        }
    }

    /// An upper bound on component `ab` (possibly `+inf`).
    pub fn upper_bound(&self, ab: SettingsPair) -> f64 {
        match self {
            TupleExpr::Linear { lambda } => {
                if *lambda == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            TupleExpr::Constant { c } => c[ab],
            TupleExpr::Step
            | TupleExpr::Threshold { .. }
            | TupleExpr::LinearEdgeWindow(_)
            | TupleExpr::HardWindow { .. }
            | TupleExpr::CoincidenceWindow { .. } => 1.0,
            TupleExpr::Abs | TupleExpr::HalfLinear { .. } => f64::INFINITY,
            TupleExpr::Sum { a: f, b: g } => f.upper_bound(ab) + g.upper_bound(ab),
            TupleExpr::Scale { factor, inner } => factor * inner.upper_bound(ab),
            TupleExpr::Reflect { inner: f } | TupleExpr::Shift { inner: f, .. } => f.upper_bound(ab),
            TupleExpr::Max { a: f, b: g } => f.upper_bound(ab).max(g.upper_bound(ab)),
            TupleExpr::ClampAbove { c, inner } => inner.upper_bound(ab).min(*c),
            TupleExpr::Compose { outer, .. } => outer.upper_bound(ab),
        }
    }

    pub fn monotonicity(&self, ab: SettingsPair) -> Monotonicity {
        use Monotonicity::*;
        match self {
            TupleExpr::Linear { lambda } => {
                if *lambda > 0.0 {
                    NonDecreasing
                } else if *lambda < 0.0 {
                    NonIncreasing
                } else {
                    Constant
                }
            }
            TupleExpr::Constant { .. } => Constant,
            TupleExpr::Step | TupleExpr::Threshold { .. } | TupleExpr::HalfLinear { .. } => {
                NonDecreasing
            }
            TupleExpr::Abs
            | TupleExpr::LinearEdgeWindow(_)
            | TupleExpr::HardWindow { .. }
            | TupleExpr::CoincidenceWindow { .. } => Unknown,
            TupleExpr::Sum { a: f, b: g } | TupleExpr::Max { a: f, b: g } => {
                f.monotonicity(ab).join(g.monotonicity(ab))
            }
            TupleExpr::Scale { inner, .. }
            | TupleExpr::Shift { inner, .. }
            | TupleExpr::ClampAbove { inner, .. } => inner.monotonicity(ab),
            TupleExpr::Reflect { inner: f } => f.monotonicity(ab).flip(),
            TupleExpr::Compose { outer, inner } => {
                Monotonicity::compose(outer.monotonicity(ab), inner.monotonicity(ab))
            }
        }
    }

    /// Known kink and jump locations of component `ab`.
    pub fn breakpoints(&self, ab: SettingsPair) -> Vec<f64> {
        match self {
            TupleExpr::Linear { .. } | TupleExpr::Constant { .. } => vec![],
            TupleExpr::Step | TupleExpr::Abs => vec![0.0],
            TupleExpr::Threshold { t } => vec![t[ab]],
            TupleExpr::HalfLinear { m, t, c } => vec![t[ab] + c[ab] / m],
            TupleExpr::LinearEdgeWindow(p) => vec![
                p.t_l[ab] - 1.0 / p.m_l,
                p.t_l[ab],
                p.t_h[ab],
                p.t_h[ab] + 1.0 / p.m_h,
            ],
            TupleExpr::HardWindow { w } => vec![-w[ab], w[ab]],
            TupleExpr::CoincidenceWindow { w } => vec![-w, *w],
            TupleExpr::Sum { a: f, b: g } | TupleExpr::Max { a: f, b: g } => {
                let mut v = f.breakpoints(ab);
                v.extend(g.breakpoints(ab));
                v
            }
            TupleExpr::Scale { inner, .. } | TupleExpr::ClampAbove { inner, .. } => {
                inner.breakpoints(ab)
            }
            TupleExpr::Reflect { inner: f } => f.breakpoints(ab).into_iter().map(|x| -x).collect(),
            TupleExpr::Shift { t, inner } => {
                inner.breakpoints(ab).into_iter().map(|x| x - t[ab]).collect()
            }
            TupleExpr::Compose { inner, .. } => inner.breakpoints(ab),
        }
    }

    /// Smallest known `u > 0` with `f_ab(x) >= 1` for all `|x| > u` and all `ab`.
    pub fn unit_radius(&self) -> Option<f64> {
        match self {
            TupleExpr::LinearEdgeWindow(p) => Some(p.unit_radius()),
            TupleExpr::HardWindow { w } => Some(w.iter().map(|(_, &x)| x).fold(0.0, f64::max)),
            TupleExpr::CoincidenceWindow { w } => Some(*w),
            TupleExpr::Abs => Some(1.0),
            TupleExpr::Linear { .. }
            | TupleExpr::Constant { .. }
            | TupleExpr::Step
            | TupleExpr::Threshold { .. }
            | TupleExpr::HalfLinear { .. }
            | TupleExpr::Reflect { .. }
            | TupleExpr::Shift { .. }
            | TupleExpr::Compose { .. } => None,
            TupleExpr::Scale { factor, inner } => match **inner {
                TupleExpr::Abs if *factor > 0.0 => Some(1.0 / factor),
                _ if *factor >= 1.0 && inner.is_nonnegative() => inner.unit_radius(),
                _ => None,
            },
            TupleExpr::ClampAbove { c, inner } if *c >= 1.0 => inner.unit_radius(),
            TupleExpr::ClampAbove { .. } => None,
            TupleExpr::Max { a: f, b: g } => match (f.unit_radius(), g.unit_radius()) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            },
            TupleExpr::Sum { a: f, b: g } => {
                let mut r = None;
                if g.is_nonnegative() {
                    r = f.unit_radius();
                }
                if f.is_nonnegative() {
                    r = match (r, g.unit_radius()) {
                        (Some(a), Some(b)) => Some(a.min(b)),
                        (a, b) => a.or(b),
                    };
                }
                r
            }
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        SettingsPair::ALL.iter().all(|&ab| self.lower_bound(ab) >= 0.0)
    }
}

#[inline]
fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// A function-tuple together with whether it is admitted as a member of the
/// class. Only [`FunctionTuple::coincidence_window`] produces a non-member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TupleExpr", into = "TupleExpr")]
pub struct FunctionTuple {
    expr: TupleExpr,
    in_t4: bool,
}

impl FunctionTuple {
    fn member(expr: TupleExpr) -> Self {
        FunctionTuple { expr, in_t4: true }
    }

    /// Rebuilds a tuple from a stored expression, re-checking every
    /// constructor and combinator precondition.
    pub fn from_expr(expr: TupleExpr) -> Result<Self> {
        Ok(match expr {
            TupleExpr::Linear { lambda } => Self::linear(lambda),
            TupleExpr::Constant { c } => Self::exact_constant(c)?,
            TupleExpr::Step => Self::step(),
            TupleExpr::Abs => Self::abs(),
            TupleExpr::Threshold { t } => Self::threshold(t)?,
            TupleExpr::HalfLinear { m, t, c } => Self::half_linear(m, t, c)?,
            TupleExpr::LinearEdgeWindow(p) => Self::linear_edge_window(p)?,
            TupleExpr::HardWindow { w } => Self::hard_window(w)?,
            TupleExpr::CoincidenceWindow { w } => Self::coincidence_window(w)?,
            TupleExpr::Sum { a: f, b: g } => Self::from_expr(*f)?.add(&Self::from_expr(*g)?),
            TupleExpr::Scale { factor, inner } => Self::from_expr(*inner)?.scale(factor)?,
            TupleExpr::Reflect { inner: f } => Self::from_expr(*f)?.reflect(),
            TupleExpr::Max { a: f, b: g } => Self::from_expr(*f)?.max(&Self::from_expr(*g)?),
            TupleExpr::Shift { t, inner } => Self::from_expr(*inner)?.shift(t)?,
            TupleExpr::ClampAbove { c, inner } => Self::from_expr(*inner)?.clamp_above(c)?,
            TupleExpr::Compose { outer, inner } => {
                Self::from_expr(*outer)?.compose(&Self::from_expr(*inner)?)?
            }
        })
    }

    pub fn expr(&self) -> &TupleExpr {
        &self.expr
    }

    /// Whether the tuple is admitted as a member of the class.
    pub fn is_member(&self) -> bool {
        self.in_t4
    }

    #[inline]
    pub fn eval(&self, ab: SettingsPair, x: f64) -> f64 {
        self.expr.eval(ab, x)
    }

    pub fn unit_radius(&self) -> Option<f64> {
        self.expr.unit_radius()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.expr.is_nonnegative()
    }

    pub fn upper_bound(&self, ab: SettingsPair) -> f64 {
        self.expr.upper_bound(ab)
    }

    pub fn lower_bound(&self, ab: SettingsPair) -> f64 {
        self.expr.lower_bound(ab)
    }

    pub fn monotonicity(&self, ab: SettingsPair) -> Monotonicity {
        self.expr.monotonicity(ab)
    }

    // ---- primitives ----

    pub fn linear(lambda: f64) -> Self {
        Self::member(TupleExpr::Linear { lambda })
    }

    pub fn exact_constant(c: PerSetting<f64>) -> Result<Self> {
        if !c.is_exact(EXACTNESS_TOL) {
            return Err(Error::precondition("exact_constant", "c_22 != c_11 + c_12 + c_21"));
        }
        Ok(Self::member(TupleExpr::Constant { c }))
    }

    pub fn step() -> Self {
        Self::member(TupleExpr::Step)
    }

    pub fn abs() -> Self {
        Self::member(TupleExpr::Abs)
    }

    pub fn threshold(t: PerSetting<f64>) -> Result<Self> {
        if !t.is_exact(EXACTNESS_TOL) {
            return Err(Error::precondition("threshold", "t_22 != t_11 + t_12 + t_21"));
        }
        Ok(Self::member(TupleExpr::Threshold { t }))
    }

    pub fn half_linear(m: f64, t: PerSetting<f64>, c: PerSetting<f64>) -> Result<Self> {
        if !(m > 0.0) {
            return Err(Error::precondition("half_linear", "slope must be positive"));
        }
        if !t.is_exact(EXACTNESS_TOL) || !c.is_exact(EXACTNESS_TOL) {
            return Err(Error::precondition("half_linear", "thresholds and constants must be exact"));
        }
        Ok(Self::member(TupleExpr::HalfLinear { m, t, c }))
    }

    pub fn linear_edge_window(p: LinearEdgeWindowParams) -> Result<Self> {
        p.validate()?;
        Ok(Self::member(TupleExpr::LinearEdgeWindow(p)))
    }

    /// `f_ab(x) = [|x| > w_ab]`. Requires `w_22 >= w_11 + w_12 + w_21`.
    pub fn hard_window(w: PerSetting<f64>) -> Result<Self> {
        if w.iter().any(|(_, &x)| !(x >= 0.0)) {
            return Err(Error::precondition("hard_window", "widths must be nonnegative"));
        }
        if w.s22 < w.s11 + w.s12 + w.s21 - EXACTNESS_TOL {
            return Err(Error::precondition(
                "hard_window",
                format!(
                    "w_22 = {} is smaller than w_11 + w_12 + w_21 = {}",
                    w.s22,
                    w.s11 + w.s12 + w.s21
                ),
            ));
        }
        Ok(Self::member(TupleExpr::HardWindow { w }))
    }

    /// The conventional equal-width coincidence window `[|x| >= w]`.
    /// Not a member of the class; LR soundness is not guaranteed.
    pub fn coincidence_window(w: f64) -> Result<Self> {
        if !(w > 0.0) {
            return Err(Error::invalid("w", "window width must be positive"));
        }
        Ok(FunctionTuple {
            expr: TupleExpr::CoincidenceWindow { w },
            in_t4: false,
        })
    }

    /// `min(lambda |x|, 1)`, used to compress training data.
    pub fn compression(lambda: f64) -> Result<Self> {
        Self::abs().scale(lambda)?.clamp_above(1.0)
    }

    // ---- closure combinators ----

    pub fn add(&self, other: &Self) -> Self {
        FunctionTuple {
            expr: TupleExpr::Sum {
                a: Box::new(self.expr.clone()),
                b: Box::new(other.expr.clone()),
            },
            in_t4: self.in_t4 && other.in_t4,
        }
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::precondition("scale", "factor must be positive"));
        }
        Ok(FunctionTuple {
            expr: TupleExpr::Scale {
                factor,
                inner: Box::new(self.expr.clone()),
            },
            in_t4: self.in_t4,
        })
    }

    pub fn reflect(&self) -> Self {
        FunctionTuple {
            expr: TupleExpr::Reflect {
                inner: Box::new(self.expr.clone()),
            },
            in_t4: self.in_t4,
        }
    }

    pub fn max(&self, other: &Self) -> Self {
        FunctionTuple {
            expr: TupleExpr::Max {
                a: Box::new(self.expr.clone()),
                b: Box::new(other.expr.clone()),
            },
            in_t4: self.in_t4 && other.in_t4,
        }
    }

    /// `f'_ab(x) = f_ab(x + t_ab)`; the offsets must be exact.
    pub fn shift(&self, t: PerSetting<f64>) -> Result<Self> {
        if !t.is_exact(EXACTNESS_TOL) {
            return Err(Error::precondition("shift", "offsets must form an exact tuple"));
        }
        Ok(FunctionTuple {
            expr: TupleExpr::Shift {
                t,
                inner: Box::new(self.expr.clone()),
            },
            in_t4: self.in_t4,
        })
    }

    /// `min(f_ab(x), c)`; requires a nonnegative tuple and `c >= 0`.
    pub fn clamp_above(&self, c: f64) -> Result<Self> {
        if !(c >= 0.0) {
            return Err(Error::precondition("clamp_above", "c must be nonnegative"));
        }
        if !self.is_nonnegative() {
            return Err(Error::precondition("clamp_above", "input tuple is not nonnegative"));
        }
        Ok(FunctionTuple {
            expr: TupleExpr::ClampAbove {
                c,
                inner: Box::new(self.expr.clone()),
            },
            in_t4: self.in_t4,
        })
    }

    /// `(self o inner)_ab = self_ab(inner_ab(x))`; requires the 22 component
    /// of `self` to be monotone non-decreasing.
    pub fn compose(&self, inner: &Self) -> Result<Self> {
        if !self.monotonicity(SettingsPair::S22).is_non_decreasing() {
            return Err(Error::precondition(
                "compose",
                "outer 22 component is not monotone non-decreasing",
            ));
        }
        Ok(FunctionTuple {
            expr: TupleExpr::Compose {
                outer: Box::new(self.expr.clone()),
                inner: Box::new(inner.expr.clone()),
            },
            in_t4: self.in_t4 && inner.in_t4,
        })
    }
}

impl TryFrom<TupleExpr> for FunctionTuple {
    type Error = Error;
    fn try_from(e: TupleExpr) -> Result<Self> {
        FunctionTuple::from_expr(e)
    }
}

impl From<FunctionTuple> for TupleExpr {
    fn from(f: FunctionTuple) -> TupleExpr {
        f.expr
    }
}

/// Primitive constructor kinds, for the name-plus-parameters entry point.
#[derive(Debug, Clone, PartialEq)]
pub enum PrimitiveKind {
    Linear(f64),
    ExactConstant(PerSetting<f64>),
    Step,
    Abs,
    Threshold(PerSetting<f64>),
    HalfLinear {
        m: f64,
        t: PerSetting<f64>,
        c: PerSetting<f64>,
    },
}

pub fn make_primitive(kind: PrimitiveKind) -> Result<FunctionTuple> {
    match kind {
        PrimitiveKind::Linear(l) => Ok(FunctionTuple::linear(l)),
        PrimitiveKind::ExactConstant(c) => FunctionTuple::exact_constant(c),
        PrimitiveKind::Step => Ok(FunctionTuple::step()),
        PrimitiveKind::Abs => Ok(FunctionTuple::abs()),
        PrimitiveKind::Threshold(t) => FunctionTuple::threshold(t),
        PrimitiveKind::HalfLinear { m, t, c } => FunctionTuple::half_linear(m, t, c),
    }
}

pub fn make_linear_edge_window(p: LinearEdgeWindowParams) -> Result<FunctionTuple> {
    FunctionTuple::linear_edge_window(p)
}

pub fn make_hard_window(w: PerSetting<f64>) -> Result<FunctionTuple> {
    FunctionTuple::hard_window(w)
}

/// Result of an empirical membership check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verification {
    Pass,
    Counterexample { x: f64, y: f64, z: f64, lhs: f64, rhs: f64 },
}

impl Verification {
    pub fn passed(&self) -> bool {
        matches!(self, Verification::Pass)
    }
}

/// Violation tolerance used by [`verify_t4`].
pub const VERIFY_TOL: f64 = 1e-9;
const KINK_OFFSET: f64 = 1e-6;

/// Checks the defining inequality on `samples` random triples drawn
/// uniformly from `range`, plus a deterministic grid built from the
/// components' breakpoints (each shifted by +-1e-6), including triples whose
/// sum lands next to a breakpoint of the 22 component.
///
/// Returns the largest violation found, if any exceeds [`VERIFY_TOL`].
pub fn verify_t4(f: &FunctionTuple, range: (f64, f64), samples: usize, seed: u64) -> Verification {
    use SettingsPair as S;
    let check = |x: f64, y: f64, z: f64| {
        let lhs = f.eval(S::S22, x + y + z);
        let rhs = f.eval(S::S21, x) + f.eval(S::S11, y) + f.eval(S::S12, z);
        (lhs - rhs, lhs, rhs)
    };
    let mut worst: Option<(f64, Verification)> = None;
    let mut consider = |x: f64, y: f64, z: f64| {
        let (gap, lhs, rhs) = check(x, y, z);
        if gap > VERIFY_TOL && worst.as_ref().is_none_or(|(g, _)| gap > *g) {
            worst = Some((gap, Verification::Counterexample { x, y, z, lhs, rhs }));
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = range;
    for _ in 0..samples {
        let x = rng.random_range(lo..hi);
        let y = rng.random_range(lo..hi);
        let z = rng.random_range(lo..hi);
        consider(x, y, z);
    }

    let grid = |ab: S| {
        let mut pts = vec![0.0, lo, hi];
        for b in f.expr().breakpoints(ab) {
            if b.is_finite() {
                pts.extend([b - KINK_OFFSET, b + KINK_OFFSET]);
            }
        }
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup();
        pts
    };
    let (gx, gy, gz, g22) = (grid(S::S21), grid(S::S11), grid(S::S12), grid(S::S22));
    for &x in &gx {
        for &y in &gy {
            for &z in &gz {
                consider(x, y, z);
            }
            for &s in &g22 {
                consider(x, y, s - x - y);
            }
        }
    }
    // Equal thirds of 22 breakpoints catch symmetric violations.
    for &s in &g22 {
        consider(s / 3.0, s / 3.0, s / 3.0);
    }

    worst.map(|(_, v)| v).unwrap_or(Verification::Pass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use SettingsPair as S;

    fn demo_window() -> FunctionTuple {
        let t_h = PerSetting::new(0.1, 0.1, 0.1, 0.3);
        FunctionTuple::linear_edge_window(LinearEdgeWindowParams {
            t_l: t_h.map(|_, &x| -x),
            t_h,
            m_l: 20.0,
            m_h: 20.0,
        })
        .unwrap()
    }

    #[test]
    fn linear_edge_window_values() {
        let f = demo_window();
        assert_eq!(f.eval(S::S11, 0.05), 0.0);
        assert!((f.eval(S::S11, 0.15) - 1.0).abs() < 1e-12);
        assert!((f.eval(S::S22, 0.32) - 0.4).abs() < 1e-12);
        assert!((f.eval(S::S22, -0.32) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn linear_edge_window_rejects_bad_params() {
        let mut p = LinearEdgeWindowParams::symmetric(0.1, 20.0);
        p.t_h.s22 = 0.31;
        assert!(FunctionTuple::linear_edge_window(p).is_err());
        let mut p = LinearEdgeWindowParams::symmetric(0.1, 20.0);
        p.m_l = 0.0;
        assert!(FunctionTuple::linear_edge_window(p).is_err());
        let mut p = LinearEdgeWindowParams::symmetric(0.1, 20.0);
        p.t_l.s11 = 0.2;
        p.t_l.s22 = 0.2 - 0.1 - 0.1;
        assert!(FunctionTuple::linear_edge_window(p).is_err());
    }

    #[test]
    fn primitive_values() {
        let abs = make_primitive(PrimitiveKind::Abs).unwrap();
        let step = make_primitive(PrimitiveKind::Step).unwrap();
        for ab in S::ALL {
            assert_eq!(abs.eval(ab, -3.0), 3.0);
            assert_eq!(abs.eval(ab, 0.0), 0.0);
            assert_eq!(step.eval(ab, 0.0), 1.0);
            assert_eq!(step.eval(ab, -0.1), 0.0);
        }
        let th = make_primitive(PrimitiveKind::Threshold(PerSetting::new(1.0, 1.0, 1.0, 3.0))).unwrap();
        assert_eq!(th.eval(S::S22, 2.9), 0.0);
        assert_eq!(th.eval(S::S21, 2.9), 1.0);
        assert!(make_primitive(PrimitiveKind::Threshold(PerSetting::new(1.0, 1.0, 1.0, 2.0))).is_err());
        assert_eq!(FunctionTuple::linear(2.0).eval(S::S12, 1.5), 3.0);
    }

    #[test]
    fn combinator_identities() {
        let abs = FunctionTuple::abs();
        let refl = abs.reflect();
        let lin = FunctionTuple::linear(1.0);
        let m = lin.max(&lin.reflect());
        let clamped = abs.clamp_above(1.0).unwrap();
        assert_eq!(clamped.eval(S::S11, 5.0), 1.0);
        for i in -50..=50 {
            let x = i as f64 * 0.13;
            for ab in S::ALL {
                assert_eq!(refl.eval(ab, x), abs.eval(ab, x));
                assert_eq!(m.eval(ab, x), abs.eval(ab, x));
            }
        }
        let shifted = FunctionTuple::step()
            .shift(PerSetting::new(-1.0, -1.0, -1.0, -3.0))
            .unwrap();
        let th = FunctionTuple::threshold(PerSetting::new(1.0, 1.0, 1.0, 3.0)).unwrap();
        for i in -40..=40 {
            let x = i as f64 * 0.1;
            for ab in S::ALL {
                assert_eq!(shifted.eval(ab, x), th.eval(ab, x));
            }
        }
    }

    #[test]
    fn combinator_preconditions() {
        let lin = FunctionTuple::linear(1.0);
        assert!(matches!(lin.clamp_above(1.0), Err(Error::Precondition { op: "clamp_above", .. })));
        assert!(FunctionTuple::abs().clamp_above(-1.0).is_err());
        assert!(matches!(
            FunctionTuple::abs().compose(&lin),
            Err(Error::Precondition { op: "compose", .. })
        ));
        assert!(FunctionTuple::step().shift(PerSetting::new(1.0, 0.0, 0.0, 0.0)).is_err());
        assert!(lin.scale(-1.0).is_err());
        assert!(lin.compose(&FunctionTuple::abs()).is_ok());
    }

    #[test]
    fn hard_window_values_and_precondition() {
        let f = make_hard_window(PerSetting::new(0.1, 0.1, 0.1, 0.3)).unwrap();
        assert_eq!(f.eval(S::S22, 0.25), 0.0);
        assert_eq!(f.eval(S::S12, 0.25), 1.0);
        let err = make_hard_window(PerSetting::splat(0.1)).unwrap_err();
        assert!(matches!(err, Error::Precondition { op: "hard_window", .. }));
    }

    #[test]
    fn equal_width_window_has_counterexample() {
        let f = FunctionTuple::coincidence_window(0.1).unwrap();
        assert!(!f.is_member());
        match verify_t4(&f, (-1.0, 1.0), 1000, 1) {
            Verification::Counterexample { x, y, z, lhs, rhs } => {
                assert!(lhs - rhs > VERIFY_TOL);
                assert_eq!(f.eval(S::S22, x + y + z), lhs);
            }
            Verification::Pass => panic!("expected counterexample"),
        }
        // The triple (0.08, 0.08, 0.08): lhs 1, rhs 0.
        let x = 0.08;
        assert_eq!(f.eval(S::S22, 3.0 * x), 1.0);
        assert_eq!(f.eval(S::S21, x) + f.eval(S::S11, x) + f.eval(S::S12, x), 0.0);
    }

    #[test]
    fn constructors_pass_verification() {
        let c = FunctionTuple::exact_constant(PerSetting::new(1.0, 1.0, 1.0, 3.0)).unwrap();
        assert!(verify_t4(&c, (-5.0, 5.0), 2000, 2).passed());
        assert!(verify_t4(&demo_window(), (-5.0, 5.0), 2000, 3).passed());
        let hw = make_hard_window(PerSetting::new(0.1, 0.1, 0.1, 0.3)).unwrap();
        assert!(verify_t4(&hw, (-1.0, 1.0), 2000, 4).passed());
    }

    #[test]
    fn unit_radius_of_supported_kinds() {
        let p = LinearEdgeWindowParams::symmetric(0.1, 20.0);
        assert!((p.unit_radius() - 0.35).abs() < 1e-12);
        let f = FunctionTuple::linear_edge_window(p).unwrap();
        assert_eq!(f.unit_radius(), Some(p.unit_radius()));
        for x in [0.3500001, 0.5, 3.0, -0.36] {
            for ab in S::ALL {
                assert!(f.eval(ab, x) >= 1.0);
            }
        }
        assert_eq!(FunctionTuple::compression(1.0).unwrap().unit_radius(), Some(1.0));
        assert_eq!(FunctionTuple::compression(4.0).unwrap().unit_radius(), Some(0.25));
        assert_eq!(FunctionTuple::linear(1.0).unit_radius(), None);
    }

    #[test]
    fn serde_replays_tuple() {
        let f = FunctionTuple::abs()
            .clamp_above(1.0)
            .unwrap()
            .max(&demo_window());
        let s = serde_json::to_string(f.expr()).unwrap();
        let back = FunctionTuple::from_expr(serde_json::from_str(&s).unwrap()).unwrap();
        assert_eq!(back, f);
        let bad = TupleExpr::ClampAbove {
            c: 1.0,
            inner: Box::new(TupleExpr::Linear { lambda: 1.0 }),
        };
        assert!(FunctionTuple::from_expr(bad).is_err());
    }

    proptest! {
        #[test]
        fn linear_edge_window_in_unit_interval(
            t in 0.0..1.0f64, m in 0.1..500.0f64, x in -10.0..10.0f64, i in 0..4usize
        ) {
            let f = FunctionTuple::linear_edge_window(LinearEdgeWindowParams::symmetric(t, m)).unwrap();
            let v = f.eval(S::from_index(i), x);
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn compose_keeps_22_monotone(
            m in 0.1..10.0f64, t in -1.0..1.0f64, x in -5.0..5.0f64, dx in 0.0..2.0f64
        ) {
            let inner = FunctionTuple::half_linear(
                m, PerSetting::new(t, t, t, 3.0 * t), PerSetting::new(0.0, 0.0, 0.0, 0.0)).unwrap();
            let outer = FunctionTuple::step().shift(PerSetting::new(-0.5, -0.5, -0.5, -1.5)).unwrap();
            let f = outer.compose(&inner).unwrap();
            prop_assert!(f.monotonicity(S::S22).is_non_decreasing());
            prop_assert!(f.eval(S::S22, x + dx) >= f.eval(S::S22, x));
        }
    }
}
