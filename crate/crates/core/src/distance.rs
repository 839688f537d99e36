//! Minimum-cost non-crossing matching distance between two timetag
//! sequences.
//!
//! For a tuple `f`, a settings pair `ab` and sequences `r`, `t`, the distance
//! is the minimum over partial non-crossing matchings `M` of
//!
//! ```text
//! m - |dom M| + sum_k f_ab(t_M(k) - r_k)
//! ```
//!
//! Unmatched tags of `r` cost 1 and unmatched tags of `t` cost nothing.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::trial::SettingsPair;
use crate::tuples::FunctionTuple;

/// A partial non-crossing matching, stored as 0-based index pairs `(k, M(k))`
/// into `r` and `t`, in increasing order of `k`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
}

impl Matching {
    pub fn new(pairs: Vec<(usize, usize)>) -> Self {
        Matching { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Checks index ranges and strict monotonicity in both coordinates.
    pub fn validate(&self, m: usize, n: usize) -> Result<()> {
        let mut prev: Option<(usize, usize)> = None;
        for &(k, l) in &self.pairs {
            if k >= m || l >= n {
                return Err(Error::invalid(
                    "matching",
                    format!("pair ({k}, {l}) out of range for lengths ({m}, {n})"),
                ));
            }
            if let Some((pk, pl)) = prev {
                if k <= pk || l <= pl {
                    return Err(Error::invalid(
                        "matching",
                        format!("pair ({k}, {l}) crosses or repeats ({pk}, {pl})"),
                    ));
                }
            }
            prev = Some((k, l));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceResult {
    pub cost: f64,
    pub matching: Matching,
}

/// Cost of a given matching.
pub fn matching_cost(
    f: &FunctionTuple,
    ab: SettingsPair,
    matching: &Matching,
    r: &[f64],
    t: &[f64],
) -> Result<f64> {
    matching.validate(r.len(), t.len())?;
    let matched: f64 = matching
        .pairs
        .iter()
        .map(|&(k, l)| f.eval(ab, t[l] - r[k]))
        .sum();
    Ok((r.len() - matching.len()) as f64 + matched)
}

/// Minimum cost and an achieving matching, using the full DP matrix.
///
/// Ties in backtracking prefer a match over deleting from `t` over deleting
/// from `r`.
pub fn min_cost(f: &FunctionTuple, ab: SettingsPair, r: &[f64], t: &[f64]) -> DistanceResult {
    min_cost_with(|x| f.eval(ab, x), r, t)
}

/// [`min_cost`] for an arbitrary pair cost function `g(t_l - r_k)`.
pub fn min_cost_with(g: impl Fn(f64) -> f64, r: &[f64], t: &[f64]) -> DistanceResult {
    let (m, n) = (r.len(), t.len());
    let w = n + 1;
    let mut c = vec![0.0f64; (m + 1) * w];
    for k in 1..=m {
        c[k * w] = k as f64;
        for l in 1..=n {
            let del_r = c[(k - 1) * w + l] + 1.0;
            let del_t = c[k * w + l - 1];
            let mat = c[(k - 1) * w + l - 1] + g(t[l - 1] - r[k - 1]);
            c[k * w + l] = del_r.min(del_t).min(mat);
        }
    }
    let cost = c[m * w + n];

    let mut pairs = Vec::new();
    let (mut k, mut l) = (m, n);
    while k > 0 {
        if l == 0 {
            k -= 1;
            continue;
        }
        let here = c[k * w + l];
        let mat = c[(k - 1) * w + l - 1] + g(t[l - 1] - r[k - 1]);
        if mat == here {
            pairs.push((k - 1, l - 1));
            k -= 1;
            l -= 1;
        } else if c[k * w + l - 1] == here {
            l -= 1;
        } else {
            k -= 1;
        }
    }
    pairs.reverse();
    DistanceResult {
        cost,
        matching: Matching { pairs },
    }
}

/// Minimum cost only, keeping a single DP row.
pub fn min_cost_value(f: &FunctionTuple, ab: SettingsPair, r: &[f64], t: &[f64]) -> f64 {
    min_cost_value_with(|x| f.eval(ab, x), r, t)
}

pub fn min_cost_value_with(g: impl Fn(f64) -> f64, r: &[f64], t: &[f64]) -> f64 {
    let n = t.len();
    let mut row = vec![0.0f64; n + 1];
    for (k, &rk) in r.iter().enumerate() {
        let mut diag = row[0];
        row[0] = (k + 1) as f64;
        for l in 1..=n {
            let up = row[l];
            let v = (up + 1.0).min(row[l - 1]).min(diag + g(t[l - 1] - rk));
            diag = up;
            row[l] = v;
        }
    }
    row[n]
}

/// A pair of index ranges into `r` and `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub r: Range<usize>,
    pub t: Range<usize>,
}

/// Splits both sequences at every gap longer than `u` in their merged
/// order. Tags in different segments are more than `u` apart.
pub fn split_at_gaps(r: &[f64], t: &[f64], u: f64) -> Vec<Segment> {
    let mut segs = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    let (mut si, mut sj) = (0usize, 0usize);
    let mut last: Option<f64> = None;
    while i < r.len() || j < t.len() {
        let take_r = j >= t.len() || (i < r.len() && r[i] <= t[j]);
        let x = if take_r { r[i] } else { t[j] };
        if let Some(p) = last {
            if x - p > u {
                segs.push(Segment { r: si..i, t: sj..j });
                si = i;
                sj = j;
            }
        }
        last = Some(x);
        if take_r {
            i += 1;
        } else {
            j += 1;
        }
    }
    if si < r.len() || sj < t.len() || segs.is_empty() {
        segs.push(Segment {
            r: si..r.len(),
            t: sj..t.len(),
        });
    }
    segs
}

/// The distance, split at gaps when the tuple has a known unit radius.
pub fn distance(f: &FunctionTuple, ab: SettingsPair, r: &[f64], t: &[f64]) -> f64 {
    match f.unit_radius() {
        Some(u) => distance_split(|x| f.eval(ab, x), r, t, u),
        None => min_cost_value(f, ab, r, t),
    }
}

/// Per-segment DP summed over [`split_at_gaps`] segments. The caller asserts
/// `g(x) >= 1` for `|x| > u`.
pub fn distance_split(g: impl Fn(f64) -> f64, r: &[f64], t: &[f64], u: f64) -> f64 {
    split_at_gaps(r, t, u)
        .into_iter()
        .map(|s| min_cost_value_with(&g, &r[s.r], &t[s.t]))
        .sum()
}
