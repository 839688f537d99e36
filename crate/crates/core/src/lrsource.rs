//! A local realistic source that mimics the one- and two-point statistics
//! of a jittery quantum Poisson source and exploits the coincidence
//! loophole at setting 22.
//!
//! Each trial builds all four sequences `t^X_c` before the settings are
//! known, so any CH Bell function has nonnegative expectation on its data.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simsrc::{poisson_arrivals, source_rng, OutcomeProbabilities, TrialSource, DEFAULT_LEAD};
use crate::trial::{LrAssignment, PerSetting, Setting, SettingsPair, TimetagSequence, TrialRecord};

/// Relative shortfall of the achieved hidden-coincidence rate tolerated by
/// [`calibrate_delta_c`].
pub const RATE_TOLERANCE: f64 = 0.01;

/// Density of the separation of two tags jittered independently and
/// uniformly on `[0, width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangleDensity {
    pub width: f64,
}

impl TriangleDensity {
    pub fn new(width: f64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::invalid("width", "must be positive"));
        }
        Ok(TriangleDensity { width })
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        ((1.0 - x.abs() / self.width) / self.width).max(0.0)
    }

    #[inline]
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        self.width * (rng.random::<f64>() - rng.random::<f64>())
    }
}

/// Perfectly correlated except at 22, where it is perfectly anticorrelated.
pub fn pr_box_probabilities() -> OutcomeProbabilities {
    OutcomeProbabilities {
        p: PerSetting::from_fn(|ab| {
            if ab == SettingsPair::S22 {
                [[0.0, 0.5], [0.5, 0.0]]
            } else {
                [[0.5, 0.0], [0.0, 0.5]]
            }
        }),
    }
}

/// Deterministic strategy `v` detects for party X at setting c iff the
/// corresponding bit is set: bit 0 = A1, 1 = A2, 2 = B1, 3 = B2.
#[inline]
pub fn strategy_detects_a(v: usize, a: Setting) -> bool {
    v >> a.index() & 1 == 1
}

#[inline]
pub fn strategy_detects_b(v: usize, b: Setting) -> bool {
    v >> (2 + b.index()) & 1 == 1
}

pub fn deterministic_probabilities(v: usize) -> OutcomeProbabilities {
    OutcomeProbabilities {
        p: PerSetting::from_fn(|ab| {
            let mut q = [[0.0; 2]; 2];
            q[strategy_detects_a(v, ab.a) as usize][strategy_detects_b(v, ab.b) as usize] = 1.0;
            q
        }),
    }
}

/// `p` with coincidences and double non-detections at 22 raised by `delta`.
pub fn template_probabilities(p: &OutcomeProbabilities, delta: f64) -> Result<OutcomeProbabilities> {
    let mut q = *p;
    let c = &mut q.p.s22;
    let max = c[0][1].min(c[1][0]);
    if !(0.0..=max + 1e-15).contains(&delta) {
        return Err(Error::invalid("delta_c", format!("{delta} outside [0, {max}]")));
    }
    c[1][1] += delta;
    c[0][0] += delta;
    c[0][1] = (c[0][1] - delta).max(0.0);
    c[1][0] = (c[1][0] - delta).max(0.0);
    Ok(q)
}

/// `p' = lambda_lr p_lr + lambda_pr p_pr` with `lambda_lr` maximal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub lambda_lr: f64,
    pub lambda_pr: f64,
    /// Unnormalized weights of the 16 deterministic strategies; they sum to
    /// `lambda_lr`.
    pub q: [f64; 16],
}

impl Decomposition {
    /// The normalized LR component, if `lambda_lr > 0`.
    pub fn p_lr(&self) -> Option<OutcomeProbabilities> {
        if self.lambda_lr <= 0.0 {
            return None;
        }
        Some(OutcomeProbabilities {
            p: PerSetting::from_fn(|ab| {
                let mut c = [[0.0; 2]; 2];
                for (v, &w) in self.q.iter().enumerate() {
                    c[strategy_detects_a(v, ab.a) as usize][strategy_detects_b(v, ab.b) as usize] += w / self.lambda_lr;
                }
                c
            }),
        })
    }

    /// Largest entrywise deviation of the recombined mixture from `p`.
    pub fn residual(&self, p: &OutcomeProbabilities) -> f64 {
        let pr = pr_box_probabilities();
        let mut e: f64 = 0.0;
        for ab in SettingsPair::ALL {
            for oa in 0..2 {
                for ob in 0..2 {
                    let mut m = self.lambda_pr * pr.p[ab][oa][ob];
                    for (v, &w) in self.q.iter().enumerate() {
                        if strategy_detects_a(v, ab.a) as usize == oa && strategy_detects_b(v, ab.b) as usize == ob {
                            m += w;
                        }
                    }
                    e = e.max((m - p.p[ab][oa][ob]).abs());
                }
            }
        }
        e
    }
}

/// Solves the decomposition LP over the 16 deterministic strategies and the
/// fixed PR box.
pub fn decompose_template(p: &OutcomeProbabilities) -> Result<Decomposition> {
    if p.consistency_error() > 1e-9 {
        return Err(Error::precondition("decompose_template", "distribution is not non-signaling"));
    }
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let q: Vec<_> = (0..16).map(|_| lp.add_var(1.0, (0.0, 1.0))).collect();
    let l_pr = lp.add_var(0.0, (0.0, 1.0));

    // A non-signaling binary behaviour is fixed by its four marginals and
    // four coincidence probabilities, plus normalization.
    let mut norm: Vec<_> = q.iter().map(|&x| (x, 1.0)).collect();
    norm.push((l_pr, 1.0));
    lp.add_constraint(norm.as_slice(), ComparisonOp::Eq, 1.0);
    for s in Setting::ALL {
        let row_a: Vec<_> = (0..16)
            .filter(|&v| strategy_detects_a(v, s))
            .map(|v| (q[v], 1.0))
            .chain([(l_pr, 0.5)])
            .collect();
        lp.add_constraint(row_a.as_slice(), ComparisonOp::Eq, p.p_a(s));
        let row_b: Vec<_> = (0..16)
            .filter(|&v| strategy_detects_b(v, s))
            .map(|v| (q[v], 1.0))
            .chain([(l_pr, 0.5)])
            .collect();
        lp.add_constraint(row_b.as_slice(), ComparisonOp::Eq, p.p_b(s));
    }
    for ab in SettingsPair::ALL {
        let pr11 = if ab == SettingsPair::S22 { 0.0 } else { 0.5 };
        let row: Vec<_> = (0..16)
            .filter(|&v| strategy_detects_a(v, ab.a) && strategy_detects_b(v, ab.b))
            .map(|v| (q[v], 1.0))
            .chain([(l_pr, pr11)])
            .collect();
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, p.p[ab][1][1]);
    }
    let sol = lp.solve().map_err(|e| match e {
        microlp::Error::Infeasible => Error::Infeasible("template lies outside the LR + PR hull".into()),
        other => Error::Lp(other.to_string()),
    })?;
    let mut w = [0.0; 16];
    for (wi, &v) in w.iter_mut().zip(&q) {
        *wi = sol[v].max(0.0);
    }
    let d = Decomposition {
        lambda_lr: w.iter().sum(),
        lambda_pr: sol[l_pr].max(0.0),
        q: w,
    };
    let r = d.residual(p);
    if r > 1e-9 {
        return Err(Error::Lp(format!("decomposition residual {r:e}")));
    }
    Ok(d)
}

/// A calibrated template and everything the generator needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrTemplate {
    pub p_target: OutcomeProbabilities,
    pub delta_c: f64,
    pub p_prime: OutcomeProbabilities,
    pub decomposition: Decomposition,
    /// Width of the uniform jitter being imitated.
    pub jitter_width: f64,
    /// Upper limit on each tag's partner intensity, set by calibration.
    pub partner_cap: f64,
}

impl LrTemplate {
    pub fn new(p_target: OutcomeProbabilities, delta_c: f64, jitter_width: f64) -> Result<Self> {
        TriangleDensity::new(jitter_width)?;
        let p_prime = template_probabilities(&p_target, delta_c)?;
        let decomposition = decompose_template(&p_prime)?;
        let mut t = LrTemplate {
            p_target,
            delta_c,
            p_prime,
            decomposition,
            jitter_width,
            partner_cap: 0.0,
        };
        t.partner_cap = t.nominal_cap();
        Ok(t)
    }

    pub fn lambda_lr(&self) -> f64 {
        self.decomposition.lambda_lr
    }

    pub fn lambda_pr(&self) -> f64 {
        self.decomposition.lambda_pr
    }

    /// Target rate of hidden coincidences, `lambda_pr / 2` per unit time.
    pub fn hidden_rate(&self) -> f64 {
        self.lambda_pr() / 2.0
    }

    /// Bound on the partner intensity: B's rate at setting 2 less the
    /// original 22 coincidences.
    pub fn beta(&self) -> f64 {
        self.p_prime.p_b(Setting::S2) - self.p_prime.p[SettingsPair::S22][1][1]
    }

    /// Per-tag partner intensity that would hit [`Self::hidden_rate`] if
    /// the rate bound never bound, limited by [`Self::max_cap`].
    pub fn nominal_cap(&self) -> f64 {
        let f = self.hidden_rate() / self.p_prime.p_a(Setting::S2);
        let c = if f >= 1.0 { f64::INFINITY } else { -(1.0 - f).ln() };
        c.min(self.max_cap())
    }

    /// Largest intensity a lone tag can carry under the rate bound.
    pub fn max_cap(&self) -> f64 {
        (self.beta() / self.partner_kernel().eval(0.0)).max(0.0)
    }

    pub fn intensity_cap(&self) -> f64 {
        self.partner_cap
    }

    pub fn partner_kernel(&self) -> TriangleDensity {
        TriangleDensity { width: 3.0 * self.jitter_width }
    }
}

/// Per-tag intensities `lambda(t)` maximizing their sum subject to
/// `sum_t lambda(t) J(s - t, 3 j_u) <= beta` for all `s` and
/// `0 <= lambda(t) <= cap`.
///
/// The left side is a sum of triangles, so its maxima sit at the triangle
/// peaks; constraining it at the tags themselves is exact.
pub fn partner_intensities(tags: &[f64], kernel: TriangleDensity, beta: f64, cap: f64) -> Vec<f64> {
    let mut out = vec![0.0; tags.len()];
    if beta <= 0.0 || cap <= 0.0 {
        return out;
    }
    let peak = kernel.eval(0.0);
    let single = cap.min(beta / peak);
    let mut start = 0;
    while start < tags.len() {
        let mut end = start + 1;
        while end < tags.len() && tags[end] - tags[end - 1] < kernel.width {
            end += 1;
        }
        let cluster = &tags[start..end];
        if cluster.len() == 1 {
            out[start] = single;
        } else {
            let lam = solve_cluster(cluster, kernel, beta, cap).unwrap_or_else(|| {
                // Uniform scaling is always feasible.
                let worst = cluster
                    .iter()
                    .map(|&s| cluster.iter().map(|&t| kernel.eval(s - t)).sum::<f64>())
                    .fold(0.0, f64::max);
                vec![cap.min(beta / worst); cluster.len()]
            });
            out[start..end].copy_from_slice(&lam);
        }
        start = end;
    }
    out
}

fn solve_cluster(tags: &[f64], kernel: TriangleDensity, beta: f64, cap: f64) -> Option<Vec<f64>> {
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let upper = if cap.is_finite() { cap } else { beta / kernel.eval(0.0) };
    let vars: Vec<_> = tags.iter().map(|_| lp.add_var(1.0, (0.0, upper))).collect();
    for &s in tags {
        let row: Vec<_> = tags
            .iter()
            .zip(&vars)
            .filter_map(|(&t, &v)| {
                let k = kernel.eval(s - t);
                (k > 0.0).then_some((v, k))
            })
            .collect();
        lp.add_constraint(row.as_slice(), ComparisonOp::Le, beta);
    }
    let sol = lp.solve().ok()?;
    Some(vars.iter().map(|&v| sol[v].clamp(0.0, upper)).collect())
}

/// Partner intensity `rho_1(s)` at `s` given sorted tags and intensities.
fn partner_density(s: f64, tags: &[f64], lam: &[f64], kernel: TriangleDensity) -> f64 {
    let lo = tags.partition_point(|&t| t <= s - kernel.width);
    let mut r = 0.0;
    for i in lo..tags.len() {
        if tags[i] >= s + kernel.width {
            break;
        }
        r += lam[i] * kernel.eval(s - tags[i]);
    }
    r
}

/// Monte Carlo estimate of the achievable hidden-coincidence rate per unit
/// time for the template.
pub fn achieved_hidden_rate(template: &LrTemplate, window: f64, trials: usize, seed: u64) -> f64 {
    let pa2 = template.p_prime.p_a(Setting::S2);
    let kernel = template.partner_kernel();
    let (beta, cap) = (template.beta(), template.intensity_cap());
    let total: f64 = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ i);
            let tags = poisson_arrivals(&mut rng, pa2, 0.0, window);
            partner_intensities(&tags, kernel, beta, cap)
                .iter()
                .map(|l| -(-l).exp_m1())
                .sum::<f64>()
        })
        .sum();
    total / (trials as f64 * window)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub delta_c: f64,
    pub lambda_lr: f64,
    pub lambda_pr: f64,
    pub target_rate: f64,
    pub achieved_rate: f64,
    pub beta: f64,
    pub partner_cap: f64,
}

/// Smallest `delta_c` for which the LP can reach the hidden-coincidence
/// rate `lambda_pr / 2` within [`RATE_TOLERANCE`], found by bisection with
/// the per-tag cap lifted. The cap is then lowered, again by bisection,
/// until the achieved rate meets the target.
pub fn calibrate_delta_c(
    p_target: &OutcomeProbabilities,
    jitter_width: f64,
    window: f64,
    mc_trials: usize,
    seed: u64,
) -> Result<(LrTemplate, CalibrationReport)> {
    let rate = |t: &LrTemplate| achieved_hidden_rate(t, window, mc_trials, seed);
    let uncapped = |delta: f64| -> Result<(LrTemplate, f64, bool)> {
        let mut t = LrTemplate::new(*p_target, delta, jitter_width)?;
        t.partner_cap = t.max_cap();
        let h = rate(&t);
        let ok = h >= (1.0 - RATE_TOLERANCE) * t.hidden_rate();
        Ok((t, h, ok))
    };
    let (mut best, mut h, feasible) = uncapped(0.0)?;
    if !feasible {
        let q = &p_target.p.s22;
        let (mut lo, mut hi) = (0.0, q[0][1].min(q[1][0]));
        let top = uncapped(hi)?;
        if !top.2 {
            return Err(Error::Infeasible(format!(
                "no delta_c in [0, {hi}] reaches the hidden-coincidence rate"
            )));
        }
        (best, h) = (top.0, top.1);
        while hi - lo > 1e-6 {
            let mid = 0.5 * (lo + hi);
            let (t, r, ok) = uncapped(mid)?;
            if ok {
                hi = mid;
                (best, h) = (t, r);
            } else {
                lo = mid;
            }
        }
    }
    // Lower the cap while the target is still met; the achieved rate is
    // nondecreasing in the cap.
    let target = best.hidden_rate();
    if h > target {
        let (mut lo, mut hi) = (best.nominal_cap(), best.max_cap());
        let mut t = best.clone();
        t.partner_cap = lo;
        let r_lo = rate(&t);
        if r_lo >= target {
            (best, h) = (t, r_lo);
        } else {
            for _ in 0..30 {
                let mid = 0.5 * (lo + hi);
                t.partner_cap = mid;
                let r = rate(&t);
                if r >= target {
                    hi = mid;
                    h = r;
                } else {
                    lo = mid;
                }
            }
            best.partner_cap = hi;
        }
    }
    let report = CalibrationReport {
        delta_c: best.delta_c,
        lambda_lr: best.lambda_lr(),
        lambda_pr: best.lambda_pr(),
        target_rate: target,
        achieved_rate: h,
        beta: best.beta(),
        partner_cap: best.partner_cap,
    };
    Ok((best, report))
}

/// The generator: trial windows, lead and the calibrated template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSource {
    pub template: LrTemplate,
    pub window: f64,
    pub lead: f64,
}

struct StrategyPool {
    dist: Option<WeightedIndex<f64>>,
    strategies: Vec<usize>,
    rate: f64,
}

impl StrategyPool {
    fn new(q: &[f64; 16], keep: impl Fn(usize) -> bool) -> Self {
        let strategies: Vec<usize> = (0..16).filter(|&v| keep(v) && q[v] > 0.0).collect();
        let weights: Vec<f64> = strategies.iter().map(|&v| q[v]).collect();
        StrategyPool {
            rate: weights.iter().sum(),
            dist: WeightedIndex::new(&weights).ok(),
            strategies,
        }
    }

    fn draw(&self, rng: &mut impl Rng) -> Option<usize> {
        self.dist.as_ref().map(|d| self.strategies[d.sample(rng)])
    }
}

#[derive(Default)]
struct Sequences {
    a: [Vec<f64>; 2],
    b: [Vec<f64>; 2],
}

impl Sequences {
    /// Tags for strategy `v` with true time `t0`, except those in `skip`.
    fn emit(&mut self, rng: &mut impl Rng, v: usize, t0: f64, ju: f64, skip_a2: bool, skip_b2: bool) {
        for s in Setting::ALL {
            let i = s.index();
            if strategy_detects_a(v, s) && !(skip_a2 && s == Setting::S2) {
                self.a[i].push(t0 + ju * rng.random::<f64>());
            }
            if strategy_detects_b(v, s) && !(skip_b2 && s == Setting::S2) {
                self.b[i].push(t0 + ju * rng.random::<f64>());
            }
        }
    }
}

impl LrSource {
    pub fn new(template: LrTemplate, window: f64) -> Result<Self> {
        if !(window > 0.0) {
            return Err(Error::invalid("window", "must be positive"));
        }
        Ok(LrSource { template, window, lead: DEFAULT_LEAD })
    }

    /// All four sequences for trial `id`, clipped to the window.
    pub fn assignment(&self, id: u64, master_seed: u64) -> LrAssignment<TimetagSequence> {
        let tp = &self.template;
        let ju = tp.jitter_width;
        let kernel = tp.partner_kernel();
        let (start, end) = (-self.lead, self.window + self.lead);
        let mut rng = source_rng(master_seed, id);
        let q = &tp.decomposition.q;
        let a2_pool = StrategyPool::new(q, |v| strategy_detects_a(v, Setting::S2));
        let b2_pool = StrategyPool::new(q, |v| {
            !strategy_detects_a(v, Setting::S2) && strategy_detects_b(v, Setting::S2)
        });
        let rest_pool = StrategyPool::new(q, |v| {
            !strategy_detects_a(v, Setting::S2) && !strategy_detects_b(v, Setting::S2)
        });
        let mut seq = Sequences::default();

        // A at setting 2 is a uniform process; each tag either seeds a
        // hidden coincidence or belongs to an LR strategy.
        let pa2 = tp.p_prime.p_a(Setting::S2);
        let beta = tp.beta();
        let a2 = poisson_arrivals(&mut rng, pa2, start, end);
        let lam = partner_intensities(&a2, kernel, beta, tp.intensity_cap());
        let mut extra_partners = Vec::new();
        for (&t, &l) in a2.iter().zip(&lam) {
            seq.a[1].push(t);
            let n = if l > 0.0 { Poisson::new(l).map_or(0.0, |p| p.sample(&mut rng)) as usize } else { 0 };
            if n > 0 {
                let x = kernel.sample(&mut rng);
                seq.b[0].push(t + x / 3.0);
                seq.a[0].push(t + 2.0 * x / 3.0);
                seq.b[1].push(t + x);
                for _ in 1..n {
                    extra_partners.push(t + kernel.sample(&mut rng));
                }
            } else if let Some(v) = a2_pool.draw(&mut rng) {
                let t0 = t - ju * rng.random::<f64>();
                seq.emit(&mut rng, v, t0, ju, true, false);
            }
        }

        // B singles at setting 2 fill the partner intensity up to beta, so
        // B's setting-2 process stays uniform.
        let mut b2_anchors = extra_partners;
        if beta > 0.0 {
            for s in poisson_arrivals(&mut rng, beta, start, end) {
                let keep = 1.0 - partner_density(s, &a2, &lam, kernel) / beta;
                if rng.random::<f64>() < keep {
                    b2_anchors.push(s);
                }
            }
        }
        for s in b2_anchors {
            seq.b[1].push(s);
            if let Some(v) = b2_pool.draw(&mut rng) {
                let t0 = s - ju * rng.random::<f64>();
                seq.emit(&mut rng, v, t0, ju, true, true);
            }
        }

        if rest_pool.rate > 0.0 {
            for t0 in poisson_arrivals(&mut rng, rest_pool.rate, start - ju, end) {
                let v = rest_pool.draw(&mut rng).expect("positive rate");
                seq.emit(&mut rng, v, t0, ju, true, true);
            }
        }

        let clip = |v: Vec<f64>| {
            let w = self.window;
            TimetagSequence::from_unsorted(v.into_iter().filter(|x| (0.0..=w).contains(x)).collect())
        };
        let [a1, a2] = seq.a;
        let [b1, b2] = seq.b;
        LrAssignment {
            a1: clip(a1),
            a2: clip(a2),
            b1: clip(b1),
            b2: clip(b2),
        }
    }
}

impl TrialSource for LrSource {
    fn generate(&self, id: u64, settings: SettingsPair, master_seed: u64) -> TrialRecord {
        self.assignment(id, master_seed).select(id, settings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simsrc::optimize_source;

    #[test]
    fn triangle_values() {
        let j = TriangleDensity::new(0.1).unwrap();
        assert!((j.eval(0.0) - 10.0).abs() < 1e-12);
        assert_eq!(j.eval(0.1), 0.0);
        assert_eq!(j.eval(-0.1), 0.0);
        let n = 2000;
        let integral: f64 = (0..n).map(|i| j.eval(-0.1 + (i as f64 + 0.5) * 0.2 / n as f64)).sum::<f64>() * 0.2 / n as f64;
        assert!((integral - 1.0).abs() < 1e-6);
    }

    #[test]
    fn triangle_histogram() {
        let j = TriangleDensity::new(0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 1_000_000;
        let bins = 20;
        let mut h = vec![0usize; bins];
        for _ in 0..n {
            let x = j.sample(&mut rng);
            h[((x + 0.1) / 0.2 * bins as f64).floor().min(bins as f64 - 1.0) as usize] += 1;
        }
        let dx = 0.2 / bins as f64;
        for (k, &c) in h.iter().enumerate() {
            let lo = -0.1 + k as f64 * dx;
            // Bin edges include the peak, so the trapezoid is exact.
            let mass = dx * 0.5 * (j.eval(lo) + j.eval(lo + dx));
            let mean = n as f64 * mass;
            assert!((c as f64 - mean).abs() < 5.0 * mean.sqrt(), "bin {k}: {c} vs {mean}");
        }
    }

    #[test]
    fn pr_box_decomposes_to_itself() {
        let d = decompose_template(&pr_box_probabilities()).unwrap();
        assert!(d.lambda_lr.abs() < 1e-9);
        assert!((d.lambda_pr - 1.0).abs() < 1e-9);
    }

    #[test]
    fn vertices_are_pure_lr() {
        for v in 0..16 {
            let d = decompose_template(&deterministic_probabilities(v)).unwrap();
            assert!((d.lambda_lr - 1.0).abs() < 1e-9, "{v}");
            assert!(d.lambda_pr.abs() < 1e-9);
        }
    }

    #[test]
    fn quantum_template_needs_pr() {
        let o = optimize_source(0.8).unwrap();
        let d = decompose_template(&o.probs).unwrap();
        assert!(d.lambda_pr > 0.0);
        assert!(d.residual(&o.probs) < 1e-9);
        let p_lr = d.p_lr().unwrap();
        assert!(p_lr.chsh() >= -2.0 - 1e-9);
    }

    #[test]
    fn template_keeps_marginals() {
        let o = optimize_source(0.8).unwrap();
        let max = o.probs.p.s22[0][1].min(o.probs.p.s22[1][0]);
        let t = template_probabilities(&o.probs, 0.5 * max).unwrap();
        assert!(t.consistency_error() < 1e-12);
        for s in Setting::ALL {
            assert!((t.p_a(s) - o.probs.p_a(s)).abs() < 1e-15);
            assert!((t.p_b(s) - o.probs.p_b(s)).abs() < 1e-15);
        }
        assert!(template_probabilities(&o.probs, max * 1.01).is_err());
    }

    #[test]
    fn intensities_respect_bound() {
        let k = TriangleDensity { width: 0.3 };
        let tags = [0.0, 0.1, 0.15, 0.5, 2.0, 2.05];
        let lam = partner_intensities(&tags, k, 0.3, 0.2);
        for i in 0..200 {
            let s = -0.5 + i as f64 * 0.0173;
            assert!(partner_density(s, &tags, &lam, k) <= 0.3 + 1e-9);
        }
        assert!(lam.iter().all(|&l| (0.0..=0.2 + 1e-12).contains(&l)));
        // An isolated tag takes the cap or the single-peak bound.
        assert!((lam[3] - 0.2f64.min(0.3 * 0.3)).abs() < 1e-12);
    }

    #[test]
    fn calibration_is_zero_at_wide_jitter() {
        let o = optimize_source(0.8).unwrap();
        let (t, r) = calibrate_delta_c(&o.probs, 0.11, 200.0, 20, 1).unwrap();
        assert!(r.delta_c < 1e-3, "{r:?}");
        assert!(t.delta_c <= o.probs.p.s22[0][1].min(o.probs.p.s22[1][0]));
    }

    #[test]
    fn calibration_positive_at_narrow_jitter() {
        let o = optimize_source(0.8).unwrap();
        let (t, r) = calibrate_delta_c(&o.probs, 0.02, 200.0, 20, 1).unwrap();
        assert!(r.delta_c > 0.0, "{r:?}");
        assert!(r.achieved_rate >= (1.0 - RATE_TOLERANCE) * r.target_rate);
        assert!(t.delta_c <= o.probs.p.s22[0][1].min(o.probs.p.s22[1][0]));
    }

    #[test]
    fn marginal_rates_match_template() {
        let o = optimize_source(0.8).unwrap();
        let (t, _) = calibrate_delta_c(&o.probs, 0.11, 100.0, 20, 2).unwrap();
        let src = LrSource::new(t.clone(), 100.0).unwrap();
        let n = 500;
        let mut counts = [[0.0f64; 2]; 2];
        let mut sq = [[0.0f64; 2]; 2];
        for id in 0..n {
            let asg = src.assignment(id, 6);
            for s in Setting::ALL {
                let ca = asg.outcome_a(s).len() as f64;
                let cb = asg.outcome_b(s).len() as f64;
                counts[0][s.index()] += ca;
                counts[1][s.index()] += cb;
                sq[0][s.index()] += ca * ca;
                sq[1][s.index()] += cb * cb;
            }
        }
        for s in Setting::ALL {
            for (x, target) in [(0, t.p_prime.p_a(s)), (1, t.p_prime.p_b(s))] {
                let mean = counts[x][s.index()] / n as f64;
                let var = sq[x][s.index()] / n as f64 - mean * mean;
                let se = (var / n as f64).sqrt();
                let want = target * 100.0;
                assert!((mean - want).abs() < 5.0 * se, "party {x} setting {s:?}: {mean} vs {want} (se {se})");
            }
        }
    }
}
