//! Self-checks comparing the fast algorithms with the exhaustive oracles.
//! Run by `ttbell verify` and by the acceptance tests.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::bell::{
    apply_ns_adjustment, binary_behaviour, lr_oracle, Adjusted, Affine, Binary, BinaryTable, BellFunction,
    ChFunction, NsAdjustment, TupleDistance, BINARY_SPACE,
};
use crate::distance::{distance, min_cost, min_cost_value};
use crate::error::Result;
use crate::inference::{
    choose_truncation, make_candidates, make_test_factor, PbrState, SnrState, Truncated, TruncationParams,
    DEFAULT_W_FRACTIONS,
};
use crate::lrsource::deterministic_probabilities;
use crate::oracle::{brute_force_min_cost, enumerate_sequences};
use crate::pipeline::{ch_values, timetag_ch};
use crate::simsrc::{generate_trials, optimize_source, poisson_arrivals, JitterModel, QuantumSource, SourceConfig};
use crate::trial::{PerSetting, SettingsDistribution, SettingsPair};
use crate::tuples::{verify_t4, FunctionTuple, LinearEdgeWindowParams, Verification};

/// Outcome of one self-check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{s} {} ({:.1} s): {}", self.name, self.seconds, self.detail)
    }
}

fn timed(name: &str, body: impl FnOnce() -> Result<(bool, String)>) -> CheckReport {
    let t0 = Instant::now();
    let (passed, detail) = body().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckReport {
        name: name.to_string(),
        passed,
        detail,
        seconds: t0.elapsed().as_secs_f64(),
    }
}

/// Named tuples covering every constructor and closure combinator.
pub fn member_tuples() -> Result<Vec<(&'static str, FunctionTuple)>> {
    let exact = PerSetting::new(0.1, -0.2, 0.3, 0.2);
    let lew = FunctionTuple::linear_edge_window(LinearEdgeWindowParams::symmetric(0.1, 20.0))?;
    let asym = FunctionTuple::linear_edge_window(LinearEdgeWindowParams {
        t_l: PerSetting::new(-0.05, -0.1, -0.2, -0.35),
        t_h: PerSetting::new(0.2, 0.1, 0.05, 0.35),
        m_l: 8.0,
        m_h: 30.0,
    })?;
    let half = FunctionTuple::half_linear(3.0, exact, PerSetting::new(0.5, 0.0, 0.5, 1.0))?;
    let clamp_abs = FunctionTuple::abs().clamp_above(1.0)?;
    let step_shift = FunctionTuple::step().shift(PerSetting::new(-0.5, -0.5, -0.5, -1.5))?;
    Ok(vec![
        ("linear", FunctionTuple::linear(1.5)),
        ("exact_constant", FunctionTuple::exact_constant(PerSetting::new(1.0, -0.5, 2.0, 2.5))?),
        ("step", FunctionTuple::step()),
        ("abs", FunctionTuple::abs()),
        ("threshold", FunctionTuple::threshold(exact)?),
        ("half_linear", half.clone()),
        ("linear_edge_window", lew.clone()),
        ("linear_edge_window_asymmetric", asym.clone()),
        ("hard_window", FunctionTuple::hard_window(PerSetting::new(0.1, 0.1, 0.1, 0.3))?),
        ("compression", FunctionTuple::compression(2.0)?),
        ("add", lew.add(&half)),
        ("scale", asym.scale(2.5)?),
        ("reflect", asym.reflect()),
        ("max", lew.max(&FunctionTuple::linear(0.5))),
        ("shift", lew.shift(exact)?),
        ("clamp_above", clamp_abs.clone()),
        ("compose", step_shift.compose(&half)?),
        ("compose_linear", FunctionTuple::linear(2.0).compose(&asym)?),
    ])
}

/// Membership of every constructor and combinator, and the counterexample
/// for the equal-width coincidence window.
pub fn t4_membership(samples: usize, seed: u64) -> CheckReport {
    timed("t4_membership", || {
        let mut failures = Vec::new();
        for (i, (name, f)) in member_tuples()?.iter().enumerate() {
            if !f.is_member() {
                failures.push(format!("{name} not flagged as member"));
            }
            if let Verification::Counterexample { x, y, z, lhs, rhs } =
                verify_t4(f, (-5.0, 5.0), samples, seed.wrapping_add(i as u64))
            {
                failures.push(format!("{name}: ({x}, {y}, {z}) gives {lhs} > {rhs}"));
            }
        }
        let cw = FunctionTuple::coincidence_window(0.1)?;
        let ce = verify_t4(&cw, (-5.0, 5.0), samples, seed);
        let cw_detail = match ce {
            Verification::Counterexample { x, y, z, lhs, rhs } => {
                format!("equal-width window counterexample ({x:.6}, {y:.6}, {z:.6}): {lhs} > {rhs}")
            }
            Verification::Pass => {
                failures.push("equal-width window passed".into());
                String::new()
            }
        };
        let n = member_tuples()?.len();
        if failures.is_empty() {
            Ok((true, format!("{n} tuples pass; {cw_detail}")))
        } else {
            Ok((false, failures.join("; ")))
        }
    })
}

fn random_sequence(rng: &mut impl Rng, max_len: usize, hi: f64) -> Vec<f64> {
    let n = rng.random_range(0..=max_len);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..hi)).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// DP against exhaustive enumeration, then gap splitting against the
/// unsplit DP.
pub fn matching_oracle(instances: usize, poisson_instances: usize, seed: u64) -> CheckReport {
    timed("matching_oracle", || {
        let tuples = [
            FunctionTuple::abs(),
            FunctionTuple::compression(1.0)?,
            FunctionTuple::linear_edge_window(LinearEdgeWindowParams::symmetric(0.2, 5.0))?,
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for i in 0..instances {
            let f = &tuples[i % tuples.len()];
            let ab = SettingsPair::from_index(rng.random_range(0..4));
            let r = random_sequence(&mut rng, 6, 3.0);
            let t = random_sequence(&mut rng, 6, 3.0);
            let fast = min_cost(f, ab, &r, &t).cost;
            let slow = brute_force_min_cost(|x| f.eval(ab, x), &r, &t);
            worst = worst.max((fast - slow).abs());
        }
        let lew = &tuples[2];
        let mut split_worst = 0.0f64;
        for _ in 0..poisson_instances {
            let ab = SettingsPair::from_index(rng.random_range(0..4));
            let r = poisson_arrivals(&mut rng, 1.0, 0.0, 40.0);
            let mut t = Vec::new();
            for &x in &r {
                if rng.random_bool(0.7) {
                    t.push(x + rng.random_range(-0.3..0.3));
                }
            }
            t.extend(poisson_arrivals(&mut rng, 0.3, 0.0, 40.0));
            t.sort_by(f64::total_cmp);
            let d = (distance(lew, ab, &r, &t) - min_cost_value(lew, ab, &r, &t)).abs();
            split_worst = split_worst.max(d);
        }
        Ok((
            worst <= 1e-12 && split_worst <= 1e-12,
            format!(
                "{instances} instances, max |dp - brute| = {worst:e}; {poisson_instances} Poisson instances, max split error = {split_worst:e}"
            ),
        ))
    })
}

fn truncation_for_tests() -> Result<TruncationParams> {
    let training = PerSetting::new(vec![0.2, 0.4, 0.1], vec![0.3, 0.5], vec![0.25, 0.2, 0.4], vec![1.4, 0.9]);
    choose_truncation(&training, PerSetting::splat(0.2))
}

/// LR oracle minimum of several CH Bell functions on enumerable spaces.
pub fn lr_nonnegativity() -> CheckReport {
    timed("lr_nonnegativity", || {
        let mut results: Vec<(String, f64)> = Vec::new();
        let dist = SettingsDistribution::uniform();
        let skewed = SettingsDistribution::new(PerSetting::new(0.1, 0.2, 0.3, 0.4))?;
        let trunc = truncation_for_tests()?;

        for (dname, d) in [("uniform", &dist), ("skewed", &skewed)] {
            let bin: Vec<(&str, Box<dyn ChFunction<Binary>>)> = vec![
                ("abs", Box::new(BinaryTable::abs_difference())),
                ("positive_part", Box::new(BinaryTable::positive_part())),
                (
                    "adjusted",
                    Box::new(apply_ns_adjustment(BinaryTable::positive_part(), NsAdjustment::standard())),
                ),
                (
                    "truncated",
                    Box::new(Truncated {
                        base: BinaryTable::abs_difference(),
                        params: trunc.clone(),
                    }),
                ),
            ];
            for (name, l) in bin {
                let b = BellFunction::new(l, d.clone());
                results.push((format!("binary/{name}/{dname}"), lr_oracle(&b, &BINARY_SPACE)?.0));
            }
        }

        let tuples = [
            ("linear_edge_window", FunctionTuple::linear_edge_window(LinearEdgeWindowParams::symmetric(0.1, 10.0))?),
            ("hard_window", FunctionTuple::hard_window(PerSetting::new(0.1, 0.1, 0.1, 0.3))?),
            ("compression", FunctionTuple::compression(1.0)?),
        ];
        for grid in [[0.0, 0.1, 0.25], [0.0, 0.15, 0.3], [0.0, 0.5, 1.0]] {
            let seqs = enumerate_sequences(&grid, 2);
            let space: Vec<&[f64]> = seqs.iter().map(|s| s.as_slice()).collect();
            for (name, f) in &tuples {
                let base = TupleDistance::new(f.clone());
                let plain = BellFunction::uniform(base.clone());
                results.push((format!("timetag/{name}/{grid:?}"), lr_oracle(&plain, &space)?.0));
                let adj = BellFunction::uniform(apply_ns_adjustment(base.clone(), NsAdjustment::standard()));
                results.push((format!("timetag/{name}/adjusted/{grid:?}"), lr_oracle(&adj, &space)?.0));
                let tr = BellFunction::uniform(Truncated {
                    base: apply_ns_adjustment(base, NsAdjustment::standard()),
                    params: trunc.clone(),
                });
                results.push((format!("timetag/{name}/truncated/{grid:?}"), lr_oracle(&tr, &space)?.0));
            }
        }
        let (worst_name, worst) = results
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .cloned()
            .unwrap_or_default();
        Ok((
            worst >= -1e-9,
            format!("{} Bell functions, smallest LR minimum {worst:.3e} ({worst_name})", results.len()),
        ))
    })
}

/// Non-signaling binary behaviours: the PR box, the optimal quantum source,
/// every deterministic strategy and random mixtures of them.
fn ns_behaviours(rng: &mut impl Rng) -> Result<Vec<PerSetting<[[f64; 2]; 2]>>> {
    let pr = PerSetting::from_fn(|ab| {
        if ab == SettingsPair::S22 {
            [[0.0, 0.5], [0.5, 0.0]]
        } else {
            [[0.5, 0.0], [0.0, 0.5]]
        }
    });
    let mut out = vec![pr, optimize_source(0.8)?.probs.p];
    let det: Vec<_> = (0..16).map(|v| deterministic_probabilities(v).p).collect();
    out.extend(det.iter().cloned());
    for _ in 0..50 {
        let w: Vec<f64> = (0..18).map(|_| rng.random::<f64>()).collect();
        let s: f64 = w.iter().sum();
        let m = PerSetting::from_fn(|ab| {
            let mut q = [[0.0; 2]; 2];
            for (k, comp) in out[..18].iter().enumerate() {
                for x in 0..2 {
                    for y in 0..2 {
                        q[x][y] += w[k] / s * comp[ab][x][y];
                    }
                }
            }
            q
        });
        out.push(m);
    }
    Ok(out)
}

/// Expected Bell values unchanged by adjustments on non-signaling
/// behaviours; adjusted variance below unadjusted in two-point Monte Carlo.
pub fn ns_invariance(mc_trials: usize, seed: u64) -> CheckReport {
    timed("ns_invariance", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let adjustments = [
            NsAdjustment::remove_a2(),
            NsAdjustment::standard(),
            NsAdjustment {
                f: [Affine { slope: 0.3, offset: -0.2 }, Affine::linear(-1.7)],
                g: [Affine::linear(0.9), Affine { slope: -0.4, offset: 1.1 }],
            },
        ];
        let dists = [
            SettingsDistribution::uniform(),
            SettingsDistribution::new(PerSetting::new(0.1, 0.2, 0.3, 0.4))?,
        ];
        let bases = [BinaryTable::positive_part(), BinaryTable::abs_difference()];
        let mut worst = 0.0f64;
        let behaviours = ns_behaviours(&mut rng)?;
        for p in &behaviours {
            let beh = binary_behaviour(p);
            for d in &dists {
                for base in &bases {
                    let e0 = BellFunction::new(base.clone(), d.clone()).expectation(&beh);
                    for adj in &adjustments {
                        let e1 = BellFunction::new(apply_ns_adjustment(base.clone(), *adj), d.clone()).expectation(&beh);
                        worst = worst.max((e1 - e0).abs());
                    }
                }
            }
        }

        // Paired two-point trials from the optimal source at efficiency 0.8.
        let probs = optimize_source(0.8)?.probs;
        let plain = BellFunction::uniform(BinaryTable::positive_part());
        let adj: BellFunction<Adjusted<BinaryTable>> =
            BellFunction::uniform(apply_ns_adjustment(BinaryTable::positive_part(), NsAdjustment::standard()));
        let mut vals = Vec::with_capacity(mc_trials);
        for _ in 0..mc_trials {
            let ab = SettingsPair::from_index(rng.random_range(0..4));
            let q = probs.p[ab];
            let u: f64 = rng.random();
            let (oa, ob) = if u < q[0][0] {
                (0, 0)
            } else if u < q[0][0] + q[0][1] {
                (0, 1)
            } else if u < q[0][0] + q[0][1] + q[1][0] {
                (1, 0)
            } else {
                (1, 1)
            };
            vals.push((plain.value(ab, &oa, &ob), adj.value(ab, &oa, &ob)));
        }
        let n = vals.len() as f64;
        let m0 = vals.iter().map(|v| v.0).sum::<f64>() / n;
        let m1 = vals.iter().map(|v| v.1).sum::<f64>() / n;
        let d: Vec<f64> = vals.iter().map(|v| (v.0 - m0).powi(2) - (v.1 - m1).powi(2)).collect();
        let dm = d.iter().sum::<f64>() / n;
        let dse = (d.iter().map(|x| (x - dm).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        let z = dm / dse;
        let v1 = vals.iter().map(|v| (v.1 - m1).powi(2)).sum::<f64>() / n;
        Ok((
            worst <= 1e-12 && z > 5.0,
            format!(
                "{} behaviours, max expectation change {worst:.2e}; variance {:.4} -> {v1:.4}, difference {z:.1} sigma",
                behaviours.len(),
                v1 + dm,
            ),
        ))
    })
}

/// Constant-mixture p bound, the 4/3 cap on predicted gain and the
/// `u_22 >= 3v` relation on simulated training runs.
pub fn pbr_correctness(seed: u64) -> CheckReport {
    timed("pbr_correctness", || {
        let mut failures = Vec::new();
        let mut s = PbrState::with_weights(vec![vec![4.0 / 3.0]; 1], vec![0.0, 1.0], 1000)?;
        for _ in 0..10 {
            s.process(vec![4.0 / 3.0])?;
        }
        let run = s.finish();
        let expect = 0.75f64.powi(10);
        if (run.p_value() - expect).abs() > 1e-12 {
            failures.push(format!("p bound {} != {expect}", run.p_value()));
        }

        let cap = (4.0f64 / 3.0).log2();
        let mut checked = 0;
        let mut max_gain = f64::NEG_INFINITY;
        for (i, j) in [0.005, 0.01, 0.02, 0.03].into_iter().enumerate() {
            let cfg = SourceConfig::optimized(0.8, 50.0, JitterModel::Uniform { width: j })?;
            let src = QuantumSource::new(cfg)?;
            let dist = SettingsDistribution::uniform();
            let trials = generate_trials(&src, &dist, seed.wrapping_add(i as u64), 0, 1500);
            let l = timetag_ch(&LinearEdgeWindowParams::symmetric(j.max(0.01), 2.0 / j.max(0.01)))?;
            let ch = ch_values(&l, &trials);
            let mut grouped: PerSetting<Vec<f64>> = PerSetting::from_fn(|_| Vec::new());
            for &(ab, v) in &ch {
                grouped[ab].push(v);
            }
            for c in make_candidates(&grouped, &DEFAULT_W_FRACTIONS, &dist)? {
                if !c.params.is_helpful() {
                    continue;
                }
                checked += 1;
                let v = c.params.v();
                if c.params.u.s22 < 3.0 * v - 1e-12 {
                    failures.push(format!("u_22 = {} < 3v = {}", c.params.u.s22, 3.0 * v));
                }
                let mean_r = c.predicted_mean(&grouped);
                let gain = SettingsPair::ALL
                    .iter()
                    .map(|&ab| {
                        let g = &grouped[ab];
                        dist.prob(ab) * g.iter().map(|&x| c.value(ab, x).log2()).sum::<f64>() / g.len() as f64
                    })
                    .sum::<f64>();
                max_gain = max_gain.max(gain);
                if mean_r > 4.0 / 3.0 + 1e-12 || gain > cap + 1e-12 {
                    failures.push(format!("predicted mean {mean_r}, log gain {gain} exceed the cap"));
                }
                let again = make_test_factor(c.params.clone(), dist.clone())?;
                if again.z != c.z {
                    failures.push("z recomputation differs".into());
                }
            }
        }
        if checked == 0 {
            failures.push("no helpful candidate on any training run".into());
        }
        if failures.is_empty() {
            Ok((
                true,
                format!(
                    "p bound {:.6}; {checked} candidates, largest predicted log2 gain {max_gain:.4} <= {cap:.4}",
                    run.p_value()
                ),
            ))
        } else {
            Ok((false, failures.join("; ")))
        }
    })
}

/// Statistics of the adaptive Bell-total estimator over replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnrMonteCarlo {
    pub trials: usize,
    pub true_total: f64,
    pub mean_b_tot: f64,
    pub se_b_tot: f64,
    /// Sample variance of `B_tot` across replications.
    pub var_b_tot: f64,
    pub mean_v: f64,
}

/// Replicates the estimator on i.i.d. Gaussian trials with per-setting
/// means `mu` and standard deviations `sd`.
pub fn snr_monte_carlo(
    mu: PerSetting<f64>,
    sd: PerSetting<f64>,
    training: usize,
    trials: usize,
    replications: usize,
    seed: u64,
) -> Result<SnrMonteCarlo> {
    let dist = SettingsDistribution::uniform();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normals = PerSetting::from_fn(|ab| Normal::new(mu[ab], sd[ab]).expect("finite normal"));
    let mut totals = Vec::with_capacity(replications);
    let mut vs = Vec::with_capacity(replications);
    for _ in 0..replications {
        let draw = |rng: &mut ChaCha8Rng| {
            let ab = SettingsPair::from_index(rng.random_range(0..4));
            (ab, normals[ab].sample(rng))
        };
        let mut train: Vec<(SettingsPair, f64)> = (0..training).map(|_| draw(&mut rng)).collect();
        // Every class present.
        for ab in SettingsPair::ALL {
            train.push((ab, normals[ab].sample(&mut rng)));
        }
        let mut s = SnrState::from_training(&train, dist.clone())?;
        for _ in 0..trials {
            let (ab, b) = draw(&mut rng);
            s.push(ab, b);
        }
        let e = s.estimate();
        totals.push(e.b_tot);
        vs.push(e.v);
    }
    let r = replications as f64;
    let mean = totals.iter().sum::<f64>() / r;
    let var = totals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0);
    Ok(SnrMonteCarlo {
        trials,
        true_total: trials as f64 * SettingsPair::ALL.iter().map(|&ab| mu[ab] / 4.0).sum::<f64>(),
        mean_b_tot: mean,
        se_b_tot: (var / r).sqrt(),
        var_b_tot: var,
        mean_v: vs.iter().sum::<f64>() / r,
    })
}

/// Unbiasedness and conservative variance of the adaptive estimator.
pub fn snr_estimator(replications: usize, seed: u64) -> CheckReport {
    timed("snr_estimator", || {
        let mu = PerSetting::new(1.0, -0.5, 2.0, 0.3);
        let sd = PerSetting::new(1.0, 2.0, 0.5, 1.5);
        let mut lines = Vec::new();
        let mut ok = true;
        // Relative standard error of a sample variance over the replications.
        let var_rse = (2.0 / (replications as f64 - 1.0)).sqrt();
        for (k, n) in [500usize, 2000, 8000].into_iter().enumerate() {
            let m = snr_monte_carlo(mu, sd, 20, n, replications, seed.wrapping_add(k as u64))?;
            let z = (m.mean_b_tot - m.true_total) / m.se_b_tot;
            let ratio = m.mean_v / m.var_b_tot;
            ok &= z.abs() <= 3.0 && ratio >= 1.0 - 3.0 * var_rse;
            lines.push(format!("N={n}: bias {z:+.2} se, v/var {ratio:.3}"));
        }
        Ok((ok, lines.join("; ")))
    })
}

/// The oracle checks with the sample sizes used in the acceptance suite.
pub fn run_all(seed: u64) -> Vec<CheckReport> {
    vec![
        t4_membership(100_000, seed),
        matching_oracle(1000, 200, seed),
        lr_nonnegativity(),
        ns_invariance(100_000, seed),
        pbr_correctness(seed),
        snr_estimator(200, seed),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_checks_pass() {
        for r in [t4_membership(2000, 1), matching_oracle(100, 20, 1), ns_invariance(20_000, 1)] {
            assert!(r.passed, "{r}");
        }
    }
}
