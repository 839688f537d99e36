//! Acceptance suite. Runs every criterion at desk scale and prints one
//! PASS/FAIL line per criterion; exits nonzero if any fails.
//!
//! `cargo test --test acceptance` runs it; `-- 6 7` restricts to the
//! listed criteria.

use std::process::ExitCode;
use std::time::Instant;

use timetag_bell::pipeline::{self, build_source, BuiltSource, ProtocolConfig, ProtocolReport, SourceSpec};
use timetag_bell::simsrc::JitterModel;
use timetag_bell::trial::{SettingsPair, TrialRecord};
use timetag_bell::verify::{self, CheckReport};
use timetag_bell::Result;

const SEED: u64 = 1;

struct Outcome {
    passed: bool,
    detail: String,
}

fn within_budget(r: CheckReport, budget: f64) -> Outcome {
    let fast = r.seconds < budget;
    Outcome {
        passed: r.passed && fast,
        detail: format!("{}{}", r.detail, if fast { String::new() } else { format!("; over {budget} s budget") }),
    }
}

fn quantum(efficiency: f64, jitter: JitterModel) -> SourceSpec {
    SourceSpec::Quantum { efficiency, jitter }
}

fn row_text(r: &ProtocolReport) -> String {
    format!(
        "{}: conv {:.2}, timetag {:.2}, log-p {:.2}",
        r.row.jitter, r.row.conventional_snr, r.row.timetag_snr, r.row.log_p
    )
}

fn fig3_trend() -> Result<Outcome> {
    let widths = [0.02, 0.03, 0.05, 0.07, 0.09, 0.10];
    let grid: Vec<_> = widths.iter().map(|&w| JitterModel::Uniform { width: w }).collect();
    let cfg = ProtocolConfig::desk(quantum(0.8, grid[0]), SEED);
    let reports = pipeline::sweep(&cfg, &grid)?;
    let first = &reports[0].row;
    let last = &reports[widths.len() - 1].row;
    let low = first.timetag_snr > 0.0 && first.log_p > 0.0;
    let high = last.timetag_snr.abs() <= 2.0 && last.log_p == 0.0;
    // Bracket of the sign change: last positive point before the first
    // non-positive one.
    let change = reports.iter().position(|r| r.row.timetag_snr <= 0.0);
    let bracket = change.filter(|&i| i > 0).map(|i| (widths[i - 1], widths[i]));
    let inside = bracket.is_some_and(|(lo, hi)| lo >= 0.03 && hi <= 0.09);
    let mut detail: Vec<String> = reports.iter().map(row_text).collect();
    detail.push(match bracket {
        Some((lo, hi)) => format!("sign change in ({lo}, {hi})"),
        None => "no sign change".into(),
    });
    if !low {
        detail.push("no violation at the narrowest jitter".into());
    }
    if !high {
        detail.push("widest jitter point not indistinguishable from 0".into());
    }
    Ok(Outcome {
        passed: low && high && inside,
        detail: detail.join("; "),
    })
}

/// Largest |z| of the per-setting singles rates against the template.
fn marginal_z(trials: &[TrialRecord], src: &BuiltSource, window: f64) -> f64 {
    let BuiltSource::Lr(lr, _) = src else {
        return f64::INFINITY;
    };
    let p = &lr.template.p_prime;
    let mut worst: f64 = 0.0;
    for ab in SettingsPair::ALL {
        let sel: Vec<_> = trials.iter().filter(|t| t.settings == ab).collect();
        let n = sel.len() as f64;
        for (counts, expect) in [
            (sel.iter().map(|t| t.a.len() as f64).collect::<Vec<_>>(), p.p_a(ab.a) * window),
            (sel.iter().map(|t| t.b.len() as f64).collect::<Vec<_>>(), p.p_b(ab.b) * window),
        ] {
            let mean = counts.iter().sum::<f64>() / n;
            let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
            worst = worst.max((mean - expect).abs() / (var / n).sqrt());
        }
    }
    worst
}

fn fig4_lr() -> Result<Outcome> {
    let spec = SourceSpec::Lr {
        efficiency: 0.8,
        jitter_width: 0.11,
        calibration_trials: 50,
    };
    let cfg = ProtocolConfig::desk(spec.clone(), SEED);
    let (training, analysis, cal) = pipeline::simulate(&cfg)?;
    let trained = pipeline::train(&training, &cfg.training)?;
    let rep = pipeline::analyze(&trained, &analysis)?;
    let src = build_source(&spec, cfg.scale.window, cfg.seed)?;
    let z = marginal_z(&analysis, &src, cfg.scale.window);
    let conv = rep.conventional.estimate.snr;
    let tt = rep.timetag.snr;
    let logp = rep.pbr.log_p;
    let cal = cal.map(|c| c.delta_c).unwrap_or(f64::NAN);
    Ok(Outcome {
        passed: conv > 2.0 && tt <= 1.0 && logp == 0.0 && z <= 5.0,
        detail: format!(
            "delta_c {cal:.4}, w {:.4}, conv {conv:.2}, timetag {tt:.2}, log-p {logp:.2}, worst marginal |z| {z:.2}",
            rep.conventional.window
        ),
    })
}

fn table1() -> Result<Outcome> {
    let points = [
        (0.80, JitterModel::Uniform { width: 0.05 }, true),
        (0.80, JitterModel::Uniform { width: 0.08 }, false),
        (0.74, exp_median(0.002), true),
        (0.74, exp_median(0.005), false),
    ];
    let mut passed = true;
    let mut detail = Vec::new();
    for (i, &(eta, j, violates)) in points.iter().enumerate() {
        let cfg = ProtocolConfig::desk(quantum(eta, j), pipeline::point_seed(SEED, i));
        let r = pipeline::run_protocol(&cfg)?;
        let ok = (r.row.log_p > 0.0) == violates;
        passed &= ok;
        detail.push(format!(
            "eta {eta} median {:.4}: log-p {:.2} (want {})",
            j.median(),
            r.row.log_p,
            if violates { "> 0" } else { "= 0" }
        ));
    }
    Ok(Outcome {
        passed,
        detail: detail.join("; "),
    })
}

fn exp_median(median: f64) -> JitterModel {
    JitterModel::Exponential { rate: std::f64::consts::LN_2 / median }
}

fn delta_shift() -> Result<Outcome> {
    let delta = 0.001;
    let cfg = ProtocolConfig::desk(
        SourceSpec::DeltaShift {
            delta,
            jitter: JitterModel::None,
        },
        SEED,
    );
    let r = pipeline::run_protocol(&cfg)?;
    let w = r.trained.conventional_window;
    let near = (w - 1.5 * delta).abs() <= 0.1 * 1.5 * delta;
    let conv = r.row.conventional_snr;
    let none = r.row.timetag_snr <= 2.0 && r.row.log_p == 0.0;
    Ok(Outcome {
        passed: near && conv > 2.0 && none,
        detail: format!(
            "w {w:.6} (1.5 delta = {:.6}), conv {conv:.2}, timetag {:.2}, log-p {:.2}",
            1.5 * delta,
            r.row.timetag_snr,
            r.row.log_p
        ),
    })
}

fn protocol(body: impl FnOnce() -> Result<Outcome>, budget: f64) -> Outcome {
    let t0 = Instant::now();
    let mut o = body().unwrap_or_else(|e| Outcome {
        passed: false,
        detail: format!("error: {e}"),
    });
    let s = t0.elapsed().as_secs_f64();
    if s >= budget {
        o.passed = false;
        o.detail.push_str(&format!("; over {budget} s budget"));
    }
    o.detail = format!("({s:.1} s) {}", o.detail);
    o
}

fn main() -> ExitCode {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |i: usize| only.is_empty() || only.contains(&i);
    let criteria: [(&str, Box<dyn Fn() -> Outcome>); 10] = [
        ("T4 membership", Box::new(|| within_budget(verify::t4_membership(100_000, SEED), 10.0))),
        ("matching oracle", Box::new(|| within_budget(verify::matching_oracle(1000, 200, SEED), 30.0))),
        ("LR nonnegativity", Box::new(|| within_budget(verify::lr_nonnegativity(), 60.0))),
        ("non-signaling invariance", Box::new(|| within_budget(verify::ns_invariance(100_000, SEED), f64::INFINITY))),
        ("PBR correctness", Box::new(|| within_budget(verify::pbr_correctness(SEED), f64::INFINITY))),
        ("jitter trend, uniform, eta 0.8", Box::new(|| protocol(fig3_trend, 900.0))),
        ("LR source false violation", Box::new(|| protocol(fig4_lr, 1200.0))),
        ("maximum jitter spot checks", Box::new(|| protocol(table1, 1800.0))),
        ("SNR estimator", Box::new(|| within_budget(verify::snr_estimator(200, SEED), f64::INFINITY))),
        ("delta-shift toy", Box::new(|| protocol(delta_shift, f64::INFINITY))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let k = i + 1;
        if !want(k) {
            continue;
        }
        let o = run();
        if !o.passed {
            failed += 1;
        }
        println!("{} criterion {k} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
