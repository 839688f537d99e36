//! Train-then-analyze protocol: separation, determinism, tuple fit quality
//! and the sweep examples at desk scale.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use timetag_bell::bell::{ChFunction, TupleDistance};
use timetag_bell::pipeline::{self, difference_pools, optimize_tuple_params, ProtocolConfig, SourceSpec, TupleGrid};
use timetag_bell::simsrc::JitterModel;
use timetag_bell::trial::{PerSetting, SettingsPair, TrialRecord};
use timetag_bell::tuples::{FunctionTuple, LinearEdgeWindowParams};

fn quantum(efficiency: f64, jitter: JitterModel) -> SourceSpec {
    SourceSpec::Quantum { efficiency, jitter }
}

fn small(jitter: JitterModel, seed: u64) -> ProtocolConfig {
    let mut c = ProtocolConfig::desk(quantum(0.8, jitter), seed);
    c.scale.training_trials = 400;
    c.scale.analysis_trials = 3000;
    c.scale.window = 50.0;
    c
}

#[test]
fn analysis_depends_only_on_the_parameter_file() {
    let cfg = small(JitterModel::Uniform { width: 0.02 }, 3);
    let (training, analysis, _) = pipeline::simulate(&cfg).unwrap();
    let trained = pipeline::train(&training, &cfg.training).unwrap();
    let file = trained.to_json().unwrap();
    drop(training);
    drop(trained);
    let reloaded = pipeline::TrainedParams::from_json(&file).unwrap();
    let again = pipeline::analyze(&reloaded, &analysis).unwrap();
    let full = pipeline::run_protocol(&cfg).unwrap();
    assert_eq!(again, full.analysis);
}

#[test]
fn protocol_is_a_function_of_the_config() {
    let cfg = small(JitterModel::Uniform { width: 0.03 }, 9);
    let a = pipeline::run_protocol(&cfg).unwrap();
    let b = pipeline::run_protocol(&cfg).unwrap();
    assert_eq!(a, b);
    let mut other = cfg.clone();
    other.seed = 10;
    assert_ne!(pipeline::run_protocol(&other).unwrap().row, a.row);
}

/// Per-trial unadjusted tuple distance for every grid point.
fn exact_values(trials: &[TrialRecord], params: &[LinearEdgeWindowParams]) -> Vec<Vec<f64>> {
    params
        .iter()
        .map(|p| {
            let l = TupleDistance::new(FunctionTuple::linear_edge_window(*p).unwrap());
            trials.iter().map(|t| l.eval_trial(t.settings, t.a.as_slice(), t.b.as_slice())).collect()
        })
        .collect()
}

fn bell_mean(trials: &[TrialRecord], values: &[f64], subset: &[usize]) -> f64 {
    let mut sum = PerSetting::splat(0.0);
    let mut n = PerSetting::splat(0.0);
    for &i in subset {
        let ab = trials[i].settings;
        sum[ab] += values[i];
        n[ab] += 1.0;
    }
    SettingsPair::ALL.iter().map(|&ab| ab.sign() * sum[ab] / n[ab]).sum()
}

#[test]
fn approximate_objective_picks_near_optimal_windows() {
    let mut cfg = ProtocolConfig::desk(quantum(0.8, JitterModel::Uniform { width: 0.01 }), 21);
    cfg.scale.training_trials = 3000;
    cfg.scale.analysis_trials = 1;
    cfg.scale.window = 50.0;
    let (pool, _, _) = pipeline::simulate(&cfg).unwrap();
    let grid = TupleGrid {
        t_points: 12,
        mt: vec![1.0, 5.0, 20.0],
        refine_iterations: 0,
        ..TupleGrid::default()
    };
    let ratio = (grid.t_max / grid.t_min).ln() / (grid.t_points - 1) as f64;
    let params: Vec<_> = (0..grid.t_points)
        .flat_map(|i| {
            let t = grid.t_min * (ratio * i as f64).exp();
            grid.mt.iter().map(move |&mt| LinearEdgeWindowParams::symmetric(t, mt / t))
        })
        .collect();
    let values = exact_values(&pool, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let subset = sample(&mut rng, pool.len(), 400).into_vec();
        let trials: Vec<_> = subset.iter().map(|&i| pool[i].clone()).collect();
        let fit = optimize_tuple_params(&difference_pools(&trials, 1.0).unwrap(), &grid).unwrap();
        let exact: Vec<f64> = values.iter().map(|v| bell_mean(&pool, v, &subset)).collect();
        let best = exact.iter().copied().fold(f64::INFINITY, f64::min);
        let k = params.iter().position(|p| *p == fit.params).expect("fit lies on the grid");
        let gap = (exact[k] - best).abs() / best.abs();
        worst = worst.max(gap);
    }
    assert!(worst <= 0.1, "largest relative gap {worst}");
}

#[test]
fn uniform_sweep_matches_violation_regime() {
    let grid = [
        JitterModel::None,
        JitterModel::Uniform { width: 0.02 },
        JitterModel::Uniform { width: 0.05 },
        JitterModel::Uniform { width: 0.08 },
    ];
    let cfg = ProtocolConfig::desk(quantum(0.8, grid[0]), 5);
    let rows: Vec<_> = pipeline::sweep(&cfg, &grid).unwrap().into_iter().map(|r| r.row).collect();
    let logp: Vec<f64> = rows.iter().map(|r| r.log_p).collect();
    assert!(logp[1] > 0.0 && logp[2] > 0.0 && logp[3] == 0.0, "{rows:?}");
    assert!(rows[0].timetag_snr > rows[3].timetag_snr, "{rows:?}");
    assert_eq!(pipeline::jitter_threshold(&rows), Some(0.025));
}

#[test]
fn exponential_sweep_matches_violation_regime() {
    let grid = [0.002, 0.005].map(|m| JitterModel::Exponential { rate: std::f64::consts::LN_2 / m });
    let cfg = ProtocolConfig::desk(quantum(0.74, grid[0]), 6);
    let rows: Vec<_> = pipeline::sweep(&cfg, &grid).unwrap().into_iter().map(|r| r.row).collect();
    assert!(rows[0].log_p > 0.0 && rows[1].log_p == 0.0, "{rows:?}");
}

#[test]
fn wide_jitter_only_fools_the_conventional_analysis() {
    let cfg = ProtocolConfig::desk(quantum(0.8, JitterModel::Uniform { width: 0.12 }), 8);
    let r = pipeline::run_protocol(&cfg).unwrap().row;
    assert!(r.conventional_snr > 0.0, "{r:?}");
    assert!(r.timetag_snr <= 2.0, "{r:?}");
    assert_eq!(r.log_p, 0.0);
}

#[test]
fn negligible_jitter_violates_conventionally() {
    let cfg = small(JitterModel::Uniform { width: 0.001 }, 12);
    let r = pipeline::run_protocol(&cfg).unwrap().row;
    assert!(r.conventional_snr > 0.0, "{r:?}");
}
