//! The optimal photon-pair source at a given efficiency, and trials drawn
//! from it with detector jitter.

use timetag_bell::diagnostics::coincidence_count;
use timetag_bell::simsrc::{generate_trials, optimize_source, JitterModel, QuantumSource, SourceConfig};
use timetag_bell::trial::{SettingsDistribution, SettingsPair};

fn main() -> timetag_bell::Result<()> {
    let eta = 0.8;
    let opt = optimize_source(eta)?;
    println!("eta {eta}: state angle {:.4}, CHSH-type value {:.5}", opt.theta, opt.chsh);
    let cfg = SourceConfig::optimized(eta, 100.0, JitterModel::Uniform { width: 0.02 })?;
    let src = QuantumSource::new(cfg)?;
    let trials = generate_trials(&src, &SettingsDistribution::uniform(), 1, 0, 2000);
    for ab in SettingsPair::ALL {
        let sel: Vec<_> = trials.iter().filter(|t| t.settings == ab).collect();
        let n = sel.len() as f64;
        let a: usize = sel.iter().map(|t| t.a.len()).sum();
        let b: usize = sel.iter().map(|t| t.b.len()).sum();
        let c: usize = sel.iter().map(|t| coincidence_count(t.a.as_slice(), t.b.as_slice(), 0.02)).sum();
        println!("{ab}: A {:.2}  B {:.2}  coincidences {:.2} per trial", a as f64 / n, b as f64 / n, c as f64 / n);
    }
    Ok(())
}
