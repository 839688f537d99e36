//! Train on one set of trials, save the parameters, analyze another set.

use timetag_bell::pipeline::{self, ProtocolConfig, SourceSpec, TrainedParams};
use timetag_bell::simsrc::JitterModel;

fn main() -> timetag_bell::Result<()> {
    let jitter = JitterModel::Uniform { width: 0.02 };
    let mut cfg = ProtocolConfig::desk(SourceSpec::Quantum { efficiency: 0.8, jitter }, 1);
    cfg.scale.training_trials = 1000;
    cfg.scale.analysis_trials = 10_000;
    let (training, analysis, _) = pipeline::simulate(&cfg)?;
    let trained = pipeline::train(&training, &cfg.training)?;
    let file = trained.to_json()?;
    println!(
        "window {:.4}, tuple t {:.4} m {:.1}, {} PBR candidates, parameter file {} bytes",
        trained.conventional_window,
        trained.tuple.t,
        trained.tuple.m,
        trained.candidates.len(),
        file.len()
    );
    let params = TrainedParams::from_json(&file)?;
    let rep = pipeline::analyze(&params, &analysis)?;
    println!("conventional SNR {:.2}", rep.conventional.estimate.snr);
    println!("timetag SNR {:.2}", rep.timetag.snr);
    println!("PBR log2(1/p) {:.2} over {} trials", rep.pbr.log_p, rep.pbr.trials);
    Ok(())
}
