//! Truncated test-factor candidates chosen on training data and the PBR
//! p-value bound they accumulate on analysis data.

use timetag_bell::pipeline::{self, ProtocolConfig, SourceSpec};
use timetag_bell::simsrc::JitterModel;

fn main() -> timetag_bell::Result<()> {
    let jitter = JitterModel::Uniform { width: 0.01 };
    let mut cfg = ProtocolConfig::desk(SourceSpec::Quantum { efficiency: 0.8, jitter }, 2);
    cfg.scale.training_trials = 1000;
    cfg.scale.analysis_trials = 5000;
    let (training, analysis, _) = pipeline::simulate(&cfg)?;
    let trained = pipeline::train(&training, &cfg.training)?;
    for (c, w) in trained.candidates.iter().zip(&trained.pbr_weights[1..]) {
        println!("c {:.3}  v {:.4}  z {:.3}  weight {w:.3}", c.params.c, c.params.v(), c.z);
    }
    let run = pipeline::analyze_pbr(&trained, &analysis)?;
    for b in &run.blocks {
        println!("{b:?}");
    }
    println!("p <= {:.3e}", run.p_value());
    Ok(())
}
