//! A small jitter sweep written as CSV to stdout.

use timetag_bell::pipeline::{self, ProtocolConfig, SourceSpec};
use timetag_bell::simsrc::JitterModel;

fn main() -> timetag_bell::Result<()> {
    let grid: Vec<_> = [0.01, 0.04, 0.08].iter().map(|&w| JitterModel::Uniform { width: w }).collect();
    let mut cfg = ProtocolConfig::desk(SourceSpec::Quantum { efficiency: 0.8, jitter: grid[0] }, 1);
    cfg.scale.training_trials = 1000;
    cfg.scale.analysis_trials = 5000;
    let rows: Vec<_> = pipeline::sweep(&cfg, &grid)?.into_iter().map(|r| r.row).collect();
    pipeline::write_sweep_csv(std::io::stdout().lock(), &rows)?;
    eprintln!("largest median jitter with a PBR violation: {:?}", pipeline::jitter_threshold(&rows));
    Ok(())
}
