//! Auto- and cross-correlation functions of quantum-source trials.

use timetag_bell::diagnostics::{correlation_estimate, write_correlation_csv, CorrelationKind};
use timetag_bell::simsrc::{generate_trials, JitterModel, QuantumSource, SourceConfig};
use timetag_bell::trial::SettingsDistribution;

fn main() -> timetag_bell::Result<()> {
    let ju = 0.11;
    let src = QuantumSource::new(SourceConfig::optimized(0.8, 200.0, JitterModel::Uniform { width: ju })?)?;
    let trials = generate_trials(&src, &SettingsDistribution::uniform(), 1, 0, 2000);
    let est = CorrelationKind::all()
        .into_iter()
        .map(|k| correlation_estimate(&trials, k, ju / 4.0, 12))
        .collect::<timetag_bell::Result<Vec<_>>>()?;
    write_correlation_csv(std::io::stdout().lock(), &est)
}
