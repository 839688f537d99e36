//! Calibrate the LR source imitating uniform jitter of width 0.11 and
//! compare its visible statistics with the template.

use timetag_bell::diagnostics::coincidence_count;
use timetag_bell::lrsource::{calibrate_delta_c, LrSource};
use timetag_bell::simsrc::{generate_trials, optimize_source};
use timetag_bell::trial::{SettingsDistribution, SettingsPair};

fn main() -> timetag_bell::Result<()> {
    let (ju, window) = (0.11, 200.0);
    let opt = optimize_source(0.8)?;
    let (template, report) = calibrate_delta_c(&opt.probs, ju, window, 50, 1)?;
    println!("{report:#?}");
    let src = LrSource::new(template.clone(), window)?;
    let trials = generate_trials(&src, &SettingsDistribution::uniform(), 1, 0, 2000);
    for ab in SettingsPair::ALL {
        let sel: Vec<_> = trials.iter().filter(|t| t.settings == ab).collect();
        let n = sel.len() as f64;
        let a = sel.iter().map(|t| t.a.len()).sum::<usize>() as f64 / n;
        let c = sel.iter().map(|t| coincidence_count(t.a.as_slice(), t.b.as_slice(), ju)).sum::<usize>() as f64 / n;
        println!(
            "{ab}: A {a:.2} (template {:.2}), coincidences at w = j_u {c:.2}",
            template.p_prime.p_a(ab.a) * window
        );
    }
    Ok(())
}
