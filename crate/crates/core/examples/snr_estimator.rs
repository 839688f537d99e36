//! Bias and variance of the running SNR estimator on Gaussian trials.

use timetag_bell::trial::PerSetting;
use timetag_bell::verify::snr_monte_carlo;

fn main() -> timetag_bell::Result<()> {
    let mu = PerSetting::new(-0.2, 0.1, 0.0, 0.3);
    let sd = PerSetting::splat(1.0);
    for n in [500, 2000, 8000] {
        let mc = snr_monte_carlo(mu, sd, 200, n, 200, 1)?;
        println!(
            "N {n}: B_tot {:.2} +- {:.2} (true {:.2}), mean v {:.1} vs Var(B_tot) {:.1}",
            mc.mean_b_tot, mc.se_b_tot, mc.true_total, mc.mean_v, mc.var_b_tot
        );
    }
    Ok(())
}
