use statrs::distribution::{ContinuousCDF, Normal};

fn std_normal() -> Normal {
    Normal::standard()
}

/// Equivalent one-sided standard-normal deviation of `p = 2^-logp`.
pub fn logp_to_sigma(logp: f64) -> f64 {
    if logp == 0.0 {
        return 0.0;
    }
    let p = (-logp).exp2();
    -std_normal().inverse_cdf(p)
}

/// `-log2` of the one-sided tail probability beyond `sigma`.
pub fn sigma_to_logp(sigma: f64) -> f64 {
    -std_normal().cdf(-sigma).log2()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_points() {
        assert_eq!(logp_to_sigma(0.0), 0.0);
        assert!((logp_to_sigma(21.7) - 5.0).abs() < 0.01);
        // 2^-5 = 0.03125 lies at 1.86 standard deviations.
        assert!((logp_to_sigma(5.0) - 2.0).abs() < 0.15);
        let table = [(1.0, 2.7), (2.0, 5.5), (3.0, 9.5), (4.0, 14.9), (5.0, 21.7)];
        for (s, l) in table {
            assert!((sigma_to_logp(s) - l).abs() < 0.1, "{s}: {}", sigma_to_logp(s));
        }
    }

    #[test]
    fn round_trip() {
        for l in [0.5, 3.0, 10.0, 40.0, 200.0] {
            let back = sigma_to_logp(logp_to_sigma(l));
            assert!((back - l).abs() < 1e-6 * l.max(1.0), "{l}: {back}");
        }
    }
}
