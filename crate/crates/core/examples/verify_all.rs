//! Every oracle self-check at reduced sample sizes.

use timetag_bell::verify;

fn main() {
    for r in [
        verify::t4_membership(10_000, 1),
        verify::matching_oracle(200, 50, 1),
        verify::lr_nonnegativity(),
        verify::ns_invariance(50_000, 1),
        verify::pbr_correctness(1),
        verify::snr_estimator(100, 1),
    ] {
        println!("{r}");
    }
}
