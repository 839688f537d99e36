//! Binary CH Bell functions: LR minimum by enumeration, PR box and
//! quantum expectations, and the effect of the non-signaling adjustment.

use timetag_bell::bell::{
    apply_ns_adjustment, binary_behaviour, lr_oracle, pr_box, BellFunction, BinaryTable, NsAdjustment,
    BINARY_SPACE,
};
use timetag_bell::simsrc::optimize_source;
use timetag_bell::trial::PerSetting;

fn main() -> timetag_bell::Result<()> {
    let opt = optimize_source(0.8)?;
    let quantum = binary_behaviour(&PerSetting::from_fn(|ab| opt.probs.p[ab]));
    for (name, adj) in [("plain", NsAdjustment::none()), ("adjusted", NsAdjustment::standard())] {
        let b = BellFunction::uniform(apply_ns_adjustment(BinaryTable::positive_part(), adj));
        let (lr_min, _) = lr_oracle(&b, &BINARY_SPACE)?;
        println!(
            "{name:9} LR minimum {lr_min:+.4}  PR box {:+.4}  quantum (eta 0.8) {:+.5}",
            b.expectation(&pr_box()),
            b.expectation(&quantum)
        );
    }
    Ok(())
}
