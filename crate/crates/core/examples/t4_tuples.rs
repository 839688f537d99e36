//! Build function-tuples from constructors and combinators and check the
//! defining inequality numerically.

use timetag_bell::trial::PerSetting;
use timetag_bell::tuples::{verify_t4, FunctionTuple, LinearEdgeWindowParams, Verification};

fn main() -> timetag_bell::Result<()> {
    let window = FunctionTuple::linear_edge_window(LinearEdgeWindowParams::symmetric(0.05, 40.0))?;
    let tuples = [
        ("abs", FunctionTuple::abs()),
        ("compression 1", FunctionTuple::compression(1.0)?),
        ("linear edge window", window.clone()),
        ("window, reflected", window.reflect()),
        ("window + abs, clamped", window.add(&FunctionTuple::abs()).clamp_above(1.0)?),
        ("hard window, 22 at 3w", FunctionTuple::hard_window(PerSetting::new(0.1, 0.1, 0.1, 0.3))?),
        ("hard window, equal widths", FunctionTuple::coincidence_window(0.1)?),
    ];
    for (name, f) in &tuples {
        match verify_t4(f, (-1.0, 1.0), 100_000, 1) {
            Verification::Pass => println!("{name:28} member"),
            Verification::Counterexample { x, y, z, lhs, rhs } => {
                println!("{name:28} fails at ({x:.4}, {y:.4}, {z:.4}): {lhs} > {rhs}")
            }
        }
    }
    Ok(())
}
