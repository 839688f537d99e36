//! Minimum-cost matchings between two timetag sequences.

use timetag_bell::distance::{distance, min_cost, split_at_gaps};
use timetag_bell::oracle::brute_force_min_cost;
use timetag_bell::trial::SettingsPair;
use timetag_bell::tuples::{FunctionTuple, LinearEdgeWindowParams};

fn main() -> timetag_bell::Result<()> {
    let r = [0.10, 0.52, 0.90, 3.00];
    let t = [0.12, 0.60, 2.95, 3.02, 7.0];
    let f = FunctionTuple::linear_edge_window(LinearEdgeWindowParams::symmetric(0.05, 20.0))?;
    for ab in SettingsPair::ALL {
        let res = min_cost(&f, ab, &r, &t);
        let brute = brute_force_min_cost(|x| f.eval(ab, x), &r, &t);
        println!("{ab}: cost {:.3} (brute force {brute:.3}), pairs {:?}", res.cost, res.matching.pairs);
    }
    let u = f.unit_radius().expect("bounded window");
    println!("segments at unit radius {u}: {:?}", split_at_gaps(&r, &t, u));
    println!("split distance at 22: {:.3}", distance(&f, SettingsPair::S22, &r, &t));
    Ok(())
}
