//! Protective plate dimensions for capacitive level-sensor electrodes.
//!
//! ```bash
//! cargo run --example shield_plate -- 50 75 120
//! ```

use cyclone::codec::shield_dimensions;

fn main() {
    let mut lengths: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if lengths.is_empty() {
        lengths = vec![50.0, 75.0];
    }
    println!("{:>8}  {:>8}  {:>8}  {:>8}", "E mm", "side", "standoff", "margin");
    for e in lengths {
        match shield_dimensions(e) {
            Ok(g) => println!(
                "{:>8.2}  {:>8.2}  {:>8.2}  {:>8.2}",
                g.electrode_mm, g.side_mm, g.standoff_mm, g.margin_mm
            ),
            Err(err) => println!("{e:>8.2}  {err}"),
        }
    }
}
