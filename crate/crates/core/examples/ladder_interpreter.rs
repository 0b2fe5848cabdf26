//! Parse a small ladder program, scan it, and show what validation rejects.
//!
//! ```bash
//! cargo run --example ladder_interpreter
//! ```

use cyclone::ladder::{parse_ladder, scan, ScanImage, Value};

const PUMP: &str = "
# Start/stop seal-in with a 300 ms on-delay and an over-pressure trip.
VAR start : BOOL;
VAR stop : BOOL;
VAR pressure : REAL;
VAR running : BOOL;
VAR pump : BOOL;
TIMER warmup PRESET 300;

RUNG : OR([NO start], [NO running]) [NC stop] [CMP pressure < 6.5] => COIL running;
RUNG : [NO running] [TON warmup] => COIL pump;
";

fn main() {
    let program = parse_ladder(PUMP).expect("program is valid");
    println!("inputs  {:?}", program.input_names());
    println!("outputs {:?}", program.output_names());

    let mut image = ScanImage::for_program(&program);
    let script: [(&str, Value, u32); 4] = [
        ("start", Value::Bool(true), 1),
        ("start", Value::Bool(false), 8),
        ("pressure", Value::Real(7.0), 1),
        ("pressure", Value::Real(1.0), 2),
    ];
    let mut t = 0;
    for (name, value, scans) in script {
        image.set_input(name, value);
        for _ in 0..scans {
            image = scan(&program, &image, 50).expect("image matches program");
            t += 50;
            println!(
                "t={t:>4} ms  {name}={value:<6?}  running={:?} pump={:?} warmup={} ms",
                image.output("running").unwrap(),
                image.output("pump").unwrap(),
                image.timers["warmup"].elapsed_ms,
            );
        }
    }

    println!("\ncanonical form:\n{program}");

    let broken = "
VAR a : BOOL;
VAR r : REAL;
VAR q : BOOL;
TIMER t PRESET 0;
RUNG : [NO a] [NO missing] => COIL q;
RUNG : [NO r] => COIL q;
RUNG : [CMP a > 1.0] [TON t] => SET q;
";
    match parse_ladder(broken) {
        Ok(_) => unreachable!(),
        Err(diags) => {
            println!("{} diagnostics:", diags.len());
            for d in diags.iter() {
                println!("  {d}");
            }
        }
    }
}
