//! Encode and decode thermocouple converter frames.
//!
//! ```bash
//! cargo run --example thermo_codec
//! ```

use cyclone::codec::{decode_max6675, encode_max6675, ThermoFrame};

fn main() {
    for t in [0.0, 25.0, 100.0, 100.1, 399.99, 1023.75] {
        let frame = encode_max6675(t, false).unwrap();
        let back = decode_max6675(frame.raw()).unwrap();
        println!("{t:>8.2} C -> {frame} (code {:>4}) -> {back:?}", frame.code());
    }
    println!("{:>8} C -> {:?}", 1024.0, encode_max6675(1024.0, false));

    let open = encode_max6675(0.0, true).unwrap();
    println!("open circuit -> {open} -> {:?}", decode_max6675(open.raw()));

    for raw in [0x8000u16, 0x0002, 0x0001] {
        println!("{:#06x} -> {:?}", raw, decode_max6675(raw));
    }

    let valid = (0..=u16::MAX).filter(|&w| ThermoFrame::from_raw(w).is_ok()).count();
    println!("{valid} of 65536 words are well-formed frames");
}
