//! Thermocouple frame codec and level-sensor shield geometry.
//!
//! Frames follow the MAX6675 serial word layout:
//!
//! ```text
//!  15 | 14 ............. 3 |   2   |  1  |  0
//!   0 | temperature code   | open  | id  | tri-state
//! ```
//!
//! The temperature code is unsigned with an LSB of 0.25 °C, so the readable
//! range is 0 to 1023.75 °C. Bits 15, 1 and 0 are always zero on the wire.

use std::fmt;

use thiserror::Error;

/// Temperature resolution of one code step, in °C.
pub const LSB_CELSIUS: f64 = 0.25;
/// Largest temperature code representable in the 12-bit field.
pub const MAX_CODE: u16 = 0x0FFF;
/// Highest encodable temperature.
pub const MAX_CELSIUS: f64 = MAX_CODE as f64 * LSB_CELSIUS;

const OPEN_BIT: u16 = 1 << 2;
const RESERVED_MASK: u16 = 0x8003;
const CODE_SHIFT: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum CodecError {
    #[error("temperature {0} °C outside encodable range 0..=1023.75")]
    OutOfRange(f64),
    #[error("temperature code {0} exceeds 12 bits")]
    CodeOutOfRange(u16),
    #[error("invalid frame 0x{0:04X}: reserved bit set")]
    InvalidFrame(u16),
    #[error("electrode length must be positive and finite, got {0} mm")]
    NonPositiveElectrode(f64),
}

/// One 16-bit thermocouple converter word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ThermoFrame(u16);

impl ThermoFrame {
    /// Build a frame from its temperature code and open-circuit flag.
    pub fn from_parts(code: u16, open_circuit: bool) -> Result<Self, CodecError> {
        if code > MAX_CODE {
            return Err(CodecError::CodeOutOfRange(code));
        }
        let mut raw = code << CODE_SHIFT;
        if open_circuit {
            raw |= OPEN_BIT;
        }
        Ok(ThermoFrame(raw))
    }

    /// Accept a raw word only if its reserved bits are clear.
    pub fn from_raw(raw: u16) -> Result<Self, CodecError> {
        if raw & RESERVED_MASK != 0 {
            return Err(CodecError::InvalidFrame(raw));
        }
        Ok(ThermoFrame(raw))
    }

    pub fn raw(self) -> u16 {
        self.0
    }

    pub fn code(self) -> u16 {
        (self.0 >> CODE_SHIFT) & MAX_CODE
    }

    pub fn open_circuit(self) -> bool {
        self.0 & OPEN_BIT != 0
    }

    pub fn reading(self) -> ThermoReading {
        if self.open_circuit() {
            ThermoReading::OpenThermocouple
        } else {
            ThermoReading::Celsius(f64::from(self.code()) * LSB_CELSIUS)
        }
    }
}

impl fmt::Display for ThermoFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:04X}", self.0)
    }
}

/// A decoded, well-formed frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThermoReading {
    Celsius(f64),
    OpenThermocouple,
}

impl fmt::Display for ThermoReading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThermoReading::Celsius(c) => write!(f, "{c:.2} °C"),
            ThermoReading::OpenThermocouple => f.write_str("FAULT (open thermocouple)"),
        }
    }
}

/// Quantize a temperature into a frame.
///
/// The code is `floor(temp_c / 0.25)`. With `open_circuit` set the
/// temperature is ignored and the code field is left at zero, which is what
/// the converter reports when it has no junction to measure.
pub fn encode_max6675(temp_c: f64, open_circuit: bool) -> Result<ThermoFrame, CodecError> {
    if open_circuit {
        return ThermoFrame::from_parts(0, true);
    }
    if !(0.0..=MAX_CELSIUS).contains(&temp_c) {
        return Err(CodecError::OutOfRange(temp_c));
    }
    // 0.25 is a power of two, so the division is exact and floor is the only rounding.
    let code = (temp_c / LSB_CELSIUS).floor() as u16;
    ThermoFrame::from_parts(code, false)
}

/// Decode a raw word: invalid if any reserved bit is set, otherwise the
/// open-circuit fault or the quantized temperature.
pub fn decode_max6675(raw: u16) -> Result<ThermoReading, CodecError> {
    ThermoFrame::from_raw(raw).map(ThermoFrame::reading)
}

/// Protective plate dimensions for a capacitive level probe, all in mm.
///
/// `side`, `standoff` and `margin` are our names for the three plate
/// parameters; each is a fixed ratio of the electrode length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShieldGeometry {
    pub electrode_mm: f64,
    pub side_mm: f64,
    pub standoff_mm: f64,
    pub margin_mm: f64,
}

pub fn shield_dimensions(electrode_mm: f64) -> Result<ShieldGeometry, CodecError> {
    if !electrode_mm.is_finite() || electrode_mm <= 0.0 {
        return Err(CodecError::NonPositiveElectrode(electrode_mm));
    }
    Ok(ShieldGeometry {
        electrode_mm,
        side_mm: electrode_mm * 4.0 / 3.0,
        standoff_mm: electrode_mm * 3.0 / 4.0,
        margin_mm: electrode_mm * 2.0 / 3.0,
    })
}

impl fmt::Display for ShieldGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "S={:.2} P={:.2} M={:.2}",
            self.side_mm, self.standoff_mm, self.margin_mm
        )
    }
}
