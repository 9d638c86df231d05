//! IBM System/360 hexadecimal floating point, as used by SAS transport files.
//!
//! Layout (big-endian, 8 bytes): sign bit, 7-bit base-16 exponent biased by
//! 64, then a 56-bit fraction `0.f` with the radix point left of the fraction.

/// Outcome of decoding one numeric field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decoded {
    Value(f64),
    /// SAS missing value; the code is `.`, `A`..`Z` or `_`.
    Missing(u8),
}

fn is_missing_code(b: u8) -> bool {
    b == b'.' || b == b'_' || b.is_ascii_uppercase()
}

/// Decodes a numeric field of 1–8 bytes; shorter fields are right-padded with zeros.
pub fn decode(field: &[u8]) -> Decoded {
    let mut buf = [0u8; 8];
    let n = field.len().min(8);
    buf[..n].copy_from_slice(&field[..n]);

    if buf[1..].iter().all(|&b| b == 0) && is_missing_code(buf[0]) {
        return Decoded::Missing(buf[0]);
    }

    let negative = buf[0] & 0x80 != 0;
    let exponent = i32::from(buf[0] & 0x7f) - 64;
    let fraction = u64::from_be_bytes([0, buf[1], buf[2], buf[3], buf[4], buf[5], buf[6], buf[7]]);
    if fraction == 0 {
        return Decoded::Value(if negative { -0.0 } else { 0.0 });
    }

    // value = fraction * 2^(4*exponent - 56); the int→float conversion is the
    // only rounding step, the power-of-two scaling is exact.
    let magnitude = scale_pow2(fraction as f64, 4 * exponent - 56);
    Decoded::Value(if negative { -magnitude } else { magnitude })
}

fn scale_pow2(x: f64, exp: i32) -> f64 {
    // Split so that neither factor over/underflows on its own.
    let mut x = x;
    let mut e = exp;
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
    }
    x * 2f64.powi(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodeError {
    NotFinite,
    OutOfRange,
}

/// Encodes a finite `f64` exactly (every normal double with magnitude in
/// roughly `5.4e-79..7.2e75` is representable without rounding).
pub fn encode(value: f64) -> Result<[u8; 8], EncodeError> {
    if !value.is_finite() {
        return Err(EncodeError::NotFinite);
    }
    if value == 0.0 {
        return Ok([0; 8]);
    }
    let bits = value.to_bits();
    let negative = bits >> 63 == 1;
    let raw_exp = ((bits >> 52) & 0x7ff) as i32;
    let raw_mant = bits & ((1u64 << 52) - 1);

    // value = mant * 2^pow with mant in [2^52, 2^53)
    let (mut mant, mut pow) = if raw_exp == 0 {
        (raw_mant, -1074)
    } else {
        (raw_mant | (1u64 << 52), raw_exp - 1075)
    };
    while mant < (1u64 << 52) {
        mant <<= 1;
        pow -= 1;
    }

    // Want fraction * 2^(4*(e-64) - 56) with fraction in [2^52, 2^56).
    let shift = (pow + 56).rem_euclid(4);
    let fraction = mant << shift;
    let e = (pow + 56 - shift) / 4 + 64;
    if !(0..=127).contains(&e) {
        return Err(EncodeError::OutOfRange);
    }

    let mut out = [0u8; 8];
    out[1..].copy_from_slice(&fraction.to_be_bytes()[1..]);
    out[0] = e as u8 | if negative { 0x80 } else { 0 };
    Ok(out)
}

/// Standard SAS missing (`.`).
pub const MISSING: [u8; 8] = [b'.', 0, 0, 0, 0, 0, 0, 0];
