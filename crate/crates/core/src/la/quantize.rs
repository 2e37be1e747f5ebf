/// Mantissa width of an IEEE-754 double; quantizing to this many bits is the
/// identity.
pub const FULL_PRECISION: u32 = 52;

/// Rounds `x` to `mantissa_bits` fraction bits, round-half-to-even.
///
/// Works on the raw bit pattern: rounding the low `52 - mantissa_bits` bits
/// of the integer representation carries into the exponent when the
/// mantissa overflows, which is exactly binary rounding.
pub fn quantize_scalar(x: f64, mantissa_bits: u32) -> f64 {
    assert!(
        (1..=FULL_PRECISION).contains(&mantissa_bits),
        "mantissa_bits must be in 1..=52, got {mantissa_bits}"
    );
    if mantissa_bits == FULL_PRECISION || !x.is_finite() {
        return x;
    }
    let drop = FULL_PRECISION - mantissa_bits;
    let bits = x.to_bits();
    let mask = (1u64 << drop) - 1;
    let half = 1u64 << (drop - 1);
    let low = bits & mask;
    let mut kept = bits & !mask;
    if low > half || (low == half && (kept >> drop) & 1 == 1) {
        kept += 1u64 << drop;
    }
    f64::from_bits(kept)
}

pub fn quantize(v: &[f64], mantissa_bits: u32) -> Vec<f64> {
    v.iter()
        .map(|&x| quantize_scalar(x, mantissa_bits))
        .collect()
}
