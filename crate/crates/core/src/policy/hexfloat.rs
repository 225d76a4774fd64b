//! C99-style hex-float strings (`%a` format) for bit-exact f64 round-trips
//! through text. Policy files store logits this way.

/// Encode an f64 as a hex-float literal, e.g. `-0x1.5bf0a8b145769p+1`.
pub fn encode(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v < 0.0 { "-inf".into() } else { "inf".into() };
    }
    let bits = v.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp_biased = ((bits >> 52) & 0x7ff) as i64;
    let mantissa = bits & 0x000f_ffff_ffff_ffff;
    if exp_biased == 0 && mantissa == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if exp_biased == 0 {
        ('0', -1022i64) // subnormal
    } else {
        ('1', exp_biased - 1023)
    };
    let mut digits = format!("{mantissa:013x}");
    while digits.ends_with('0') {
        digits.pop();
    }
    let frac = if digits.is_empty() { String::new() } else { format!(".{digits}") };
    format!("{sign}0x{lead}{frac}p{exp:+}")
}

/// Parse a hex-float literal. Accepts what `encode` produces plus an optional
/// `+` sign and uppercase digits. Mantissas up to 14 hex digits are exact.
pub fn decode(s: &str) -> Option<f64> {
    let t = s.trim();
    match t {
        "nan" => return Some(f64::NAN),
        "inf" | "+inf" => return Some(f64::INFINITY),
        "-inf" => return Some(f64::NEG_INFINITY),
        _ => {}
    }
    let (neg, rest) = match t.as_bytes().first()? {
        b'-' => (true, &t[1..]),
        b'+' => (false, &t[1..]),
        _ => (false, t),
    };
    let rest = rest.strip_prefix("0x").or_else(|| rest.strip_prefix("0X"))?;
    let p = rest.find(['p', 'P'])?;
    let (mant_str, exp_str) = (&rest[..p], &rest[p + 1..]);
    let exp: i32 = exp_str.parse().ok()?;

    let (int_part, frac_part) = match mant_str.find('.') {
        Some(dot) => (&mant_str[..dot], &mant_str[dot + 1..]),
        None => (mant_str, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let mut mantissa: u64 = 0;
    let mut digits = 0usize;
    for c in int_part.chars().chain(frac_part.chars()) {
        let d = c.to_digit(16)? as u64;
        // 15 hex digits keep the accumulator well inside u64
        if digits >= 15 {
            return None;
        }
        mantissa = (mantissa << 4) | d;
        digits += 1;
    }
    let scale = exp - 4 * frac_part.len() as i32;
    let mut value = mantissa as f64;
    // exact scaling by a power of two, clamped into powi's domain per step
    let mut remaining = scale;
    while remaining != 0 {
        let step = remaining.clamp(-1000, 1000);
        value *= 2f64.powi(step);
        remaining -= step;
    }
    Some(if neg { -value } else { value })
}
