//! Numeric answer parsing and tolerance comparison.

/// Parse a numeric answer: integers, decimals, signs, scientific notation,
/// simple fractions `a/b`, and a percentage suffix scaling by 1/100.
/// Anything else (units, free text, infinities) is not a number here.
pub fn parse_numeric(s: &str) -> Option<f64> {
    let t = s.trim();
    let (t, scale) = match t.strip_suffix('%') {
        Some(rest) => (rest.trim_end(), 0.01),
        None => (t, 1.0),
    };
    if let Some((num, den)) = t.split_once('/') {
        let num = parse_plain(num.trim())?;
        let den = parse_plain(den.trim())?;
        if den == 0.0 {
            return None;
        }
        return Some(scale * num / den);
    }
    parse_plain(t).map(|v| v * scale)
}

fn parse_plain(s: &str) -> Option<f64> {
    if s.is_empty() || !s.contains(|c: char| c.is_ascii_digit()) {
        return None;
    }
    // Restrict the alphabet so from_str's "inf"/"nan" spellings are rejected.
    if !s
        .chars()
        .all(|c| c.is_ascii_digit() || matches!(c, '+' | '-' | '.' | 'e' | 'E'))
    {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// True iff both strings parse as numbers and agree within the relative
/// tolerance anchored on the reference: |a - b| <= rtol * max(|b|, 1e-12).
pub fn numeric_equivalent(candidate: &str, reference: &str, rtol: f64) -> bool {
    match (parse_numeric(candidate), parse_numeric(reference)) {
        (Some(a), Some(b)) => (a - b).abs() <= rtol * b.abs().max(1e-12),
        _ => false,
    }
}

/// Both values when both strings parse as numbers.
pub fn parse_pair(candidate: &str, reference: &str) -> Option<(f64, f64)> {
    Some((parse_numeric(candidate)?, parse_numeric(reference)?))
}

/// Unit detection for physics/chemistry: a number followed (after optional
/// whitespace) by an ASCII letter that is not a scientific-notation exponent.
pub fn has_unit_token(s: &str) -> bool {
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        // consume the number: digits and decimal points
        while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
            i += 1;
        }
        // consume a well-formed exponent
        if i < chars.len() && matches!(chars[i], 'e' | 'E') {
            let mut j = i + 1;
            if j < chars.len() && matches!(chars[j], '+' | '-') {
                j += 1;
            }
            if j < chars.len() && chars[j].is_ascii_digit() {
                i = j;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
        }
        let mut k = i;
        while k < chars.len() && chars[k] == ' ' {
            k += 1;
        }
        if k < chars.len() && chars[k].is_ascii_alphabetic() {
            return true;
        }
        i += 1;
    }
    false
}
