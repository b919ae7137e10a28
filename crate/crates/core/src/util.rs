//! Small formatting and numeric helpers shared by the artifact writers.

/// Formats a float with 17 significant digits. Always scientific, so the
/// textual width does not depend on magnitude.
pub fn fmt17(v: f64) -> String {
    if v.is_nan() {
        return "nan".to_string();
    }
    format!("{:.16e}", v)
}

/// `fmt17` for optional values; `None` becomes an empty CSV field.
pub fn fmt17_opt(v: Option<f64>) -> String {
    v.map(fmt17).unwrap_or_default()
}

/// Lower-case hex encoding of a byte slice.
pub fn hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{:02x}", b);
    }
    s
}

/// Three-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss3(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    const NODE: f64 = 0.774_596_669_241_483_4;
    const W_OUT: f64 = 5.0 / 9.0;
    const W_MID: f64 = 8.0 / 9.0;
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    half * (W_OUT * f(mid - half * NODE) + W_MID * f(mid) + W_OUT * f(mid + half * NODE))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt17_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            let s = fmt17(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn gauss3_exact_for_quintics() {
        let v = gauss3(-1.0, 2.0, |x| x.powi(5) - 3.0 * x.powi(2) + 1.0);
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0) + 3.0;
        assert!((v - exact).abs() < 1e-12);
    }
}
