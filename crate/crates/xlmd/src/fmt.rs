//! Number formatting shared by the CSV writers.

/// Formats with 17 significant digits in scientific notation, enough to
/// round-trip any `f64` exactly.
pub fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::sig17;

    #[test]
    fn sig17_round_trips() {
        for &x in &[
            0.0,
            1.0,
            -1.0,
            1e-5,
            std::f64::consts::PI,
            -2.2250738585072014e-308,
            1.7976931348623157e308,
            0.1 + 0.2,
        ] {
            let s = sig17(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} -> {s} -> {back}");
        }
    }

    #[test]
    fn sig17_has_17_digits() {
        assert_eq!(sig17(0.5), "5.0000000000000000e-1");
        assert_eq!(sig17(1.0), "1.0000000000000000e0");
    }
}
