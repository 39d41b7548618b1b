/// Resolution of the output converter.
pub const ADC_BITS: u32 = 8;

/// Rounds `v` to the nearest level of a symmetric mid-tread converter with
/// `2^bits` codes spanning `[−full_scale, +full_scale]`.
///
/// Levels are spaced `2·full_scale / (2^bits − 1)` apart and include zero;
/// codes run from `−(2^(bits−1) − 1)` to `2^(bits−1) − 1`, so out-of-range
/// inputs saturate at the outermost level, one half-step inside
/// `±full_scale`.
pub fn adc_quantize(v: f64, full_scale: f64, bits: u32) -> f64 {
    let levels = (1u64 << bits) as f64 - 1.0;
    let step = 2.0 * full_scale / levels;
    let max_code = ((1u64 << (bits - 1)) - 1) as f64;
    (v / step).round().clamp(-max_code, max_code) * step
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_is_a_level() {
        assert_eq!(adc_quantize(0.0, 2.0, ADC_BITS), 0.0);
        assert_eq!(adc_quantize(1e-4, 2.0, ADC_BITS), 0.0);
    }

    #[test]
    fn saturates_at_outermost_level() {
        let fs = 2.0;
        let top = adc_quantize(10.0, fs, ADC_BITS);
        assert_eq!(top, adc_quantize(fs, fs, ADC_BITS));
        assert!((top - fs).abs() <= fs / 255.0 + 1e-15);
        assert_eq!(adc_quantize(-10.0, fs, ADC_BITS), -top);
    }

    #[test]
    fn dense_sweep_error_bound() {
        let fs = 3.0;
        let n = 200_000;
        let mut worst: f64 = 0.0;
        for i in 0..=n {
            let v = -fs + 2.0 * fs * i as f64 / n as f64;
            worst = worst.max((adc_quantize(v, fs, ADC_BITS) - v).abs());
        }
        assert!(worst <= fs / 255.0 + 1e-12, "worst error {worst}");
    }
}
