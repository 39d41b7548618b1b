use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal switching threshold of an ideal device, in volts.
pub const NOMINAL_THRESHOLD: f64 = 2.25;

/// Device-to-device threshold variation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariationMode {
    /// Both thresholds at the nominal 2.25 V.
    Ideal,
    /// Each threshold uniform within ±30 % of nominal.
    Pct30,
    /// Each threshold uniform in [1 V, 5.5 V].
    FullRange,
}

impl VariationMode {
    pub fn sample_threshold<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            VariationMode::Ideal => NOMINAL_THRESHOLD,
            VariationMode::Pct30 => rng.random_range(0.7 * NOMINAL_THRESHOLD..=1.3 * NOMINAL_THRESHOLD),
            VariationMode::FullRange => rng.random_range(1.0..=5.5),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VariationMode::Ideal => "ideal",
            VariationMode::Pct30 => "pct30",
            VariationMode::FullRange => "full_range",
        }
    }
}

impl std::str::FromStr for VariationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ideal" => Ok(VariationMode::Ideal),
            "pct30" | "30" | "30pct" => Ok(VariationMode::Pct30),
            "full_range" | "fullrange" | "full" => Ok(VariationMode::FullRange),
            other => Err(Error::config(format!("unknown variation mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for VariationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Physical constants shared by every device in a crossbar.
///
/// Conductance is expressed in normalized units. A pulse of amplitude `|v|`
/// above the relevant threshold changes the conductance by
/// `rate · duration · exp((|v| − vth) / v0) · window(g)`, where the window
/// is the remaining headroom toward the rail in the pulse direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceParams {
    pub g_min: f64,
    pub g_max: f64,
    /// Weight per unit of differential conductance.
    pub k_w: f64,
    /// Switching rate prefactor `A`, per second.
    pub rate: f64,
    /// Voltage scale of the exponential rate law.
    pub v0: f64,
    /// Fixed Manhattan pulse amplitude.
    pub manhattan_amplitude: f64,
    /// Fixed Manhattan pulse duration.
    pub manhattan_duration: f64,
    /// Pulse duration of the variable-amplitude scheme.
    pub va_duration: f64,
    /// Upper bound on the summed line voltages of the variable-amplitude
    /// scheme; each line carries at most half of it.
    pub va_max_voltage: f64,
}

/// Conductance change of one nominal Manhattan pulse on an ideal mid-range
/// device, as a fraction of the conductance range.
pub const MANHATTAN_STEP_FRACTION: f64 = 2e-5;

impl Default for DeviceParams {
    fn default() -> Self {
        Self::calibrated(0.45, 2.8, 1e-6, MANHATTAN_STEP_FRACTION, 1e-3)
    }
}

impl DeviceParams {
    /// Chooses the rate prefactor so that one nominal Manhattan pulse moves
    /// an ideal mid-range device by `step_fraction` of the conductance range.
    /// `va_floor_weight` is the smallest weight change the variable-amplitude
    /// scheme can program on an ideal mid-range pair.
    pub fn calibrated(
        v0: f64,
        manhattan_amplitude: f64,
        manhattan_duration: f64,
        step_fraction: f64,
        va_floor_weight: f64,
    ) -> Self {
        let g_min = 0.0;
        let g_max = 1.0;
        let k_w = 3.0;
        let mid_window = 0.5;
        let rate = step_fraction * (g_max - g_min)
            / (manhattan_duration * mid_window * ((manhattan_amplitude - NOMINAL_THRESHOLD) / v0).exp());
        // Smallest programmable per-device change happens exactly at threshold.
        let floor_conductance = va_floor_weight / (2.0 * k_w);
        let va_duration = floor_conductance / (rate * mid_window);
        Self {
            g_min,
            g_max,
            k_w,
            rate,
            v0,
            manhattan_amplitude,
            manhattan_duration,
            va_duration,
            va_max_voltage: 2.0 * NOMINAL_THRESHOLD - 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.g_max > self.g_min
            && self.k_w > 0.0
            && self.rate > 0.0
            && self.v0 > 0.0
            && self.manhattan_amplitude > 0.0
            && self.manhattan_duration > 0.0
            && self.va_duration > 0.0
            && self.va_max_voltage > NOMINAL_THRESHOLD;
        if ok {
            Ok(())
        } else {
            Err(Error::config("device parameters out of range"))
        }
    }

    pub fn g_mid(&self) -> f64 {
        0.5 * (self.g_min + self.g_max)
    }

    /// Largest representable weight magnitude.
    pub fn w_max(&self) -> f64 {
        self.k_w * (self.g_max - self.g_min)
    }

    /// Conductance change of a device at `g` under a super-threshold pulse.
    fn delta(&self, g: f64, overdrive: f64, duration: f64, set: bool) -> f64 {
        let range = self.g_max - self.g_min;
        let window = if set {
            (self.g_max - g) / range
        } else {
            (g - self.g_min) / range
        };
        self.rate * duration * (overdrive / self.v0).exp() * window.max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceCell {
    pub g: f64,
    pub vth_set: f64,
    pub vth_reset: f64,
}

impl DeviceCell {
    pub fn new(g: f64, vth_set: f64, vth_reset: f64) -> Self {
        Self { g, vth_set, vth_reset }
    }

    pub fn ideal(g: f64) -> Self {
        Self::new(g, NOMINAL_THRESHOLD, NOMINAL_THRESHOLD)
    }

    pub fn sampled<R: Rng + ?Sized>(g: f64, mode: VariationMode, rng: &mut R) -> Self {
        let vth_set = mode.sample_threshold(rng);
        let vth_reset = mode.sample_threshold(rng);
        Self::new(g, vth_set, vth_reset)
    }

    /// Applies one voltage pulse. Positive voltages set (raise conductance),
    /// negative voltages reset. Pulses at or below the threshold do nothing.
    /// Returns whether the conductance changed.
    pub fn apply_pulse(&mut self, v: f64, duration: f64, params: &DeviceParams) -> bool {
        let before = self.g;
        if v > self.vth_set {
            let dg = params.delta(self.g, v - self.vth_set, duration, true);
            self.g = (self.g + dg).min(params.g_max);
        } else if -v > self.vth_reset {
            let dg = params.delta(self.g, -v - self.vth_reset, duration, false);
            self.g = (self.g - dg).max(params.g_min);
        }
        self.g != before
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sub_threshold_pulse_is_ignored() {
        let p = DeviceParams::default();
        let mut c = DeviceCell::ideal(0.4);
        assert!(!c.apply_pulse(2.0, 1e-6, &p));
        assert!(!c.apply_pulse(-2.25, 1e-6, &p));
        assert_eq!(c.g, 0.4);
    }

    #[test]
    fn saturated_device_stays_at_rail() {
        let p = DeviceParams::default();
        let mut c = DeviceCell::ideal(p.g_max);
        c.apply_pulse(4.0, 1e-3, &p);
        assert_eq!(c.g, p.g_max);
        let mut c = DeviceCell::ideal(0.99);
        c.apply_pulse(4.4, 1.0, &p);
        assert_eq!(c.g, p.g_max);
    }

    #[test]
    fn nominal_manhattan_pulse_moves_calibrated_step() {
        let p = DeviceParams::default();
        let mut c = DeviceCell::ideal(0.5);
        c.apply_pulse(p.manhattan_amplitude, p.manhattan_duration, &p);
        assert!((c.g - 0.5 - MANHATTAN_STEP_FRACTION).abs() < 1e-15);
        let mut c = DeviceCell::ideal(0.5);
        c.apply_pulse(-p.manhattan_amplitude, p.manhattan_duration, &p);
        assert!((c.g - 0.5 + MANHATTAN_STEP_FRACTION).abs() < 1e-15);
        let p = DeviceParams::calibrated(0.45, 2.8, 1e-6, 0.01, 1e-3);
        let mut c = DeviceCell::ideal(0.5);
        c.apply_pulse(p.manhattan_amplitude, p.manhattan_duration, &p);
        assert!((c.g - 0.51).abs() < 1e-12);
    }

    #[test]
    fn raising_voltage_by_v0_ln2_doubles_change() {
        let p = DeviceParams::default();
        let dt = 1e-8;
        let change = |v: f64| {
            let mut c = DeviceCell::ideal(0.5);
            c.apply_pulse(v, dt, &p);
            c.g - 0.5
        };
        let base = change(2.6);
        let doubled = change(2.6 + p.v0 * std::f64::consts::LN_2);
        assert!(base > 0.0);
        assert!((doubled / base - 2.0).abs() < 1e-9);
    }

    #[test]
    fn variation_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let v = VariationMode::Pct30.sample_threshold(&mut rng);
            assert!((1.575..=2.925).contains(&v));
            let v = VariationMode::FullRange.sample_threshold(&mut rng);
            assert!((1.0..=5.5).contains(&v));
        }
        assert_eq!(VariationMode::Ideal.sample_threshold(&mut rng), 2.25);
    }

    #[test]
    fn parse_variation_mode() {
        assert_eq!("ideal".parse::<VariationMode>().unwrap(), VariationMode::Ideal);
        assert_eq!("full_range".parse::<VariationMode>().unwrap(), VariationMode::FullRange);
        assert!("bogus".parse::<VariationMode>().is_err());
    }
}
