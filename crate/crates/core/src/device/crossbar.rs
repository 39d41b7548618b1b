use std::io::Write;
use std::marker::PhantomData;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cell::{DeviceCell, DeviceParams, VariationMode, NOMINAL_THRESHOLD};
use crate::error::{Error, Result};
use crate::network::WeightLayout;

/// One signed weight stored as the difference of two conductances around
/// the middle of the conductance range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferentialPair {
    pub pos: DeviceCell,
    pub neg: DeviceCell,
}

impl DifferentialPair {
    pub fn read_weight(&self, params: &DeviceParams) -> f64 {
        params.k_w * (self.pos.g - self.neg.g)
    }

    /// Sets both conductances directly. Targets beyond the representable
    /// range are clamped; returns `true` when that happened.
    pub fn write_exact(&mut self, target: f64, params: &DeviceParams) -> bool {
        let w_max = params.w_max();
        let clamped = target.clamp(-w_max, w_max);
        let half = clamped / (2.0 * params.k_w);
        self.pos.g = (params.g_mid() + half).clamp(params.g_min, params.g_max);
        self.neg.g = (params.g_mid() - half).clamp(params.g_min, params.g_max);
        clamped != target
    }
}

/// Counts reported by [`Crossbar::variable_amplitude_update`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramReport {
    /// Weights that received a programming pulse.
    pub programmed: usize,
    /// Non-zero requests too small to reach the switching threshold.
    pub below_floor: usize,
    /// Requests whose line voltage had to be capped.
    pub clipped: usize,
    /// Unselected devices whose conductance moved under a half-select
    /// voltage.
    pub disturbed: usize,
}

impl std::ops::AddAssign for ProgramReport {
    fn add_assign(&mut self, rhs: Self) {
        self.programmed += rhs.programmed;
        self.below_floor += rhs.below_floor;
        self.clipped += rhs.clipped;
        self.disturbed += rhs.disturbed;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Pos,
    Neg,
}

/// A `rows × cols` array of differential pairs holding one weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossbar {
    rows: usize,
    cols: usize,
    pairs: Vec<DifferentialPair>,
    params: DeviceParams,
}

impl Crossbar {
    /// All devices start at mid-range (zero weight) with thresholds drawn
    /// from `mode`.
    pub fn new<R: Rng + ?Sized>(
        rows: usize,
        cols: usize,
        params: DeviceParams,
        mode: VariationMode,
        rng: &mut R,
    ) -> Self {
        let g = params.g_mid();
        let pairs = (0..rows * cols)
            .map(|_| DifferentialPair {
                pos: DeviceCell::sampled(g, mode, rng),
                neg: DeviceCell::sampled(g, mode, rng),
            })
            .collect();
        Self {
            rows,
            cols,
            pairs,
            params,
        }
    }

    pub fn ideal(rows: usize, cols: usize, params: DeviceParams) -> Self {
        let g = params.g_mid();
        let pair = DifferentialPair {
            pos: DeviceCell::ideal(g),
            neg: DeviceCell::ideal(g),
        };
        Self {
            rows,
            cols,
            pairs: vec![pair; rows * cols],
            params,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn params(&self) -> &DeviceParams {
        &self.params
    }

    pub fn pairs(&self) -> &[DifferentialPair] {
        &self.pairs
    }

    pub fn pair_mut(&mut self, row: usize, col: usize) -> &mut DifferentialPair {
        &mut self.pairs[row * self.cols + col]
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len == self.pairs.len() {
            Ok(())
        } else {
            Err(Error::Shape {
                expected: (self.rows, self.cols),
                got: (len, 1),
            })
        }
    }

    pub fn read_weights(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.read_weight(&self.params)).collect()
    }

    /// Programs every pair to its target directly; returns how many targets
    /// were clamped to the representable range.
    pub fn write_exact(&mut self, weights: &[f64]) -> Result<usize> {
        self.check_len(weights.len())?;
        let params = self.params;
        let mut clamped = 0;
        for (pair, w) in self.pairs.iter_mut().zip(weights) {
            if pair.write_exact(*w, &params) {
                clamped += 1;
            }
        }
        Ok(clamped)
    }

    /// Fixed-amplitude update driven by the sign of each requested change.
    ///
    /// A positive sign sets the positive device and resets the negative one;
    /// a negative sign does the opposite. The four pulse groups (set-pos,
    /// reset-neg, set-neg, reset-pos) are applied crossbar-wide in that
    /// order; each device receives at most one pulse.
    pub fn manhattan_update(&mut self, signs: &[i8]) -> Result<()> {
        self.check_len(signs.len())?;
        let v = self.params.manhattan_amplitude;
        let dt = self.params.manhattan_duration;
        let params = self.params;
        let phases: [(i8, Side, f64); 4] = [
            (1, Side::Pos, v),
            (1, Side::Neg, -v),
            (-1, Side::Neg, v),
            (-1, Side::Pos, -v),
        ];
        for (sign, side, voltage) in phases {
            for (pair, s) in self.pairs.iter_mut().zip(signs) {
                if s.signum() == sign {
                    let cell = match side {
                        Side::Pos => &mut pair.pos,
                        Side::Neg => &mut pair.neg,
                    };
                    cell.apply_pulse(voltage, dt, &params);
                }
            }
        }
        Ok(())
    }

    /// Summed line voltage needed for a per-device conductance change on a
    /// nominal mid-range device, or `None` when it would not exceed the
    /// threshold.
    fn required_voltage(&self, dg: f64) -> Option<f64> {
        let p = &self.params;
        let floor = p.rate * p.va_duration * 0.5;
        if dg <= floor {
            return None;
        }
        Some(NOMINAL_THRESHOLD + p.v0 * (dg / floor).ln())
    }

    /// Programs conductance changes proportional to `eta · dw`.
    ///
    /// Each line of the crossbar is programmed in turn. For a selected
    /// device the row line carries `V_X` and its column carries `V_Y`, with
    /// `|V_X| + |V_Y|` logarithmic in the requested change so that the
    /// exponential switching law yields a change proportional to it. `V_X`
    /// is half the largest voltage needed in the row, so every unselected
    /// device sees at most half of the largest programming voltage. Four
    /// polarity groups are used per line as in the Manhattan scheme.
    pub fn variable_amplitude_update(&mut self, dw: &[f64], eta: f64) -> Result<ProgramReport> {
        self.check_len(dw.len())?;
        if let Some(bad) = dw.iter().find(|v| !v.is_finite()) {
            return Err(Error::config(format!("non-finite weight update {bad}")));
        }
        let mut report = ProgramReport::default();
        let cap = self.params.va_max_voltage;
        let duration = self.params.va_duration;
        let params = self.params;
        for row in 0..self.rows {
            // Per-column summed voltage and direction for this row.
            let mut line: Vec<Option<(f64, i8)>> = vec![None; self.cols];
            for col in 0..self.cols {
                let request = eta * dw[row * self.cols + col];
                if request == 0.0 {
                    continue;
                }
                let dg = request.abs() / (2.0 * self.params.k_w);
                match self.required_voltage(dg) {
                    None => report.below_floor += 1,
                    Some(v) => {
                        let v = if v > cap {
                            report.clipped += 1;
                            cap
                        } else {
                            v
                        };
                        line[col] = Some((v, request.signum() as i8));
                        report.programmed += 1;
                    }
                }
            }
            let phases: [(i8, Side, f64); 4] = [
                (1, Side::Pos, 1.0),
                (1, Side::Neg, -1.0),
                (-1, Side::Neg, 1.0),
                (-1, Side::Pos, -1.0),
            ];
            for (sign, side, polarity) in phases {
                let selected: Vec<(usize, f64)> = line
                    .iter()
                    .enumerate()
                    .filter_map(|(c, e)| e.filter(|(_, s)| *s == sign).map(|(v, _)| (c, v)))
                    .collect();
                let Some(v_max) = selected.iter().map(|(_, v)| *v).reduce(f64::max) else {
                    continue;
                };
                let v_x = 0.5 * v_max;
                let mut column_voltage = vec![0.0; self.cols];
                for &(c, v) in &selected {
                    column_voltage[c] = v - v_x;
                }
                for r in 0..self.rows {
                    for c in 0..self.cols {
                        let pair = &mut self.pairs[r * self.cols + c];
                        let on_column = column_voltage[c] > 0.0;
                        for cell_side in [Side::Pos, Side::Neg] {
                            let column_active = on_column && cell_side == side;
                            let magnitude = match (r == row, column_active) {
                                (true, true) => v_x + column_voltage[c],
                                (true, false) => v_x,
                                (false, true) => column_voltage[c],
                                (false, false) => continue,
                            };
                            let cell = match cell_side {
                                Side::Pos => &mut pair.pos,
                                Side::Neg => &mut pair.neg,
                            };
                            let changed = cell.apply_pulse(polarity * magnitude, duration, &params);
                            let selected_cell = r == row && column_active;
                            if changed && !selected_cell {
                                report.disturbed += 1;
                            }
                        }
                    }
                }
            }
        }
        Ok(report)
    }

    /// Writes one line per pair:
    /// `row col g_pos g_neg vth_set_pos vth_reset_pos vth_set_neg vth_reset_neg`.
    pub fn dump<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(
            out,
            "# row col g_pos g_neg vth_set_pos vth_reset_pos vth_set_neg vth_reset_neg"
        )?;
        for (idx, p) in self.pairs.iter().enumerate() {
            writeln!(
                out,
                "{} {} {} {} {} {} {} {}",
                idx / self.cols,
                idx % self.cols,
                p.pos.g,
                p.neg.g,
                p.pos.vth_set,
                p.pos.vth_reset,
                p.neg.vth_set,
                p.neg.vth_reset
            )?;
        }
        Ok(())
    }
}

/// A full network stored on one crossbar per weight block.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarNet<W: WeightLayout> {
    blocks: Vec<Crossbar>,
    saturations: usize,
    _layout: PhantomData<W>,
}

impl<W: WeightLayout> CrossbarNet<W> {
    pub fn new<R: Rng + ?Sized>(params: DeviceParams, mode: VariationMode, rng: &mut R) -> Self {
        let blocks = W::BLOCKS
            .iter()
            .map(|b| Crossbar::new(b.rows, b.cols, params, mode, rng))
            .collect();
        Self {
            blocks,
            saturations: 0,
            _layout: PhantomData,
        }
    }

    pub fn blocks(&self) -> &[Crossbar] {
        &self.blocks
    }

    /// Total number of clamped exact writes so far.
    pub fn saturations(&self) -> usize {
        self.saturations
    }

    pub fn read(&self) -> W {
        let flat: Vec<f64> = self.blocks.iter().flat_map(Crossbar::read_weights).collect();
        W::from_flat_unchecked(&flat)
    }

    fn split<'a, T>(&self, flat: &'a [T]) -> Vec<&'a [T]> {
        let mut out = Vec::with_capacity(self.blocks.len());
        let mut offset = 0;
        for b in &self.blocks {
            let n = b.rows * b.cols;
            out.push(&flat[offset..offset + n]);
            offset += n;
        }
        out
    }

    pub fn write_exact(&mut self, weights: &W) -> usize {
        let flat = weights.to_flat();
        let parts = self.split(&flat);
        let mut clamped = 0;
        for (xbar, part) in self.blocks.iter_mut().zip(parts) {
            clamped += xbar.write_exact(part).expect("layout matches blocks");
        }
        self.saturations += clamped;
        clamped
    }

    /// Applies the Manhattan rule using the signs of `delta`.
    pub fn manhattan_update(&mut self, delta: &W) {
        let signs: Vec<i8> = delta
            .to_flat()
            .iter()
            .map(|v| {
                if *v > 0.0 {
                    1
                } else if *v < 0.0 {
                    -1
                } else {
                    0
                }
            })
            .collect();
        let parts = self.split(&signs);
        for (xbar, part) in self.blocks.iter_mut().zip(parts) {
            xbar.manhattan_update(part).expect("layout matches blocks");
        }
    }

    pub fn variable_amplitude_update(&mut self, delta: &W, eta: f64) -> Result<ProgramReport> {
        let flat = delta.to_flat();
        let parts = self.split(&flat);
        let mut report = ProgramReport::default();
        for (xbar, part) in self.blocks.iter_mut().zip(parts) {
            report += xbar.variable_amplitude_update(part, eta)?;
        }
        Ok(report)
    }

    pub fn dump<O: Write>(&self, out: &mut O) -> std::io::Result<()> {
        for (block, xbar) in W::BLOCKS.iter().zip(&self.blocks) {
            writeln!(out, "[{}] {} {}", block.name, block.rows, block.cols)?;
            xbar.dump(out)?;
        }
        Ok(())
    }
}
