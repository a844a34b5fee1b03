//! Phase sensing from sampled oscillator waveforms.
//!
//! Waveforms `v_i(t) = A cos(2πt/T + φ_i(t))` are sampled at `oversample`
//! points per period, peaks and valleys are found with a three-register
//! comparator, and phases are extrapolated linearly from the latest pair of
//! extrema. Characteristic phases are taken relative to oscillator 0.

use std::f64::consts::{PI, TAU};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CaimError, Result};
use crate::models::{wrap_phase, wrap_signed};
use crate::text::sig12;

fn default_oversample() -> usize {
    20
}
fn default_period() -> f64 {
    0.2
}
fn default_amplitude() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformConfig {
    /// Samples per oscillation period.
    #[serde(default = "default_oversample")]
    pub oversample: usize,
    /// Oscillation period in phase time.
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// ADC resolution; `None` keeps full precision.
    #[serde(default)]
    pub quant_bits: Option<u32>,
    /// Treat a run of equal samples as one comparator candidate, stamped at
    /// the run's midpoint. Without it a plateau at a crest hides the extremum.
    #[serde(default = "default_true")]
    pub merge_plateaus: bool,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        WaveformConfig {
            oversample: default_oversample(),
            period: default_period(),
            amplitude: default_amplitude(),
            quant_bits: None,
            merge_plateaus: true,
        }
    }
}

impl WaveformConfig {
    pub fn validate(&self) -> Result<()> {
        if self.oversample < 3 {
            return Err(CaimError::Validation(format!(
                "oversample must be >= 3, got {}",
                self.oversample
            )));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(CaimError::Validation(format!("period must be > 0, got {}", self.period)));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(CaimError::Validation(format!(
                "amplitude must be > 0, got {}",
                self.amplitude
            )));
        }
        if let Some(b) = self.quant_bits {
            if !(1..=24).contains(&b) {
                return Err(CaimError::Validation(format!("quant_bits must be in 1..=24, got {b}")));
            }
        }
        Ok(())
    }

    pub fn sample_interval(&self) -> f64 {
        self.period / self.oversample as f64
    }

    fn voltage(&self, t: f64, phi: f64) -> f64 {
        self.quantize(self.amplitude * (TAU * t / self.period + phi).cos())
    }

    /// Rounds onto `2^bits` evenly spaced levels spanning `[-A, A]`.
    pub fn quantize(&self, v: f64) -> f64 {
        match self.quant_bits {
            None => v,
            Some(bits) => {
                let a = self.amplitude;
                let steps = ((1u64 << bits) - 1) as f64;
                let w = 2.0 * a / steps;
                let k = ((v + a) / w).round().clamp(0.0, steps);
                -a + k * w
            }
        }
    }
}

/// Sampled voltages, one stream per oscillator on a shared time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub t: Vec<f64>,
    pub v: Vec<Vec<f64>>,
}

impl Waveform {
    /// CSV with columns `t,v_0,…,v_{n-1}`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| CaimError::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let mut header = vec!["t".to_string()];
        header.extend((0..self.v.len()).map(|i| format!("v_{i}")));
        w.write_record(&header)?;
        for (s, &t) in self.t.iter().enumerate() {
            let mut row = vec![sig12(t)];
            row.extend(self.v.iter().map(|stream| sig12(stream[s])));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| CaimError::io(path, e))
    }
}

/// Samples the waveforms of a phase trajectory `(times[k], phases[k])`.
///
/// Phases between trajectory points are interpolated along the shorter arc.
/// Refuses trajectories whose spacing exceeds one sampling interval.
pub fn synth_waveform(times: &[f64], phases: &[Vec<f64>], wcfg: &WaveformConfig) -> Result<Waveform> {
    wcfg.validate()?;
    if times.len() != phases.len() {
        return Err(CaimError::dim("trajectory phases", times.len(), phases.len()));
    }
    if times.is_empty() {
        return Err(CaimError::TooSparse("empty trajectory".into()));
    }
    let n = phases[0].len();
    let dt_s = wcfg.sample_interval();
    for (k, w) in times.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(CaimError::Contract(format!("trajectory times not increasing at index {}", k + 1)));
        }
        if w[1] - w[0] > dt_s * (1.0 + 1e-9) {
            return Err(CaimError::TooSparse(format!(
                "trajectory spacing {} at t = {} exceeds the sampling interval {}",
                w[1] - w[0],
                w[0],
                dt_s
            )));
        }
    }
    if let Some(ph) = phases.iter().find(|ph| ph.len() != n) {
        return Err(CaimError::dim("trajectory phases", n, ph.len()));
    }
    let t0 = times[0];
    let t_end = *times.last().unwrap();
    let count = ((t_end - t0) / dt_s + 1e-9).floor() as usize + 1;
    let mut out = Waveform {
        t: Vec::with_capacity(count),
        v: vec![Vec::with_capacity(count); n],
    };
    let mut seg = 0;
    for s in 0..count {
        let t = t0 + s as f64 * dt_s;
        while seg + 1 < times.len() - 1 && times[seg + 1] < t {
            seg += 1;
        }
        out.t.push(t);
        for i in 0..n {
            let phi = if times.len() == 1 {
                phases[0][i]
            } else {
                let (ta, tb) = (times[seg], times[seg + 1]);
                let frac = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
                let a = phases[seg][i];
                a + frac * wrap_signed(phases[seg + 1][i] - a)
            };
            out.v[i].push(wcfg.voltage(t, phi));
        }
    }
    Ok(out)
}

/// Waveforms for phases held constant over `[0, duration]`.
pub fn synth_constant(phases: &[f64], duration: f64, wcfg: &WaveformConfig) -> Result<Waveform> {
    wcfg.validate()?;
    let dt_s = wcfg.sample_interval();
    let steps = (duration / dt_s + 1e-9).floor() as usize;
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt_s).collect();
    let ph = vec![phases.to_vec(); times.len()];
    synth_waveform(&times, &ph, wcfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtremumKind {
    Peak,
    Valley,
}

impl ExtremumKind {
    /// Total phase at this kind of extremum.
    pub fn anchor_phase(self) -> f64 {
        match self {
            ExtremumKind::Peak => 0.0,
            ExtremumKind::Valley => PI,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub t: f64,
    pub kind: ExtremumKind,
}

/// Accepted extrema of one oscillator, in time order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtremaTrack {
    pub events: Vec<Extremum>,
}

/// Streaming three-register comparator with the minimum-interval filter.
#[derive(Debug, Clone)]
pub struct ExtremaDetector {
    min_interval: f64,
    merge_plateaus: bool,
    /// `(value, first time, last time)` of the last three candidates.
    regs: Vec<(f64, f64, f64)>,
    last_accepted: Option<f64>,
    pub track: ExtremaTrack,
}

impl ExtremaDetector {
    pub fn new(wcfg: &WaveformConfig) -> Self {
        ExtremaDetector {
            min_interval: 0.4 * wcfg.period,
            merge_plateaus: wcfg.merge_plateaus,
            regs: Vec::with_capacity(3),
            last_accepted: None,
            track: ExtremaTrack::default(),
        }
    }

    pub fn push(&mut self, t: f64, v: f64) {
        if self.merge_plateaus {
            if let Some(last) = self.regs.last_mut() {
                if last.0 == v {
                    last.2 = t;
                    return;
                }
            }
        }
        if self.regs.len() == 3 {
            self.regs.remove(0);
        }
        self.regs.push((v, t, t));
        if self.regs.len() < 3 {
            return;
        }
        let (a, b, c) = (self.regs[0].0, self.regs[1].0, self.regs[2].0);
        let kind = if b > a && b > c {
            ExtremumKind::Peak
        } else if b < a && b < c {
            ExtremumKind::Valley
        } else {
            return;
        };
        let stamp = 0.5 * (self.regs[1].1 + self.regs[1].2);
        if let Some(prev) = self.last_accepted {
            if stamp - prev <= self.min_interval {
                return;
            }
        }
        self.last_accepted = Some(stamp);
        self.track.events.push(Extremum { t: stamp, kind });
    }
}

pub fn detect_extrema(times: &[f64], stream: &[f64], wcfg: &WaveformConfig) -> ExtremaTrack {
    let mut det = ExtremaDetector::new(wcfg);
    for (&t, &v) in times.iter().zip(stream) {
        det.push(t, v);
    }
    det.track
}

/// Total-phase estimate at `t` from the latest two extrema at or before `t`.
///
/// A peak/valley pair spans π, a same-kind pair 2π. `None` before the second
/// extremum.
pub fn estimate_phase(track: &ExtremaTrack, t: f64) -> Option<f64> {
    let upto = track.events.partition_point(|e| e.t <= t);
    if upto < 2 {
        return None;
    }
    let (prev, last) = (track.events[upto - 2], track.events[upto - 1]);
    let span = if prev.kind == last.kind { TAU } else { PI };
    let gap = last.t - prev.t;
    if !(gap > 0.0) {
        return None;
    }
    Some(wrap_phase(last.kind.anchor_phase() + span * (t - last.t) / gap))
}

/// Phase of oscillator `i` relative to the reference oscillator, in `[0, 2π)`.
pub fn relative_phase(track_ref: &ExtremaTrack, track_i: &ExtremaTrack, t: f64) -> Option<f64> {
    Some(wrap_phase(estimate_phase(track_i, t)? - estimate_phase(track_ref, t)?))
}

/// Streaming sensor fed with exact states during a run; emits sampled
/// waveforms internally and reports characteristic phases on demand.
#[derive(Debug, Clone)]
pub struct PhaseSensor {
    wcfg: WaveformConfig,
    detectors: Vec<ExtremaDetector>,
    next_index: u64,
    last: Option<(f64, Vec<f64>)>,
}

impl PhaseSensor {
    pub fn new(n: usize, wcfg: &WaveformConfig) -> Result<Self> {
        wcfg.validate()?;
        Ok(PhaseSensor {
            wcfg: wcfg.clone(),
            detectors: (0..n).map(|_| ExtremaDetector::new(wcfg)).collect(),
            next_index: 0,
            last: None,
        })
    }

    /// Adds the exact state at `t`; sampling instants up to `t` are filled by
    /// interpolation from the previous state.
    pub fn feed(&mut self, t: f64, psi: &[f64]) -> Result<()> {
        let dt_s = self.wcfg.sample_interval();
        if let Some((t_prev, prev)) = &self.last {
            if t - t_prev > dt_s * (1.0 + 1e-9) {
                return Err(CaimError::TooSparse(format!(
                    "state spacing {} exceeds the sampling interval {dt_s}",
                    t - t_prev
                )));
            }
            loop {
                let ts = self.next_index as f64 * dt_s;
                if ts > t + 1e-12 {
                    break;
                }
                let frac = ((ts - t_prev) / (t - t_prev)).clamp(0.0, 1.0);
                for (i, det) in self.detectors.iter_mut().enumerate() {
                    let phi = prev[i] + frac * wrap_signed(psi[i] - prev[i]);
                    det.push(ts, self.wcfg.voltage(ts, phi));
                }
                self.next_index += 1;
            }
        } else {
            let ts = self.next_index as f64 * dt_s;
            if (ts - t).abs() <= 1e-12 {
                for (i, det) in self.detectors.iter_mut().enumerate() {
                    det.push(ts, self.wcfg.voltage(ts, psi[i]));
                }
                self.next_index += 1;
            } else {
                self.next_index = (t / dt_s).ceil() as u64;
            }
        }
        self.last = Some((t, psi.to_vec()));
        Ok(())
    }

    /// Characteristic phases with oscillator 0 as reference (entry 0 is 0).
    pub fn relative_phases(&self, t: f64) -> Option<Vec<f64>> {
        let reference = &self.detectors.first()?.track;
        self.detectors
            .iter()
            .map(|d| relative_phase(reference, &d.track, t))
            .collect()
    }

    pub fn tracks(&self) -> impl Iterator<Item = &ExtremaTrack> {
        self.detectors.iter().map(|d| &d.track)
    }
}
