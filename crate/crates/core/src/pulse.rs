//! Pulse envelopes, channels, and time-ordered schedules.
//!
//! Times are integer sample counts of the device sample time `dt`. Sample `j`
//! of an envelope is evaluated at the interval midpoint `t = j + 0.5`, so the
//! continuous envelope vanishes at `t = 0` and `t = duration`.

use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gaussian `exp(-(t-mu)^2 / 2 sigma^2)` lifted so it is zero at `mu ± half_width`
/// and rescaled to peak 1. Returns value and derivative in 1/sample units.
fn lifted_gaussian(t: f64, mu: f64, sigma: f64, half_width: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    let edge = (-half_width * half_width / (2.0 * s2)).exp();
    let raw = (-(t - mu) * (t - mu) / (2.0 * s2)).exp();
    let norm = 1.0 - edge;
    if norm <= f64::EPSILON {
        // sigma far larger than the pulse: the lifted shape tends to a parabola
        let x = (t - mu) / half_width;
        return (1.0 - x * x, -2.0 * (t - mu) / (half_width * half_width));
    }
    ((raw - edge) / norm, -(t - mu) / s2 * raw / norm)
}

/// Gaussian pulse with a quadrature derivative component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DragEnvelope {
    pub amp: Complex64,
    pub sigma: f64,
    pub beta: f64,
    pub duration: u64,
}

impl DragEnvelope {
    pub fn new(amp: Complex64, sigma: f64, beta: f64, duration: u64) -> Result<Self> {
        let env = DragEnvelope {
            amp,
            sigma,
            beta,
            duration,
        };
        env.validate()?;
        Ok(env)
    }

    fn validate(&self) -> Result<()> {
        if self.amp.norm() > 1.0 + 1e-12 {
            return Err(Error::validation("amp", format!("|amp| = {} > 1", self.amp.norm())));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::validation("sigma", "must be positive"));
        }
        Ok(())
    }

    /// Unit-amplitude shape at time `t` (samples), as `g + i beta g'`.
    pub fn shape_at(&self, t: f64) -> Complex64 {
        let half = self.duration as f64 / 2.0;
        let (g, dg) = lifted_gaussian(t, half, self.sigma, half);
        Complex64::new(g, self.beta * dg)
    }
}

/// Flat-top pulse with lifted Gaussian rise and fall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatTopGaussianEnvelope {
    pub amp: Complex64,
    pub sigma: f64,
    pub risefall_ratio: f64,
    pub duration: u64,
}

impl FlatTopGaussianEnvelope {
    pub fn new(amp: Complex64, sigma: f64, risefall_ratio: f64, duration: u64) -> Result<Self> {
        let env = FlatTopGaussianEnvelope {
            amp,
            sigma,
            risefall_ratio,
            duration,
        };
        env.validate()?;
        Ok(env)
    }

    fn validate(&self) -> Result<()> {
        if self.amp.norm() > 1.0 + 1e-12 {
            return Err(Error::validation("amp", format!("|amp| = {} > 1", self.amp.norm())));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::validation("sigma", "must be positive"));
        }
        if !(self.risefall_ratio > 0.0) {
            return Err(Error::validation("risefall_ratio", "must be positive"));
        }
        Ok(())
    }

    pub fn risefall(&self) -> f64 {
        self.risefall_ratio * self.sigma
    }

    pub fn flat_width(&self) -> f64 {
        (self.duration as f64 - 2.0 * self.risefall()).max(0.0)
    }

    pub fn shape_at(&self, t: f64) -> f64 {
        let d = self.duration as f64;
        let r = self.risefall();
        // Short pulses keep the full-length edges and are cut where rise and
        // fall meet, so they never reach `amp` and stay spectrally narrow.
        let rise = if t < r { lifted_gaussian(t, r, self.sigma, r).0 } else { 1.0 };
        let fall = if t > d - r { lifted_gaussian(t, d - r, self.sigma, r).0 } else { 1.0 };
        rise.min(fall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Envelope {
    Drag(DragEnvelope),
    FlatTop(FlatTopGaussianEnvelope),
}

impl Envelope {
    pub fn duration(&self) -> u64 {
        match self {
            Envelope::Drag(e) => e.duration,
            Envelope::FlatTop(e) => e.duration,
        }
    }

    pub fn amp(&self) -> Complex64 {
        match self {
            Envelope::Drag(e) => e.amp,
            Envelope::FlatTop(e) => e.amp,
        }
    }

    /// Complex envelope value (amplitude included, no frame phase) at time `t`.
    pub fn value_at(&self, t: f64) -> Complex64 {
        match self {
            Envelope::Drag(e) => e.amp * e.shape_at(t),
            Envelope::FlatTop(e) => e.amp * e.shape_at(t),
        }
    }

    fn kind_name(&self) -> &'static str {
        match self {
            Envelope::Drag(_) => "play_drag",
            Envelope::FlatTop(_) => "play_flat_top",
        }
    }
}

impl From<DragEnvelope> for Envelope {
    fn from(e: DragEnvelope) -> Self {
        Envelope::Drag(e)
    }
}

impl From<FlatTopGaussianEnvelope> for Envelope {
    fn from(e: FlatTopGaussianEnvelope) -> Self {
        Envelope::FlatTop(e)
    }
}

/// Sample an envelope into `duration` complex values with frame phase applied.
pub fn sample_envelope(env: &Envelope, phase_frame: f64) -> Result<Vec<Complex64>> {
    match env {
        Envelope::Drag(e) => e.validate()?,
        Envelope::FlatTop(e) => e.validate()?,
    }
    let rot = Complex64::from_polar(1.0, -phase_frame);
    let mut out = Vec::with_capacity(env.duration() as usize);
    for j in 0..env.duration() {
        let s = env.value_at(j as f64 + 0.5) * rot;
        if s.norm() > 1.0 + 1e-12 {
            return Err(Error::SampleOverflow(s.norm()));
        }
        out.push(s);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChannelKind {
    /// Resonant drive of one qubit.
    Drive(usize),
    /// Cross-resonance: drive the control qubit at the target's frequency.
    Control { control: usize, target: usize },
}

impl ChannelKind {
    /// The qubit whose drive line carries this channel.
    pub fn physical_qubit(&self) -> usize {
        match *self {
            ChannelKind::Drive(q) => q,
            ChannelKind::Control { control, .. } => control,
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelKind::Drive(q) => write!(f, "d{q}"),
            ChannelKind::Control { control, target } => write!(f, "u{control}_{target}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub kind: ChannelKind,
    /// Carrier frequency in GHz (cyclic).
    pub carrier_freq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Item {
    Play(Envelope),
    ShiftPhase(f64),
}

impl Item {
    pub fn duration(&self) -> u64 {
        match self {
            Item::Play(e) => e.duration(),
            Item::ShiftPhase(_) => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub start: u64,
    pub channel: Channel,
    pub item: Item,
}

/// One debug-dump row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpRow {
    pub start: u64,
    pub channel: String,
    pub kind: String,
    pub duration: u64,
    pub amp_re: f64,
    pub amp_im: f64,
    pub phase: f64,
}

/// Sampled waveform for one channel over the whole schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelWaveform {
    pub channel: Channel,
    pub samples: Vec<Complex64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    instructions: Vec<Instruction>,
    duration: u64,
}

impl Schedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn duration(&self) -> u64 {
        self.duration
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Insert an item at `start`, rejecting overlapping plays on one channel.
    pub fn insert(&mut self, start: u64, channel: Channel, item: Item) -> Result<()> {
        if let Item::Play(env) = &item {
            if env.duration() == 0 {
                return Ok(());
            }
            let end = start + env.duration();
            for ins in &self.instructions {
                if ins.channel.kind != channel.kind {
                    continue;
                }
                if let Item::Play(other) = &ins.item {
                    let o_end = ins.start + other.duration();
                    if start < o_end && ins.start < end {
                        return Err(Error::Overlap {
                            channel: channel.kind.to_string(),
                            start,
                        });
                    }
                }
            }
            self.duration = self.duration.max(end);
        }
        // keep time order; equal starts keep insertion order
        let pos = self.instructions.partition_point(|i| i.start <= start);
        self.instructions.insert(pos, Instruction { start, channel, item });
        Ok(())
    }

    pub fn play(&mut self, start: u64, channel: Channel, env: impl Into<Envelope>) -> Result<()> {
        self.insert(start, channel, Item::Play(env.into()))
    }

    pub fn shift_phase(&mut self, start: u64, channel: Channel, phase: f64) -> Result<()> {
        self.insert(start, channel, Item::ShiftPhase(phase))
    }

    /// Sequential composition: `other` starts after every channel of `self` ends.
    pub fn append(&mut self, other: &Schedule) {
        let offset = self.duration;
        for ins in &other.instructions {
            self.instructions.push(Instruction {
                start: ins.start + offset,
                ..*ins
            });
        }
        self.duration = offset + other.duration;
    }

    pub fn appended(mut self, other: &Schedule) -> Schedule {
        self.append(other);
        self
    }

    /// Parallel composition of fragments starting at time 0.
    pub fn merge<'a>(schedules: impl IntoIterator<Item = &'a Schedule>) -> Result<Schedule> {
        let mut out = Schedule::new();
        for s in schedules {
            for ins in &s.instructions {
                out.insert(ins.start, ins.channel, ins.item)?;
            }
        }
        Ok(out)
    }

    /// Channels referenced by the schedule, in first-use order.
    pub fn channels(&self) -> Vec<Channel> {
        let mut out: Vec<Channel> = Vec::new();
        for ins in &self.instructions {
            if !out.iter().any(|c| c.kind == ins.channel.kind) {
                out.push(ins.channel);
            }
        }
        out
    }

    /// Render every channel into samples over `[0, duration)` with phase frames,
    /// ordered by channel.
    ///
    /// A `ShiftPhase` on `Drive(q)` also advances every `Control { control: q, .. }`
    /// frame, so virtual Z rotations apply to cross-resonance tones as well.
    pub fn render(&self) -> Result<Vec<ChannelWaveform>> {
        let channels = self.channels();
        let len = self.duration as usize;
        let mut frames: HashMap<ChannelKind, f64> = HashMap::new();
        let mut out: Vec<ChannelWaveform> = channels
            .iter()
            .filter(|c| {
                self.instructions
                    .iter()
                    .any(|i| i.channel.kind == c.kind && matches!(i.item, Item::Play(_)))
            })
            .map(|c| ChannelWaveform {
                channel: *c,
                samples: vec![Complex64::new(0.0, 0.0); len],
            })
            .collect();
        for ins in &self.instructions {
            match ins.item {
                Item::ShiftPhase(p) => {
                    *frames.entry(ins.channel.kind).or_insert(0.0) += p;
                    if let ChannelKind::Drive(q) = ins.channel.kind {
                        for c in &channels {
                            if let ChannelKind::Control { control, .. } = c.kind {
                                if control == q {
                                    *frames.entry(c.kind).or_insert(0.0) += p;
                                }
                            }
                        }
                    }
                }
                Item::Play(env) => {
                    let phase = frames.get(&ins.channel.kind).copied().unwrap_or(0.0);
                    let samples = sample_envelope(&env, phase)?;
                    let wf = out
                        .iter_mut()
                        .find(|w| w.channel.kind == ins.channel.kind)
                        .expect("play channel rendered");
                    let s0 = ins.start as usize;
                    for (k, v) in samples.into_iter().enumerate() {
                        wf.samples[s0 + k] += v;
                    }
                }
            }
        }
        out.sort_by_key(|w| w.channel.kind);
        Ok(out)
    }

    /// Net `ShiftPhase` on each `Drive(q)` frame at the end of the schedule.
    ///
    /// A trailing frame change is a virtual Z: it acts through whatever is
    /// played afterwards, including the measurement-basis pulses.
    pub fn final_drive_phases(&self, n_qubits: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_qubits];
        for ins in &self.instructions {
            if let (Item::ShiftPhase(p), ChannelKind::Drive(q)) = (ins.item, ins.channel.kind) {
                if q < n_qubits {
                    out[q] += p;
                }
            }
        }
        out
    }

    /// Flat debug dump for golden-file comparisons.
    pub fn dump(&self) -> Vec<DumpRow> {
        let mut frames: HashMap<ChannelKind, f64> = HashMap::new();
        let channels = self.channels();
        let mut rows = Vec::with_capacity(self.instructions.len());
        for ins in &self.instructions {
            match ins.item {
                Item::ShiftPhase(p) => {
                    *frames.entry(ins.channel.kind).or_insert(0.0) += p;
                    if let ChannelKind::Drive(q) = ins.channel.kind {
                        for c in &channels {
                            if matches!(c.kind, ChannelKind::Control { control, .. } if control == q) {
                                *frames.entry(c.kind).or_insert(0.0) += p;
                            }
                        }
                    }
                    rows.push(DumpRow {
                        start: ins.start,
                        channel: ins.channel.kind.to_string(),
                        kind: "shift_phase".into(),
                        duration: 0,
                        amp_re: 0.0,
                        amp_im: 0.0,
                        phase: p,
                    });
                }
                Item::Play(env) => rows.push(DumpRow {
                    start: ins.start,
                    channel: ins.channel.kind.to_string(),
                    kind: env.kind_name().into(),
                    duration: env.duration(),
                    amp_re: env.amp().re,
                    amp_im: env.amp().im,
                    phase: frames.get(&ins.channel.kind).copied().unwrap_or(0.0),
                }),
            }
        }
        rows
    }

    pub fn dump_json(&self) -> String {
        serde_json::to_string_pretty(&self.dump()).expect("dump rows serialize")
    }
}

pub fn schedule_duration(s: &Schedule) -> u64 {
    s.duration()
}

/// Cross-resonance settings for one echoed entangler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoedCrParams {
    pub amp: f64,
    pub sigma: f64,
    pub risefall_ratio: f64,
    /// Signed sum of both CR halves, in samples.
    pub total_cr_duration: i64,
}

/// Length of each CR half for a signed total on a lattice of `granularity`.
pub fn cr_half_duration(total: i64, granularity: u64) -> u64 {
    let g = granularity.max(1) as f64;
    let units = (total.unsigned_abs() as f64 / (2.0 * g)).round();
    units as u64 * granularity.max(1)
}

/// Echoed CR fragment: `CR(+) · X_c · CR(-) · X_c` starting at time 0.
///
/// A negative total flips the sign of both CR amplitudes; a total below one
/// lattice unit yields an empty fragment (no flips either).
pub fn build_echoed_cr(
    params: &EchoedCrParams,
    flip: &DragEnvelope,
    control: Channel,
    flip_channel: Channel,
    granularity: u64,
) -> Result<Schedule> {
    let mut s = Schedule::new();
    let half = cr_half_duration(params.total_cr_duration, granularity);
    if half == 0 {
        return Ok(s);
    }
    let sign = if params.total_cr_duration < 0 { -1.0 } else { 1.0 };
    let cr = |a: f64| {
        FlatTopGaussianEnvelope::new(
            Complex64::new(a, 0.0),
            params.sigma,
            params.risefall_ratio,
            half,
        )
    };
    let f = flip.duration;
    s.play(0, control, cr(params.amp * sign)?)?;
    s.play(half, flip_channel, *flip)?;
    s.play(half + f, control, cr(-params.amp * sign)?)?;
    s.play(2 * half + f, flip_channel, *flip)?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drive(q: usize) -> Channel {
        Channel {
            kind: ChannelKind::Drive(q),
            carrier_freq: 5.0,
        }
    }

    fn control(c: usize, t: usize) -> Channel {
        Channel {
            kind: ChannelKind::Control { control: c, target: t },
            carrier_freq: 4.9,
        }
    }

    fn drag(amp: f64, duration: u64) -> DragEnvelope {
        DragEnvelope::new(Complex64::new(amp, 0.0), 40.0, 1.5, duration).unwrap()
    }

    #[test]
    fn drag_center_sample_is_real_amplitude() {
        let s = sample_envelope(&drag(0.2, 161).into(), 0.0).unwrap();
        let c = s[80];
        assert!((c.re - 0.2).abs() < 1e-12 && c.im.abs() < 1e-12, "{c}");
    }

    #[test]
    fn flat_top_plateau_equals_amplitude() {
        let env = FlatTopGaussianEnvelope::new(Complex64::new(0.3, 0.1), 16.0, 2.0, 200).unwrap();
        let s = sample_envelope(&env.into(), 0.0).unwrap();
        let r = env.risefall();
        for (j, v) in s.iter().enumerate() {
            let t = j as f64 + 0.5;
            if t >= r && t <= 200.0 - r {
                assert!((v - env.amp).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn phase_pi_negates_waveform() {
        for env in [
            Envelope::from(drag(0.5, 96)),
            FlatTopGaussianEnvelope::new(Complex64::new(0.4, 0.0), 64.0, 2.0, 300)
                .unwrap()
                .into(),
        ] {
            let a = sample_envelope(&env, 0.0).unwrap();
            let b = sample_envelope(&env, std::f64::consts::PI).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x + y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_duration_is_empty() {
        assert!(sample_envelope(&drag(0.5, 0).into(), 0.0).unwrap().is_empty());
    }

    #[test]
    fn envelope_edges_vanish() {
        for d in [16u64, 48, 160, 333] {
            let e = drag(1.0, d);
            assert!(e.shape_at(0.0).re.abs() < 1e-12);
            assert!(e.shape_at(d as f64).re.abs() < 1e-12);
            let f = FlatTopGaussianEnvelope::new(Complex64::new(1.0, 0.0), 64.0, 2.0, d).unwrap();
            assert!(f.shape_at(0.0).abs() < 1e-12);
            assert!(f.shape_at(d as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_scales_quadratically_with_amplitude() {
        let energy = |a: f64| -> f64 {
            sample_envelope(&drag(a, 128).into(), 0.3)
                .unwrap()
                .iter()
                .map(|s| s.norm_sqr())
                .sum()
        };
        assert!((energy(0.6) / energy(0.3) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn oversized_amplitude_rejected() {
        assert!(DragEnvelope::new(Complex64::new(1.1, 0.0), 40.0, 0.0, 10).is_err());
    }

    #[test]
    fn append_and_merge_durations() {
        assert_eq!(Schedule::new().duration(), 0);
        let mut a = Schedule::new();
        a.play(0, drive(0), drag(0.1, 100)).unwrap();
        let mut b = Schedule::new();
        b.play(0, drive(1), drag(0.1, 50)).unwrap();
        assert_eq!(a.clone().appended(&b).duration(), 150);
        let mut c = Schedule::new();
        c.play(0, drive(1), drag(0.1, 60)).unwrap();
        assert_eq!(Schedule::merge([&a, &c]).unwrap().duration(), 100);
        let mut clash = Schedule::new();
        clash.play(50, drive(0), drag(0.1, 60)).unwrap();
        assert!(matches!(Schedule::merge([&a, &clash]), Err(Error::Overlap { .. })));
    }

    #[test]
    fn consecutive_phase_shifts_compose() {
        let mut s1 = Schedule::new();
        s1.shift_phase(0, drive(0), 0.4).unwrap();
        s1.shift_phase(0, drive(0), 0.9).unwrap();
        s1.play(0, drive(0), drag(0.5, 64)).unwrap();
        let mut s2 = Schedule::new();
        s2.shift_phase(0, drive(0), 1.3).unwrap();
        s2.play(0, drive(0), drag(0.5, 64)).unwrap();
        let a = s1.render().unwrap();
        let b = s2.render().unwrap();
        for (x, y) in a[0].samples.iter().zip(&b[0].samples) {
            assert!((x - y).norm() < 1e-14);
        }
    }

    #[test]
    fn drive_phase_propagates_to_control_frames() {
        let flip = drag(0.5, 32);
        let p = EchoedCrParams {
            amp: 0.5,
            sigma: 16.0,
            risefall_ratio: 2.0,
            total_cr_duration: 128,
        };
        let cr = build_echoed_cr(&p, &flip, control(0, 1), drive(0), 16).unwrap();
        let mut s = Schedule::new();
        s.shift_phase(0, drive(0), std::f64::consts::PI).unwrap();
        s.append(&cr);
        let shifted = s.render().unwrap();
        let plain = cr.render().unwrap();
        for (w, v) in shifted.iter().zip(&plain) {
            assert_eq!(w.channel.kind, v.channel.kind);
            for (x, y) in w.samples.iter().zip(&v.samples) {
                assert!((x + y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn echoed_cr_structure() {
        let flip = drag(0.5, 160);
        let params = |total| EchoedCrParams {
            amp: 0.4,
            sigma: 64.0,
            risefall_ratio: 2.0,
            total_cr_duration: total,
        };
        let empty = build_echoed_cr(&params(0), &flip, control(0, 1), drive(0), 16).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.duration(), 0);
        let tiny = build_echoed_cr(&params(7), &flip, control(0, 1), drive(0), 16).unwrap();
        assert!(tiny.is_empty());

        let pos = build_echoed_cr(&params(320), &flip, control(0, 1), drive(0), 16).unwrap();
        assert_eq!(pos.duration(), 640);
        let neg = build_echoed_cr(&params(-320), &flip, control(0, 1), drive(0), 16).unwrap();
        assert_eq!(neg.duration(), pos.duration());
        let amps = |s: &Schedule| -> Vec<f64> {
            s.instructions()
                .iter()
                .filter_map(|i| match i.item {
                    Item::Play(Envelope::FlatTop(e)) => Some(e.amp.re),
                    _ => None,
                })
                .collect()
        };
        assert_eq!(amps(&pos), vec![0.4, -0.4]);
        assert_eq!(amps(&neg), vec![-0.4, 0.4]);
    }

    #[test]
    fn dump_lists_every_instruction() {
        let mut s = Schedule::new();
        s.shift_phase(0, drive(1), 0.25).unwrap();
        s.play(0, drive(1), drag(0.3, 32)).unwrap();
        let rows = s.dump();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].kind, "shift_phase");
        assert_eq!(rows[1].channel, "d1");
        assert_eq!(rows[1].phase, 0.25);
        let parsed: Vec<DumpRow> = serde_json::from_str(&s.dump_json()).unwrap();
        assert_eq!(parsed, rows);
    }
}
