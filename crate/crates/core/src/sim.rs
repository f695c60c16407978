//! Deterministic synthetic sensors with exact ground truth.
//!
//! Both generators are pure functions of their profile, the duration and
//! the seed. The byte streams they emit are concatenations of valid frames;
//! [`corrupt`] then damages them in a logged, reproducible way.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emg::SampleSeries;
use crate::hxm::{self, HxmMessage, DISTANCE_MODULUS, SPEED_RAW_MAX, TIMESTAMP_SLOTS};
use crate::kv::{join_list, split_list, KvError, KvMap};
use crate::metrics::{IBI_MAX_MS, IBI_MIN_MS};
use crate::shimmer::{self, ShimmerPacket, DATA_TYPE_EMG, LOW_BATTERY_MV};
use crate::Protocol;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid rate {0}: must be in [0, 1)")]
    InvalidRate(f64),
    #[error(transparent)]
    Kv(#[from] KvError),
}

fn invalid(msg: impl Into<String>) -> SimError {
    SimError::InvalidProfile(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrSegment {
    pub duration_s: f64,
    pub hr_bpm: f64,
}

/// Piecewise-constant heart rate plus steady locomotion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrProfile {
    pub segments: Vec<HrSegment>,
    pub speed_mps: f64,
    pub stride_rate_hz: f64,
    pub seed: u64,
    /// Standard deviation of Gaussian jitter added to each interval.
    pub jitter_ms: f64,
    pub start_beat_number: u8,
    pub start_distance_raw: u16,
    pub start_strides: u8,
    pub clock_offset_ms: u16,
    pub battery_charge: u8,
    /// Zero-based indices of messages that are never transmitted.
    pub drop_messages: Vec<usize>,
}

impl HrProfile {
    pub fn steady(hr_bpm: f64, duration_s: f64) -> Self {
        Self {
            segments: vec![HrSegment { duration_s, hr_bpm }],
            speed_mps: 0.0,
            stride_rate_hz: 0.0,
            seed: 0,
            jitter_ms: 0.0,
            start_beat_number: 0,
            start_distance_raw: 0,
            start_strides: 0,
            clock_offset_ms: 0,
            battery_charge: 90,
            drop_messages: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.segments.is_empty() {
            return Err(invalid("no heart-rate segments"));
        }
        for s in &self.segments {
            if !(s.duration_s > 0.0 && s.duration_s.is_finite()) {
                return Err(invalid(format!("segment duration {}", s.duration_s)));
            }
            if !(30.0..=240.0).contains(&s.hr_bpm) {
                return Err(invalid(format!("heart rate {} outside 30-240", s.hr_bpm)));
            }
        }
        let max_speed = SPEED_RAW_MAX as f64 / 256.0;
        if !(0.0..=max_speed).contains(&self.speed_mps) {
            return Err(invalid(format!("speed {} m/s", self.speed_mps)));
        }
        if !(self.stride_rate_hz >= 0.0 && self.stride_rate_hz.is_finite()) {
            return Err(invalid("stride rate"));
        }
        if !(self.jitter_ms >= 0.0 && self.jitter_ms.is_finite()) {
            return Err(invalid("jitter"));
        }
        if self.battery_charge > 100 {
            return Err(invalid("battery charge"));
        }
        Ok(())
    }

    fn hr_at(&self, t_ms: u64) -> f64 {
        let mut end = 0.0;
        for s in &self.segments {
            end += s.duration_s * 1000.0;
            if (t_ms as f64) < end {
                return s.hr_bpm;
            }
        }
        self.segments.last().map(|s| s.hr_bpm).unwrap_or(60.0)
    }

    /// Distance in 1/16 m travelled by `t_ms`.
    pub fn distance_sixteenths(&self, t_ms: u64) -> u64 {
        (self.speed_mps * 16.0 * t_ms as f64 / 1000.0 + 1e-9).floor() as u64
    }

    pub fn strides_at(&self, t_ms: u64) -> u64 {
        (self.stride_rate_hz * t_ms as f64 / 1000.0 + 1e-9).floor() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Burst {
    pub onset_s: f64,
    pub duration_s: f64,
    pub amplitude_mv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmgProfile {
    pub bursts: Vec<Burst>,
    pub noise_rms_mv: f64,
    pub battery_start_mv: u16,
    pub battery_drain_mv_per_s: f64,
    pub seed: u64,
    pub sensor_id: u8,
    /// Centre frequency of the burst carrier.
    pub carrier_hz: f64,
    /// Per-sample phase random-walk step (radians, standard deviation).
    pub phase_jitter_rad: f64,
    pub adc_span_mv: f64,
}

impl EmgProfile {
    pub fn quiet() -> Self {
        Self {
            bursts: Vec::new(),
            noise_rms_mv: 0.0,
            battery_start_mv: 3700,
            battery_drain_mv_per_s: 0.0,
            seed: 0,
            sensor_id: 1,
            carrier_hz: 100.0,
            phase_jitter_rad: 0.2,
            adc_span_mv: shimmer::DEFAULT_ADC_SPAN_MV,
        }
    }

    pub fn validate(&self, duration_s: f64) -> Result<(), SimError> {
        for b in &self.bursts {
            if !(b.amplitude_mv >= 0.0 && b.amplitude_mv.is_finite()) {
                return Err(invalid(format!("burst amplitude {}", b.amplitude_mv)));
            }
            if !(b.duration_s > 0.0 && b.onset_s >= 0.0) {
                return Err(invalid("burst timing"));
            }
            if b.onset_s + b.duration_s > duration_s + 1e-9 {
                return Err(invalid(format!(
                    "burst at {} s runs past the session end",
                    b.onset_s
                )));
            }
        }
        if !(self.noise_rms_mv >= 0.0 && self.noise_rms_mv.is_finite()) {
            return Err(invalid("noise level"));
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz < shimmer::SAMPLE_RATE_HZ / 2.0) {
            return Err(invalid("carrier frequency must be below Nyquist"));
        }
        if !(self.adc_span_mv > 0.0) {
            return Err(invalid("adc span"));
        }
        if !(self.battery_drain_mv_per_s >= 0.0) {
            return Err(invalid("battery drain"));
        }
        Ok(())
    }
}

/// A burst in sample-aligned form: samples `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BurstInterval {
    pub start: usize,
    pub end: usize,
}

impl BurstInterval {
    pub fn onset_s(&self, rate_hz: f64) -> f64 {
        self.start as f64 / rate_hz
    }

    pub fn offset_s(&self, rate_hz: f64) -> f64 {
        self.end as f64 / rate_hz
    }
}

/// What the generator actually produced, for checking decoders against.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub protocol: Option<Protocol>,
    /// Frames generated, including dropped ones.
    pub frames: usize,
    pub frame_times_ms: Vec<u64>,
    pub beat_times_ms: Vec<u64>,
    pub total_distance_m: f64,
    pub total_strides: u64,
    pub emg_series: Option<SampleSeries>,
    pub burst_intervals: Vec<BurstInterval>,
    pub dropped_messages: Vec<usize>,
    pub low_battery_packet: Option<usize>,
}

impl GroundTruth {
    /// Beats in `(after_ms, upto_ms]`.
    pub fn beats_between(&self, after_ms: u64, upto_ms: u64) -> usize {
        self.beat_times_ms
            .iter()
            .filter(|&&b| b > after_ms && b <= upto_ms)
            .count()
    }

    /// `key=value` form. The EMG series is not included; write it with
    /// [`SampleSeries::to_text`].
    pub fn to_kv(&self) -> String {
        let mut kv = KvMap::default();
        if let Some(p) = self.protocol {
            kv.insert("protocol", p);
        }
        kv.insert("frames", self.frames);
        kv.insert("frame_times_ms", join_list(&self.frame_times_ms));
        kv.insert("beat_times_ms", join_list(&self.beat_times_ms));
        kv.insert("beats_total", self.beat_times_ms.len());
        kv.insert("total_distance_m", self.total_distance_m);
        kv.insert("total_strides", self.total_strides);
        kv.insert(
            "burst_intervals",
            join_list(self.burst_intervals.iter().map(|b| format!("{}:{}", b.start, b.end))),
        );
        kv.insert("dropped_messages", join_list(&self.dropped_messages));
        kv.insert(
            "low_battery_packet",
            self.low_battery_packet.map(|p| p.to_string()).unwrap_or_default(),
        );
        kv.to_text()
    }

    pub fn from_kv(text: &str) -> Result<Self, SimError> {
        let kv = KvMap::parse(text)?;
        let protocol = match kv.get("protocol") {
            Some(p) if !p.is_empty() => Some(p.parse().map_err(|_| invalid("protocol"))?),
            _ => None,
        };
        let burst_intervals = split_list(kv.get("burst_intervals").unwrap_or(""))
            .map(|item| {
                let (a, b) = item.split_once(':').ok_or_else(|| invalid("burst interval"))?;
                Ok(BurstInterval {
                    start: a.parse().map_err(|_| invalid("burst interval"))?,
                    end: b.parse().map_err(|_| invalid("burst interval"))?,
                })
            })
            .collect::<Result<Vec<_>, SimError>>()?;
        Ok(Self {
            protocol,
            frames: kv.parsed_or("frames", 0)?,
            frame_times_ms: kv.list("frame_times_ms")?,
            beat_times_ms: kv.list("beat_times_ms")?,
            total_distance_m: kv.parsed_or("total_distance_m", 0.0)?,
            total_strides: kv.parsed_or("total_strides", 0)?,
            emg_series: None,
            burst_intervals,
            dropped_messages: kv.list("dropped_messages")?,
            low_battery_packet: kv.parsed("low_battery_packet")?,
        })
    }
}

fn beat_times(profile: &HrProfile, end_ms: u64, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut out = Vec::new();
    let mut t = 0u64;
    loop {
        let mut ibi = 60_000.0 / profile.hr_at(t);
        if profile.jitter_ms > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            ibi += z * profile.jitter_ms;
        }
        let ibi = (ibi.round() as u64).clamp(IBI_MIN_MS as u64, IBI_MAX_MS as u64);
        t += ibi;
        if t > end_ms {
            return out;
        }
        out.push(t);
    }
}

/// One message per simulated second, at t = 1 s, 2 s, ... Returned
/// messages exclude dropped ones.
pub fn hxm_messages(
    profile: &HrProfile,
    duration_s: f64,
) -> Result<(Vec<HxmMessage>, GroundTruth), SimError> {
    profile.validate()?;
    if !(duration_s >= 0.0 && duration_s.is_finite()) {
        return Err(invalid("duration"));
    }
    let frames = duration_s.floor() as usize;
    let end_ms = frames as u64 * 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let beats = beat_times(profile, end_ms, &mut rng);
    let speed_raw = (profile.speed_mps * 256.0).round() as u16;

    let mut msgs = Vec::with_capacity(frames);
    let mut frame_times = Vec::with_capacity(frames);
    let mut seen = 0usize;
    for j in 0..frames {
        let t = (j as u64 + 1) * 1000;
        frame_times.push(t);
        while seen < beats.len() && beats[seen] <= t {
            seen += 1;
        }
        if profile.drop_messages.contains(&j) {
            continue;
        }
        let mut ts = [0u16; TIMESTAMP_SLOTS];
        for (i, slot) in ts.iter_mut().enumerate() {
            if i < seen {
                *slot = ((beats[seen - 1 - i] + profile.clock_offset_ms as u64) % 65_536) as u16;
            }
        }
        let heart_rate = if seen == 0 {
            0
        } else {
            let prev = if seen >= 2 { beats[seen - 2] } else { 0 };
            (60_000.0 / (beats[seen - 1] - prev) as f64)
                .round()
                .clamp(hxm::HR_MIN_BPM as f64, hxm::HR_MAX_BPM as f64) as u8
        };
        msgs.push(HxmMessage {
            firmware_id: 9500,
            firmware_version: 0x4A31,
            hardware_id: 7800,
            hardware_version: 0x4131,
            battery_charge: profile.battery_charge,
            heart_rate,
            heart_beat_number: (profile.start_beat_number as usize + seen) as u8,
            beat_timestamps: ts,
            distance_raw: ((profile.start_distance_raw as u64 + profile.distance_sixteenths(t))
                % DISTANCE_MODULUS as u64) as u16,
            speed_raw,
            strides: ((profile.start_strides as u64 + profile.strides_at(t)) % 256) as u8,
        });
    }

    let mut dropped: Vec<usize> = profile
        .drop_messages
        .iter()
        .copied()
        .filter(|&j| j < frames)
        .collect();
    dropped.sort_unstable();
    dropped.dedup();
    let truth = GroundTruth {
        protocol: Some(Protocol::Hxm),
        frames,
        frame_times_ms: frame_times,
        beat_times_ms: beats,
        total_distance_m: profile.distance_sixteenths(end_ms) as f64 / 16.0,
        total_strides: profile.strides_at(end_ms),
        emg_series: None,
        burst_intervals: Vec::new(),
        dropped_messages: dropped,
        low_battery_packet: None,
    };
    Ok((msgs, truth))
}

pub fn gen_hxm(profile: &HrProfile, duration_s: f64) -> Result<(Vec<u8>, GroundTruth), SimError> {
    let (msgs, truth) = hxm_messages(profile, duration_s)?;
    let mut out = Vec::with_capacity(msgs.len() * hxm::FRAME_LEN);
    for m in &msgs {
        out.extend_from_slice(&hxm::encode_hxm(m).expect("simulator emits valid messages"));
    }
    Ok((out, truth))
}

fn sample_index(t_s: f64, rate: f64) -> usize {
    (t_s * rate - 1e-9).ceil().max(0.0) as usize
}

/// 500 packets per second. Once the simulated battery falls below the
/// regulator value, packets carry the voltage and no EMG sample.
pub fn shimmer_packets(
    profile: &EmgProfile,
    duration_s: f64,
) -> Result<(Vec<ShimmerPacket>, GroundTruth), SimError> {
    if !(duration_s >= 0.0 && duration_s.is_finite()) {
        return Err(invalid("duration"));
    }
    profile.validate(duration_s)?;
    let rate = shimmer::SAMPLE_RATE_HZ;
    let n = (duration_s * rate).round() as usize;
    let intervals: Vec<(BurstInterval, f64)> = profile
        .bursts
        .iter()
        .map(|b| {
            let iv = BurstInterval {
                start: sample_index(b.onset_s, rate),
                end: sample_index(b.onset_s + b.duration_s, rate),
            };
            (iv, b.amplitude_mv)
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let step = 2.0 * PI * profile.carrier_hz / rate;
    let mut phase: f64 = rng.gen_range(0.0..2.0 * PI);
    let mut packets = Vec::with_capacity(n);
    let mut series = Vec::with_capacity(n);
    let mut low_battery_packet = None;

    for k in 0..n {
        let t = k as f64 / rate;
        let jitter: f64 = rng.sample(StandardNormal);
        let noise: f64 = rng.sample(StandardNormal);
        phase = (phase + step + jitter * profile.phase_jitter_rad).rem_euclid(2.0 * PI);
        let amplitude = intervals
            .iter()
            .filter(|(iv, _)| iv.start <= k && k < iv.end)
            .map(|(_, a)| *a)
            .sum::<f64>();
        let mv = amplitude * phase.sin() + profile.noise_rms_mv * noise;

        let battery = profile.battery_start_mv as f64 - profile.battery_drain_mv_per_s * t;
        let low = battery < LOW_BATTERY_MV as f64;
        if low && low_battery_packet.is_none() {
            low_battery_packet = Some(k);
        }
        let (emg_len, emg_raw, battery_mv) = if low {
            (0, 0, battery.max(1.0).floor() as u16)
        } else {
            let raw = shimmer::mv_to_raw(mv, profile.adc_span_mv);
            series.push(shimmer::raw_to_mv(raw, profile.adc_span_mv));
            (2, raw, 0)
        };
        packets.push(ShimmerPacket {
            sensor_id: profile.sensor_id,
            data_type: DATA_TYPE_EMG,
            sequence: k as u8,
            timestamp_ms: ((k * 2) % 65_536) as u16,
            emg_len,
            emg_raw,
            battery_mv,
        });
    }

    let truth = GroundTruth {
        protocol: Some(Protocol::Shimmer),
        frames: n,
        emg_series: Some(SampleSeries::new(series, rate).expect("finite samples")),
        burst_intervals: intervals.into_iter().map(|(iv, _)| iv).collect(),
        low_battery_packet,
        ..GroundTruth::default()
    };
    Ok((packets, truth))
}

pub fn gen_shimmer(
    profile: &EmgProfile,
    duration_s: f64,
) -> Result<(Vec<u8>, GroundTruth), SimError> {
    let (packets, truth) = shimmer_packets(profile, duration_s)?;
    let mut out = Vec::with_capacity(packets.len() * shimmer::FRAME_LEN);
    for p in &packets {
        out.extend_from_slice(&shimmer::encode_shimmer(p).expect("simulator emits valid packets"));
    }
    Ok((out, truth))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mutation {
    Dropped { frame: usize },
    BitFlip { frame: usize, byte: usize, bit: u8 },
}

/// Drops whole frames and flips single bits in a stream of fixed-length
/// frames. Every mutation is logged in stream order.
pub fn corrupt(
    stream: &[u8],
    protocol: Protocol,
    drop_rate: f64,
    bitflip_rate: f64,
    seed: u64,
) -> Result<(Vec<u8>, Vec<Mutation>), SimError> {
    for r in [drop_rate, bitflip_rate] {
        if !(0.0..1.0).contains(&r) {
            return Err(SimError::InvalidRate(r));
        }
    }
    let frame_len = protocol.frame_len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(stream.len());
    let mut log = Vec::new();
    for (i, frame) in stream.chunks(frame_len).enumerate() {
        let drop_draw: f64 = rng.gen();
        let flip_draw: f64 = rng.gen();
        let bit_index = rng.gen_range(0..frame.len() * 8);
        if drop_draw < drop_rate {
            log.push(Mutation::Dropped { frame: i });
            continue;
        }
        let start = out.len();
        out.extend_from_slice(frame);
        if flip_draw < bitflip_rate {
            let (byte, bit) = (bit_index / 8, (bit_index % 8) as u8);
            out[start + byte] ^= 1 << bit;
            log.push(Mutation::BitFlip { frame: i, byte, bit });
        }
    }
    Ok((out, log))
}

/// A simulator scenario file.
#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Hxm(HrProfile),
    Shimmer(EmgProfile),
}

impl Scenario {
    pub fn protocol(&self) -> Protocol {
        match self {
            Scenario::Hxm(_) => Protocol::Hxm,
            Scenario::Shimmer(_) => Protocol::Shimmer,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            Scenario::Hxm(p) => p.seed = seed,
            Scenario::Shimmer(p) => p.seed = seed,
        }
    }

    pub fn generate(&self, duration_s: f64) -> Result<(Vec<u8>, GroundTruth), SimError> {
        match self {
            Scenario::Hxm(p) => gen_hxm(p, duration_s),
            Scenario::Shimmer(p) => gen_shimmer(p, duration_s),
        }
    }

    pub fn parse(text: &str) -> Result<Self, SimError> {
        let kv = KvMap::parse(text)?;
        let protocol: Protocol = kv
            .require("protocol")?
            .parse()
            .map_err(|_| invalid("protocol must be hxm or shimmer"))?;
        match protocol {
            Protocol::Hxm => {
                let d = HrProfile::steady(60.0, 1.0);
                let segments = split_list(kv.require("segments")?)
                    .map(|item| {
                        let (dur, hr) = item.split_once(':').ok_or_else(|| invalid("segment"))?;
                        Ok(HrSegment {
                            duration_s: dur.parse().map_err(|_| invalid("segment duration"))?,
                            hr_bpm: hr.parse().map_err(|_| invalid("segment heart rate"))?,
                        })
                    })
                    .collect::<Result<Vec<_>, SimError>>()?;
                let p = HrProfile {
                    segments,
                    speed_mps: kv.parsed_or("speed_mps", d.speed_mps)?,
                    stride_rate_hz: kv.parsed_or("stride_rate_hz", d.stride_rate_hz)?,
                    seed: kv.parsed_or("seed", d.seed)?,
                    jitter_ms: kv.parsed_or("jitter_ms", d.jitter_ms)?,
                    start_beat_number: kv.parsed_or("start_beat_number", 0)?,
                    start_distance_raw: kv.parsed_or("start_distance_raw", 0)?,
                    start_strides: kv.parsed_or("start_strides", 0)?,
                    clock_offset_ms: kv.parsed_or("clock_offset_ms", 0)?,
                    battery_charge: kv.parsed_or("battery_charge", d.battery_charge)?,
                    drop_messages: kv.list("drop_messages")?,
                };
                p.validate()?;
                Ok(Scenario::Hxm(p))
            }
            Protocol::Shimmer => {
                let d = EmgProfile::quiet();
                let bursts = split_list(kv.get("bursts").unwrap_or(""))
                    .map(|item| {
                        let parts: Vec<&str> = item.split(':').collect();
                        let [on, dur, amp] = parts[..] else {
                            return Err(invalid("burst must be onset:duration:amplitude"));
                        };
                        let num = |s: &str| s.parse::<f64>().map_err(|_| invalid("burst value"));
                        Ok(Burst {
                            onset_s: num(on)?,
                            duration_s: num(dur)?,
                            amplitude_mv: num(amp)?,
                        })
                    })
                    .collect::<Result<Vec<_>, SimError>>()?;
                Ok(Scenario::Shimmer(EmgProfile {
                    bursts,
                    noise_rms_mv: kv.parsed_or("noise_rms_mv", d.noise_rms_mv)?,
                    battery_start_mv: kv.parsed_or("battery_start_mv", d.battery_start_mv)?,
                    battery_drain_mv_per_s: kv
                        .parsed_or("battery_drain_mv_per_s", d.battery_drain_mv_per_s)?,
                    seed: kv.parsed_or("seed", d.seed)?,
                    sensor_id: kv.parsed_or("sensor_id", d.sensor_id)?,
                    carrier_hz: kv.parsed_or("carrier_hz", d.carrier_hz)?,
                    phase_jitter_rad: kv.parsed_or("phase_jitter_rad", d.phase_jitter_rad)?,
                    adc_span_mv: kv.parsed_or("adc_span_mv", d.adc_span_mv)?,
                }))
            }
        }
    }
}
