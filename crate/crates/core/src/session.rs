//! Folding decoded streams into one workout.
//!
//! A [`Session`] owns at most one heart-rate stream and one EMG stream. Raw
//! bytes go in through [`Session::push`] in whatever chunks the transport
//! delivers; [`Session::summary`] and [`Session::samples`] read the current
//! state at any time. Feeding the same bytes in different chunkings gives
//! the same result, which is what makes offline replay of a persisted raw
//! stream reproduce a live session exactly.

use crate::emg::{self, EmgConfig, SampleSeries};
use crate::framer::FramerState;
use crate::hxm::{Hxm, HxmMessage};
use crate::metrics::{summarize, Diagnostics, HrSessionState, RolloverCounter, SessionSummary};
use crate::shimmer::{self, Shimmer, ShimmerPacket};
use crate::wire::{SampleRecord, SensorKind};
use crate::Protocol;

/// Heart-rate monitor stream state.
#[derive(Debug, Clone)]
pub struct HxmTrack {
    pub framer: FramerState,
    pub hr: HrSessionState,
    pub distance: RolloverCounter,
    pub strides: RolloverCounter,
    samples: Vec<SampleRecord>,
}

impl Default for HxmTrack {
    fn default() -> Self {
        Self::new()
    }
}

impl HxmTrack {
    pub fn new() -> Self {
        Self {
            framer: FramerState::new(),
            hr: HrSessionState::new(),
            distance: RolloverCounter::distance(),
            strides: RolloverCounter::strides(),
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, chunk: &[u8]) {
        let mut framer = std::mem::take(&mut self.framer);
        framer.scan_with::<Hxm>(chunk, |m| self.ingest(&m));
        self.framer = framer;
    }

    pub fn ingest(&mut self, msg: &HxmMessage) {
        let beats_before = self.hr.beats().len();
        self.hr.ingest(msg);
        for b in &self.hr.beats()[beats_before..] {
            if let Some(ibi) = b.ibi_ms {
                self.samples.push(SampleRecord {
                    sensor: SensorKind::Hr,
                    offset_ms: b.offset_ms,
                    value: 60_000.0 / ibi as f64,
                });
            }
        }
        // Decoded messages already passed range validation.
        self.distance.update(msg.distance_raw as u32).expect("validated");
        self.strides.update(msg.strides as u32).expect("validated");
        let offset_ms = (self.hr.messages_seen - 1) * 1000;
        self.samples.push(SampleRecord {
            sensor: SensorKind::Distance,
            offset_ms,
            value: self.distance.total() as f64 / 16.0,
        });
        self.samples.push(SampleRecord {
            sensor: SensorKind::Strides,
            offset_ms,
            value: self.strides.total() as f64,
        });
    }

    /// One message per second of stream time.
    pub fn duration_s(&self) -> f64 {
        self.hr.messages_seen as f64
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }
}

/// EMG packet stream state.
#[derive(Debug, Clone)]
pub struct ShimmerTrack {
    pub framer: FramerState,
    pub adc_span_mv: f64,
    samples_mv: Vec<f64>,
    offsets_ms: Vec<u64>,
    clock: RolloverCounter,
    packets: u64,
    last_sequence: Option<u8>,
    pub sequence_gaps: u64,
    pub unknown_type_packets: u64,
    pub low_battery: bool,
}

impl Default for ShimmerTrack {
    fn default() -> Self {
        Self::new(shimmer::DEFAULT_ADC_SPAN_MV)
    }
}

impl ShimmerTrack {
    pub fn new(adc_span_mv: f64) -> Self {
        Self {
            framer: FramerState::new(),
            adc_span_mv,
            samples_mv: Vec::new(),
            offsets_ms: Vec::new(),
            clock: RolloverCounter::new(1 << 16),
            packets: 0,
            last_sequence: None,
            sequence_gaps: 0,
            unknown_type_packets: 0,
            low_battery: false,
        }
    }

    pub fn push(&mut self, chunk: &[u8]) {
        let mut framer = std::mem::take(&mut self.framer);
        framer.scan_with::<Shimmer>(chunk, |p| self.ingest(&p));
        self.framer = framer;
    }

    pub fn ingest(&mut self, p: &ShimmerPacket) {
        if !p.is_emg() {
            self.unknown_type_packets += 1;
            return;
        }
        if let Some(prev) = self.last_sequence {
            if p.sequence != prev.wrapping_add(1) {
                self.sequence_gaps += 1;
            }
        }
        self.last_sequence = Some(p.sequence);
        self.packets += 1;
        self.clock.update(p.timestamp_ms as u32).expect("u16 fits");
        self.low_battery |= p.low_battery();
        if p.has_sample() {
            self.samples_mv.push(p.emg_mv(self.adc_span_mv));
            self.offsets_ms.push(self.clock.total());
        }
    }

    /// Timestamp span plus one sample period.
    pub fn duration_s(&self) -> f64 {
        if self.packets == 0 {
            0.0
        } else {
            (self.clock.total() as f64 + 1000.0 / shimmer::SAMPLE_RATE_HZ) / 1000.0
        }
    }

    pub fn series(&self) -> SampleSeries {
        SampleSeries::new(self.samples_mv.clone(), shimmer::SAMPLE_RATE_HZ).expect("finite samples")
    }

    pub fn samples(&self) -> impl Iterator<Item = SampleRecord> + '_ {
        self.offsets_ms
            .iter()
            .zip(&self.samples_mv)
            .map(|(&offset_ms, &value)| SampleRecord {
                sensor: SensorKind::Emg,
                offset_ms,
                value,
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("session already has a {0} stream")]
pub struct DuplicateStream(pub Protocol);

/// Everything recorded during one workout.
#[derive(Debug, Clone, Default)]
pub struct Session {
    pub hxm: Option<HxmTrack>,
    pub shimmer: Option<ShimmerTrack>,
    pub emg_config: EmgConfig,
}

impl Session {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a stream. A session takes one stream per protocol.
    pub fn add_stream(&mut self, protocol: Protocol) -> Result<(), DuplicateStream> {
        match protocol {
            Protocol::Hxm if self.hxm.is_none() => self.hxm = Some(HxmTrack::new()),
            Protocol::Shimmer if self.shimmer.is_none() => self.shimmer = Some(ShimmerTrack::default()),
            p => return Err(DuplicateStream(p)),
        }
        Ok(())
    }

    /// Convenience for a single complete stream.
    pub fn from_stream(protocol: Protocol, bytes: &[u8]) -> Self {
        let mut s = Self::new();
        s.add_stream(protocol).expect("fresh session");
        s.push(protocol, bytes);
        s
    }

    /// Feeds a chunk of a registered stream; unregistered streams are
    /// registered on first use.
    pub fn push(&mut self, protocol: Protocol, chunk: &[u8]) {
        match protocol {
            Protocol::Hxm => self.hxm.get_or_insert_with(HxmTrack::new).push(chunk),
            Protocol::Shimmer => self.shimmer.get_or_insert_with(ShimmerTrack::default).push(chunk),
        }
    }

    pub fn framer(&self, protocol: Protocol) -> Option<&FramerState> {
        match protocol {
            Protocol::Hxm => self.hxm.as_ref().map(|t| &t.framer),
            Protocol::Shimmer => self.shimmer.as_ref().map(|t| &t.framer),
        }
    }

    pub fn frames_rejected(&self) -> u64 {
        [Protocol::Hxm, Protocol::Shimmer]
            .into_iter()
            .filter_map(|p| self.framer(p))
            .map(|f| f.frames_rejected)
            .sum()
    }

    pub fn summary(&self) -> SessionSummary {
        let hxm_dur = self.hxm.as_ref().map_or(0.0, HxmTrack::duration_s);
        let emg_dur = self.shimmer.as_ref().map_or(0.0, ShimmerTrack::duration_s);
        let emg = self.shimmer.as_ref().and_then(|t| {
            let series = t.series();
            (series.len() >= 2)
                .then(|| emg::analyze(&series, &self.emg_config).ok())
                .flatten()
        });
        let fresh = HxmTrack::new();
        let h = self.hxm.as_ref().unwrap_or(&fresh);
        let mut s = summarize(&h.hr, &h.distance, &h.strides, emg, 0.0, hxm_dur.max(emg_dur))
            .expect("non-negative span");

        let mut d = Diagnostics::default();
        for f in [Protocol::Hxm, Protocol::Shimmer].into_iter().filter_map(|p| self.framer(p)) {
            d.frames_ok += f.frames_ok;
            d.frames_rejected += f.frames_rejected;
            d.bytes_skipped += f.bytes_skipped;
        }
        if let Some(t) = &self.shimmer {
            d.unknown_type_packets = t.unknown_type_packets;
            d.sequence_gaps = t.sequence_gaps;
            d.low_battery = t.low_battery;
        }
        s.diagnostics = d;
        s
    }

    /// Upload rows: beats, per-message distance and strides, EMG samples.
    pub fn samples(&self) -> Vec<SampleRecord> {
        let mut out = Vec::new();
        if let Some(t) = &self.hxm {
            out.extend_from_slice(t.samples());
        }
        if let Some(t) = &self.shimmer {
            out.extend(t.samples());
        }
        out
    }
}
