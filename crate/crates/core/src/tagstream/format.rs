//! Binary time-tag stream (`QEFLIM01`).
//!
//! ```text
//! header (64 bytes, little-endian)
//!  0      8  magic  "QEFLIM" + two ASCII version digits ("01")
//!  8      8  f64    sync_rate            Hz
//! 16      8  f64    micro_resolution     ps per micro-time unit
//! 24      8  f64    macro_resolution     ns per macro-time unit
//! 32      8  f64    cantilever_freq      Hz
//! 40      8  f64    cantilever_amplitude nm
//! 48      4  u32    marker_divisor       oscillation periods per cantilever marker
//! 52      2  u16    nx
//! 54      2  u16    ny
//! 56      8  f64    pixel_pitch          nm
//!
//! record (8 bytes, one little-endian u64)
//!  63..60  nibble   kind << 2 | channel
//!  59..32  28 bits  macro_time delta to the previous record
//!  31..16  16 bits  micro_time
//!  15..0   16 bits  payload
//! ```
//!
//! Kinds: 0 photon, 1 pixel marker, 2 cantilever marker, 3 overflow.
//! A pixel marker stores its 32-bit pixel index as `micro << 16 | payload`
//! and fires at the start of the pixel. An overflow record advances the
//! time base by `payload << 44 | micro << 28 | delta` and carries no event;
//! the encoder emits one whenever a delta does not fit in 28 bits and the
//! decoder consumes it silently.

use std::io::{self, Write};

use thiserror::Error;

pub const MAGIC_PREFIX: &[u8; 6] = b"QEFLIM";
pub const VERSION: &[u8; 2] = b"01";
pub const HEADER_LEN: usize = 64;
pub const RECORD_LEN: usize = 8;

const KIND_PHOTON: u64 = 0;
const KIND_PIXEL: u64 = 1;
const KIND_CANTILEVER: u64 = 2;
const KIND_OVERFLOW: u64 = 3;
const DELTA_BITS: u32 = 28;
const DELTA_MASK: u64 = (1 << DELTA_BITS) - 1;
const MAX_CHANNEL: u8 = 3;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("not a QEFLIM stream (bad magic)")]
    BadMagic,
    #[error("unsupported stream version {0:?}")]
    UnsupportedVersion(String),
    #[error("stream shorter than the {HEADER_LEN}-byte header")]
    ShortHeader,
    #[error("record {index} is out of macro-time order")]
    Unsorted { index: usize },
    #[error("record {index}: {what}")]
    Range { index: usize, what: String },
    #[error("invalid header: {0}")]
    Header(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamHeader {
    /// Hz
    pub sync_rate: f64,
    /// ps per micro-time unit
    pub micro_resolution: f64,
    /// ns per macro-time unit
    pub macro_resolution: f64,
    /// Hz
    pub cantilever_freq: f64,
    /// nm
    pub cantilever_amplitude: f64,
    pub marker_divisor: u32,
    pub nx: u16,
    pub ny: u16,
    /// nm
    pub pixel_pitch: f64,
}

impl Default for StreamHeader {
    fn default() -> Self {
        Self {
            sync_rate: 10e6,
            micro_resolution: 16.0,
            macro_resolution: 1.0,
            cantilever_freq: 300e3,
            cantilever_amplitude: 37.0,
            marker_divisor: 4096,
            nx: 1,
            ny: 1,
            pixel_pitch: 10.0,
        }
    }
}

impl StreamHeader {
    pub fn validate(&self) -> Result<(), StreamError> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(StreamError::Header(format!("{name} must be positive, got {v}")))
            }
        };
        positive(self.sync_rate, "sync_rate")?;
        positive(self.micro_resolution, "micro_resolution")?;
        positive(self.macro_resolution, "macro_resolution")?;
        if self.marker_divisor == 0 {
            return Err(StreamError::Header("marker_divisor must be >= 1".into()));
        }
        Ok(())
    }

    /// Sync period in ns.
    pub fn sync_period_ns(&self) -> f64 {
        1e9 / self.sync_rate
    }

    /// Number of micro-time units in one sync period.
    pub fn micro_channels(&self) -> usize {
        (self.sync_period_ns() * 1000.0 / self.micro_resolution).ceil() as usize
    }

    /// Cantilever oscillation period in ns.
    pub fn cantilever_period_ns(&self) -> f64 {
        1e9 / self.cantilever_freq
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..6].copy_from_slice(MAGIC_PREFIX);
        b[6..8].copy_from_slice(VERSION);
        b[8..16].copy_from_slice(&self.sync_rate.to_le_bytes());
        b[16..24].copy_from_slice(&self.micro_resolution.to_le_bytes());
        b[24..32].copy_from_slice(&self.macro_resolution.to_le_bytes());
        b[32..40].copy_from_slice(&self.cantilever_freq.to_le_bytes());
        b[40..48].copy_from_slice(&self.cantilever_amplitude.to_le_bytes());
        b[48..52].copy_from_slice(&self.marker_divisor.to_le_bytes());
        b[52..54].copy_from_slice(&self.nx.to_le_bytes());
        b[54..56].copy_from_slice(&self.ny.to_le_bytes());
        b[56..64].copy_from_slice(&self.pixel_pitch.to_le_bytes());
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StreamError> {
        if bytes.len() >= 6 && &bytes[0..6] != MAGIC_PREFIX {
            return Err(StreamError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(StreamError::ShortHeader);
        }
        if &bytes[6..8] != VERSION {
            return Err(StreamError::UnsupportedVersion(String::from_utf8_lossy(&bytes[6..8]).into_owned()));
        }
        let f = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        Ok(Self {
            sync_rate: f(8),
            micro_resolution: f(16),
            macro_resolution: f(24),
            cantilever_freq: f(32),
            cantilever_amplitude: f(40),
            marker_divisor: u32::from_le_bytes(bytes[48..52].try_into().unwrap()),
            nx: u16::from_le_bytes(bytes[52..54].try_into().unwrap()),
            ny: u16::from_le_bytes(bytes[54..56].try_into().unwrap()),
            pixel_pitch: f(56),
        })
    }
}

/// One event of the stream. Times are in the header's macro/micro units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TagRecord {
    Photon { channel: u8, macro_time: u64, micro_time: u16 },
    PixelMarker { macro_time: u64, pixel_index: u32 },
    CantileverMarker { macro_time: u64 },
}

impl TagRecord {
    #[inline]
    pub fn macro_time(&self) -> u64 {
        match *self {
            TagRecord::Photon { macro_time, .. }
            | TagRecord::PixelMarker { macro_time, .. }
            | TagRecord::CantileverMarker { macro_time } => macro_time,
        }
    }
}

/// In-memory stream: header plus time-ordered records.
#[derive(Debug, Clone, PartialEq)]
pub struct TagStream {
    pub header: StreamHeader,
    pub records: Vec<TagRecord>,
}

impl TagStream {
    pub fn photon_count(&self) -> usize {
        self.records.iter().filter(|r| matches!(r, TagRecord::Photon { .. })).count()
    }

    pub fn encode(&self) -> Result<Vec<u8>, StreamError> {
        encode_stream(&self.header, &self.records)
    }

    /// Decodes a complete stream; a truncated tail is dropped.
    pub fn decode(bytes: &[u8]) -> Result<Self, StreamError> {
        let (header, dec) = decode_stream(bytes)?;
        Ok(Self { header, records: dec.collect() })
    }

    pub fn read(path: impl AsRef<std::path::Path>) -> Result<Self, StreamError> {
        Self::decode(&std::fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<std::path::Path>) -> Result<(), StreamError> {
        let f = std::fs::File::create(path)?;
        let mut w = StreamWriter::new(io::BufWriter::new(f), &self.header)?;
        for r in &self.records {
            w.push(r)?;
        }
        w.finish()?.flush()?;
        Ok(())
    }
}

#[inline]
fn pack(kind: u64, channel: u64, delta: u64, micro: u64, payload: u64) -> u64 {
    (kind << 62) | (channel << 60) | (delta << 32) | (micro << 16) | payload
}

/// Single-pass encoder with constant memory.
pub struct StreamWriter<W: Write> {
    out: W,
    micro_limit: u64,
    last_macro: u64,
    index: usize,
}

impl<W: Write> StreamWriter<W> {
    pub fn new(mut out: W, header: &StreamHeader) -> Result<Self, StreamError> {
        header.validate()?;
        out.write_all(&header.to_bytes())?;
        let micro_limit = header.micro_channels().min(1 << 16) as u64;
        Ok(Self { out, micro_limit, last_macro: 0, index: 0 })
    }

    pub fn push(&mut self, r: &TagRecord) -> Result<(), StreamError> {
        let index = self.index;
        let t = r.macro_time();
        if t < self.last_macro {
            return Err(StreamError::Unsorted { index });
        }
        let (kind, channel, micro, payload) = match *r {
            TagRecord::Photon { channel, micro_time, .. } => {
                if channel > MAX_CHANNEL {
                    return Err(StreamError::Range { index, what: format!("channel {channel} > {MAX_CHANNEL}") });
                }
                if u64::from(micro_time) >= self.micro_limit {
                    return Err(StreamError::Range {
                        index,
                        what: format!("micro_time {micro_time} exceeds the sync period ({} units)", self.micro_limit),
                    });
                }
                (KIND_PHOTON, channel as u64, micro_time as u64, 0)
            }
            TagRecord::PixelMarker { pixel_index, .. } => {
                (KIND_PIXEL, 0, (pixel_index >> 16) as u64, (pixel_index & 0xFFFF) as u64)
            }
            TagRecord::CantileverMarker { .. } => (KIND_CANTILEVER, 0, 0, 0),
        };
        let mut delta = t - self.last_macro;
        if delta > DELTA_MASK {
            if delta >> 60 != 0 {
                return Err(StreamError::Range { index, what: format!("time gap {delta} exceeds 60 bits") });
            }
            let word = pack(KIND_OVERFLOW, 0, delta & DELTA_MASK, (delta >> 28) & 0xFFFF, delta >> 44);
            self.out.write_all(&word.to_le_bytes())?;
            delta = 0;
        }
        self.out.write_all(&pack(kind, channel, delta, micro, payload).to_le_bytes())?;
        self.last_macro = t;
        self.index += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<W, StreamError> {
        Ok(self.out)
    }
}

pub fn encode_stream(header: &StreamHeader, records: &[TagRecord]) -> Result<Vec<u8>, StreamError> {
    let mut w = StreamWriter::new(Vec::with_capacity(HEADER_LEN + RECORD_LEN * records.len()), header)?;
    for r in records {
        w.push(r)?;
    }
    w.finish()
}

/// Lazy record iterator over an encoded stream body.
pub struct Decoder<'a> {
    body: &'a [u8],
    pos: usize,
    clock: u64,
}

impl Decoder<'_> {
    /// Bytes of an incomplete final record, if the input was cut mid-record.
    pub fn truncated_bytes(&self) -> usize {
        self.body.len() % RECORD_LEN
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated_bytes() != 0
    }
}

impl Iterator for Decoder<'_> {
    type Item = TagRecord;

    #[inline]
    fn next(&mut self) -> Option<TagRecord> {
        loop {
            let chunk = self.body.get(self.pos..self.pos + RECORD_LEN)?;
            self.pos += RECORD_LEN;
            let w = u64::from_le_bytes(chunk.try_into().unwrap());
            let delta = (w >> 32) & DELTA_MASK;
            let micro = (w >> 16) & 0xFFFF;
            let payload = w & 0xFFFF;
            match w >> 62 {
                KIND_OVERFLOW => {
                    self.clock += (payload << 44) | (micro << 28) | delta;
                }
                kind => {
                    self.clock += delta;
                    let macro_time = self.clock;
                    return Some(match kind {
                        KIND_PHOTON => TagRecord::Photon {
                            channel: ((w >> 60) & 0x3) as u8,
                            macro_time,
                            micro_time: micro as u16,
                        },
                        KIND_PIXEL => TagRecord::PixelMarker { macro_time, pixel_index: ((micro << 16) | payload) as u32 },
                        _ => TagRecord::CantileverMarker { macro_time },
                    });
                }
            }
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.body.len() - self.pos.min(self.body.len())) / RECORD_LEN;
        (0, Some(left))
    }
}

/// Parses the header and returns a lazy decoder over the records.
/// Macro times are reconstructed from unsigned deltas, so the decoded
/// sequence is non-decreasing by construction.
pub fn decode_stream(bytes: &[u8]) -> Result<(StreamHeader, Decoder<'_>), StreamError> {
    let header = StreamHeader::from_bytes(bytes)?;
    Ok((header, Decoder { body: &bytes[HEADER_LEN..], pos: 0, clock: 0 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn photon(t: u64, micro: u16) -> TagRecord {
        TagRecord::Photon { channel: 0, macro_time: t, micro_time: micro }
    }

    #[test]
    fn header_only() {
        let bytes = encode_stream(&StreamHeader::default(), &[]).unwrap();
        assert_eq!(bytes.len(), 64);
        assert_eq!(&bytes[0..8], b"QEFLIM01");
        let (h, mut dec) = decode_stream(&bytes).unwrap();
        assert_eq!(h, StreamHeader::default());
        assert!(dec.next().is_none());
    }

    #[test]
    fn one_photon_is_one_record() {
        let bytes = encode_stream(&StreamHeader::default(), &[photon(12, 34)]).unwrap();
        assert_eq!(bytes.len(), 72);
    }

    #[test]
    fn bit_layout() {
        let rec = TagRecord::Photon { channel: 1, macro_time: 5, micro_time: 0x1234 };
        let bytes = encode_stream(&StreamHeader::default(), &[rec]).unwrap();
        let w = u64::from_le_bytes(bytes[64..72].try_into().unwrap());
        assert_eq!(w, (1u64 << 60) | (5 << 32) | (0x1234 << 16));
        let m = TagRecord::PixelMarker { macro_time: 5, pixel_index: 0x0002_0003 };
        let bytes = encode_stream(&StreamHeader::default(), &[m]).unwrap();
        let w = u64::from_le_bytes(bytes[64..72].try_into().unwrap());
        assert_eq!(w, (1u64 << 62) | (5 << 32) | (2 << 16) | 3);
    }

    #[test]
    fn large_gaps_use_overflow_records() {
        let recs = [photon(3, 1), TagRecord::CantileverMarker { macro_time: 3 + (1 << 40) + 17 }, photon(u64::MAX >> 5, 0)];
        let bytes = encode_stream(&StreamHeader::default(), &recs).unwrap();
        assert_eq!(bytes.len(), 64 + 5 * 8);
        let s = TagStream::decode(&bytes).unwrap();
        assert_eq!(s.records, recs);
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode_stream(&StreamHeader::default(), &[photon(1, 1)]).unwrap();
        bytes[6] = b'0';
        bytes[7] = b'2';
        assert!(matches!(decode_stream(&bytes), Err(StreamError::UnsupportedVersion(_))));
        bytes[0] = b'X';
        assert!(matches!(decode_stream(&bytes), Err(StreamError::BadMagic)));
        assert!(matches!(decode_stream(b"QEFLIM01"), Err(StreamError::ShortHeader)));
    }

    #[test]
    fn truncated_tail() {
        let recs: Vec<_> = (0..5).map(|i| photon(i * 10, i as u16)).collect();
        let bytes = encode_stream(&StreamHeader::default(), &recs).unwrap();
        let cut = &bytes[..bytes.len() - 3];
        let (_, mut dec) = decode_stream(cut).unwrap();
        let got: Vec<_> = dec.by_ref().collect();
        assert_eq!(got, recs[..4]);
        assert!(dec.is_truncated());
        assert_eq!(dec.truncated_bytes(), 5);
    }

    #[test]
    fn encoder_errors() {
        let h = StreamHeader::default();
        let err = encode_stream(&h, &[photon(10, 0), photon(9, 0)]).unwrap_err();
        assert!(matches!(err, StreamError::Unsorted { index: 1 }));
        // 100 ns sync period at 16 ps per unit = 6250 channels
        let err = encode_stream(&h, &[photon(1, 0), photon(2, 6250)]).unwrap_err();
        assert!(matches!(err, StreamError::Range { index: 1, .. }));
        let bad_channel = TagRecord::Photon { channel: 4, macro_time: 0, micro_time: 0 };
        assert!(matches!(encode_stream(&h, &[bad_channel]), Err(StreamError::Range { index: 0, .. })));
    }

    fn arb_record() -> impl Strategy<Value = (u64, TagRecord)> {
        let gap = prop_oneof![8 => 0u64..1000, 1 => 0u64..(1 << 36)];
        (gap, 0u8..4, 0u16..6250, any::<u32>(), 0u8..3).prop_map(|(g, ch, micro, px, kind)| {
            let r = match kind {
                0 => TagRecord::Photon { channel: ch, macro_time: 0, micro_time: micro },
                1 => TagRecord::PixelMarker { macro_time: 0, pixel_index: px },
                _ => TagRecord::CantileverMarker { macro_time: 0 },
            };
            (g, r)
        })
    }

    fn with_times(items: Vec<(u64, TagRecord)>) -> Vec<TagRecord> {
        let mut t = 0u64;
        items
            .into_iter()
            .map(|(g, r)| {
                t += g;
                match r {
                    TagRecord::Photon { channel, micro_time, .. } => TagRecord::Photon { channel, macro_time: t, micro_time },
                    TagRecord::PixelMarker { pixel_index, .. } => TagRecord::PixelMarker { macro_time: t, pixel_index },
                    TagRecord::CantileverMarker { .. } => TagRecord::CantileverMarker { macro_time: t },
                }
            })
            .collect()
    }

    proptest! {
        #[test]
        fn round_trip(items in prop::collection::vec(arb_record(), 0..400)) {
            let recs = with_times(items);
            let bytes = encode_stream(&StreamHeader::default(), &recs).unwrap();
            let s = TagStream::decode(&bytes).unwrap();
            prop_assert_eq!(s.records, recs);
        }
    }
}
