//! Photon time-tag streams: the binary codec and the mapping from
//! detection time to cantilever height.

mod format;
mod height;

pub use format::{
    decode_stream, encode_stream, Decoder, StreamError, StreamHeader, StreamWriter, TagRecord, TagStream, HEADER_LEN,
    RECORD_LEN,
};
pub use height::{assign_height_bins, height_at, CantileverPhaseModel, CoverageError, HeightMapper};

/// Absolute time in ns of a record's macro time.
#[inline]
pub fn macro_ns(h: &StreamHeader, macro_time: u64) -> f64 {
    macro_time as f64 * h.macro_resolution
}

/// Absolute detection time in ns of a photon.
#[inline]
pub fn photon_ns(h: &StreamHeader, macro_time: u64, micro_time: u16) -> f64 {
    macro_ns(h, macro_time) + micro_time as f64 * h.micro_resolution * 1e-3
}

/// Cantilever marker times (ns) in stream order.
pub fn cantilever_markers(s: &TagStream) -> Vec<f64> {
    s.records
        .iter()
        .filter_map(|r| match r {
            TagRecord::CantileverMarker { macro_time } => Some(macro_ns(&s.header, *macro_time)),
            _ => None,
        })
        .collect()
}
