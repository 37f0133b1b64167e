//! Binary CSI trace files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! header:  "CSI1" | u16 version = 1 | u32 N | f64 carrier_freq_hz | f64 bandwidth_hz | f64 frame_interval_s
//! record:  f64 timestamp | u32 seq | u8 flags | N × (f32 re, f32 im)
//! ```
//!
//! UDP datagrams carry exactly one record and no header.

use std::io::{self, Read, Write};

use crate::config::SensingConfig;
use crate::error::TraceError;
use crate::types::{CsiFrame, FrameFlags};
use crate::C64;

pub const MAGIC: &[u8; 4] = b"CSI1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 4 + 8 + 8 + 8;

/// Size in bytes of one record with `n` subcarriers.
pub fn record_len(n: usize) -> usize {
    8 + 4 + 1 + 8 * n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceHeader {
    pub n_subcarriers: usize,
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub frame_interval_s: f64,
}

impl TraceHeader {
    pub fn from_config(config: &SensingConfig) -> Self {
        Self {
            n_subcarriers: config.n_subcarriers,
            carrier_freq_hz: config.carrier_freq_hz,
            bandwidth_hz: config.bandwidth_hz,
            frame_interval_s: config.frame_interval_s,
        }
    }

    /// Copies the RF geometry into `config`.
    pub fn apply_to(&self, config: &mut SensingConfig) {
        config.n_subcarriers = self.n_subcarriers;
        config.carrier_freq_hz = self.carrier_freq_hz;
        config.bandwidth_hz = self.bandwidth_hz;
        config.frame_interval_s = self.frame_interval_s;
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(MAGIC);
        b[4..6].copy_from_slice(&VERSION.to_le_bytes());
        b[6..10].copy_from_slice(&(self.n_subcarriers as u32).to_le_bytes());
        b[10..18].copy_from_slice(&self.carrier_freq_hz.to_le_bytes());
        b[18..26].copy_from_slice(&self.bandwidth_hz.to_le_bytes());
        b[26..34].copy_from_slice(&self.frame_interval_s.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, TraceError> {
        if b.len() < 4 {
            return Err(TraceError::TruncatedHeader { offset: b.len() });
        }
        if &b[0..4] != MAGIC {
            return Err(TraceError::BadMagic);
        }
        if b.len() < HEADER_LEN {
            return Err(TraceError::TruncatedHeader { offset: b.len() });
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != VERSION {
            return Err(TraceError::UnsupportedVersion(version));
        }
        Ok(Self {
            n_subcarriers: u32::from_le_bytes(b[6..10].try_into().expect("4 bytes")) as usize,
            carrier_freq_hz: f64::from_le_bytes(b[10..18].try_into().expect("8 bytes")),
            bandwidth_hz: f64::from_le_bytes(b[18..26].try_into().expect("8 bytes")),
            frame_interval_s: f64::from_le_bytes(b[26..34].try_into().expect("8 bytes")),
        })
    }
}

/// Appends one record to `out`. CSI is narrowed to f32.
pub fn encode_record(frame: &CsiFrame, out: &mut Vec<u8>) {
    out.reserve(record_len(frame.csi.len()));
    out.extend_from_slice(&frame.timestamp.to_le_bytes());
    out.extend_from_slice(&frame.seq.to_le_bytes());
    out.push(frame.flags.bits());
    for x in &frame.csi {
        out.extend_from_slice(&(x.re as f32).to_le_bytes());
        out.extend_from_slice(&(x.im as f32).to_le_bytes());
    }
}

/// Decodes one record of exactly `record_len(n)` bytes.
pub fn decode_record(b: &[u8], n: usize) -> Result<CsiFrame, TraceError> {
    let expected = record_len(n);
    if b.len() != expected {
        return Err(TraceError::RecordLength {
            len: b.len(),
            n,
            expected,
        });
    }
    Ok(parse_record(b, n))
}

fn parse_record(b: &[u8], n: usize) -> CsiFrame {
    let f32_at = |o: usize| f32::from_le_bytes(b[o..o + 4].try_into().expect("4 bytes")) as f64;
    let timestamp = f64::from_le_bytes(b[0..8].try_into().expect("8 bytes"));
    let seq = u32::from_le_bytes(b[8..12].try_into().expect("4 bytes"));
    let flags = FrameFlags::from_bits(b[12]);
    let csi = (0..n)
        .map(|k| {
            let o = 13 + 8 * k;
            C64::new(f32_at(o), f32_at(o + 4))
        })
        .collect();
    CsiFrame {
        timestamp,
        seq,
        csi,
        flags,
    }
}

pub fn encode_trace(header: &TraceHeader, frames: &[CsiFrame]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + frames.len() * record_len(header.n_subcarriers));
    out.extend_from_slice(&header.to_bytes());
    for f in frames {
        encode_record(f, &mut out);
    }
    out
}

/// Decodes a whole trace held in memory.
pub fn decode_trace(bytes: &[u8]) -> Result<(TraceHeader, Vec<CsiFrame>), TraceError> {
    let header = TraceHeader::from_bytes(bytes)?;
    let n = header.n_subcarriers;
    let rl = record_len(n);
    let mut frames = Vec::with_capacity((bytes.len() - HEADER_LEN) / rl);
    let mut offset = HEADER_LEN;
    while offset < bytes.len() {
        if bytes.len() - offset < rl {
            return Err(TraceError::TruncatedFrame {
                frame_index: frames.len(),
                offset,
            });
        }
        frames.push(parse_record(&bytes[offset..offset + rl], n));
        offset += rl;
    }
    Ok((header, frames))
}

/// Checks that a trace matches the session's subcarrier count.
pub fn check_subcarriers(header: &TraceHeader, expected: usize) -> Result<(), TraceError> {
    if header.n_subcarriers != expected {
        return Err(TraceError::SubcarrierMismatch {
            offset: 6,
            expected,
            found: header.n_subcarriers,
        });
    }
    Ok(())
}

/// Streaming writer.
pub struct TraceWriter<W: Write> {
    inner: W,
    buf: Vec<u8>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut inner: W, header: &TraceHeader) -> io::Result<Self> {
        inner.write_all(&header.to_bytes())?;
        Ok(Self {
            inner,
            buf: Vec::new(),
        })
    }

    pub fn write_frame(&mut self, frame: &CsiFrame) -> io::Result<()> {
        self.buf.clear();
        encode_record(frame, &mut self.buf);
        self.inner.write_all(&self.buf)
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Streaming reader yielding one frame per record.
pub struct TraceReader<R: Read> {
    inner: R,
    header: TraceHeader,
    buf: Vec<u8>,
    offset: usize,
    index: usize,
    done: bool,
}

impl<R: Read> TraceReader<R> {
    pub fn new(mut inner: R) -> Result<Self, TraceError> {
        let mut head = [0u8; HEADER_LEN];
        let got = read_full(&mut inner, &mut head)?;
        let header = TraceHeader::from_bytes(&head[..got])?;
        Ok(Self {
            inner,
            buf: vec![0u8; record_len(header.n_subcarriers)],
            header,
            offset: HEADER_LEN,
            index: 0,
            done: false,
        })
    }

    pub fn header(&self) -> &TraceHeader {
        &self.header
    }
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(k) => got += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

impl<R: Read> Iterator for TraceReader<R> {
    type Item = Result<CsiFrame, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let got = match read_full(&mut self.inner, &mut self.buf) {
            Ok(g) => g,
            Err(e) => {
                self.done = true;
                return Some(Err(e.into()));
            }
        };
        if got == 0 {
            self.done = true;
            return None;
        }
        if got < self.buf.len() {
            self.done = true;
            return Some(Err(TraceError::TruncatedFrame {
                frame_index: self.index,
                offset: self.offset,
            }));
        }
        let frame = parse_record(&self.buf, self.header.n_subcarriers);
        self.offset += self.buf.len();
        self.index += 1;
        Some(Ok(frame))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> TraceHeader {
        TraceHeader {
            n_subcarriers: 4,
            carrier_freq_hz: 6e9,
            bandwidth_hz: 160e6,
            frame_interval_s: 0.025,
        }
    }

    fn frames() -> Vec<CsiFrame> {
        (0..3)
            .map(|i| {
                let mut f = CsiFrame::new(
                    i as f64 * 0.025,
                    i,
                    (0..4).map(|k| C64::new(k as f64 * 0.5, -(i as f64))).collect(),
                );
                if i == 1 {
                    f.flags.set_gap_filled();
                }
                f
            })
            .collect()
    }

    #[test]
    fn header_bytes() {
        let h = TraceHeader {
            n_subcarriers: 512,
            ..header()
        };
        let b = h.to_bytes();
        assert_eq!(&b[..4], &[0x43, 0x53, 0x49, 0x31]);
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(&b[6..10], &[0x00, 0x02, 0x00, 0x00]);
        assert_eq!(&b[10..18], &6e9f64.to_le_bytes());
        assert_eq!(b.len(), 34);
    }

    #[test]
    fn round_trip() {
        let bytes = encode_trace(&header(), &frames());
        let (h, f) = decode_trace(&bytes).unwrap();
        assert_eq!(h, header());
        assert_eq!(f, frames());
        assert_eq!(encode_trace(&h, &f), bytes);
        let streamed: Vec<CsiFrame> = TraceReader::new(&bytes[..])
            .unwrap()
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(streamed, frames());
    }

    #[test]
    fn truncation_names_frame() {
        let bytes = encode_trace(&header(), &frames());
        let cut = &bytes[..bytes.len() - 5];
        match decode_trace(cut) {
            Err(TraceError::TruncatedFrame { frame_index, offset }) => {
                assert_eq!(frame_index, 2);
                assert_eq!(offset, HEADER_LEN + 2 * record_len(4));
            }
            other => panic!("{other:?}"),
        }
        let last = TraceReader::new(cut).unwrap().last().unwrap();
        assert!(matches!(last, Err(TraceError::TruncatedFrame { frame_index: 2, .. })));
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(decode_trace(b"NOPE0000000000000000000000000000000000"), Err(TraceError::BadMagic)));
        assert!(matches!(decode_trace(b"CSI1\x01"), Err(TraceError::TruncatedHeader { .. })));
        let mut b = header().to_bytes();
        b[4] = 2;
        assert!(matches!(decode_trace(&b), Err(TraceError::UnsupportedVersion(2))));
        assert!(matches!(check_subcarriers(&header(), 512), Err(TraceError::SubcarrierMismatch { .. })));
        assert!(matches!(decode_record(&[0u8; 10], 4), Err(TraceError::RecordLength { .. })));
    }
}
