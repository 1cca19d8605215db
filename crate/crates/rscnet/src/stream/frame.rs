//! Wire codec for compressed CSI windows.
//!
//! Frame layout (header integers big-endian, payload floats little-endian):
//!
//! ```text
//! magic "RSCW" | version u8 | session_id u32 | sample_id u32
//! | window_index u16 | payload_len u16 (= 4 * m) | payload f32 x m
//! | crc32 u32 (over header + payload)
//! ```
//!
//! 17-byte header, 4-byte CRC trailer. Every single-byte corruption is
//! caught by a structural check or the CRC.

use std::io::Read;

use crate::error::StreamError;

pub const WIRE_MAGIC: [u8; 4] = *b"RSCW";
pub const WIRE_VERSION: u8 = 1;
pub const FRAME_HEADER_LEN: usize = 17;
pub const FRAME_TRAILER_LEN: usize = 4;

/// Maximum payload floats a frame can carry (u16 length field, 4 bytes per
/// value).
pub const MAX_PAYLOAD_FLOATS: usize = (u16::MAX as usize) / 4;

/// One compressed CSI window in flight.
#[derive(Debug, Clone, PartialEq)]
pub struct WireFrame {
    pub session_id: u32,
    pub sample_id: u32,
    pub window_index: u16,
    pub payload: Vec<f32>,
}

impl WireFrame {
    /// Total encoded size for an m-float payload.
    pub fn encoded_len(m: usize) -> usize {
        FRAME_HEADER_LEN + 4 * m + FRAME_TRAILER_LEN
    }
}

/// Serialize a frame. Deterministic; rejects payloads that overflow the
/// u16 length field.
pub fn encode_frame(frame: &WireFrame) -> Result<Vec<u8>, StreamError> {
    if frame.payload.len() > MAX_PAYLOAD_FLOATS {
        return Err(StreamError::PayloadTooLarge(frame.payload.len()));
    }
    let payload_len = (frame.payload.len() * 4) as u16;
    let mut out = Vec::with_capacity(WireFrame::encoded_len(frame.payload.len()));
    out.extend_from_slice(&WIRE_MAGIC);
    out.push(WIRE_VERSION);
    out.extend_from_slice(&frame.session_id.to_be_bytes());
    out.extend_from_slice(&frame.sample_id.to_be_bytes());
    out.extend_from_slice(&frame.window_index.to_be_bytes());
    out.extend_from_slice(&payload_len.to_be_bytes());
    for &v in &frame.payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_be_bytes());
    Ok(out)
}

/// Parse exactly one frame; trailing bytes are an error so that header
/// corruption of the length field cannot silently re-frame the stream.
pub fn decode_frame(bytes: &[u8]) -> Result<WireFrame, StreamError> {
    if bytes.len() < FRAME_HEADER_LEN {
        return Err(StreamError::Truncated {
            needed: FRAME_HEADER_LEN,
            have: bytes.len(),
        });
    }
    if bytes[0..4] != WIRE_MAGIC {
        return Err(StreamError::BadMagic);
    }
    if bytes[4] != WIRE_VERSION {
        return Err(StreamError::BadVersion(bytes[4]));
    }
    let payload_len = u16::from_be_bytes([bytes[15], bytes[16]]);
    if payload_len % 4 != 0 {
        return Err(StreamError::BadPayloadLength(payload_len));
    }
    let total = FRAME_HEADER_LEN + payload_len as usize + FRAME_TRAILER_LEN;
    if bytes.len() < total {
        return Err(StreamError::Truncated {
            needed: total,
            have: bytes.len(),
        });
    }
    if bytes.len() > total {
        return Err(StreamError::TrailingBytes(bytes.len() - total));
    }
    let body = &bytes[..total - FRAME_TRAILER_LEN];
    let stored = u32::from_be_bytes([
        bytes[total - 4],
        bytes[total - 3],
        bytes[total - 2],
        bytes[total - 1],
    ]);
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(StreamError::CrcMismatch { stored, computed });
    }
    let payload = body[FRAME_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(WireFrame {
        session_id: u32::from_be_bytes([bytes[5], bytes[6], bytes[7], bytes[8]]),
        sample_id: u32::from_be_bytes([bytes[9], bytes[10], bytes[11], bytes[12]]),
        window_index: u16::from_be_bytes([bytes[13], bytes[14]]),
        payload,
    })
}

/// Length-prefixed frame reassembly over any reliable ordered byte stream.
pub struct FrameReader<R: Read> {
    inner: R,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        FrameReader { inner }
    }

    fn read_full(&mut self, buf: &mut [u8]) -> Result<usize, StreamError> {
        let mut filled = 0;
        while filled < buf.len() {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(StreamError::Transport(e)),
            }
        }
        Ok(filled)
    }

    /// Next frame, `None` on a clean end-of-stream at a frame boundary.
    pub fn read_frame(&mut self) -> Result<Option<WireFrame>, StreamError> {
        let mut header = [0u8; FRAME_HEADER_LEN];
        let got = self.read_full(&mut header)?;
        if got == 0 {
            return Ok(None);
        }
        if got < FRAME_HEADER_LEN {
            return Err(StreamError::Truncated {
                needed: FRAME_HEADER_LEN,
                have: got,
            });
        }
        let payload_len = u16::from_be_bytes([header[15], header[16]]) as usize;
        let mut rest = vec![0u8; payload_len + FRAME_TRAILER_LEN];
        let got = self.read_full(&mut rest)?;
        if got < rest.len() {
            return Err(StreamError::Truncated {
                needed: FRAME_HEADER_LEN + rest.len(),
                have: FRAME_HEADER_LEN + got,
            });
        }
        let mut bytes = header.to_vec();
        bytes.extend_from_slice(&rest);
        decode_frame(&bytes).map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_frame(m: usize) -> WireFrame {
        WireFrame {
            session_id: 0xa1b2c3d4,
            sample_id: 7,
            window_index: 3,
            payload: (0..m).map(|i| i as f32 * 0.25 - 1.0).collect(),
        }
    }

    #[test]
    fn default_window_frame_is_221_bytes() {
        let bytes = encode_frame(&sample_frame(50)).unwrap();
        assert_eq!(bytes.len(), 221);
        assert_eq!(WireFrame::encoded_len(50), 17 + 200 + 4);
        assert_eq!(u16::from_be_bytes([bytes[15], bytes[16]]), 200);
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        for m in [1usize, 5, 50, 500] {
            let frame = sample_frame(m);
            let decoded = decode_frame(&encode_frame(&frame).unwrap()).unwrap();
            assert_eq!(decoded, frame);
        }
    }

    #[test]
    fn payload_overflowing_u16_is_rejected() {
        let frame = sample_frame(MAX_PAYLOAD_FLOATS + 1);
        assert!(matches!(
            encode_frame(&frame),
            Err(StreamError::PayloadTooLarge(_))
        ));
    }

    #[test]
    fn wrong_magic_is_distinct_from_crc_failure() {
        let mut bytes = encode_frame(&sample_frame(4)).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_frame(&bytes), Err(StreamError::BadMagic)));

        let mut bytes = encode_frame(&sample_frame(4)).unwrap();
        let n = bytes.len();
        bytes[n - 10] ^= 0x01; // payload bit flip
        assert!(matches!(
            decode_frame(&bytes),
            Err(StreamError::CrcMismatch { .. })
        ));
    }

    #[test]
    fn every_single_byte_corruption_is_detected() {
        let clean = encode_frame(&sample_frame(50)).unwrap();
        for pos in 0..clean.len() {
            for bit in 0..8 {
                let mut corrupted = clean.clone();
                corrupted[pos] ^= 1 << bit;
                assert!(
                    decode_frame(&corrupted).is_err(),
                    "corruption at byte {pos} bit {bit} went undetected"
                );
            }
        }
    }

    #[test]
    fn concatenated_frames_reassemble_without_residue() {
        let a = sample_frame(8);
        let b = WireFrame {
            session_id: 2,
            sample_id: 9,
            window_index: 0,
            payload: vec![5.5; 3],
        };
        let mut stream = encode_frame(&a).unwrap();
        stream.extend(encode_frame(&b).unwrap());
        let mut reader = FrameReader::new(stream.as_slice());
        assert_eq!(reader.read_frame().unwrap().unwrap(), a);
        assert_eq!(reader.read_frame().unwrap().unwrap(), b);
        assert!(reader.read_frame().unwrap().is_none());
    }

    #[test]
    fn mid_frame_eof_is_a_truncation_error() {
        let bytes = encode_frame(&sample_frame(8)).unwrap();
        let mut reader = FrameReader::new(&bytes[..bytes.len() - 2]);
        assert!(matches!(
            reader.read_frame(),
            Err(StreamError::Truncated { .. })
        ));
    }
}
