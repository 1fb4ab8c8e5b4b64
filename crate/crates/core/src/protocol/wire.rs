//! Bit-exact wire format: length-prefixed frames carrying one request or
//! response message.
//!
//! Frame: u32 big-endian payload length, then the payload.
//! Request payload: version(1) | device_id(4 BE) | m2_len(2 BE) | m2 |
//!                  m1_len(4 BE) | m1.
//! Response payload: version(1) | verdict(1) | reason(1) | has_p(1) |
//!                   [p_open f32 BE when has_p = 1].

use std::io::{Read, Write};

use super::ProtocolError;

pub const WIRE_VERSION: u8 = 1;
/// Default upper bound on frame payloads; oversized frames close the
/// connection.
pub const MAX_FRAME_DEFAULT: usize = 65_536;

/// One authentication attempt: plaintext identity, sealed image (M1), and
/// the encrypted session key (M2).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthRequest {
    pub device_id: u32,
    pub m1: Vec<u8>,
    pub m2: Vec<u8>,
}

impl AuthRequest {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + 4 + 2 + self.m2.len() + 4 + self.m1.len());
        out.push(WIRE_VERSION);
        out.extend_from_slice(&self.device_id.to_be_bytes());
        out.extend_from_slice(&(self.m2.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.m2);
        out.extend_from_slice(&(self.m1.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.m1);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let bad = |m: &str| ProtocolError::Malformed(m.to_string());
        if bytes.len() < 11 {
            return Err(bad("request too short"));
        }
        if bytes[0] != WIRE_VERSION {
            return Err(bad("unsupported wire version"));
        }
        let device_id = u32::from_be_bytes(bytes[1..5].try_into().expect("4 bytes"));
        let m2_len = u16::from_be_bytes(bytes[5..7].try_into().expect("2 bytes")) as usize;
        let mut at = 7;
        if bytes.len() < at + m2_len + 4 {
            return Err(bad("truncated m2"));
        }
        let m2 = bytes[at..at + m2_len].to_vec();
        at += m2_len;
        let m1_len =
            u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
        at += 4;
        if bytes.len() != at + m1_len {
            return Err(bad("m1 length disagrees with frame size"));
        }
        let m1 = bytes[at..].to_vec();
        Ok(Self { device_id, m1, m2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject,
}

/// Why a request was not accepted. `Ok` accompanies accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    Ok,
    Replay,
    DecryptFail,
    IdentityMismatch,
    LowConfidence,
}

impl RejectReason {
    fn to_byte(self) -> u8 {
        match self {
            RejectReason::Ok => 0,
            RejectReason::Replay => 1,
            RejectReason::DecryptFail => 2,
            RejectReason::IdentityMismatch => 3,
            RejectReason::LowConfidence => 4,
        }
    }

    fn from_byte(b: u8) -> Result<Self, ProtocolError> {
        Ok(match b {
            0 => RejectReason::Ok,
            1 => RejectReason::Replay,
            2 => RejectReason::DecryptFail,
            3 => RejectReason::IdentityMismatch,
            4 => RejectReason::LowConfidence,
            x => return Err(ProtocolError::Malformed(format!("unknown reason {x}"))),
        })
    }
}

/// The server's verdict. `p_open` is present iff the request reached the
/// classifier (a replay or an undecryptable request never does).
#[derive(Debug, Clone, PartialEq)]
pub struct AuthResponse {
    pub verdict: Verdict,
    pub reason: RejectReason,
    pub p_open: Option<f32>,
}

impl AuthResponse {
    pub fn accept(p_open: f32) -> Self {
        Self {
            verdict: Verdict::Accept,
            reason: RejectReason::Ok,
            p_open: Some(p_open),
        }
    }

    pub fn reject(reason: RejectReason, p_open: Option<f32>) -> Self {
        Self {
            verdict: Verdict::Reject,
            reason,
            p_open,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![
            WIRE_VERSION,
            match self.verdict {
                Verdict::Accept => 1,
                Verdict::Reject => 0,
            },
            self.reason.to_byte(),
            u8::from(self.p_open.is_some()),
        ];
        if let Some(p) = self.p_open {
            out.extend_from_slice(&p.to_be_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let bad = |m: &str| ProtocolError::Malformed(m.to_string());
        if bytes.len() < 4 {
            return Err(bad("response too short"));
        }
        if bytes[0] != WIRE_VERSION {
            return Err(bad("unsupported wire version"));
        }
        let verdict = match bytes[1] {
            1 => Verdict::Accept,
            0 => Verdict::Reject,
            _ => return Err(bad("unknown verdict")),
        };
        let reason = RejectReason::from_byte(bytes[2])?;
        let p_open = match bytes[3] {
            0 if bytes.len() == 4 => None,
            1 if bytes.len() == 8 => Some(f32::from_be_bytes(
                bytes[4..8].try_into().expect("4 bytes"),
            )),
            _ => return Err(bad("bad p_open encoding")),
        };
        Ok(Self {
            verdict,
            reason,
            p_open,
        })
    }
}

/// Writes one length-prefixed frame.
pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> Result<(), ProtocolError> {
    w.write_all(&(payload.len() as u32).to_be_bytes())?;
    w.write_all(payload)?;
    Ok(())
}

/// Reads one length-prefixed frame, enforcing the size cap.
pub fn read_frame<R: Read>(r: &mut R, max: usize) -> Result<Vec<u8>, ProtocolError> {
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes)?;
    let len = u32::from_be_bytes(len_bytes) as usize;
    if len > max {
        return Err(ProtocolError::FrameTooLarge { len, max });
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    Ok(payload)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_layout_is_bit_exact() {
        let req = AuthRequest {
            device_id: 0x0102_0304,
            m1: vec![0xaa, 0xbb],
            m2: vec![0xcc],
        };
        let bytes = req.encode();
        assert_eq!(
            bytes,
            vec![
                1, // version
                0x01, 0x02, 0x03, 0x04, // device id, big-endian
                0x00, 0x01, // m2 length
                0xcc, // m2
                0x00, 0x00, 0x00, 0x02, // m1 length
                0xaa, 0xbb, // m1
            ]
        );
        assert_eq!(AuthRequest::decode(&bytes).unwrap(), req);
    }

    #[test]
    fn response_round_trips() {
        for resp in [
            AuthResponse::accept(0.93),
            AuthResponse::reject(RejectReason::Replay, None),
            AuthResponse::reject(RejectReason::LowConfidence, Some(0.12)),
        ] {
            let bytes = resp.encode();
            assert_eq!(AuthResponse::decode(&bytes).unwrap(), resp);
        }
    }

    #[test]
    fn malformed_requests_rejected() {
        assert!(AuthRequest::decode(&[]).is_err());
        assert!(AuthRequest::decode(&[9; 11]).is_err(), "bad version");
        let req = AuthRequest {
            device_id: 1,
            m1: vec![1, 2, 3],
            m2: vec![4],
        };
        let mut truncated = req.encode();
        truncated.pop();
        assert!(AuthRequest::decode(&truncated).is_err());
    }

    #[test]
    fn frame_size_cap_enforced() {
        let mut buf = Vec::new();
        write_frame(&mut buf, &[0u8; 100]).unwrap();
        assert!(read_frame(&mut buf.as_slice(), 50).is_err());
        assert_eq!(read_frame(&mut buf.as_slice(), 100).unwrap().len(), 100);
    }
}
