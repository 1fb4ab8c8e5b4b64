//! Raw response dumps: little-endian packed bit files with a small header.
//!
//! Layout (all integers little-endian):
//!   magic "PUFR" | version u16 | kind u8 | device_id u32 |
//!   kind 0 (strong): n u32, then ceil(n/8) packed bytes
//!   kind 1 (cell array): rows u32, cols u32, then ceil(rows*cols/8) bytes
//! Bit j of each byte holds bit index 8k + j (LSB-first).

use std::io::{self, Read, Write};

use super::memory::BitMatrix;
use super::{PufError, ResponseVector};

const MAGIC: &[u8; 4] = b"PUFR";
const VERSION: u16 = 1;

/// Packs 0/1 bits LSB-first into bytes.
pub fn pack_bits(bits: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; (bits.len() + 7) / 8];
    for (i, &b) in bits.iter().enumerate() {
        out[i / 8] |= (b & 1) << (i % 8);
    }
    out
}

/// Unpacks `n` LSB-first bits from packed bytes.
pub fn unpack_bits(bytes: &[u8], n: usize) -> Vec<u8> {
    (0..n).map(|i| (bytes[i / 8] >> (i % 8)) & 1).collect()
}

/// Contents of a response dump.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseDump {
    Strong {
        device_id: u32,
        responses: ResponseVector,
    },
    CellArray {
        device_id: u32,
        cells: BitMatrix,
    },
}

pub fn write_dump<W: Write>(w: &mut W, dump: &ResponseDump) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    match dump {
        ResponseDump::Strong {
            device_id,
            responses,
        } => {
            w.write_all(&[0u8])?;
            w.write_all(&device_id.to_le_bytes())?;
            w.write_all(&(responses.len() as u32).to_le_bytes())?;
            w.write_all(&pack_bits(responses.bits()))?;
        }
        ResponseDump::CellArray { device_id, cells } => {
            w.write_all(&[1u8])?;
            w.write_all(&device_id.to_le_bytes())?;
            w.write_all(&(cells.rows() as u32).to_le_bytes())?;
            w.write_all(&(cells.cols() as u32).to_le_bytes())?;
            w.write_all(&pack_bits(cells.bits()))?;
        }
    }
    Ok(())
}

pub fn read_dump<R: Read>(r: &mut R) -> io::Result<ResponseDump> {
    let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let mut buf2 = [0u8; 2];
    r.read_exact(&mut buf2)?;
    if u16::from_le_bytes(buf2) != VERSION {
        return Err(bad("unsupported version"));
    }
    let mut kind = [0u8; 1];
    r.read_exact(&mut kind)?;
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let device_id = u32::from_le_bytes(buf4);
    match kind[0] {
        0 => {
            r.read_exact(&mut buf4)?;
            let n = u32::from_le_bytes(buf4) as usize;
            let mut packed = vec![0u8; (n + 7) / 8];
            r.read_exact(&mut packed)?;
            let responses = ResponseVector::new(unpack_bits(&packed, n))
                .map_err(|e: PufError| bad(&e.to_string()))?;
            Ok(ResponseDump::Strong {
                device_id,
                responses,
            })
        }
        1 => {
            r.read_exact(&mut buf4)?;
            let rows = u32::from_le_bytes(buf4) as usize;
            r.read_exact(&mut buf4)?;
            let cols = u32::from_le_bytes(buf4) as usize;
            let n = rows * cols;
            let mut packed = vec![0u8; (n + 7) / 8];
            r.read_exact(&mut packed)?;
            let cells = BitMatrix::from_bits(rows, cols, unpack_bits(&packed, n))
                .map_err(|e| bad(&e.to_string()))?;
            Ok(ResponseDump::CellArray { device_id, cells })
        }
        k => Err(bad(&format!("unknown dump kind {k}"))),
    }
}
