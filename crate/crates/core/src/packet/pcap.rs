//! Classic libpcap container, little-endian, Ethernet link type.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::frame::{RawFrame, Timestamp};
use super::PacketError;

pub const PCAP_MAGIC: u32 = 0xa1b2_c3d4;
pub const PCAP_VERSION_MAJOR: u16 = 2;
pub const PCAP_VERSION_MINOR: u16 = 4;
pub const PCAP_SNAPLEN: u32 = 65535;
pub const LINKTYPE_ETHERNET: u32 = 1;

pub const GLOBAL_HEADER_LEN: usize = 24;
pub const RECORD_HEADER_LEN: usize = 16;

pub fn write_pcap_to<W: Write>(mut out: W, frames: &[RawFrame]) -> Result<(), PacketError> {
    let mut hdr = [0u8; GLOBAL_HEADER_LEN];
    hdr[0..4].copy_from_slice(&PCAP_MAGIC.to_le_bytes());
    hdr[4..6].copy_from_slice(&PCAP_VERSION_MAJOR.to_le_bytes());
    hdr[6..8].copy_from_slice(&PCAP_VERSION_MINOR.to_le_bytes());
    // thiszone and sigfigs stay zero
    hdr[16..20].copy_from_slice(&PCAP_SNAPLEN.to_le_bytes());
    hdr[20..24].copy_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
    out.write_all(&hdr)?;

    for frame in frames {
        let mut rec = [0u8; RECORD_HEADER_LEN];
        rec[0..4].copy_from_slice(&frame.ts.secs.to_le_bytes());
        rec[4..8].copy_from_slice(&frame.ts.micros.to_le_bytes());
        rec[8..12].copy_from_slice(&(frame.capture_len() as u32).to_le_bytes());
        rec[12..16].copy_from_slice(&frame.orig_len().to_le_bytes());
        out.write_all(&rec)?;
        out.write_all(frame.bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_pcap_from<R: Read>(mut input: R) -> Result<Vec<RawFrame>, PacketError> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    parse_pcap(&data)
}

pub fn parse_pcap(data: &[u8]) -> Result<Vec<RawFrame>, PacketError> {
    if data.len() < GLOBAL_HEADER_LEN {
        return Err(PacketError::BadMagic(None));
    }
    let le32 = |b: &[u8], i: usize| u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]]);
    let magic = le32(data, 0);
    if magic != PCAP_MAGIC {
        return Err(PacketError::BadMagic(Some(magic)));
    }

    let mut frames = Vec::new();
    let mut pos = GLOBAL_HEADER_LEN;
    let mut index = 0usize;
    while pos < data.len() {
        if data.len() - pos < RECORD_HEADER_LEN {
            return Err(PacketError::TruncatedRecord { index });
        }
        let rec = &data[pos..pos + RECORD_HEADER_LEN];
        let ts = Timestamp { secs: le32(rec, 0), micros: le32(rec, 4) };
        let incl_len = le32(rec, 8) as usize;
        let orig_len = le32(rec, 12);
        pos += RECORD_HEADER_LEN;
        if data.len() - pos < incl_len {
            return Err(PacketError::TruncatedRecord { index });
        }
        let bytes = data[pos..pos + incl_len].to_vec();
        pos += incl_len;
        frames.push(RawFrame::captured(bytes, orig_len, ts)?);
        index += 1;
    }
    Ok(frames)
}

pub fn write_pcap(path: impl AsRef<Path>, frames: &[RawFrame]) -> Result<(), PacketError> {
    let file = File::create(path)?;
    write_pcap_to(BufWriter::new(file), frames)
}

pub fn read_pcap(path: impl AsRef<Path>) -> Result<Vec<RawFrame>, PacketError> {
    let file = File::open(path)?;
    read_pcap_from(BufReader::new(file))
}
