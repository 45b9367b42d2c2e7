use std::fmt;

use super::ipv4::{Ipv4Header, UdpHeader, ETHERTYPE_IPV4};
use super::mpls::{is_mpls_ethertype, MplsLse, LSE_LEN};
use super::PacketError;

pub const ETHERNET_HEADER_LEN: usize = 14;

/// Capture timestamp, as stored in a pcap record header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp {
    pub secs: u32,
    pub micros: u32,
}

/// Frame bytes plus capture metadata.
///
/// `capture_len` is always `bytes.len()` and never exceeds `orig_len`; the
/// fields are private so those two invariants cannot be broken after
/// construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RawFrame {
    bytes: Vec<u8>,
    orig_len: u32,
    pub ts: Timestamp,
}

impl RawFrame {
    /// A complete (untruncated) frame with a zero timestamp.
    pub fn new(bytes: Vec<u8>) -> Self {
        let orig_len = bytes.len() as u32;
        RawFrame { bytes, orig_len, ts: Timestamp::default() }
    }

    /// A captured frame whose original length may exceed what was kept.
    pub fn captured(bytes: Vec<u8>, orig_len: u32, ts: Timestamp) -> Result<Self, PacketError> {
        if (bytes.len() as u64) > u64::from(orig_len) {
            return Err(PacketError::CaptureExceedsOriginal {
                capture_len: bytes.len(),
                orig_len,
            });
        }
        Ok(RawFrame { bytes, orig_len, ts })
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn capture_len(&self) -> usize {
        self.bytes.len()
    }

    pub fn orig_len(&self) -> u32 {
        self.orig_len
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn with_timestamp(mut self, ts: Timestamp) -> Self {
        self.ts = ts;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    pub const ZERO: MacAddr = MacAddr([0; 6]);

    pub fn to_u64(self) -> u64 {
        self.0.iter().fold(0u64, |acc, b| (acc << 8) | u64::from(*b))
    }

    pub fn from_u64(v: u64) -> Self {
        let b = v.to_be_bytes();
        MacAddr([b[2], b[3], b[4], b[5], b[6], b[7]])
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            m[0], m[1], m[2], m[3], m[4], m[5]
        )
    }
}

impl std::str::FromStr for MacAddr {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let mut out = [0u8; 6];
        let mut parts = s.split(':');
        for slot in out.iter_mut() {
            let part = parts.next().ok_or(())?;
            if part.is_empty() || part.len() > 2 {
                return Err(());
            }
            *slot = u8::from_str_radix(part, 16).map_err(|_| ())?;
        }
        if parts.next().is_some() {
            return Err(());
        }
        Ok(MacAddr(out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EthernetHeader {
    pub dst_mac: MacAddr,
    pub src_mac: MacAddr,
    pub ethertype: u16,
}

impl EthernetHeader {
    pub fn new(ethertype: u16) -> Self {
        EthernetHeader {
            dst_mac: MacAddr([0x02, 0, 0, 0, 0, 0x02]),
            src_mac: MacAddr([0x02, 0, 0, 0, 0, 0x01]),
            ethertype,
        }
    }

    pub fn encode(&self) -> [u8; ETHERNET_HEADER_LEN] {
        let mut out = [0u8; ETHERNET_HEADER_LEN];
        out[..6].copy_from_slice(&self.dst_mac.0);
        out[6..12].copy_from_slice(&self.src_mac.0);
        out[12..].copy_from_slice(&self.ethertype.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Option<Self> {
        if bytes.len() < ETHERNET_HEADER_LEN {
            return None;
        }
        let mut dst = [0u8; 6];
        let mut src = [0u8; 6];
        dst.copy_from_slice(&bytes[..6]);
        src.copy_from_slice(&bytes[6..12]);
        Some(EthernetHeader {
            dst_mac: MacAddr(dst),
            src_mac: MacAddr(src),
            ethertype: u16::from_be_bytes([bytes[12], bytes[13]]),
        })
    }
}

/// One header placed after the Ethernet header by [`encode_frame`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Layer {
    Mpls(MplsLse),
    Ipv4(Ipv4Header),
    Udp(UdpHeader),
    /// Verbatim octets; used for fragments and deliberately broken headers.
    Raw(Vec<u8>),
}

impl Layer {
    pub fn encoded_len(&self) -> usize {
        match self {
            Layer::Mpls(_) => LSE_LEN,
            Layer::Ipv4(h) => h.encoded_len(),
            Layer::Udp(_) => UdpHeader::LEN,
            Layer::Raw(b) => b.len(),
        }
    }

    fn write_to(&self, out: &mut Vec<u8>) {
        match self {
            Layer::Mpls(lse) => out.extend_from_slice(&lse.encode()),
            Layer::Ipv4(h) => h.write_to(out),
            Layer::Udp(u) => u.write_to(out),
            Layer::Raw(b) => out.extend_from_slice(b),
        }
    }
}

/// Concatenates the Ethernet header, `layers` and `payload` byte for byte.
///
/// Nothing is inserted or fixed up. The only check is that the ethertype
/// agrees with the first layer: an MPLS entry must sit under 0x8847/0x8848
/// and an IPv4 header under 0x0800.
pub fn encode_frame(
    eth: &EthernetHeader,
    layers: &[Layer],
    payload: &[u8],
) -> Result<RawFrame, PacketError> {
    match layers.first() {
        Some(Layer::Mpls(_)) if !is_mpls_ethertype(eth.ethertype) => {
            return Err(PacketError::InconsistentLayering {
                ethertype: eth.ethertype,
                layer: "mpls",
            })
        }
        Some(Layer::Ipv4(_)) if eth.ethertype != ETHERTYPE_IPV4 => {
            return Err(PacketError::InconsistentLayering {
                ethertype: eth.ethertype,
                layer: "ipv4",
            })
        }
        Some(Layer::Udp(_)) => {
            return Err(PacketError::InconsistentLayering {
                ethertype: eth.ethertype,
                layer: "udp",
            })
        }
        _ => {}
    }
    let len = ETHERNET_HEADER_LEN
        + layers.iter().map(Layer::encoded_len).sum::<usize>()
        + payload.len();
    let mut out = Vec::with_capacity(len);
    out.extend_from_slice(&eth.encode());
    for layer in layers {
        layer.write_to(&mut out);
    }
    out.extend_from_slice(payload);
    debug_assert_eq!(out.len(), len);
    Ok(RawFrame::new(out))
}
