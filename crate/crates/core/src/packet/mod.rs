//! Wire formats: Ethernet, MPLS label stack entries, IPv4, UDP, and the
//! classic pcap container.

mod flowkey;
mod frame;
pub mod ipv4;
pub mod mpls;
pub mod pcap;

pub use flowkey::{FlowKey, ParseStatus, PortId};
pub use frame::{encode_frame, EthernetHeader, Layer, MacAddr, RawFrame, Timestamp, ETHERNET_HEADER_LEN};
pub use ipv4::{Ipv4Header, UdpHeader, ETHERTYPE_IPV4, IPPROTO_TCP, IPPROTO_UDP};
pub use mpls::{decode_lse, MplsLse, ETHERTYPE_MPLS_MULTICAST, ETHERTYPE_MPLS_UNICAST};
pub use pcap::{read_pcap, write_pcap};

#[derive(Debug, thiserror::Error)]
pub enum PacketError {
    #[error("ethertype {ethertype:#06x} cannot carry a leading {layer} layer")]
    InconsistentLayering { ethertype: u16, layer: &'static str },
    #[error("not a little-endian classic pcap file (magic {0:08x?})")]
    BadMagic(Option<u32>),
    #[error("pcap record {index} is truncated")]
    TruncatedRecord { index: usize },
    #[error("captured length {capture_len} exceeds original length {orig_len}")]
    CaptureExceedsOriginal { capture_len: usize, orig_len: u32 },
    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),
}
