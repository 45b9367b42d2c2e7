use std::fmt;
use std::net::Ipv4Addr;

use super::frame::MacAddr;
use super::mpls::MplsLse;

/// Switch port number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct PortId(pub u32);

impl fmt::Display for PortId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// How far extraction got.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParseStatus {
    /// IPv4 (and L4 ports where the protocol carries them) parsed.
    Complete,
    /// Ethernet parsed; the ethertype is not one that is looked beneath.
    L2Only,
    /// A label stack ending in a bottom-of-stack entry was walked.
    MplsTerminated,
    Malformed,
}

impl ParseStatus {
    pub const ALL: [ParseStatus; 4] = [
        ParseStatus::Complete,
        ParseStatus::L2Only,
        ParseStatus::MplsTerminated,
        ParseStatus::Malformed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParseStatus::Complete => "complete",
            ParseStatus::L2Only => "l2only",
            ParseStatus::MplsTerminated => "mpls_terminated",
            ParseStatus::Malformed => "malformed",
        }
    }

    pub fn code(self) -> u64 {
        self as u64
    }
}

impl std::str::FromStr for ParseStatus {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let s = s.to_ascii_lowercase();
        ParseStatus::ALL
            .into_iter()
            .find(|st| st.as_str() == s || st.as_str().replace('_', "") == s)
            .ok_or(())
    }
}

impl fmt::Display for ParseStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Header fields pulled out of a frame for the flow table lookup.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FlowKey {
    pub in_port: PortId,
    pub eth_src: MacAddr,
    pub eth_dst: MacAddr,
    pub ethertype: u16,
    pub mpls_top: Option<MplsLse>,
    pub mpls_depth_seen: u32,
    pub ip_src: Option<Ipv4Addr>,
    pub ip_dst: Option<Ipv4Addr>,
    pub ip_proto: Option<u8>,
    pub ip_tos: Option<u8>,
    pub ip_ttl: Option<u8>,
    pub l4_src: Option<u16>,
    pub l4_dst: Option<u16>,
    pub parse_status: ParseStatus,
}

impl FlowKey {
    /// A key for a frame too short to carry an Ethernet header.
    pub fn empty(in_port: PortId, parse_status: ParseStatus) -> Self {
        FlowKey {
            in_port,
            eth_src: MacAddr::ZERO,
            eth_dst: MacAddr::ZERO,
            ethertype: 0,
            mpls_top: None,
            mpls_depth_seen: 0,
            ip_src: None,
            ip_dst: None,
            ip_proto: None,
            ip_tos: None,
            ip_ttl: None,
            l4_src: None,
            l4_dst: None,
            parse_status,
        }
    }

    pub fn has_ip(&self) -> bool {
        self.ip_src.is_some()
    }

    pub fn has_l4(&self) -> bool {
        self.l4_src.is_some() || self.l4_dst.is_some()
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "in_port={} eth_src={} eth_dst={} eth_type={:#06x}",
            self.in_port, self.eth_src, self.eth_dst, self.ethertype
        )?;
        if let Some(top) = self.mpls_top {
            write!(f, " mpls_label={} mpls_s={}", top.label, top.bottom_of_stack as u8)?;
        }
        if self.mpls_depth_seen > 0 {
            write!(f, " mpls_depth={}", self.mpls_depth_seen)?;
        }
        if let (Some(src), Some(dst)) = (self.ip_src, self.ip_dst) {
            write!(f, " ip_src={src} ip_dst={dst}")?;
        }
        if let Some(p) = self.ip_proto {
            write!(f, " ip_proto={p}")?;
        }
        if let Some(t) = self.ip_tos {
            write!(f, " ip_tos={t}")?;
        }
        if let Some(t) = self.ip_ttl {
            write!(f, " ip_ttl={t}")?;
        }
        if let Some(p) = self.l4_src {
            write!(f, " l4_src={p}")?;
        }
        if let Some(p) = self.l4_dst {
            write!(f, " l4_dst={p}")?;
        }
        write!(f, " parse_status={}", self.parse_status)
    }
}
