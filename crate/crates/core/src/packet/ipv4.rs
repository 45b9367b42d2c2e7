use std::net::Ipv4Addr;

pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const IPV4_MIN_HEADER_LEN: usize = 20;

pub const IPPROTO_TCP: u8 = 6;
pub const IPPROTO_UDP: u8 = 17;

/// IPv4 header as carried on the wire.
///
/// Checksum and fragment fields are opaque: they are encoded as given and
/// never validated. Options are carried as raw bytes so `ihl` arithmetic can
/// be exercised; their content has no meaning here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ipv4Header {
    pub version: u8,
    pub ihl: u8,
    pub tos: u8,
    pub total_length: u16,
    pub identification: u16,
    pub flags_fragment: u16,
    pub ttl: u8,
    pub protocol: u8,
    pub checksum: u16,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub options: Vec<u8>,
}

impl Default for Ipv4Header {
    fn default() -> Self {
        Ipv4Header {
            version: 4,
            ihl: 5,
            tos: 0,
            total_length: IPV4_MIN_HEADER_LEN as u16,
            identification: 0,
            flags_fragment: 0,
            ttl: 64,
            protocol: 0,
            checksum: 0,
            src: Ipv4Addr::UNSPECIFIED,
            dst: Ipv4Addr::UNSPECIFIED,
            options: Vec::new(),
        }
    }
}

impl Ipv4Header {
    pub fn header_len(&self) -> usize {
        usize::from(self.ihl) * 4
    }

    /// `version == 4`, `ihl >= 5` and `total_length` covers the header.
    pub fn is_well_formed(&self) -> bool {
        is_well_formed(self.version, self.ihl, self.total_length)
    }

    /// Encoded length: the fixed 20 octets plus options as given.
    pub fn encoded_len(&self) -> usize {
        IPV4_MIN_HEADER_LEN + self.options.len()
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.push(((self.version & 0xf) << 4) | (self.ihl & 0xf));
        out.push(self.tos);
        out.extend_from_slice(&self.total_length.to_be_bytes());
        out.extend_from_slice(&self.identification.to_be_bytes());
        out.extend_from_slice(&self.flags_fragment.to_be_bytes());
        out.push(self.ttl);
        out.push(self.protocol);
        out.extend_from_slice(&self.checksum.to_be_bytes());
        out.extend_from_slice(&self.src.octets());
        out.extend_from_slice(&self.dst.octets());
        out.extend_from_slice(&self.options);
    }

    /// Reads the fixed 20-octet part. Options are not copied.
    pub fn read_fixed(bytes: &[u8]) -> Option<Ipv4Header> {
        if bytes.len() < IPV4_MIN_HEADER_LEN {
            return None;
        }
        let be16 = |i: usize| u16::from_be_bytes([bytes[i], bytes[i + 1]]);
        Some(Ipv4Header {
            version: bytes[0] >> 4,
            ihl: bytes[0] & 0xf,
            tos: bytes[1],
            total_length: be16(2),
            identification: be16(4),
            flags_fragment: be16(6),
            ttl: bytes[8],
            protocol: bytes[9],
            checksum: be16(10),
            src: Ipv4Addr::new(bytes[12], bytes[13], bytes[14], bytes[15]),
            dst: Ipv4Addr::new(bytes[16], bytes[17], bytes[18], bytes[19]),
            options: Vec::new(),
        })
    }
}

pub fn is_well_formed(version: u8, ihl: u8, total_length: u16) -> bool {
    version == 4 && ihl >= 5 && usize::from(total_length) >= usize::from(ihl) * 4
}

/// The first four octets of TCP and UDP: source and destination port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct L4Ports {
    pub src: u16,
    pub dst: u16,
}

/// 8-octet UDP header. Length and checksum are written verbatim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct UdpHeader {
    pub src_port: u16,
    pub dst_port: u16,
    pub length: u16,
    pub checksum: u16,
}

impl UdpHeader {
    pub const LEN: usize = 8;

    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.src_port.to_be_bytes());
        out.extend_from_slice(&self.dst_port.to_be_bytes());
        out.extend_from_slice(&self.length.to_be_bytes());
        out.extend_from_slice(&self.checksum.to_be_bytes());
    }
}
