use std::fmt;
use std::net::Ipv4Addr;

use crate::packet::mpls::LABEL_MAX;
use crate::packet::{FlowKey, MacAddr, MplsLse, ParseStatus, PortId};

/// A matchable flow key field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Field {
    InPort,
    EthSrc,
    EthDst,
    EthType,
    MplsLabel,
    MplsS,
    IpSrc,
    IpDst,
    IpProto,
    L4Src,
    L4Dst,
    ParseStatus,
}

pub const FIELD_COUNT: usize = 12;

impl Field {
    pub const ALL: [Field; FIELD_COUNT] = [
        Field::InPort,
        Field::EthSrc,
        Field::EthDst,
        Field::EthType,
        Field::MplsLabel,
        Field::MplsS,
        Field::IpSrc,
        Field::IpDst,
        Field::IpProto,
        Field::L4Src,
        Field::L4Dst,
        Field::ParseStatus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::InPort => "in_port",
            Field::EthSrc => "eth_src",
            Field::EthDst => "eth_dst",
            Field::EthType => "eth_type",
            Field::MplsLabel => "mpls_label",
            Field::MplsS => "mpls_s",
            Field::IpSrc => "ip_src",
            Field::IpDst => "ip_dst",
            Field::IpProto => "ip_proto",
            Field::L4Src => "l4_src",
            Field::L4Dst => "l4_dst",
            Field::ParseStatus => "parse_status",
        }
    }

    pub fn from_name(name: &str) -> Option<Field> {
        Field::ALL.into_iter().find(|f| f.name() == name)
    }

    fn index(self) -> usize {
        self as usize
    }

    /// The field's value in `key`, or `None` when the layer is absent.
    pub fn get(self, key: &FlowKey) -> Option<u64> {
        match self {
            Field::InPort => Some(u64::from(key.in_port.0)),
            Field::EthSrc => Some(key.eth_src.to_u64()),
            Field::EthDst => Some(key.eth_dst.to_u64()),
            Field::EthType => Some(u64::from(key.ethertype)),
            Field::MplsLabel => key.mpls_top.map(|l| u64::from(l.label)),
            Field::MplsS => key.mpls_top.map(|l| u64::from(l.bottom_of_stack)),
            Field::IpSrc => key.ip_src.map(|a| u64::from(u32::from(a))),
            Field::IpDst => key.ip_dst.map(|a| u64::from(u32::from(a))),
            Field::IpProto => key.ip_proto.map(u64::from),
            Field::L4Src => key.l4_src.map(u64::from),
            Field::L4Dst => key.l4_dst.map(u64::from),
            Field::ParseStatus => Some(key.parse_status.code()),
        }
    }

    /// Writes a value previously obtained from [`Field::get`] into `key`.
    pub fn set(self, key: &mut FlowKey, value: Option<u64>) {
        match self {
            Field::InPort => key.in_port = PortId(value.unwrap_or(0) as u32),
            Field::EthSrc => key.eth_src = MacAddr::from_u64(value.unwrap_or(0)),
            Field::EthDst => key.eth_dst = MacAddr::from_u64(value.unwrap_or(0)),
            Field::EthType => key.ethertype = value.unwrap_or(0) as u16,
            Field::MplsLabel => match value {
                None => key.mpls_top = None,
                Some(v) => key.mpls_top.get_or_insert_with(MplsLse::default).label = v as u32,
            },
            Field::MplsS => match value {
                None => key.mpls_top = None,
                Some(v) => {
                    key.mpls_top.get_or_insert_with(MplsLse::default).bottom_of_stack = v != 0
                }
            },
            Field::IpSrc => key.ip_src = value.map(|v| Ipv4Addr::from(v as u32)),
            Field::IpDst => key.ip_dst = value.map(|v| Ipv4Addr::from(v as u32)),
            Field::IpProto => key.ip_proto = value.map(|v| v as u8),
            Field::L4Src => key.l4_src = value.map(|v| v as u16),
            Field::L4Dst => key.l4_dst = value.map(|v| v as u16),
            Field::ParseStatus => {
                key.parse_status = ParseStatus::ALL
                    .into_iter()
                    .find(|s| Some(s.code()) == value)
                    .unwrap_or(ParseStatus::Malformed)
            }
        }
    }

    /// Parses the textual form used in rule files.
    pub fn parse_value(self, text: &str) -> Option<u64> {
        let int = |max: u64| parse_int(text).filter(|v| *v <= max);
        match self {
            Field::InPort => int(u64::from(u32::MAX)),
            Field::EthSrc | Field::EthDst => text.parse::<MacAddr>().ok().map(MacAddr::to_u64),
            Field::EthType | Field::L4Src | Field::L4Dst => int(u64::from(u16::MAX)),
            Field::MplsLabel => int(u64::from(LABEL_MAX)),
            Field::MplsS => int(1),
            Field::IpSrc | Field::IpDst => {
                text.parse::<Ipv4Addr>().ok().map(|a| u64::from(u32::from(a)))
            }
            Field::IpProto => int(u64::from(u8::MAX)),
            Field::ParseStatus => text.parse::<ParseStatus>().ok().map(ParseStatus::code),
        }
    }

    pub fn format_value(self, value: u64) -> String {
        match self {
            Field::EthSrc | Field::EthDst => MacAddr::from_u64(value).to_string(),
            Field::EthType => format!("{value:#06x}"),
            Field::IpSrc | Field::IpDst => Ipv4Addr::from(value as u32).to_string(),
            Field::ParseStatus => ParseStatus::ALL
                .into_iter()
                .find(|s| s.code() == value)
                .map_or_else(|| value.to_string(), |s| s.as_str().to_string()),
            _ => value.to_string(),
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub(crate) fn parse_int(text: &str) -> Option<u64> {
    match text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => text.parse().ok(),
    }
}

/// Set of fields, used as a megaflow mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct FieldSet(u16);

impl FieldSet {
    pub const EMPTY: FieldSet = FieldSet(0);

    pub fn insert(&mut self, field: Field) {
        self.0 |= 1 << field.index();
    }

    pub fn contains(self, field: Field) -> bool {
        self.0 & (1 << field.index()) != 0
    }

    pub fn union(self, other: FieldSet) -> FieldSet {
        FieldSet(self.0 | other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = Field> {
        Field::ALL.into_iter().filter(move |f| self.contains(*f))
    }
}

impl FromIterator<Field> for FieldSet {
    fn from_iter<I: IntoIterator<Item = Field>>(iter: I) -> Self {
        let mut set = FieldSet::EMPTY;
        for f in iter {
            set.insert(f);
        }
        set
    }
}

impl fmt::Display for FieldSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.iter().map(Field::name).collect();
        write!(f, "[{}]", names.join(","))
    }
}

/// A flow key projected onto a mask. Slots outside the mask are `None`, as
/// are masked fields whose layer is absent; the mask tells the two apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MaskedKey {
    mask: FieldSet,
    values: [Option<u64>; FIELD_COUNT],
}

impl MaskedKey {
    pub fn new(key: &FlowKey, mask: FieldSet) -> Self {
        let mut values = [None; FIELD_COUNT];
        for field in mask.iter() {
            values[field.index()] = field.get(key);
        }
        MaskedKey { mask, values }
    }

    pub fn mask(&self) -> FieldSet {
        self.mask
    }

    pub fn value(&self, field: Field) -> Option<u64> {
        self.values[field.index()]
    }

    /// Overwrites the masked fields of `key` with this key's values.
    pub fn apply_to(&self, key: &mut FlowKey) {
        for field in self.mask.iter() {
            field.set(key, self.value(field));
        }
    }
}

impl fmt::Display for MaskedKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .mask
            .iter()
            .map(|field| match self.value(field) {
                Some(v) => format!("{}={}", field, field.format_value(v)),
                None => format!("{field}=none"),
            })
            .collect();
        if parts.is_empty() {
            f.write_str("*")
        } else {
            f.write_str(&parts.join(","))
        }
    }
}
