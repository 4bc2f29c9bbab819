//! Routing-layer packets and the RREQ wire format.

use thiserror::Error;

use crate::NodeId;

/// Initial `cost_fpd` of a freshly originated RREQ (2^16).
pub const FPD_SENTINEL: f64 = 65536.0;

pub const RREQ_TYPE: u8 = 1;
/// Encoded size of [`RreqMessage`].
pub const RREQ_WIRE_LEN: usize = 32;

const IP_HEADER_BYTES: u32 = 20;

/// Route request. Field order and widths follow the extended AODV RREQ:
///
/// ```text
///  0      1      2      3
/// +------+-------------+------+
/// | type |  reserved   | hops |
/// +------+-------------+------+
/// |       broadcast id        |
/// |     destination address   |
/// |     destination seq no    |
/// |       source address      |
/// |       source seq no       |
/// |         cost fpd          |
/// |        (f64, 8 bytes)     |
/// +---------------------------+
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RreqMessage {
    pub msg_type: u8,
    pub reserved: u16,
    pub hop_count: u8,
    pub broadcast_id: u32,
    pub dest_addr: NodeId,
    /// Zero means "unknown".
    pub dest_seq: u32,
    pub src_addr: NodeId,
    pub src_seq: u32,
    pub cost_fpd: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("RREQ needs {RREQ_WIRE_LEN} bytes, got {0}")]
    Truncated(usize),
    #[error("unexpected message type {0}")]
    BadType(u8),
}

impl RreqMessage {
    pub fn new(src: NodeId, src_seq: u32, broadcast_id: u32, dest: NodeId, dest_seq: u32) -> Self {
        RreqMessage {
            msg_type: RREQ_TYPE,
            reserved: 0,
            hop_count: 0,
            broadcast_id,
            dest_addr: dest,
            dest_seq,
            src_addr: src,
            src_seq,
            cost_fpd: FPD_SENTINEL,
        }
    }

    /// Big-endian encoding.
    pub fn to_bytes(&self) -> [u8; RREQ_WIRE_LEN] {
        let mut b = [0u8; RREQ_WIRE_LEN];
        b[0] = self.msg_type;
        b[1..3].copy_from_slice(&self.reserved.to_be_bytes());
        b[3] = self.hop_count;
        b[4..8].copy_from_slice(&self.broadcast_id.to_be_bytes());
        b[8..12].copy_from_slice(&self.dest_addr.to_be_bytes());
        b[12..16].copy_from_slice(&self.dest_seq.to_be_bytes());
        b[16..20].copy_from_slice(&self.src_addr.to_be_bytes());
        b[20..24].copy_from_slice(&self.src_seq.to_be_bytes());
        b[24..32].copy_from_slice(&self.cost_fpd.to_be_bytes());
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, WireError> {
        if b.len() < RREQ_WIRE_LEN {
            return Err(WireError::Truncated(b.len()));
        }
        if b[0] != RREQ_TYPE {
            return Err(WireError::BadType(b[0]));
        }
        let u32_at = |i: usize| u32::from_be_bytes(b[i..i + 4].try_into().unwrap());
        Ok(RreqMessage {
            msg_type: b[0],
            reserved: u16::from_be_bytes([b[1], b[2]]),
            hop_count: b[3],
            broadcast_id: u32_at(4),
            dest_addr: u32_at(8),
            dest_seq: u32_at(12),
            src_addr: u32_at(16),
            src_seq: u32_at(20),
            cost_fpd: f64::from_be_bytes(b[24..32].try_into().unwrap()),
        })
    }
}

/// Route reply, unicast back along the reverse path to `src`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RrepMessage {
    pub hop_count: u8,
    pub dest: NodeId,
    pub dest_seq: u32,
    /// Originator of the RREQ being answered.
    pub src: NodeId,
    /// Path cost the destination selected; the sentinel when unused.
    pub cost_fpd: f64,
}

/// Route error listing `(destination, sequence number)` pairs now unreachable.
#[derive(Debug, Clone, PartialEq)]
pub struct RerrMessage {
    pub unreachable: Vec<(NodeId, u32)>,
}

/// Preemptive warning sent from a predicting node toward the route source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarnMessage {
    pub origin: NodeId,
    pub dest_of_route: NodeId,
    pub src_of_route: NodeId,
    pub predicted_fail_time: f64,
    /// When the prediction was made; lets the source ignore warnings about a
    /// route it has already replaced.
    pub issued_at: f64,
}

/// CBR payload packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataPacket {
    /// Global generation index; doubles as the packet identity.
    pub id: u64,
    pub flow: u32,
    pub src: NodeId,
    pub dst: NodeId,
    pub created: f64,
    /// Hops traversed so far.
    pub hops: u8,
    pub payload_bytes: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Data(DataPacket),
    Rreq(RreqMessage),
    Rrep(RrepMessage),
    Rerr(RerrMessage),
    Warn(WarnMessage),
}

/// A network-layer packet: payload plus the IP-level fields the model needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub ttl: u8,
    pub payload: Payload,
}

impl Packet {
    pub fn new(payload: Payload, ttl: u8) -> Self {
        Packet { ttl, payload }
    }

    /// Network-layer size including the IP header.
    pub fn size_bytes(&self) -> u32 {
        IP_HEADER_BYTES
            + match &self.payload {
                Payload::Data(d) => d.payload_bytes,
                Payload::Rreq(_) => RREQ_WIRE_LEN as u32,
                Payload::Rrep(_) => 28,
                Payload::Rerr(e) => 4 + 8 * e.unreachable.len() as u32,
                Payload::Warn(_) => 32,
            }
    }

    pub fn is_routing(&self) -> bool {
        !matches!(self.payload, Payload::Data(_))
    }

    pub fn as_data(&self) -> Option<&DataPacket> {
        match &self.payload {
            Payload::Data(d) => Some(d),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.payload {
            Payload::Data(_) => "data",
            Payload::Rreq(_) => "rreq",
            Payload::Rrep(_) => "rrep",
            Payload::Rerr(_) => "rerr",
            Payload::Warn(_) => "warn",
        }
    }

    /// Size of a WARN packet, for discovery-period estimates.
    pub fn warn_size() -> u32 {
        IP_HEADER_BYTES + 32
    }

    pub fn rreq_size() -> u32 {
        IP_HEADER_BYTES + RREQ_WIRE_LEN as u32
    }

    pub fn rrep_size() -> u32 {
        IP_HEADER_BYTES + 28
    }
}
