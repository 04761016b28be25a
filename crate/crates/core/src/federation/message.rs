use nalgebra::DMatrix;

use super::rsmx::{self, Role};
use crate::error::{ProtocolError, Result};

/// Matrix kinds a client may send.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PayloadKind {
    MdrsCov,
    EsnA,
    EsnB,
}

impl PayloadKind {
    pub fn role(self) -> Role {
        match self {
            PayloadKind::MdrsCov => Role::MdrsCov,
            PayloadKind::EsnA => Role::EsnA,
            PayloadKind::EsnB => Role::EsnB,
        }
    }

    pub fn from_role(role: Role) -> Option<Self> {
        match role {
            Role::MdrsCov => Some(PayloadKind::MdrsCov),
            Role::EsnA => Some(PayloadKind::EsnA),
            Role::EsnB => Some(PayloadKind::EsnB),
            _ => None,
        }
    }
}

/// Matrix kinds the server sends back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlobalKind {
    MdrsPrecision,
    EsnWout,
}

impl GlobalKind {
    pub fn role(self) -> Role {
        match self {
            GlobalKind::MdrsPrecision => Role::MdrsPrecision,
            GlobalKind::EsnWout => Role::EsnWout,
        }
    }

    pub fn from_role(role: Role) -> Option<Self> {
        match role {
            Role::MdrsPrecision => Some(GlobalKind::MdrsPrecision),
            Role::EsnWout => Some(GlobalKind::EsnWout),
            _ => None,
        }
    }
}

fn decode_as(bytes: &[u8], expected: Role) -> Result<DMatrix<f64>> {
    let (role, matrix) = rsmx::decode(bytes)?;
    if role != expected {
        return Err(ProtocolError::KindMismatch {
            expected: expected.name(),
            found: role.name(),
        }
        .into());
    }
    Ok(matrix)
}

/// A client's local model for one round, already in wire form.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdateMessage {
    pub client_id: u32,
    pub round: u32,
    pub kind: PayloadKind,
    /// RSMX frame.
    pub matrix: Vec<u8>,
    /// Accumulated timesteps, when known. Not carried by message files.
    pub count: Option<u64>,
}

impl ClientUpdateMessage {
    pub fn new(client_id: u32, round: u32, kind: PayloadKind, matrix: &DMatrix<f64>, count: Option<u64>) -> Result<Self> {
        Ok(Self {
            client_id,
            round,
            kind,
            matrix: rsmx::encode(matrix, kind.role())?,
            count,
        })
    }

    /// Wraps a received frame, taking the kind from its role tag.
    pub fn from_frame(client_id: u32, round: u32, frame: Vec<u8>) -> Result<Self> {
        let (role, _) = rsmx::decode(&frame)?;
        let kind = PayloadKind::from_role(role).ok_or(ProtocolError::KindMismatch {
            expected: "client payload",
            found: role.name(),
        })?;
        Ok(Self {
            client_id,
            round,
            kind,
            matrix: frame,
            count: None,
        })
    }

    pub fn decode_matrix(&self) -> Result<DMatrix<f64>> {
        decode_as(&self.matrix, self.kind.role())
    }

    pub fn payload_bytes(&self) -> usize {
        self.matrix.len()
    }

    /// `round<R>_client<ID>_<ROLE>.rsmx`
    pub fn file_name(&self) -> String {
        format!(
            "round{}_client{}_{}.rsmx",
            self.round,
            self.client_id,
            self.kind.role().name()
        )
    }
}

/// Parses `round<R>_client<ID>_<ROLE>.rsmx`; `None` for names of another shape.
pub fn parse_message_file_name(name: &str) -> Option<(u32, u32, Role)> {
    let stem = name.strip_suffix(".rsmx")?;
    let rest = stem.strip_prefix("round")?;
    let (round, rest) = rest.split_once("_client")?;
    let (client, role) = rest.split_once('_')?;
    Some((round.parse().ok()?, client.parse().ok()?, Role::from_name(role)?))
}

/// The aggregated global model, in wire form.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModelMessage {
    pub round: u32,
    pub kind: GlobalKind,
    pub matrix: Vec<u8>,
}

impl GlobalModelMessage {
    pub fn new(round: u32, kind: GlobalKind, matrix: &DMatrix<f64>) -> Result<Self> {
        Ok(Self {
            round,
            kind,
            matrix: rsmx::encode(matrix, kind.role())?,
        })
    }

    pub fn decode_matrix(&self) -> Result<DMatrix<f64>> {
        decode_as(&self.matrix, self.kind.role())
    }

    pub fn file_name(&self) -> String {
        format!("round{}_global_{}.rsmx", self.round, self.kind.role().name())
    }
}
