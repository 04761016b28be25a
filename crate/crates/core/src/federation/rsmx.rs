//! RSMX, the binary matrix container exchanged between clients and server.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "RSMX"
//! 4       1           version (1)
//! 5       1           role tag
//! 6       4           rows, u32 LE
//! 10      4           cols, u32 LE
//! 14      8·rows·cols entries, f64 LE, row-major
//! end-4   4           CRC-32 (IEEE) of every preceding byte, u32 LE
//! ```

use std::fmt;

use nalgebra::DMatrix;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"RSMX";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 14;
const CRC_LEN: usize = 4;
/// Bytes around the payload: header plus checksum.
pub const FRAMING_BYTES: usize = HEADER_LEN + CRC_LEN;

/// What a matrix means to the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    /// Client covariance `Φ_c`.
    MdrsCov,
    /// Client readout statistic `A_c = D_c X_cᵀ`.
    EsnA,
    /// Client readout statistic `B_c = X_c X_cᵀ`.
    EsnB,
    /// Global precision `P_g`.
    MdrsPrecision,
    /// Global readout weights.
    EsnWout,
}

impl Role {
    pub const ALL: [Role; 5] = [
        Role::MdrsCov,
        Role::EsnA,
        Role::EsnB,
        Role::MdrsPrecision,
        Role::EsnWout,
    ];

    pub fn tag(self) -> u8 {
        match self {
            Role::MdrsCov => 1,
            Role::EsnA => 2,
            Role::EsnB => 3,
            Role::MdrsPrecision => 4,
            Role::EsnWout => 5,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Role> {
        Role::ALL.into_iter().find(|r| r.tag() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::MdrsCov => "MDRS_COV",
            Role::EsnA => "ESN_A",
            Role::EsnB => "ESN_B",
            Role::MdrsPrecision => "MDRS_PRECISION",
            Role::EsnWout => "ESN_WOUT",
        }
    }

    pub fn from_name(name: &str) -> Option<Role> {
        Role::ALL.into_iter().find(|r| r.name() == name)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("bad magic bytes {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported RSMX version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown role tag {0}")]
    UnknownRole(u8),
    #[error("truncated RSMX buffer: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("{0} unexpected trailing bytes after RSMX frame")]
    TrailingBytes(usize),
    #[error("CRC mismatch: stored {stored:08x}, computed {computed:08x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("matrix of {rows}x{cols} exceeds the format limits")]
    TooLarge { rows: usize, cols: usize },
}

/// Encoded length of a `rows × cols` matrix.
pub fn encoded_len(rows: usize, cols: usize) -> usize {
    FRAMING_BYTES + 8 * rows * cols
}

pub fn encode(matrix: &DMatrix<f64>, role: Role) -> Result<Vec<u8>, CodecError> {
    let (rows, cols) = matrix.shape();
    let (r32, c32) = match (u32::try_from(rows), u32::try_from(cols)) {
        (Ok(r), Ok(c)) => (r, c),
        _ => return Err(CodecError::TooLarge { rows, cols }),
    };
    let mut out = Vec::with_capacity(encoded_len(rows, cols));
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(role.tag());
    out.extend_from_slice(&r32.to_le_bytes());
    out.extend_from_slice(&c32.to_le_bytes());
    for r in 0..rows {
        for c in 0..cols {
            out.extend_from_slice(&matrix[(r, c)].to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

pub fn decode(bytes: &[u8]) -> Result<(Role, DMatrix<f64>), CodecError> {
    if bytes.len() < 4 {
        return Err(CodecError::Truncated {
            needed: FRAMING_BYTES,
            have: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4-byte slice");
    if magic != MAGIC {
        return Err(CodecError::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(CodecError::Truncated {
            needed: FRAMING_BYTES,
            have: bytes.len(),
        });
    }
    if bytes[4] != VERSION {
        return Err(CodecError::UnsupportedVersion(bytes[4]));
    }
    let rows = read_u32(bytes, 6) as usize;
    let cols = read_u32(bytes, 10) as usize;
    let needed = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(FRAMING_BYTES))
        .ok_or(CodecError::TooLarge { rows, cols })?;
    if bytes.len() < needed {
        return Err(CodecError::Truncated {
            needed,
            have: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(CodecError::TrailingBytes(bytes.len() - needed));
    }
    let body = &bytes[..needed - CRC_LEN];
    let stored = read_u32(bytes, needed - CRC_LEN);
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(CodecError::CrcMismatch { stored, computed });
    }
    let role = Role::from_tag(bytes[5]).ok_or(CodecError::UnknownRole(bytes[5]))?;
    let values: Vec<f64> = body[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((role, DMatrix::from_row_slice(rows, cols, &values)))
}
