//! Binary state snapshots. Layout, all little-endian:
//! `"CSS1"`, version u32, n u32, rmax f64, m i64, g f64, t f64, then n
//! samples as interleaved (re, im) f64.
//!
//! The grid kind is not stored; the reader supplies it when rebuilding a state.

use std::path::Path;
use std::sync::Arc;

use css_core::{make_grid, Complex64, EquivariantState, GridRequest};

use crate::error::{CliError, CliResult};

pub const MAGIC: [u8; 4] = *b"CSS1";
pub const VERSION: u32 = 1;
const HEADER: usize = 4 + 4 + 4 + 8 + 8 + 8 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub rmax: f64,
    pub m: i64,
    pub g: f64,
    pub t: f64,
    pub payload: Vec<Complex64>,
}

impl Checkpoint {
    pub fn from_state(state: &EquivariantState) -> Self {
        Self { rmax: state.grid.rmax(), m: state.m, g: state.g, t: state.t, payload: state.u.clone() }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER + 16 * self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.rmax.to_le_bytes());
        out.extend_from_slice(&self.m.to_le_bytes());
        out.extend_from_slice(&self.g.to_le_bytes());
        out.extend_from_slice(&self.t.to_le_bytes());
        for z in &self.payload {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> CliResult<Self> {
        if bytes.len() < 4 {
            return Err(CliError::TruncatedPayload { expected: HEADER, got: bytes.len() });
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(CliError::BadMagic { found: magic });
        }
        if bytes.len() < HEADER {
            return Err(CliError::TruncatedPayload { expected: HEADER, got: bytes.len() });
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let wide = |at: usize| -> [u8; 8] { bytes[at..at + 8].try_into().unwrap() };
        let version = word(4);
        if version != VERSION {
            return Err(CliError::VersionMismatch { found: version, expected: VERSION });
        }
        let n = word(8) as usize;
        let expected = HEADER + 16 * n;
        if bytes.len() < expected {
            return Err(CliError::TruncatedPayload { expected, got: bytes.len() });
        }
        if bytes.len() > expected {
            return Err(CliError::TrailingBytes { extra: bytes.len() - expected });
        }
        let payload = bytes[HEADER..]
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect();
        Ok(Self {
            rmax: f64::from_le_bytes(wide(12)),
            m: i64::from_le_bytes(wide(20)),
            g: f64::from_le_bytes(wide(28)),
            t: f64::from_le_bytes(wide(36)),
            payload,
        })
    }

    /// Rebuilds the state on a fresh grid of the given kind.
    pub fn to_state(&self, kind: GridRequest) -> CliResult<EquivariantState> {
        let grid = Arc::new(make_grid(self.payload.len(), self.rmax, kind, self.m)?);
        let mut state = EquivariantState::new(self.m, self.g, grid, self.payload.clone())?;
        state.t = self.t;
        Ok(state)
    }
}

pub fn write_checkpoint(state: &EquivariantState, path: &Path) -> CliResult<()> {
    std::fs::write(path, Checkpoint::from_state(state).encode()).map_err(|e| CliError::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Checkpoint::decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            rmax: 12.5,
            m: -2,
            g: 1.5,
            t: 0.25,
            payload: vec![Complex64::new(1.0, -0.5), Complex64::new(f64::MIN_POSITIVE, 3e300)],
        }
    }

    #[test]
    fn header_layout() {
        let b = sample().encode();
        assert_eq!(b.len(), HEADER + 32);
        assert_eq!(&b[..4], b"CSS1");
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        assert_eq!(&b[8..12], &[2, 0, 0, 0]);
        assert_eq!(&b[12..20], &12.5f64.to_le_bytes());
        assert_eq!(&b[20..28], &(-2i64).to_le_bytes());
    }

    #[test]
    fn truncated_header_and_payload() {
        let b = sample().encode();
        assert!(matches!(Checkpoint::decode(&b[..2]), Err(CliError::TruncatedPayload { .. })));
        assert!(matches!(Checkpoint::decode(&b[..20]), Err(CliError::TruncatedPayload { .. })));
        assert!(matches!(Checkpoint::decode(&b[..b.len() - 1]), Err(CliError::TruncatedPayload { .. })));
        let mut long = b.clone();
        long.push(0);
        assert!(matches!(Checkpoint::decode(&long), Err(CliError::TrailingBytes { extra: 1 })));
    }
}
