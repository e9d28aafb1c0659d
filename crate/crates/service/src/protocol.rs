//! Wire format.
//!
//! Every frame is a 4-byte little-endian payload length followed by a UTF-8
//! JSON object. The object carries a `kind` tag, a per-direction sequence
//! number `seq` and the kind's fields inline:
//!
//! ```json
//! {"kind": "force_input", "seq": 12, "fx": 10.0, "fy": 0.0}
//! {"kind": "state", "seq": 40, "t": 0.4, "px": 12.1, "py": 0.0, "vx": 60.2, "vy": 0.0,
//!  "fx": 10.0, "fy": 0.0, "fox": 10.0, "foy": 0.0, "mode": "transparent", "rev": 0}
//! ```
//!
//! Client kinds:
//!
//! | kind | fields |
//! |------|--------|
//! | `hello` | `name` (optional) |
//! | `set_mode` | `mode`: `powered`, `transparent`, `aan_hard`, `aan_soft`, `guided_impedance` |
//! | `set_params` | `params`: any subset of `admittance`, `impedance`, `ievc`, `powered_speed`, `leading_speed`, `sensor_noise` |
//! | `load_map` | `pgm`: base64 binary PGM with the session's grid size |
//! | `edit_map` | `region`: `{"shape": "rect", "x0", "y0", "x1", "y1"}` or `{"shape": "stroke", "points": [[x, y], ..], "width"}` in mm; `value`: 0 or 255 |
//! | `force_input` | `fx`, `fy` in N |
//!
//! Server kinds (`hello` is answered with an `ack`):
//!
//! | kind | fields |
//! |------|--------|
//! | `ack` | `ack_seq`: the client seq acknowledged; `operator`: whether this connection may command |
//! | `fault` | `code`, `message`, `ack_seq` when caused by a client frame |
//! | `state` | `t` s, `px` `py` mm, `vx` `vy` mm/s, `fx` `fy` sampled force N, `fox` `foy` force after impedance N, `mode`, `rev` map revision |

use std::io::{self, Read, Write};

use gard_core::session::{Mode, ParamsUpdate};
use serde::{Deserialize, Serialize};

/// Frames above this size are refused and the connection closed.
pub const MAX_FRAME: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub seq: u64,
    #[serde(flatten)]
    pub body: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello {
        #[serde(default)]
        name: Option<String>,
    },
    SetMode {
        mode: Mode,
    },
    SetParams {
        params: ParamsUpdate,
    },
    LoadMap {
        pgm: String,
    },
    EditMap {
        region: EditRegion,
        value: u8,
    },
    ForceInput {
        fx: f64,
        fy: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum EditRegion {
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Stroke { points: Vec<[f64; 2]>, width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServerMessage {
    State(StateFrame),
    Fault {
        code: FaultCode,
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ack_seq: Option<u64>,
    },
    Ack {
        ack_seq: u64,
        operator: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub t: f64,
    pub px: f64,
    pub py: f64,
    pub vx: f64,
    pub vy: f64,
    pub fx: f64,
    pub fy: f64,
    pub fox: f64,
    pub foy: f64,
    pub mode: Mode,
    pub rev: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultCode {
    Malformed,
    ReadOnly,
    Rejected,
    ForceClamped,
    NonFiniteForce,
    /// Raised by the control loop itself (stale maps, stranded IEVC).
    Session,
}

pub fn write_frame<T: Serialize>(w: &mut impl Write, msg: &T) -> io::Result<()> {
    let body = serde_json::to_vec(msg).map_err(io::Error::other)?;
    let len = u32::try_from(body.len()).map_err(|_| io::Error::other("frame too large"))?;
    let mut buf = Vec::with_capacity(4 + body.len());
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(&body);
    w.write_all(&buf)?;
    w.flush()
}

/// Reads one frame payload. `Ok(None)` on a clean end of stream.
pub fn read_frame(r: &mut impl Read) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {len} bytes exceeds limit")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}
