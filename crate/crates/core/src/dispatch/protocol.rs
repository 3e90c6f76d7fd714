//! Coordinator/worker wire format: a 4-byte big-endian length followed by a
//! JSON envelope carrying a protocol version `v`.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use super::{Task, TaskResult};

pub const PROTOCOL_VERSION: u32 = 1;
const MAX_FRAME: usize = 256 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Message {
    LeaseReq { worker_id: String, max: usize },
    Lease { tasks: Vec<Task> },
    /// Nothing to hand out right now; ask again later.
    NoWork { retry_after_ms: u64 },
    Result { result: TaskResult },
    Heartbeat { worker_id: String },
    Ack,
    JobDone,
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub v: u32,
    #[serde(flatten)]
    pub msg: Message,
}

pub fn write_frame<W: Write>(w: &mut W, msg: &Message) -> io::Result<()> {
    let env = Envelope { v: PROTOCOL_VERSION, msg: msg.clone() };
    let body = serde_json::to_vec(&env).map_err(io::Error::from)?;
    let len = u32::try_from(body.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(&body)?;
    w.flush()
}

pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Message> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {len} bytes exceeds limit")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    let env: Envelope = serde_json::from_slice(&body).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    if env.v != PROTOCOL_VERSION {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("protocol version {} (expected {PROTOCOL_VERSION})", env.v),
        ));
    }
    Ok(env.msg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_roundtrip() {
        let msg = Message::LeaseReq { worker_id: "w1".into(), max: 2 };
        let mut buf = Vec::new();
        write_frame(&mut buf, &msg).unwrap();
        assert_eq!(read_frame(&mut buf.as_slice()).unwrap(), msg);
        let json: serde_json::Value = serde_json::from_slice(&buf[4..]).unwrap();
        assert_eq!(json["v"], 1);
        assert_eq!(json["type"], "LEASE_REQ");
    }

    #[test]
    fn rejects_other_versions() {
        let body = br#"{"v":9,"type":"ACK"}"#;
        let mut buf = (body.len() as u32).to_be_bytes().to_vec();
        buf.extend_from_slice(body);
        assert!(read_frame(&mut buf.as_slice()).is_err());
    }
}
