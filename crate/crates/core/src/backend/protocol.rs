//! Framed JSON protocol spoken with external backends over stdio.
//!
//! Each frame is a little-endian `u32` byte length followed by that many
//! bytes of UTF-8 JSON. The client opens with
//! `{"op":"hello","version":1,"dim":D,"embed_dim":E}` and the server answers
//! `{"ok":true,"version":1}` (optionally echoing `dim`/`embed_dim`) or
//! `{"ok":false,"error":...}`. Requests after that:
//!
//! | request                                   | reply                                                      |
//! |-------------------------------------------|------------------------------------------------------------|
//! | `{"op":"generate","id":..,"latent":[..]}` | `{"ok":true,"id":..,"metadata":{..},"image_uri":..}`       |
//! | `{"op":"embed","id":..}`                  | `{"ok":true,"embedding":[..]}`                             |
//! | `{"op":"center"}`                         | `{"ok":true,"latent":[..]}`                                |
//! | `{"op":"shutdown"}`                       | `{"ok":true}`, then the server exits                       |
//!
//! Unknown ops get `{"ok":false,"error":"unsupported"}`. A generate reply may
//! also carry `"quality":{method: score}`.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::backend::toy::{ToyBackend, ToyConfig};
use crate::backend::SampleMetadata;
use crate::error::{BackendError, Error, Result};
use crate::latent::LatentVector;

pub const PROTOCOL_VERSION: u32 = 1;
pub const MAX_FRAME_BYTES: u32 = 64 << 20;

pub fn write_frame<W: Write>(writer: &mut W, message: &Value) -> io::Result<()> {
    let payload = serde_json::to_vec(message).map_err(io::Error::other)?;
    let len = u32::try_from(payload.len())
        .ok()
        .filter(|&n| n <= MAX_FRAME_BYTES)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    writer.write_all(&len.to_le_bytes())?;
    writer.write_all(&payload)?;
    writer.flush()
}

/// Read one frame; `Ok(None)` on a clean end of stream before a length prefix.
pub fn read_frame<R: Read>(reader: &mut R) -> io::Result<Option<Value>> {
    let mut prefix = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match reader.read(&mut prefix[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "partial length prefix")),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let len = u32::from_le_bytes(prefix);
    if len > MAX_FRAME_BYTES {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame of {len} bytes exceeds limit"),
        ));
    }
    let mut payload = vec![0u8; len as usize];
    reader.read_exact(&mut payload)?;
    serde_json::from_slice(&payload)
        .map(Some)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// Fields of a successful generate reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateReply {
    pub id: String,
    pub metadata: SampleMetadata,
    #[serde(default)]
    pub image_uri: Option<String>,
    #[serde(default)]
    pub quality: BTreeMap<String, f64>,
}

/// Blocking request/reply client over any byte streams.
pub struct FrameClient<R, W> {
    reader: R,
    writer: W,
}

impl<R: Read, W: Write> FrameClient<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        FrameClient { reader, writer }
    }

    /// Send `request` and return the reply, mapping `"ok":false` to
    /// [`BackendError::Remote`].
    pub fn call(&mut self, request: &Value) -> Result<Value> {
        write_frame(&mut self.writer, request)
            .map_err(|e| BackendError::Died(format!("write failed: {e}")))?;
        let reply = read_frame(&mut self.reader)
            .map_err(|e| BackendError::Protocol(format!("read failed: {e}")))?
            .ok_or_else(|| BackendError::Died("backend closed its output".into()))?;
        match reply.get("ok").and_then(Value::as_bool) {
            Some(true) => Ok(reply),
            Some(false) => Err(BackendError::Remote(
                reply
                    .get("error")
                    .map(|e| e.as_str().map(str::to_string).unwrap_or_else(|| e.to_string()))
                    .unwrap_or_else(|| "unspecified error".into()),
            )
            .into()),
            None => Err(BackendError::Protocol(format!("reply without boolean \"ok\": {reply}")).into()),
        }
    }

    pub fn hello(&mut self, dim: usize, embed_dim: usize) -> Result<()> {
        let request = json!({"op": "hello", "version": PROTOCOL_VERSION, "dim": dim, "embed_dim": embed_dim});
        let reply = self.call(&request).map_err(|e| match e {
            Error::Backend(BackendError::Remote(msg)) => BackendError::Handshake(msg),
            Error::Backend(BackendError::Died(msg)) | Error::Backend(BackendError::Protocol(msg)) => {
                BackendError::Handshake(msg)
            }
            other => BackendError::Handshake(other.to_string()),
        })?;
        let version = reply.get("version").and_then(Value::as_u64);
        if version != Some(u64::from(PROTOCOL_VERSION)) {
            return Err(BackendError::Handshake(format!(
                "server speaks version {version:?}, client speaks {PROTOCOL_VERSION}"
            ))
            .into());
        }
        for (key, want) in [("dim", dim), ("embed_dim", embed_dim)] {
            if let Some(got) = reply.get(key).and_then(Value::as_u64) {
                if got != want as u64 {
                    return Err(BackendError::Handshake(format!(
                        "server {key} is {got}, client expects {want}"
                    ))
                    .into());
                }
            }
        }
        Ok(())
    }

    pub fn generate(&mut self, id: &str, latent: &[f64]) -> Result<GenerateReply> {
        let reply = self.call(&json!({"op": "generate", "id": id, "latent": latent}))?;
        let parsed: GenerateReply = serde_json::from_value(reply)
            .map_err(|e| BackendError::Protocol(format!("malformed generate reply: {e}")))?;
        if parsed.id != id {
            return Err(BackendError::Protocol(format!(
                "generate reply for {:?} answered request {id:?}",
                parsed.id
            ))
            .into());
        }
        Ok(parsed)
    }

    pub fn embed(&mut self, id: &str) -> Result<Vec<f64>> {
        let reply = self.call(&json!({"op": "embed", "id": id}))?;
        float_array(&reply, "embedding")
    }

    /// `Ok(None)` when the server does not support the optional center op.
    pub fn center(&mut self) -> Result<Option<Vec<f64>>> {
        match self.call(&json!({"op": "center"})) {
            Ok(reply) => Ok(Some(float_array(&reply, "latent")?)),
            Err(Error::Backend(BackendError::Remote(msg))) if msg == "unsupported" => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn shutdown(&mut self) -> Result<()> {
        self.call(&json!({"op": "shutdown"})).map(|_| ())
    }
}

fn float_array(reply: &Value, key: &str) -> Result<Vec<f64>> {
    let values = reply
        .get(key)
        .and_then(Value::as_array)
        .ok_or_else(|| BackendError::Protocol(format!("reply is missing array {key:?}")))?;
    values
        .iter()
        .map(|v| {
            v.as_f64()
                .ok_or_else(|| BackendError::Protocol(format!("non-numeric entry in {key:?}")).into())
        })
        .collect()
}

/// Server-side operations behind [`serve`].
pub trait RequestHandler {
    fn hello(&mut self, version: u64, dim: u64, embed_dim: u64) -> std::result::Result<Value, String>;
    fn generate(&mut self, id: &str, latent: Vec<f64>) -> std::result::Result<GenerateReply, String>;
    fn embed(&mut self, id: &str) -> std::result::Result<Vec<f64>, String>;
    fn center(&mut self) -> Option<Vec<f64>> {
        None
    }
}

fn fail(msg: impl Into<String>) -> Value {
    json!({"ok": false, "error": msg.into()})
}

fn dispatch<H: RequestHandler>(handler: &mut H, request: &Value) -> (Value, bool) {
    let op = request.get("op").and_then(Value::as_str).unwrap_or("");
    let reply = match op {
        "hello" => {
            let field = |k: &str| request.get(k).and_then(Value::as_u64).unwrap_or(0);
            match handler.hello(field("version"), field("dim"), field("embed_dim")) {
                Ok(v) => v,
                Err(e) => fail(e),
            }
        }
        "generate" => {
            let id = request.get("id").and_then(Value::as_str);
            let latent: Option<Vec<f64>> = request
                .get("latent")
                .and_then(Value::as_array)
                .and_then(|a| a.iter().map(Value::as_f64).collect());
            match (id, latent) {
                (Some(id), Some(latent)) => match handler.generate(id, latent) {
                    Ok(g) => {
                        let mut v = serde_json::to_value(g).expect("serializable reply");
                        v["ok"] = Value::Bool(true);
                        v
                    }
                    Err(e) => fail(e),
                },
                _ => fail("generate needs a string id and a numeric latent"),
            }
        }
        "embed" => match request.get("id").and_then(Value::as_str) {
            Some(id) => match handler.embed(id) {
                Ok(e) => json!({"ok": true, "embedding": e}),
                Err(e) => fail(e),
            },
            None => fail("embed needs a string id"),
        },
        "center" => match handler.center() {
            Some(c) => json!({"ok": true, "latent": c}),
            None => fail("unsupported"),
        },
        "shutdown" => return (json!({"ok": true}), true),
        _ => fail("unsupported"),
    };
    (reply, false)
}

/// Answer frames from `reader` until `shutdown` or end of input.
pub fn serve<R: Read, W: Write, H: RequestHandler>(
    reader: &mut R,
    writer: &mut W,
    handler: &mut H,
) -> io::Result<()> {
    while let Some(request) = read_frame(reader)? {
        let (reply, done) = dispatch(handler, &request);
        write_frame(writer, &reply)?;
        if done {
            break;
        }
    }
    Ok(())
}

/// Serves the toy model over the protocol; the reference server for
/// conformance tests.
pub struct ToyHandler {
    backend: ToyBackend,
}

impl ToyHandler {
    pub fn new(cfg: ToyConfig) -> Result<Self> {
        Ok(ToyHandler {
            backend: ToyBackend::new(cfg)?,
        })
    }
}

impl RequestHandler for ToyHandler {
    fn hello(&mut self, version: u64, dim: u64, embed_dim: u64) -> std::result::Result<Value, String> {
        let model = self.backend.model();
        if version != u64::from(PROTOCOL_VERSION) {
            return Err(format!("unsupported protocol version {version}"));
        }
        if dim != model.dim() as u64 || embed_dim != model.embed_dim() as u64 {
            return Err(format!(
                "toy bridge serves dim={} embed_dim={}, client asked dim={dim} embed_dim={embed_dim}",
                model.dim(),
                model.embed_dim()
            ));
        }
        Ok(json!({"ok": true, "version": PROTOCOL_VERSION, "dim": dim, "embed_dim": embed_dim}))
    }

    fn generate(&mut self, id: &str, latent: Vec<f64>) -> std::result::Result<GenerateReply, String> {
        let w = LatentVector::new(latent).map_err(|e| e.to_string())?;
        let r = self.backend.generate(id, &w).map_err(|e| e.to_string())?;
        Ok(GenerateReply {
            id: r.id,
            metadata: r.metadata,
            image_uri: r.image_uri,
            quality: r.quality,
        })
    }

    fn embed(&mut self, id: &str) -> std::result::Result<Vec<f64>, String> {
        let probe = crate::backend::SampleRef {
            id: id.to_string(),
            latent_hash: 0,
            metadata: SampleMetadata::default(),
            image_uri: None,
            quality: BTreeMap::new(),
        };
        self.backend
            .embed(&probe)
            .map(|e| e.values().to_vec())
            .map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn encode(messages: &[Value]) -> Vec<u8> {
        let mut buf = Vec::new();
        for m in messages {
            write_frame(&mut buf, m).unwrap();
        }
        buf
    }

    fn decode(bytes: &[u8]) -> Vec<Value> {
        let mut cursor = Cursor::new(bytes);
        let mut out = Vec::new();
        while let Some(v) = read_frame(&mut cursor).unwrap() {
            out.push(v);
        }
        out
    }

    fn toy() -> ToyHandler {
        ToyHandler::new(ToyConfig {
            seed: 3,
            dim: 4,
            embed_dim: 3,
        })
        .unwrap()
    }

    #[test]
    fn frame_prefix_is_payload_length() {
        let bytes = encode(&[json!({"op": "center"})]);
        let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
        assert_eq!(len, bytes.len() - 4);
        assert_eq!(&bytes[4..], br#"{"op":"center"}"#);
    }

    #[test]
    fn partial_frames_are_errors() {
        let bytes = encode(&[json!({"a": 1})]);
        assert!(read_frame(&mut Cursor::new(&bytes[..2])).is_err());
        assert!(read_frame(&mut Cursor::new(&bytes[..bytes.len() - 1])).is_err());
        assert!(read_frame(&mut Cursor::new(&[] as &[u8])).unwrap().is_none());
    }

    #[test]
    fn floats_survive_the_wire_exactly() {
        let values = [0.1f64, 1.0 / 3.0, -2.0e-300, 123456.789e10, f64::MIN_POSITIVE];
        let back = decode(&encode(&[json!({"v": values})]));
        let got: Vec<f64> = back[0]["v"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        for (a, b) in values.iter().zip(&got) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn toy_server_session() {
        let input = encode(&[
            json!({"op": "hello", "version": 1, "dim": 4, "embed_dim": 3}),
            json!({"op": "generate", "id": "a", "latent": [1.0, 0.5, -0.25, 2.0]}),
            json!({"op": "embed", "id": "a"}),
            json!({"op": "embed", "id": "missing"}),
            json!({"op": "center"}),
            json!({"op": "frobnicate"}),
            json!({"op": "shutdown"}),
            json!({"op": "embed", "id": "a"}),
        ]);
        let mut out = Vec::new();
        serve(&mut Cursor::new(input), &mut out, &mut toy()).unwrap();
        let replies = decode(&out);
        assert_eq!(replies.len(), 7, "nothing is answered after shutdown");
        assert_eq!(replies[0]["ok"], true);
        assert_eq!(replies[0]["version"], 1);
        assert_eq!(replies[1]["id"], "a");
        assert!(replies[1]["metadata"]["yaw_deg"].is_f64());
        assert_eq!(replies[2]["embedding"].as_array().unwrap().len(), 3);
        assert_eq!(replies[3]["ok"], false);
        assert_eq!(replies[4]["error"], "unsupported");
        assert_eq!(replies[5], json!({"ok": false, "error": "unsupported"}));
        assert_eq!(replies[6], json!({"ok": true}));
    }

    #[test]
    fn mismatched_hello_is_refused() {
        let input = encode(&[json!({"op": "hello", "version": 2, "dim": 4, "embed_dim": 3})]);
        let mut out = Vec::new();
        serve(&mut Cursor::new(input), &mut out, &mut toy()).unwrap();
        assert_eq!(decode(&out)[0]["ok"], false);
    }
}
