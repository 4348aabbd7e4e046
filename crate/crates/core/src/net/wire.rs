// SPDX-License-Identifier: Apache-2.0

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textcore::TokenId;

pub const PROTOCOL_VERSION: &str = "marco/1";

/// Frames larger than this are rejected before allocation.
pub const MAX_FRAME_LEN: u32 = 16 * 1024 * 1024;

/// The two model capabilities a request can ask for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelQuery {
    Infill { condition: Vec<TokenId>, position: usize },
    NextToken { condition: Vec<TokenId>, prefix: Vec<TokenId> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelRequest {
    pub query: ModelQuery,
    pub vocab_checksum: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelResponse {
    pub scores: Vec<f64>,
    /// Whether `scores` are already probabilities (infill) or
    /// log-probabilities (next token).
    pub normalized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    ChecksumMismatch,
    Malformed,
    Model,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteError {
    pub class: ErrorClass,
    pub message: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RequestBody {
    version: String,
    kind: String,
    condition: Vec<TokenId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    position: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prefix: Option<Vec<TokenId>>,
    vocab_checksum: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResponseBody {
    version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normalized: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<RemoteError>,
}

fn protocol(msg: impl Into<String>) -> Error {
    Error::Protocol(msg.into())
}

fn check_version(v: &str) -> Result<()> {
    if v == PROTOCOL_VERSION {
        Ok(())
    } else {
        Err(protocol(format!("unsupported protocol version {v:?}")))
    }
}

/// Round to 9 significant decimal digits, the wire precision for scores.
fn wire_round(x: f64) -> f64 {
    format!("{x:.8e}").parse().expect("formatted float parses")
}

pub fn encode_request(req: &ModelRequest) -> Vec<u8> {
    let (kind, condition, position, prefix) = match &req.query {
        ModelQuery::Infill { condition, position } => ("infill", condition.clone(), Some(*position), None),
        ModelQuery::NextToken { condition, prefix } => ("next_token", condition.clone(), None, Some(prefix.clone())),
    };
    let body = RequestBody {
        version: PROTOCOL_VERSION.into(),
        kind: kind.into(),
        condition,
        position,
        prefix,
        vocab_checksum: req.vocab_checksum.clone(),
    };
    serde_json::to_vec(&body).expect("request serializes")
}

pub fn decode_request(bytes: &[u8]) -> Result<ModelRequest> {
    let body: RequestBody =
        serde_json::from_slice(bytes).map_err(|e| protocol(format!("malformed request: {e}")))?;
    check_version(&body.version)?;
    let query = match (body.kind.as_str(), body.position, body.prefix) {
        ("infill", Some(position), None) => ModelQuery::Infill {
            condition: body.condition,
            position,
        },
        ("next_token", None, Some(prefix)) => ModelQuery::NextToken {
            condition: body.condition,
            prefix,
        },
        ("infill", _, _) => return Err(protocol("infill requests need `position` and no `prefix`")),
        ("next_token", _, _) => return Err(protocol("next_token requests need `prefix` and no `position`")),
        (other, _, _) => return Err(protocol(format!("unknown request kind {other:?}"))),
    };
    Ok(ModelRequest {
        query,
        vocab_checksum: body.vocab_checksum,
    })
}

/// Encode a reply. Scores are rounded to 9 significant digits.
pub fn encode_response(reply: &std::result::Result<ModelResponse, RemoteError>) -> Vec<u8> {
    let body = match reply {
        Ok(r) => ResponseBody {
            version: PROTOCOL_VERSION.into(),
            scores: Some(r.scores.iter().map(|&x| wire_round(x)).collect()),
            normalized: Some(r.normalized),
            error: None,
        },
        Err(e) => ResponseBody {
            version: PROTOCOL_VERSION.into(),
            scores: None,
            normalized: None,
            error: Some(e.clone()),
        },
    };
    serde_json::to_vec(&body).expect("response serializes")
}

pub fn decode_response(bytes: &[u8]) -> Result<std::result::Result<ModelResponse, RemoteError>> {
    let body: ResponseBody =
        serde_json::from_slice(bytes).map_err(|e| protocol(format!("malformed response: {e}")))?;
    check_version(&body.version)?;
    match (body.scores, body.normalized, body.error) {
        (Some(scores), Some(normalized), None) => Ok(Ok(ModelResponse { scores, normalized })),
        (None, None, Some(err)) => Ok(Err(err)),
        _ => Err(protocol("response must hold either scores and normalized, or error")),
    }
}

/// Write a 4-byte big-endian length followed by `body`.
pub fn write_frame(w: &mut impl Write, body: &[u8]) -> io::Result<()> {
    let len = u32::try_from(body.len())
        .ok()
        .filter(|&l| l <= MAX_FRAME_LEN)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(body)?;
    w.flush()
}

/// Read one frame. `Ok(None)` on a clean end of stream before the header.
pub fn read_frame(r: &mut impl Read) -> io::Result<Option<Vec<u8>>> {
    let mut header = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let len = u32::from_be_bytes(header);
    if len > MAX_FRAME_LEN {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {len} bytes exceeds limit")));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn infill() -> ModelRequest {
        ModelRequest {
            query: ModelQuery::Infill {
                condition: vec![4, 0, 5],
                position: 1,
            },
            vocab_checksum: "abc".into(),
        }
    }

    #[test]
    fn request_body_layout() {
        let json: serde_json::Value = serde_json::from_slice(&encode_request(&infill())).unwrap();
        assert_eq!(json["version"], "marco/1");
        assert_eq!(json["kind"], "infill");
        assert_eq!(json["position"], 1);
        assert!(json.get("prefix").is_none());
    }

    #[test]
    fn kind_specific_fields_are_enforced() {
        let bad = br#"{"version":"marco/1","kind":"infill","condition":[4],"prefix":[],"vocab_checksum":"x"}"#;
        assert!(matches!(decode_request(bad), Err(Error::Protocol(_))));
        let bad = br#"{"version":"marco/1","kind":"next_token","condition":[4],"position":0,"prefix":[],"vocab_checksum":"x"}"#;
        assert!(matches!(decode_request(bad), Err(Error::Protocol(_))));
        let bad = br#"{"version":"marco/2","kind":"infill","condition":[4],"position":0,"vocab_checksum":"x"}"#;
        assert!(matches!(decode_request(bad), Err(Error::Protocol(_))));
        assert!(matches!(decode_request(b"not json"), Err(Error::Protocol(_))));
    }

    #[test]
    fn scores_use_nine_significant_digits() {
        let reply = Ok(ModelResponse {
            scores: vec![1.0 / 3.0, -23.025850929940457, 0.0],
            normalized: true,
        });
        let text = String::from_utf8(encode_response(&reply)).unwrap();
        assert!(text.contains("0.333333333,"), "{text}");
        assert!(text.contains("-23.0258509"), "{text}");
        let back = decode_response(text.as_bytes()).unwrap().unwrap();
        assert!((back.scores[0] - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn error_replies_round_trip() {
        let err = RemoteError {
            class: ErrorClass::ChecksumMismatch,
            message: "nope".into(),
        };
        let back = decode_response(&encode_response(&Err(err.clone()))).unwrap();
        assert_eq!(back, Err(err));
        assert!(decode_response(br#"{"version":"marco/1"}"#).is_err());
    }

    #[test]
    fn framing() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"hello").unwrap();
        assert_eq!(&buf[..4], &[0, 0, 0, 5]);
        let mut r = &buf[..];
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"hello");
        assert!(read_frame(&mut r).unwrap().is_none());
        let mut truncated = &buf[..6];
        assert!(read_frame(&mut truncated).is_err());
        let huge = (MAX_FRAME_LEN + 1).to_be_bytes();
        assert!(read_frame(&mut &huge[..]).is_err());
    }

    fn request() -> impl Strategy<Value = ModelRequest> {
        let ids = prop::collection::vec(0u32..1000, 0..20);
        prop_oneof![
            (ids.clone(), 0usize..20).prop_map(|(condition, position)| ModelQuery::Infill { condition, position }),
            (ids.clone(), ids).prop_map(|(condition, prefix)| ModelQuery::NextToken { condition, prefix }),
        ]
        .prop_flat_map(|query| {
            "[0-9a-f]{0,64}".prop_map(move |vocab_checksum| ModelRequest {
                query: query.clone(),
                vocab_checksum,
            })
        })
    }

    proptest! {
        #[test]
        fn request_round_trip(req in request()) {
            prop_assert_eq!(decode_request(&encode_request(&req)).unwrap(), req);
        }

        #[test]
        fn score_round_trip_within_budget(scores in prop::collection::vec(-50.0f64..1.0, 1..40)) {
            let reply = Ok(ModelResponse { scores: scores.clone(), normalized: false });
            let back = decode_response(&encode_response(&reply)).unwrap().unwrap();
            for (a, b) in scores.iter().zip(&back.scores) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
        }
    }
}
