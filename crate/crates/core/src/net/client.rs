// SPDX-License-Identifier: Apache-2.0

use std::io;
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::sync::Mutex;
use std::time::Duration;

use super::wire::{
    decode_response, encode_request, read_frame, write_frame, ErrorClass, ModelQuery, ModelRequest,
    ModelResponse,
};
use crate::error::{Error, Result};
use crate::lm::DenoisingLm;
use crate::textcore::{log_softmax, softmax, Distribution, LogProbVector, TokenId, Vocabulary};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

/// Prefix marking a model designator as a remote endpoint.
pub const ENDPOINT_SCHEME: &str = "tcp://";

/// `tcp://host:port` → `host:port`; anything else is not an endpoint.
pub fn parse_endpoint(designator: &str) -> Option<&str> {
    designator.strip_prefix(ENDPOINT_SCHEME)
}

fn transport(e: io::Error) -> Error {
    Error::Transport(e.to_string())
}

fn resolve(endpoint: &str) -> Result<SocketAddr> {
    endpoint
        .to_socket_addrs()
        .map_err(transport)?
        .next()
        .ok_or_else(|| Error::Transport(format!("{endpoint} resolves to no address")))
}

fn open(addr: &SocketAddr, timeout: Duration) -> Result<TcpStream> {
    let stream = TcpStream::connect_timeout(addr, timeout).map_err(transport)?;
    stream.set_read_timeout(Some(timeout)).map_err(transport)?;
    stream.set_write_timeout(Some(timeout)).map_err(transport)?;
    stream.set_nodelay(true).map_err(transport)?;
    Ok(stream)
}

fn exchange(stream: &mut TcpStream, body: &[u8]) -> Result<Vec<u8>> {
    write_frame(stream, body).map_err(transport)?;
    match read_frame(stream) {
        Ok(Some(frame)) => Ok(frame),
        Ok(None) => Err(Error::Transport("connection closed by server".into())),
        Err(e) if e.kind() == io::ErrorKind::InvalidData => Err(Error::Protocol(e.to_string())),
        Err(e) => Err(transport(e)),
    }
}

fn into_result(frame: &[u8]) -> Result<ModelResponse> {
    match decode_response(frame)? {
        Ok(r) => Ok(r),
        Err(e) => Err(match e.class {
            ErrorClass::ChecksumMismatch | ErrorClass::Malformed => Error::Protocol(e.message),
            ErrorClass::Model => Error::Input(format!("remote model: {}", e.message)),
        }),
    }
}

/// One request on a fresh connection.
pub fn remote_query(endpoint: &str, request: &ModelRequest, timeout: Duration) -> Result<ModelResponse> {
    let mut stream = open(&resolve(endpoint)?, timeout)?;
    into_result(&exchange(&mut stream, &encode_request(request))?)
}

/// A model served elsewhere. Connections are pooled; each carries at most one
/// request at a time.
pub struct RemoteLm {
    addr: SocketAddr,
    vocab: Vocabulary,
    timeout: Duration,
    pool: Mutex<Vec<TcpStream>>,
}

impl RemoteLm {
    /// `vocab` must match the server's; every request carries its checksum.
    pub fn new(endpoint: &str, vocab: Vocabulary) -> Result<Self> {
        Self::with_timeout(endpoint, vocab, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(endpoint: &str, vocab: Vocabulary, timeout: Duration) -> Result<Self> {
        let endpoint = parse_endpoint(endpoint).unwrap_or(endpoint);
        Ok(RemoteLm {
            addr: resolve(endpoint)?,
            vocab,
            timeout,
            pool: Mutex::new(Vec::new()),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn query(&self, query: ModelQuery) -> Result<ModelResponse> {
        let body = encode_request(&ModelRequest {
            query,
            vocab_checksum: self.vocab.checksum().to_owned(),
        });
        let pooled = self.pool.lock().expect("pool lock").pop();
        let (stream, frame) = match pooled {
            Some(mut s) => match exchange(&mut s, &body) {
                Ok(frame) => (s, frame),
                // a pooled connection may have gone stale; retry once fresh
                Err(Error::Transport(_)) => {
                    let mut s = open(&self.addr, self.timeout)?;
                    let frame = exchange(&mut s, &body)?;
                    (s, frame)
                }
                Err(e) => return Err(e),
            },
            None => {
                let mut s = open(&self.addr, self.timeout)?;
                let frame = exchange(&mut s, &body)?;
                (s, frame)
            }
        };
        let result = into_result(&frame);
        if !matches!(result, Err(Error::Protocol(_))) {
            self.pool.lock().expect("pool lock").push(stream);
        }
        let response = result?;
        if response.scores.len() != self.vocab.len() {
            return Err(Error::Protocol(format!(
                "expected {} scores, got {}",
                self.vocab.len(),
                response.scores.len()
            )));
        }
        if response.scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Protocol("non-finite score in response".into()));
        }
        Ok(response)
    }
}

impl DenoisingLm for RemoteLm {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn masked_position_distribution(&self, seq: &[TokenId], position: usize) -> Result<Distribution> {
        if position >= seq.len() {
            return Err(Error::Index {
                position,
                len: seq.len(),
            });
        }
        let r = self.query(ModelQuery::Infill {
            condition: seq.to_vec(),
            position,
        })?;
        if r.normalized {
            // renormalize away the wire rounding
            Distribution::from_weights(r.scores).map_err(|e| Error::Protocol(e.to_string()))
        } else {
            softmax(&r.scores, 1.0)
        }
    }

    fn next_token_logprobs(&self, condition: &[TokenId], prefix: &[TokenId]) -> Result<LogProbVector> {
        let r = self.query(ModelQuery::NextToken {
            condition: condition.to_vec(),
            prefix: prefix.to_vec(),
        })?;
        log_softmax(&r.scores)
    }
}
