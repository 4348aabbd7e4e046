// SPDX-License-Identifier: Apache-2.0

use std::io::{self, Read};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::wire::{
    decode_request, encode_response, write_frame, ErrorClass, ModelQuery, ModelResponse, RemoteError,
    MAX_FRAME_LEN,
};
use crate::error::Result;
use crate::lm::DenoisingLm;

const POLL: Duration = Duration::from_millis(20);

/// A connection that stops making progress mid-frame after shutdown is
/// abandoned after this long.
const DRAIN_GRACE: Duration = Duration::from_secs(2);

/// A running model server. Dropping it shuts the server down.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// `tcp://host:port` designator for this server.
    pub fn endpoint(&self) -> String {
        format!("{}{}", super::ENDPOINT_SCHEME, self.addr)
    }

    /// Stop accepting, let in-flight requests finish, and join every thread.
    pub fn shutdown(mut self) {
        self.stop();
    }

    /// Serve in the foreground; returns only if the accept thread exits.
    pub fn wait(mut self) {
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }

    fn stop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Serve `model` on `bind`. Each connection gets its own thread.
pub fn serve_model(model: Arc<dyn DenoisingLm>, bind: impl ToSocketAddrs) -> Result<ServerHandle> {
    let listener = TcpListener::bind(bind)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&shutdown);
    let acceptor = thread::Builder::new()
        .name("marco-accept".into())
        .spawn(move || accept_loop(listener, model, flag))?;
    Ok(ServerHandle {
        addr,
        shutdown,
        acceptor: Some(acceptor),
    })
}

fn accept_loop(listener: TcpListener, model: Arc<dyn DenoisingLm>, shutdown: Arc<AtomicBool>) {
    let mut workers: Vec<JoinHandle<()>> = Vec::new();
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let model = Arc::clone(&model);
                let flag = Arc::clone(&shutdown);
                if let Ok(h) = thread::Builder::new()
                    .name("marco-conn".into())
                    .spawn(move || serve_connection(stream, model, flag))
                {
                    workers.push(h);
                }
                workers.retain(|h| !h.is_finished());
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(_) => thread::sleep(POLL),
        }
    }
    drop(listener);
    for h in workers {
        let _ = h.join();
    }
}

enum Frame {
    Body(Vec<u8>),
    Closed,
}

/// Read `buf.len()` bytes, polling the shutdown flag while idle. Returns
/// `Ok(false)` if shutdown interrupted an idle connection (nothing read yet).
fn fill(stream: &mut TcpStream, buf: &mut [u8], idle: bool, shutdown: &AtomicBool) -> io::Result<bool> {
    let mut got = 0;
    let mut stalled_since: Option<Instant> = None;
    while got < buf.len() {
        match stream.read(&mut buf[got..]) {
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => {
                got += n;
                stalled_since = None;
            }
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                if shutdown.load(Ordering::SeqCst) {
                    if idle && got == 0 {
                        return Ok(false);
                    }
                    let since = *stalled_since.get_or_insert_with(Instant::now);
                    if since.elapsed() > DRAIN_GRACE {
                        return Err(io::ErrorKind::TimedOut.into());
                    }
                }
            }
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(true)
}

fn next_frame(stream: &mut TcpStream, shutdown: &AtomicBool) -> io::Result<Frame> {
    let mut header = [0u8; 4];
    match fill(stream, &mut header, true, shutdown) {
        Ok(true) => {}
        Ok(false) => return Ok(Frame::Closed),
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(Frame::Closed),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(header);
    if len > MAX_FRAME_LEN {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut body = vec![0u8; len as usize];
    fill(stream, &mut body, false, shutdown)?;
    Ok(Frame::Body(body))
}

fn serve_connection(mut stream: TcpStream, model: Arc<dyn DenoisingLm>, shutdown: Arc<AtomicBool>) {
    if stream.set_nonblocking(false).is_err() || stream.set_read_timeout(Some(POLL)).is_err() {
        return;
    }
    let _ = stream.set_nodelay(true);
    while let Ok(Frame::Body(body)) = next_frame(&mut stream, &shutdown) {
        let reply = answer(model.as_ref(), &body);
        if write_frame(&mut stream, &encode_response(&reply)).is_err() {
            break;
        }
    }
}

fn answer(model: &dyn DenoisingLm, body: &[u8]) -> std::result::Result<ModelResponse, RemoteError> {
    let request = decode_request(body).map_err(|e| RemoteError {
        class: ErrorClass::Malformed,
        message: e.to_string(),
    })?;
    let checksum = model.vocabulary().checksum();
    if request.vocab_checksum != checksum {
        return Err(RemoteError {
            class: ErrorClass::ChecksumMismatch,
            message: format!(
                "request vocabulary {:?} does not match server vocabulary {checksum:?}",
                request.vocab_checksum
            ),
        });
    }
    let model_err = |e: crate::Error| RemoteError {
        class: ErrorClass::Model,
        message: e.to_string(),
    };
    match request.query {
        ModelQuery::Infill { condition, position } => {
            let d = model.masked_position_distribution(&condition, position).map_err(model_err)?;
            Ok(ModelResponse {
                scores: d.probs().to_vec(),
                normalized: true,
            })
        }
        ModelQuery::NextToken { condition, prefix } => {
            let l = model.next_token_logprobs(&condition, &prefix).map_err(model_err)?;
            Ok(ModelResponse {
                scores: l.values().to_vec(),
                normalized: true,
            })
        }
    }
}
