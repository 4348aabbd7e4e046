// SPDX-License-Identifier: Apache-2.0

//! Out-of-process models: a length-prefixed JSON protocol, a client that
//! implements [`DenoisingLm`](crate::lm::DenoisingLm), and a reference server.
//!
//! See `docs/PROTOCOL.md` for the byte-level framing.

mod client;
mod server;
mod wire;

pub use client::{parse_endpoint, remote_query, RemoteLm, DEFAULT_TIMEOUT, ENDPOINT_SCHEME};
pub use server::{serve_model, ServerHandle};
pub use wire::{
    decode_request, decode_response, encode_request, encode_response, read_frame, write_frame,
    ErrorClass, ModelQuery, ModelRequest, ModelResponse, RemoteError, MAX_FRAME_LEN, PROTOCOL_VERSION,
};
