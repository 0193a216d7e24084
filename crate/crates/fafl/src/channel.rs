//! Authenticated encryption of every client/server message.
//!
//! Frames are AES-256-GCM sealed with a bit-exact layout:
//!
//! ```text
//! magic "FAFL" | version | msg_type | round u32le | sender u32le |
//! nonce [12]   | payload_len u32le  | ciphertext  | tag [16]
//! ```
//!
//! The 30 header bytes (magic through payload_len) are bound as AAD, so a
//! frame cannot be spliced onto another round or sender. Nonces are
//! `sender_le(4) || counter_le(8)` with a strictly increasing per-channel
//! counter — uniqueness holds by construction and is scanned in tests.

use std::time::{Duration, Instant};

use aes_gcm::aead::{Aead, Payload};
use aes_gcm::{Aes256Gcm, Key, KeyInit, Nonce};
use hkdf::Hkdf;
use serde::Serialize;
use sha2::Sha256;

use crate::error::{FaflError, Result};
use crate::model::{Arch, ParamVector};

pub const MAGIC: [u8; 4] = *b"FAFL";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 30;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
/// Bytes a sealed frame adds on top of its payload.
pub const FRAME_OVERHEAD: usize = HEADER_LEN + TAG_LEN;
/// Sender id reserved for the server.
pub const SERVER_SENDER: u32 = 0xFFFF_FFFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsgType {
    GlobalBroadcast = 0,
    ClientUpdate = 1,
    Ack = 2,
}

impl MsgType {
    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(MsgType::GlobalBroadcast),
            1 => Ok(MsgType::ClientUpdate),
            2 => Ok(MsgType::Ack),
            other => Err(FaflError::Frame(format!("unknown msg_type {other}"))),
        }
    }
}

/// A sealed message. `ciphertext.len()` equals the plaintext length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedFrame {
    pub msg_type: MsgType,
    pub round: u32,
    pub sender: u32,
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
    pub tag: [u8; TAG_LEN],
}

impl EncryptedFrame {
    fn header_bytes(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[0..4].copy_from_slice(&MAGIC);
        h[4] = VERSION;
        h[5] = self.msg_type as u8;
        h[6..10].copy_from_slice(&self.round.to_le_bytes());
        h[10..14].copy_from_slice(&self.sender.to_le_bytes());
        h[14..26].copy_from_slice(&self.nonce);
        h[26..30].copy_from_slice(&(self.ciphertext.len() as u32).to_le_bytes());
        h
    }

    /// Total size on the wire: `46 + payload_len`.
    pub fn wire_len(&self) -> usize {
        FRAME_OVERHEAD + self.ciphertext.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.wire_len());
        buf.extend_from_slice(&self.header_bytes());
        buf.extend_from_slice(&self.ciphertext);
        buf.extend_from_slice(&self.tag);
        buf
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        if buf.len() < FRAME_OVERHEAD {
            return Err(FaflError::Frame(format!("frame too short: {} bytes", buf.len())));
        }
        if buf[0..4] != MAGIC {
            return Err(FaflError::Frame("bad magic".into()));
        }
        if buf[4] != VERSION {
            return Err(FaflError::Frame(format!("unsupported version {}", buf[4])));
        }
        let msg_type = MsgType::from_byte(buf[5])?;
        let round = u32::from_le_bytes(buf[6..10].try_into().unwrap());
        let sender = u32::from_le_bytes(buf[10..14].try_into().unwrap());
        let mut nonce = [0u8; NONCE_LEN];
        nonce.copy_from_slice(&buf[14..26]);
        let payload_len = u32::from_le_bytes(buf[26..30].try_into().unwrap()) as usize;
        if buf.len() != FRAME_OVERHEAD + payload_len {
            return Err(FaflError::Frame(format!(
                "length mismatch: header says {payload_len} payload bytes, frame is {}",
                buf.len()
            )));
        }
        let ciphertext = buf[HEADER_LEN..HEADER_LEN + payload_len].to_vec();
        let mut tag = [0u8; TAG_LEN];
        tag.copy_from_slice(&buf[HEADER_LEN + payload_len..]);
        Ok(Self { msg_type, round, sender, nonce, ciphertext, tag })
    }
}

/// Per-client AES-256 key with a monotonically increasing seal counter.
#[derive(Debug, Clone)]
pub struct ChannelKey {
    key: [u8; 32],
    pub peer: u32,
    pub counter: u64,
}

impl ChannelKey {
    #[cfg(test)]
    fn with_counter(key: [u8; 32], peer: u32, counter: u64) -> Self {
        Self { key, peer, counter }
    }

    pub fn key_bytes(&self) -> &[u8; 32] {
        &self.key
    }
}

/// HKDF-SHA256 extract-and-expand of the master secret, one key per client.
pub fn derive_channel_key(master_secret: &[u8; 32], client_id: u32) -> ChannelKey {
    let hk = Hkdf::<Sha256>::new(Some(b"FAFL-channel-v1"), master_secret);
    let mut info = *b"client-key\0\0\0\0";
    info[10..14].copy_from_slice(&client_id.to_le_bytes());
    let mut key = [0u8; 32];
    hk.expand(&info, &mut key).expect("32 bytes is a valid hkdf output length");
    ChannelKey { key, peer: client_id, counter: 0 }
}

/// Parse a 64-hex-char master secret.
pub fn parse_master_secret(hex_str: &str) -> Result<[u8; 32]> {
    let bytes = hex::decode(hex_str.trim())
        .map_err(|e| FaflError::Config(format!("master secret is not valid hex: {e}")))?;
    let arr: [u8; 32] = bytes
        .try_into()
        .map_err(|_| FaflError::Config("master secret must be 64 hex chars (32 bytes)".into()))?;
    Ok(arr)
}

/// Raw AES-256-GCM seal. This is the primitive `seal` routes through; tests
/// inject known-answer vectors here.
pub fn gcm_encrypt_raw(
    key: &[u8; 32],
    nonce: &[u8; NONCE_LEN],
    aad: &[u8],
    plaintext: &[u8],
) -> (Vec<u8>, [u8; TAG_LEN]) {
    let cipher = Aes256Gcm::new(&Key::<Aes256Gcm>::from(*key));
    let out = cipher
        .encrypt(&Nonce::from(*nonce), Payload { msg: plaintext, aad })
        .expect("gcm encryption is infallible for in-memory buffers");
    let split = out.len() - TAG_LEN;
    let mut tag = [0u8; TAG_LEN];
    tag.copy_from_slice(&out[split..]);
    (out[..split].to_vec(), tag)
}

/// Raw AES-256-GCM open; fails with an authentication error on any mismatch.
pub fn gcm_decrypt_raw(
    key: &[u8; 32],
    nonce: &[u8; NONCE_LEN],
    aad: &[u8],
    ciphertext: &[u8],
    tag: &[u8; TAG_LEN],
) -> Result<Vec<u8>> {
    let cipher = Aes256Gcm::new(&Key::<Aes256Gcm>::from(*key));
    let mut buf = Vec::with_capacity(ciphertext.len() + TAG_LEN);
    buf.extend_from_slice(ciphertext);
    buf.extend_from_slice(tag);
    cipher
        .decrypt(&Nonce::from(*nonce), Payload { msg: &buf, aad })
        .map_err(|_| FaflError::Auth)
}

/// Seal `plaintext` into a frame. The nonce is `sender || counter` and the
/// 30 header bytes are authenticated as AAD.
pub fn seal(
    key: &mut ChannelKey,
    msg_type: MsgType,
    round: u32,
    sender: u32,
    plaintext: &[u8],
) -> Result<EncryptedFrame> {
    if plaintext.is_empty() {
        return Err(FaflError::Channel("refusing to seal an empty payload".into()));
    }
    if key.counter == u64::MAX {
        return Err(FaflError::Channel("channel counter exhausted".into()));
    }
    let mut nonce = [0u8; NONCE_LEN];
    nonce[0..4].copy_from_slice(&sender.to_le_bytes());
    nonce[4..12].copy_from_slice(&key.counter.to_le_bytes());

    let mut frame = EncryptedFrame {
        msg_type,
        round,
        sender,
        nonce,
        ciphertext: Vec::new(),
        tag: [0u8; TAG_LEN],
    };
    // AAD must describe the final payload length; ciphertext length equals
    // plaintext length under GCM.
    frame.ciphertext = vec![0; plaintext.len()];
    let header = frame.header_bytes();
    let (ciphertext, tag) = gcm_encrypt_raw(&key.key, &nonce, &header, plaintext);
    frame.ciphertext = ciphertext;
    frame.tag = tag;
    key.counter += 1;
    Ok(frame)
}

/// Verify and decrypt a frame. No plaintext is released unless the tag
/// verifies over the header AAD and ciphertext.
pub fn open(key: &ChannelKey, frame: &EncryptedFrame) -> Result<Vec<u8>> {
    let header = frame.header_bytes();
    gcm_decrypt_raw(&key.key, &frame.nonce, &header, &frame.ciphertext, &frame.tag)
}

/// Cumulative channel accounting. Byte counters are deterministic; the
/// seal/open timers are measured wall-clock and reported separately.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ChannelMetrics {
    pub bytes_sealed: u64,
    pub bytes_plaintext: u64,
    pub frames_sealed: u64,
    pub frames_opened: u64,
    pub seal_time_ns: u64,
    pub open_time_ns: u64,
}

impl ChannelMetrics {
    pub fn record_seal(&mut self, plaintext_len: usize, wire_len: usize, elapsed: Duration) {
        self.bytes_plaintext += plaintext_len as u64;
        self.bytes_sealed += wire_len as u64;
        self.frames_sealed += 1;
        self.seal_time_ns += elapsed.as_nanos() as u64;
    }

    pub fn record_open(&mut self, elapsed: Duration) {
        self.frames_opened += 1;
        self.open_time_ns += elapsed.as_nanos() as u64;
    }

    /// Sealed-to-plaintext byte ratio; 1.0 before any traffic.
    pub fn overhead_ratio(&self) -> f64 {
        if self.bytes_plaintext == 0 {
            1.0
        } else {
            self.bytes_sealed as f64 / self.bytes_plaintext as f64
        }
    }

    pub fn crypto_time_ms(&self) -> f64 {
        (self.seal_time_ns + self.open_time_ns) as f64 / 1e6
    }

    pub fn merge(&mut self, other: &ChannelMetrics) {
        self.bytes_sealed += other.bytes_sealed;
        self.bytes_plaintext += other.bytes_plaintext;
        self.frames_sealed += other.frames_sealed;
        self.frames_opened += other.frames_opened;
        self.seal_time_ns += other.seal_time_ns;
        self.open_time_ns += other.open_time_ns;
    }
}

/// Instrumented seal: records bytes and wall-clock time into `metrics`.
pub fn seal_timed(
    key: &mut ChannelKey,
    msg_type: MsgType,
    round: u32,
    sender: u32,
    plaintext: &[u8],
    metrics: &mut ChannelMetrics,
) -> Result<EncryptedFrame> {
    let start = Instant::now();
    let frame = seal(key, msg_type, round, sender, plaintext)?;
    metrics.record_seal(plaintext.len(), frame.wire_len(), start.elapsed());
    Ok(frame)
}

/// Instrumented open.
pub fn open_timed(
    key: &ChannelKey,
    frame: &EncryptedFrame,
    metrics: &mut ChannelMetrics,
) -> Result<Vec<u8>> {
    let start = Instant::now();
    let plaintext = open(key, frame)?;
    metrics.record_open(start.elapsed());
    Ok(plaintext)
}

/// Fixed-size codec header: count plus the three architecture dims.
const CODEC_HEADER: usize = 16;

/// `count u32le | input u32le | hidden u32le | classes u32le | count x f64le`.
pub fn serialize_params(w: &ParamVector) -> Result<Vec<u8>> {
    if !w.all_finite() {
        return Err(FaflError::Codec("parameters must be finite".into()));
    }
    if w.values.len() != w.arch.param_count() {
        return Err(FaflError::Codec("parameter count does not match architecture".into()));
    }
    let mut buf = Vec::with_capacity(CODEC_HEADER + 8 * w.values.len());
    buf.extend_from_slice(&(w.values.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(w.arch.input_dim as u32).to_le_bytes());
    buf.extend_from_slice(&(w.arch.hidden_dim as u32).to_le_bytes());
    buf.extend_from_slice(&(w.arch.class_count as u32).to_le_bytes());
    for v in &w.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

pub fn deserialize_params(buf: &[u8]) -> Result<ParamVector> {
    if buf.len() < CODEC_HEADER {
        return Err(FaflError::Codec("buffer shorter than codec header".into()));
    }
    let count = u32::from_le_bytes(buf[0..4].try_into().unwrap()) as usize;
    let arch = Arch {
        input_dim: u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize,
        hidden_dim: u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize,
        class_count: u32::from_le_bytes(buf[12..16].try_into().unwrap()) as usize,
    };
    arch.validate().map_err(|e| FaflError::Codec(format!("invalid architecture: {e}")))?;
    if count != arch.param_count() {
        return Err(FaflError::Codec(format!(
            "count {count} does not match architecture parameter count {}",
            arch.param_count()
        )));
    }
    if buf.len() != CODEC_HEADER + 8 * count {
        return Err(FaflError::Codec(format!(
            "truncated buffer: expected {} bytes, got {}",
            CODEC_HEADER + 8 * count,
            buf.len()
        )));
    }
    let mut values = Vec::with_capacity(count);
    for i in 0..count {
        let off = CODEC_HEADER + 8 * i;
        let v = f64::from_le_bytes(buf[off..off + 8].try_into().unwrap());
        if !v.is_finite() {
            return Err(FaflError::Codec(format!("non-finite parameter at index {i}")));
        }
        values.push(v);
    }
    Ok(ParamVector { arch, values })
}
