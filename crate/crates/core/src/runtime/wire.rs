//! Length-prefixed binary framing between camera nodes and the server.
//!
//! Every frame is `"MVSP" | version: u8 | type: u8 | len: u32 LE | payload`.
//! Numbers inside payloads are little-endian; floats travel as raw IEEE bits
//! so values survive the trip exactly.

use std::io::{Read, Write};

use thiserror::Error;

use crate::detector::Detection;
use crate::geometry::{BBox, BlockMask, GroundPoint};

pub const MAGIC: [u8; 4] = *b"MVSP";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;
/// Largest payload a peer will accept.
pub const MAX_PAYLOAD: usize = 64 << 20;

const TYPE_HELLO: u8 = 1;
const TYPE_BLOCK_UPDATE: u8 = 2;
const TYPE_FEEDBACK: u8 = 3;
const TYPE_END: u8 = 4;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("truncated frame: needed {needed} bytes, had {available}")]
    TruncatedFrame { needed: usize, available: usize },
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("protocol version {got}, expected {VERSION}")]
    VersionMismatch { got: u8 },
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// First message on a connection.
#[derive(Debug, Clone, PartialEq)]
pub struct Hello {
    pub camera_id: u32,
    /// Hex digest of the sender's run configuration.
    pub config_digest: String,
}

/// A camera's output for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockUpdate {
    pub frame_id: u64,
    pub camera_id: u32,
    pub actions: BlockMask,
    pub block_bytes: u32,
    /// Raw pixels of the processed blocks in row-major block order; either
    /// empty (not materialized) or `popcount * block_bytes` long.
    pub payload: Vec<u8>,
    pub detections: Vec<Detection>,
}

impl BlockUpdate {
    pub fn payload_materialized(&self) -> bool {
        !self.payload.is_empty() || self.actions.popcount() == 0 || self.block_bytes == 0
    }
}

/// The server's answer to one frame, addressed to one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerFeedback {
    pub frame_id: u64,
    pub camera_id: u32,
    /// Boxes of the detections assigned to this camera.
    pub topk: Vec<BBox>,
    pub mask: BlockMask,
    pub fused: Vec<GroundPoint>,
    /// Processing target for this camera.
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndOfSequence {
    pub camera_id: u32,
    pub frames: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello(Hello),
    BlockUpdate(BlockUpdate),
    ServerFeedback(ServerFeedback),
    EndOfSequence(EndOfSequence),
}

impl Message {
    fn type_byte(&self) -> u8 {
        match self {
            Message::Hello(_) => TYPE_HELLO,
            Message::BlockUpdate(_) => TYPE_BLOCK_UPDATE,
            Message::ServerFeedback(_) => TYPE_FEEDBACK,
            Message::EndOfSequence(_) => TYPE_END,
        }
    }
}

const DETECTION_LEN: usize = 4 * 8 + 2 * 8 + 8 + 1;

fn mask_len(mask: &BlockMask) -> usize {
    4 + mask.len().div_ceil(8)
}

/// Encoded size of a block update without its pixel payload.
pub fn update_overhead(u: &BlockUpdate) -> usize {
    HEADER_LEN + 8 + 4 + mask_len(&u.actions) + 4 + 4 + 4 + u.detections.len() * DETECTION_LEN
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("length fits in u32"));
    }
    fn bbox(&mut self, b: &BBox) {
        for v in [b.x, b.y, b.w, b.h] {
            self.f64(v);
        }
    }
    fn mask(&mut self, m: &BlockMask) {
        self.u16(u16::try_from(m.rows()).expect("rows fit in u16"));
        self.u16(u16::try_from(m.cols()).expect("cols fit in u16"));
        let mut packed = vec![0u8; m.len().div_ceil(8)];
        for (i, &b) in m.bits().iter().enumerate() {
            if b {
                packed[i / 8] |= 1 << (i % 8);
            }
        }
        self.0.extend_from_slice(&packed);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                WireError::Malformed(format!(
                    "field of {n} bytes overruns the payload at offset {}",
                    self.pos
                ))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }
    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_bits(self.u64()?))
    }
    /// A count whose elements take at least `min_size` bytes each.
    fn count(&mut self, min_size: usize) -> Result<usize, WireError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_size) > self.buf.len() - self.pos {
            return Err(WireError::Malformed(format!(
                "count {n} exceeds the remaining payload"
            )));
        }
        Ok(n)
    }
    fn bbox(&mut self) -> Result<BBox, WireError> {
        Ok(BBox::new(
            self.f64()?,
            self.f64()?,
            self.f64()?,
            self.f64()?,
        ))
    }
    fn mask(&mut self) -> Result<BlockMask, WireError> {
        let rows = self.u16()? as usize;
        let cols = self.u16()? as usize;
        let n = rows * cols;
        let packed = self.take(n.div_ceil(8))?;
        let bits = (0..n)
            .map(|i| packed[i / 8] & (1 << (i % 8)) != 0)
            .collect();
        if !n.is_multiple_of(8) && packed[n / 8] >> (n % 8) != 0 {
            return Err(WireError::Malformed(
                "padding bits set in block mask".into(),
            ));
        }
        Ok(BlockMask::from_bits(rows, cols, bits).expect("length matches by construction"))
    }
    fn finish(self) -> Result<(), WireError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(WireError::Malformed(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )))
        }
    }
}

fn encode_payload(msg: &Message) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    match msg {
        Message::Hello(h) => {
            w.u32(h.camera_id);
            w.len(h.config_digest.len());
            w.0.extend_from_slice(h.config_digest.as_bytes());
        }
        Message::BlockUpdate(u) => {
            w.u64(u.frame_id);
            w.u32(u.camera_id);
            w.mask(&u.actions);
            w.u32(u.block_bytes);
            w.len(u.payload.len());
            w.0.extend_from_slice(&u.payload);
            w.len(u.detections.len());
            for d in &u.detections {
                w.bbox(&d.bbox);
                w.f64(d.ground.x);
                w.f64(d.ground.y);
                w.f64(d.score);
                w.u8(u8::from(d.stale));
            }
        }
        Message::ServerFeedback(f) => {
            w.u64(f.frame_id);
            w.u32(f.camera_id);
            w.f64(f.tau);
            w.mask(&f.mask);
            w.len(f.topk.len());
            for b in &f.topk {
                w.bbox(b);
            }
            w.len(f.fused.len());
            for g in &f.fused {
                w.f64(g.x);
                w.f64(g.y);
            }
        }
        Message::EndOfSequence(e) => {
            w.u32(e.camera_id);
            w.u64(e.frames);
        }
    }
    w.0
}

pub fn encode_message(msg: &Message) -> Vec<u8> {
    let payload = encode_payload(msg);
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(msg.type_byte());
    out.extend_from_slice(
        &u32::try_from(payload.len())
            .expect("payload fits in u32")
            .to_le_bytes(),
    );
    out.extend_from_slice(&payload);
    out
}

fn decode_payload(kind: u8, payload: &[u8]) -> Result<Message, WireError> {
    let mut r = Reader {
        buf: payload,
        pos: 0,
    };
    let msg = match kind {
        TYPE_HELLO => {
            let camera_id = r.u32()?;
            let n = r.count(1)?;
            let digest = String::from_utf8(r.take(n)?.to_vec())
                .map_err(|_| WireError::Malformed("config digest is not UTF-8".into()))?;
            Message::Hello(Hello {
                camera_id,
                config_digest: digest,
            })
        }
        TYPE_BLOCK_UPDATE => {
            let frame_id = r.u64()?;
            let camera_id = r.u32()?;
            let actions = r.mask()?;
            let block_bytes = r.u32()?;
            let n = r.count(1)?;
            let payload = r.take(n)?.to_vec();
            if !payload.is_empty() && payload.len() != actions.popcount() * block_bytes as usize {
                return Err(WireError::Malformed(format!(
                    "payload of {} bytes for {} blocks of {block_bytes}",
                    payload.len(),
                    actions.popcount()
                )));
            }
            let count = r.count(DETECTION_LEN)?;
            let mut detections = Vec::with_capacity(count);
            for _ in 0..count {
                let bbox = r.bbox()?;
                let ground = GroundPoint::new(r.f64()?, r.f64()?);
                let score = r.f64()?;
                let stale = match r.u8()? {
                    0 => false,
                    1 => true,
                    v => return Err(WireError::Malformed(format!("stale flag {v}"))),
                };
                detections.push(Detection {
                    camera_id,
                    bbox,
                    ground,
                    score,
                    stale,
                });
            }
            Message::BlockUpdate(BlockUpdate {
                frame_id,
                camera_id,
                actions,
                block_bytes,
                payload,
                detections,
            })
        }
        TYPE_FEEDBACK => {
            let frame_id = r.u64()?;
            let camera_id = r.u32()?;
            let tau = r.f64()?;
            let mask = r.mask()?;
            let n = r.count(32)?;
            let topk = (0..n).map(|_| r.bbox()).collect::<Result<_, _>>()?;
            let n = r.count(16)?;
            let fused = (0..n)
                .map(|_| Ok(GroundPoint::new(r.f64()?, r.f64()?)))
                .collect::<Result<_, WireError>>()?;
            Message::ServerFeedback(ServerFeedback {
                frame_id,
                camera_id,
                topk,
                mask,
                fused,
                tau,
            })
        }
        TYPE_END => Message::EndOfSequence(EndOfSequence {
            camera_id: r.u32()?,
            frames: r.u64()?,
        }),
        other => return Err(WireError::UnknownType(other)),
    };
    r.finish()?;
    Ok(msg)
}

/// Check a frame header and return `(type, payload length)`.
fn parse_header(h: &[u8]) -> Result<(u8, usize), WireError> {
    let magic: [u8; 4] = h[..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    if h[4] != VERSION {
        return Err(WireError::VersionMismatch { got: h[4] });
    }
    let kind = h[5];
    if !(TYPE_HELLO..=TYPE_END).contains(&kind) {
        return Err(WireError::UnknownType(kind));
    }
    let len = u32::from_le_bytes(h[6..10].try_into().expect("4 bytes")) as usize;
    if len > MAX_PAYLOAD {
        return Err(WireError::Malformed(format!(
            "payload length {len} exceeds limit"
        )));
    }
    Ok((kind, len))
}

/// Decode one frame from the front of `bytes`; returns the message and the
/// number of bytes consumed.
pub fn decode_message(bytes: &[u8]) -> Result<(Message, usize), WireError> {
    if bytes.len() < HEADER_LEN {
        // A short buffer still gets its magic checked where possible.
        let n = bytes.len().min(4);
        if bytes[..n] != MAGIC[..n] {
            let mut magic = [0u8; 4];
            magic[..n].copy_from_slice(&bytes[..n]);
            return Err(WireError::BadMagic(magic));
        }
        return Err(WireError::TruncatedFrame {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let (kind, len) = parse_header(&bytes[..HEADER_LEN])?;
    let total = HEADER_LEN + len;
    if bytes.len() < total {
        return Err(WireError::TruncatedFrame {
            needed: total,
            available: bytes.len(),
        });
    }
    Ok((decode_payload(kind, &bytes[HEADER_LEN..total])?, total))
}

pub fn write_message(w: &mut impl Write, msg: &Message) -> Result<(), WireError> {
    w.write_all(&encode_message(msg))?;
    w.flush()?;
    Ok(())
}

/// Read exactly one frame; `Ok(None)` on a clean end of stream before any
/// header byte.
pub fn read_message(r: &mut impl Read) -> Result<Option<Message>, WireError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => {
                return Err(WireError::TruncatedFrame {
                    needed: HEADER_LEN,
                    available: got,
                })
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let (kind, len) = parse_header(&header)?;
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => WireError::TruncatedFrame {
            needed: HEADER_LEN + len,
            available: HEADER_LEN,
        },
        _ => WireError::Io(e),
    })?;
    decode_payload(kind, &payload).map(Some)
}
