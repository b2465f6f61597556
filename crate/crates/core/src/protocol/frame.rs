use std::io::{self, Read, Write};

use super::message::Message;
use super::ProtocolError;

pub const HEADER_LEN: usize = 5;
/// Largest payload accepted on any connection (16 MiB).
pub const MAX_FRAME_LEN: usize = 16 * 1024 * 1024;

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Frame {
    pub tag: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(tag: u8, payload: Vec<u8>) -> Result<Self, ProtocolError> {
        if payload.len() > MAX_FRAME_LEN {
            return Err(ProtocolError::malformed(format!(
                "payload of {} bytes exceeds the {} byte frame limit",
                payload.len(),
                MAX_FRAME_LEN
            )));
        }
        Ok(Self { tag, payload })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.push(self.tag);
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses exactly one frame occupying all of `bytes`.
    pub fn parse(bytes: &[u8]) -> Result<Self, ProtocolError> {
        if bytes.len() < HEADER_LEN {
            return Err(ProtocolError::TruncatedFrame);
        }
        let len = u32::from_be_bytes(bytes[1..5].try_into().unwrap()) as usize;
        if len > MAX_FRAME_LEN {
            return Err(ProtocolError::malformed(
                "declared length exceeds frame limit",
            ));
        }
        let rest = &bytes[HEADER_LEN..];
        if rest.len() < len {
            return Err(ProtocolError::TruncatedFrame);
        }
        if rest.len() > len {
            return Err(ProtocolError::malformed("trailing bytes after frame"));
        }
        Ok(Self {
            tag: bytes[0],
            payload: rest.to_vec(),
        })
    }

    /// Reads one frame; `Ok(None)` on a clean end of stream before any header byte.
    pub fn read_from<R: Read>(reader: &mut R) -> Result<Option<Self>, ProtocolError> {
        let mut header = [0u8; HEADER_LEN];
        let mut got = 0;
        while got < HEADER_LEN {
            match reader.read(&mut header[got..]) {
                Ok(0) if got == 0 => return Ok(None),
                Ok(0) => return Err(ProtocolError::TruncatedFrame),
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        let len = u32::from_be_bytes(header[1..5].try_into().unwrap()) as usize;
        if len > MAX_FRAME_LEN {
            return Err(ProtocolError::malformed(
                "declared length exceeds frame limit",
            ));
        }
        let mut payload = vec![0u8; len];
        reader
            .read_exact(&mut payload)
            .map_err(|e| match e.kind() {
                io::ErrorKind::UnexpectedEof => ProtocolError::TruncatedFrame,
                _ => e.into(),
            })?;
        Ok(Some(Self {
            tag: header[0],
            payload,
        }))
    }

    pub fn write_to<W: Write>(&self, writer: &mut W) -> io::Result<()> {
        writer.write_all(&self.to_bytes())?;
        writer.flush()
    }
}

pub fn encode_frame(msg: &Message) -> Result<Vec<u8>, ProtocolError> {
    Ok(msg.to_frame()?.to_bytes())
}

pub fn decode_frame(bytes: &[u8]) -> Result<Message, ProtocolError> {
    Message::from_frame(&Frame::parse(bytes)?)
}
