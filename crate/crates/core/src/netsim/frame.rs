use std::io::{self, Read};

use serde::{Deserialize, Serialize};

use super::NetError;

/// Bytes in front of every payload: length (4), message type (1), sender (2).
pub const HEADER_BYTES: usize = 7;

/// The length field covers the type byte, the sender and the payload.
const LENGTH_COVERS_HEADER: usize = 3;

pub type EndpointId = u16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum MsgType {
    ShareVector = 1,
    AggregateShare = 2,
    SelectionContribution = 3,
    SelectionOpen = 4,
    Attestation = 5,
    Reveal = 6,
    Result = 7,
    Control = 8,
}

impl MsgType {
    pub const ALL: [MsgType; 8] = [
        MsgType::ShareVector,
        MsgType::AggregateShare,
        MsgType::SelectionContribution,
        MsgType::SelectionOpen,
        MsgType::Attestation,
        MsgType::Reveal,
        MsgType::Result,
        MsgType::Control,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self, NetError> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.code() == code)
            .ok_or(NetError::UnknownMsgType(code))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub sender: EndpointId,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: MsgType, sender: EndpointId, payload: Vec<u8>) -> Self {
        Self {
            msg_type,
            sender,
            payload,
        }
    }

    pub fn control(sender: EndpointId) -> Self {
        Self::new(MsgType::Control, sender, Vec::new())
    }

    /// Size on the wire.
    pub fn wire_len(&self) -> usize {
        HEADER_BYTES + self.payload.len()
    }

    pub fn encode(&self) -> Result<Vec<u8>, NetError> {
        let length = u32::try_from(self.payload.len() + LENGTH_COVERS_HEADER)
            .map_err(|_| NetError::PayloadTooLarge(self.payload.len()))?;
        let mut out = Vec::with_capacity(self.wire_len());
        out.extend_from_slice(&length.to_be_bytes());
        out.push(self.msg_type.code());
        out.extend_from_slice(&self.sender.to_be_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Decodes one frame from the front of `bytes`, returning it with the
    /// number of bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Frame, usize), NetError> {
        if bytes.len() < HEADER_BYTES {
            return Err(NetError::Truncated);
        }
        let length = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
        if length < LENGTH_COVERS_HEADER {
            return Err(NetError::BadLength(length));
        }
        let total = 4 + length;
        if bytes.len() < total {
            return Err(NetError::Truncated);
        }
        let msg_type = MsgType::from_code(bytes[4])?;
        let sender = u16::from_be_bytes([bytes[5], bytes[6]]);
        let frame = Frame::new(msg_type, sender, bytes[HEADER_BYTES..total].to_vec());
        Ok((frame, total))
    }

    /// Reads exactly one frame from a stream. `Ok(None)` on clean EOF before
    /// the first header byte.
    pub fn read_from<R: Read>(source: &mut R) -> Result<Option<(Frame, usize)>, NetError> {
        let mut header = [0u8; HEADER_BYTES];
        match read_full(source, &mut header)? {
            0 => return Ok(None),
            n if n < HEADER_BYTES => return Err(NetError::Truncated),
            _ => {}
        }
        let length = u32::from_be_bytes(header[..4].try_into().expect("4 bytes")) as usize;
        if length < LENGTH_COVERS_HEADER {
            return Err(NetError::BadLength(length));
        }
        let msg_type = MsgType::from_code(header[4])?;
        let sender = u16::from_be_bytes([header[5], header[6]]);
        let mut payload = vec![0u8; length - LENGTH_COVERS_HEADER];
        if read_full(source, &mut payload)? < payload.len() {
            return Err(NetError::Truncated);
        }
        let consumed = HEADER_BYTES + payload.len();
        Ok(Some((Frame::new(msg_type, sender, payload), consumed)))
    }
}

fn read_full<R: Read>(source: &mut R, buf: &mut [u8]) -> Result<usize, NetError> {
    let mut filled = 0;
    while filled < buf.len() {
        match source.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(NetError::Io(e.to_string())),
        }
    }
    Ok(filled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn share_vector_frame_size() {
        let frame = Frame::new(MsgType::ShareVector, 3, vec![0u8; 10 * 16]);
        assert_eq!(frame.wire_len(), 167);
        assert_eq!(frame.encode().unwrap().len(), 167);
        assert_eq!(Frame::control(0).encode().unwrap().len(), 7);
    }

    #[test]
    fn header_layout() {
        let bytes = Frame::new(MsgType::SelectionOpen, 0x0102, vec![9, 8])
            .encode()
            .unwrap();
        assert_eq!(bytes, vec![0, 0, 0, 5, 4, 1, 2, 9, 8]);
    }

    #[test]
    fn malformed_input() {
        assert_eq!(Frame::decode(&[0, 0, 0]), Err(NetError::Truncated));
        assert_eq!(
            Frame::decode(&[0, 0, 0, 9, 1, 0, 0]),
            Err(NetError::Truncated)
        );
        assert_eq!(
            Frame::decode(&[0, 0, 0, 2, 1, 0, 0]),
            Err(NetError::BadLength(2))
        );
        assert_eq!(
            Frame::decode(&[0, 0, 0, 3, 42, 0, 0]),
            Err(NetError::UnknownMsgType(42))
        );
    }

    #[test]
    fn stream_reads_back_to_back_frames() {
        let a = Frame::new(MsgType::Reveal, 1, vec![1, 2, 3]);
        let b = Frame::control(2);
        let mut bytes = a.encode().unwrap();
        bytes.extend(b.encode().unwrap());
        let mut cursor = io::Cursor::new(bytes);
        assert_eq!(Frame::read_from(&mut cursor).unwrap(), Some((a, 10)));
        assert_eq!(Frame::read_from(&mut cursor).unwrap(), Some((b, 7)));
        assert_eq!(Frame::read_from(&mut cursor).unwrap(), None);
    }

    proptest! {
        #[test]
        fn roundtrip(kind in 0usize..8, sender: u16, payload in proptest::collection::vec(any::<u8>(), 0..600)) {
            let frame = Frame::new(MsgType::ALL[kind], sender, payload);
            let bytes = frame.encode().unwrap();
            prop_assert_eq!(bytes.len(), frame.wire_len());
            let (back, used) = Frame::decode(&bytes).unwrap();
            prop_assert_eq!(used, bytes.len());
            prop_assert_eq!(&back, &frame);
            let mut cursor = io::Cursor::new(bytes);
            prop_assert_eq!(Frame::read_from(&mut cursor).unwrap(), Some((frame, used)));
        }
    }
}
