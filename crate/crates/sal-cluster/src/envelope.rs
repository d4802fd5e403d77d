//! Length-prefixed frames: a 4-byte big-endian payload length followed by
//! the payload. Length 0 is TERMINATE.

use std::io::{self, Read, Write};

use thiserror::Error;

/// Largest payload a frame may carry.
pub const MAX_PAYLOAD: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Envelope {
    /// One CSV tuple line, without the newline.
    Tuple(String),
    Terminate,
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame payload of {0} bytes exceeds the {MAX_PAYLOAD} byte limit")]
    TooLarge(usize),
    #[error("frame payload is not UTF-8")]
    Utf8,
    #[error("an empty tuple cannot be framed (length 0 means TERMINATE)")]
    Empty,
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Envelope {
    /// A tuple frame, checking the payload limit.
    pub fn tuple(line: impl Into<String>) -> Result<Self, FrameError> {
        let line = line.into();
        check_len(line.len())?;
        Ok(Envelope::Tuple(line))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), FrameError> {
        match self {
            Envelope::Tuple(line) => write_tuple(w, line),
            Envelope::Terminate => Ok(w.write_all(&0u32.to_be_bytes())?),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, FrameError> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    /// Read one frame. `Ok(None)` is a clean end of stream before any
    /// length byte.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Option<Self>, FrameError> {
        let mut len = [0u8; 4];
        match r.read(&mut len[..1])? {
            0 => return Ok(None),
            _ => r.read_exact(&mut len[1..])?,
        }
        let len = u32::from_be_bytes(len) as usize;
        if len == 0 {
            return Ok(Some(Envelope::Terminate));
        }
        if len > MAX_PAYLOAD {
            return Err(FrameError::TooLarge(len));
        }
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        String::from_utf8(buf)
            .map(|s| Some(Envelope::Tuple(s)))
            .map_err(|_| FrameError::Utf8)
    }
}

fn check_len(len: usize) -> Result<(), FrameError> {
    match len {
        0 => Err(FrameError::Empty),
        n if n > MAX_PAYLOAD => Err(FrameError::TooLarge(n)),
        _ => Ok(()),
    }
}

/// Frame `line` without building an [`Envelope`].
pub fn write_tuple<W: Write>(w: &mut W, line: &str) -> Result<(), FrameError> {
    check_len(line.len())?;
    w.write_all(&(line.len() as u32).to_be_bytes())?;
    w.write_all(line.as_bytes())?;
    Ok(())
}
