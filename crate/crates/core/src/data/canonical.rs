//! Canonical little-endian event file (`.spke`).
//!
//! ```text
//! magic "SPKE" | version u16 | num_channels u32 | timestamp_unit_ns u32
//! event_count u64 | event_count * { time u64, channel u32 }
//! ```

use std::path::Path;

use super::events::{Event, EventStream};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SPKE";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 8;
const RECORD_LEN: usize = 8 + 4;

pub fn save_canonical(stream: &EventStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + stream.len() * RECORD_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&stream.num_channels().to_le_bytes());
    out.extend_from_slice(&stream.timestamp_unit_ns().to_le_bytes());
    out.extend_from_slice(&(stream.len() as u64).to_le_bytes());
    for e in stream.events() {
        out.extend_from_slice(&e.time.to_le_bytes());
        out.extend_from_slice(&e.channel.to_le_bytes());
    }
    out
}

pub fn load_canonical(bytes: &[u8]) -> Result<EventStream> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file too short for header ({} bytes)",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format("bad magic, expected \"SPKE\"".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let num_channels = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
    let unit = u32::from_le_bytes(bytes[10..14].try_into().unwrap());
    let count = u64::from_le_bytes(bytes[14..22].try_into().unwrap());
    let payload = &bytes[HEADER_LEN..];
    if !payload.len().is_multiple_of(RECORD_LEN) || (payload.len() / RECORD_LEN) as u64 != count {
        return Err(Error::Integrity(format!(
            "header declares {count} events but payload holds {} bytes ({} records)",
            payload.len(),
            payload.len() as f64 / RECORD_LEN as f64
        )));
    }
    let events = payload
        .chunks_exact(RECORD_LEN)
        .map(|r| Event {
            time: u64::from_le_bytes(r[0..8].try_into().unwrap()),
            channel: u32::from_le_bytes(r[8..12].try_into().unwrap()),
        })
        .collect();
    EventStream::new(num_channels, unit, events).map_err(|e| Error::Integrity(e.to_string()))
}

pub fn write_canonical_file(path: impl AsRef<Path>, stream: &EventStream) -> Result<()> {
    std::fs::write(path, save_canonical(stream))?;
    Ok(())
}

pub fn read_canonical_file(path: impl AsRef<Path>) -> Result<EventStream> {
    load_canonical(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> EventStream {
        EventStream::new(
            3,
            1000,
            vec![Event { time: 1, channel: 2 }, Event { time: 9, channel: 0 }],
        )
        .unwrap()
    }

    #[test]
    fn header_layout() {
        let b = save_canonical(&sample());
        assert_eq!(&b[0..4], b"SPKE");
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(&b[6..10], &[3, 0, 0, 0]);
        assert_eq!(&b[10..14], &1000u32.to_le_bytes());
        assert_eq!(&b[14..22], &2u64.to_le_bytes());
        assert_eq!(b.len(), 22 + 2 * 12);
    }

    #[test]
    fn bad_magic() {
        let mut b = save_canonical(&sample());
        b[0] = b'X';
        assert!(matches!(load_canonical(&b), Err(Error::Format(_))));
    }

    #[test]
    fn bad_version() {
        let mut b = save_canonical(&sample());
        b[4] = 2;
        assert!(matches!(load_canonical(&b), Err(Error::Format(_))));
    }

    #[test]
    fn count_mismatch() {
        let mut b = save_canonical(&sample());
        b[14] = 3;
        assert!(matches!(load_canonical(&b), Err(Error::Integrity(_))));
        let mut b = save_canonical(&sample());
        b.pop();
        assert!(matches!(load_canonical(&b), Err(Error::Integrity(_))));
    }

    proptest! {
        #[test]
        fn round_trip(ch in 1u32..5000, raw in prop::collection::vec((0u64..u64::MAX / 2, 0u32..u32::MAX), 0..100)) {
            let ev = raw.into_iter().map(|(time, c)| Event { time, channel: c % ch }).collect();
            let s = EventStream::from_unsorted(ch, 1000, ev).unwrap();
            prop_assert_eq!(load_canonical(&save_canonical(&s)).unwrap(), s);
        }
    }
}
