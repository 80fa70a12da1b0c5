use super::events::{Event, EventStream};
use crate::error::{Error, Result};

/// Sensor side length of the N-MNIST recordings.
pub const NMNIST_SIZE: u32 = 34;
/// Input channels after folding polarity into the channel index (34 * 34 * 2).
pub const NMNIST_CHANNELS: u32 = NMNIST_SIZE * NMNIST_SIZE * 2;

const RECORD_LEN: usize = 5;

/// Decodes an N-MNIST AER `.bin` file.
///
/// Each 5-byte record holds `x`, `y`, then a polarity bit followed by a 23-bit
/// microsecond timestamp. The channel index is `y * 68 + x * 2 + polarity`.
pub fn parse_nmnist_bin(raw: &[u8]) -> Result<EventStream> {
    let whole = raw.len() / RECORD_LEN * RECORD_LEN;
    if whole != raw.len() {
        return Err(Error::Truncated {
            offset: whole,
            remaining: raw.len() - whole,
        });
    }
    let mut events = Vec::with_capacity(raw.len() / RECORD_LEN);
    for (i, rec) in raw.chunks_exact(RECORD_LEN).enumerate() {
        let (x, y) = (rec[0], rec[1]);
        if u32::from(x) >= NMNIST_SIZE || u32::from(y) >= NMNIST_SIZE {
            return Err(Error::MalformedRecord {
                offset: i * RECORD_LEN,
                x,
                y,
            });
        }
        let polarity = u32::from(rec[2] >> 7);
        let time =
            (u64::from(rec[2] & 0x7f) << 16) | (u64::from(rec[3]) << 8) | u64::from(rec[4]);
        let channel = u32::from(y) * NMNIST_SIZE * 2 + u32::from(x) * 2 + polarity;
        events.push(Event { time, channel });
    }
    EventStream::from_unsorted(NMNIST_CHANNELS, 1000, events)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_single_record() {
        let s = parse_nmnist_bin(&[0x00, 0x00, 0x80, 0x00, 0x0A]).unwrap();
        assert_eq!(s.events(), &[Event { time: 10, channel: 1 }]);
        assert_eq!(s.timestamp_unit_ns(), 1000);
        assert_eq!(s.num_channels(), 2312);
    }

    #[test]
    fn decodes_full_timestamp_and_position() {
        // x=33, y=2, polarity 0, t = 0x7f_ffff
        let s = parse_nmnist_bin(&[33, 2, 0x7f, 0xff, 0xff]).unwrap();
        let e = s.events()[0];
        assert_eq!(e.time, (1 << 23) - 1);
        assert_eq!(e.channel, 2 * 68 + 33 * 2);
    }

    #[test]
    fn empty_input() {
        assert!(parse_nmnist_bin(&[]).unwrap().is_empty());
    }

    #[test]
    fn truncated_input() {
        match parse_nmnist_bin(&[1, 2, 3]) {
            Err(Error::Truncated { offset, remaining }) => {
                assert_eq!((offset, remaining), (0, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_nmnist_bin(&[0, 0, 0, 0, 1, 9]),
            Err(Error::Truncated { offset: 5, .. })
        ));
    }

    #[test]
    fn out_of_range_coordinate() {
        let raw = [0, 0, 0, 0, 1, 34, 0, 0, 0, 2];
        assert!(matches!(
            parse_nmnist_bin(&raw),
            Err(Error::MalformedRecord { offset: 5, x: 34, .. })
        ));
    }
}
