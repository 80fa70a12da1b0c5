use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    /// Timestamp in ticks of `EventStream::timestamp_unit_ns`.
    pub time: u64,
    pub channel: u32,
}

/// Raw timestamped spike events for one sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventStream {
    num_channels: u32,
    timestamp_unit_ns: u32,
    events: Vec<Event>,
}

impl EventStream {
    /// Builds a stream, checking that channels are in range and times are sorted.
    pub fn new(num_channels: u32, timestamp_unit_ns: u32, events: Vec<Event>) -> Result<Self> {
        if num_channels == 0 {
            return Err(Error::arg("event stream needs at least one channel"));
        }
        if timestamp_unit_ns == 0 {
            return Err(Error::arg("timestamp unit must be positive"));
        }
        if let Some((i, e)) = events
            .iter()
            .enumerate()
            .find(|(_, e)| e.channel >= num_channels)
        {
            return Err(Error::arg(format!(
                "event {i} has channel {} but stream has {num_channels} channels",
                e.channel
            )));
        }
        if let Some(i) = events.windows(2).position(|w| w[1].time < w[0].time) {
            return Err(Error::arg(format!(
                "events not sorted by time at index {}",
                i + 1
            )));
        }
        Ok(Self {
            num_channels,
            timestamp_unit_ns,
            events,
        })
    }

    /// Builds a stream from unsorted events (stable sort by time).
    pub fn from_unsorted(
        num_channels: u32,
        timestamp_unit_ns: u32,
        mut events: Vec<Event>,
    ) -> Result<Self> {
        events.sort_by_key(|e| e.time);
        Self::new(num_channels, timestamp_unit_ns, events)
    }

    pub fn empty(num_channels: u32, timestamp_unit_ns: u32) -> Result<Self> {
        Self::new(num_channels, timestamp_unit_ns, Vec::new())
    }

    pub fn num_channels(&self) -> u32 {
        self.num_channels
    }

    pub fn timestamp_unit_ns(&self) -> u32 {
        self.timestamp_unit_ns
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Last event timestamp, or `None` for an empty stream.
    pub fn last_time(&self) -> Option<u64> {
        self.events.last().map(|e| e.time)
    }
}
