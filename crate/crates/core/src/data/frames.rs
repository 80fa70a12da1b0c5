use serde::{Deserialize, Serialize};

use super::events::EventStream;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinMode {
    /// One if any event fell in the bin.
    #[default]
    Binary,
    /// Number of events in the bin.
    Count,
}

/// Dense `[steps x channels]` spike tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeFrames {
    steps: usize,
    channels: usize,
    values: Vec<u32>,
}

impl SpikeFrames {
    pub fn zeros(steps: usize, channels: usize) -> Self {
        Self {
            steps,
            channels,
            values: vec![0; steps * channels],
        }
    }

    pub fn from_values(steps: usize, channels: usize, values: Vec<u32>) -> Result<Self> {
        Error::check_dim("spike frame values", steps * channels, values.len())?;
        Ok(Self {
            steps,
            channels,
            values,
        })
    }

    /// Builds frames from per-channel lists of spike steps.
    pub fn from_spike_times(steps: usize, trains: &[Vec<usize>]) -> Result<Self> {
        let mut f = Self::zeros(steps, trains.len());
        for (ch, times) in trains.iter().enumerate() {
            for &t in times {
                if t >= steps {
                    return Err(Error::arg(format!(
                        "spike at step {t} outside window of {steps}"
                    )));
                }
                f.set(t, ch, 1);
            }
        }
        Ok(f)
    }

    /// Thresholds a real-valued `[steps x channels]` matrix at 0.5.
    pub fn from_matrix<S: Scalar>(m: &Matrix<S>) -> Self {
        Self {
            steps: m.rows(),
            channels: m.cols(),
            values: m
                .as_slice()
                .iter()
                .map(|&v| u32::from(v >= S::lit(0.5)))
                .collect(),
        }
    }

    #[inline]
    pub fn steps(&self) -> usize {
        self.steps
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn get(&self, t: usize, ch: usize) -> u32 {
        self.values[t * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, t: usize, ch: usize, v: u32) {
        self.values[t * self.channels + ch] = v;
    }

    pub fn step(&self, t: usize) -> &[u32] {
        &self.values[t * self.channels..(t + 1) * self.channels]
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v <= 1)
    }

    pub fn total(&self) -> u64 {
        self.values.iter().map(|&v| u64::from(v)).sum()
    }

    /// Spike count of every channel over the whole window.
    pub fn channel_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.channels];
        for row in self.values.chunks_exact(self.channels.max(1)) {
            for (c, &v) in counts.iter_mut().zip(row) {
                *c += u64::from(v);
            }
        }
        counts
    }

    /// Spike train of one channel as a 0/1 vector over time.
    pub fn train(&self, ch: usize) -> Vec<u32> {
        (0..self.steps).map(|t| self.get(t, ch)).collect()
    }

    pub fn clamped(&self) -> Self {
        Self {
            steps: self.steps,
            channels: self.channels,
            values: self.values.iter().map(|&v| v.min(1)).collect(),
        }
    }

    pub fn to_matrix<S: Scalar>(&self) -> Matrix<S> {
        Matrix::from_vec(
            self.steps,
            self.channels,
            self.values.iter().map(|&v| S::lit(f64::from(v))).collect(),
        )
        .expect("shape is consistent by construction")
    }

    /// Converts back to an event stream with one event per unit of count.
    pub fn to_events(&self, timestamp_unit_ns: u32) -> Result<EventStream> {
        let mut events = Vec::new();
        for t in 0..self.steps {
            for ch in 0..self.channels {
                for _ in 0..self.get(t, ch) {
                    events.push(super::Event {
                        time: t as u64,
                        channel: ch as u32,
                    });
                }
            }
        }
        EventStream::new(self.channels as u32, timestamp_unit_ns, events)
    }
}

/// Bins a stream into `steps` uniform frames.
///
/// The window spans `[0, last_time]`; the bin width is
/// `ceil((last_time + 1) / steps)` ticks so the final event always lands in range.
pub fn bin_events(stream: &EventStream, steps: usize, mode: BinMode) -> Result<SpikeFrames> {
    if steps == 0 {
        return Err(Error::arg("number of time steps must be at least 1"));
    }
    let channels = stream.num_channels() as usize;
    let mut frames = SpikeFrames::zeros(steps, channels);
    let Some(last) = stream.last_time() else {
        return Ok(frames);
    };
    let width = (last + 1).div_ceil(steps as u64);
    for e in stream.events() {
        let bin = (e.time / width) as usize;
        let idx = bin * channels + e.channel as usize;
        match mode {
            BinMode::Binary => frames.values[idx] = 1,
            BinMode::Count => frames.values[idx] += 1,
        }
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::super::Event;
    use super::*;
    use proptest::prelude::*;

    fn stream(events: &[(u64, u32)], channels: u32) -> EventStream {
        EventStream::from_unsorted(
            channels,
            1000,
            events
                .iter()
                .map(|&(time, channel)| Event { time, channel })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_event_first_bin() {
        let f = bin_events(&stream(&[(0, 3)], 5), 10, BinMode::Binary).unwrap();
        assert_eq!(f.get(0, 3), 1);
        assert_eq!(f.total(), 1);
    }

    #[test]
    fn same_bin_binary_and_count() {
        let s = stream(&[(0, 1), (1, 1), (99, 0)], 2);
        let b = bin_events(&s, 10, BinMode::Binary).unwrap();
        let c = bin_events(&s, 10, BinMode::Count).unwrap();
        assert_eq!(b.get(0, 1), 1);
        assert_eq!(c.get(0, 1), 2);
        assert_eq!(c.get(9, 0), 1);
    }

    #[test]
    fn zero_duration_lands_in_first_bin() {
        let s = stream(&[(0, 0), (0, 1)], 2);
        let c = bin_events(&s, 7, BinMode::Count).unwrap();
        assert_eq!(c.step(0), &[1, 1]);
        assert_eq!(c.total(), 2);
    }

    #[test]
    fn zero_steps_rejected() {
        assert!(bin_events(&stream(&[], 1), 0, BinMode::Binary).is_err());
    }

    fn arb_stream() -> impl Strategy<Value = EventStream> {
        (1u32..20, prop::collection::vec((0u64..100_000, 0u32..1000), 0..200)).prop_map(
            |(ch, raw)| {
                let ev: Vec<_> = raw.into_iter().map(|(t, c)| (t, c % ch)).collect();
                stream(&ev, ch)
            },
        )
    }

    proptest! {
        #[test]
        fn count_mode_preserves_events(s in arb_stream(), steps in 1usize..400) {
            let c = bin_events(&s, steps, BinMode::Count).unwrap();
            prop_assert_eq!(c.total(), s.len() as u64);
        }

        #[test]
        fn binary_is_clamped_count(s in arb_stream(), steps in 1usize..400) {
            let b = bin_events(&s, steps, BinMode::Binary).unwrap();
            let c = bin_events(&s, steps, BinMode::Count).unwrap();
            prop_assert_eq!(b, c.clamped());
        }
    }
}
