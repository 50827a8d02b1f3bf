//! Bounded single-producer / single-consumer event buffer.
//!
//! In observe mode a push into a full buffer discards the arriving item and
//! counts it; in inline mode the push blocks until the consumer makes room.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crossbeam_channel::{bounded, Receiver, Sender, TryRecvError, TrySendError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferMode {
    Observe,
    Inline,
}

impl BufferMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BufferMode::Observe => "observe",
            BufferMode::Inline => "inline",
        }
    }
}

impl std::str::FromStr for BufferMode {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "observe" => Ok(BufferMode::Observe),
            "inline" => Ok(BufferMode::Inline),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RingError {
    #[error("ring capacity {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("consumer is gone")]
    ConsumerGone,
}

/// Yields tried on an empty buffer before parking.
const POP_YIELDS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PushOutcome {
    Queued,
    Dropped,
}

#[derive(Debug, Default)]
struct Counters {
    pushed: AtomicU64,
    dropped: AtomicU64,
}

/// Creates a ring of `capacity` slots and returns its two ends.
pub fn ring_buffer<T>(capacity: usize, mode: BufferMode) -> Result<(RingProducer<T>, RingConsumer<T>), RingError> {
    if !capacity.is_power_of_two() {
        return Err(RingError::NotPowerOfTwo(capacity));
    }
    let (tx, rx) = bounded(capacity);
    let counters = Arc::new(Counters::default());
    Ok((
        RingProducer {
            tx,
            mode,
            capacity,
            counters: Arc::clone(&counters),
        },
        RingConsumer { rx, counters },
    ))
}

#[derive(Debug)]
pub struct RingProducer<T> {
    tx: Sender<T>,
    mode: BufferMode,
    capacity: usize,
    counters: Arc<Counters>,
}

impl<T> RingProducer<T> {
    pub fn mode(&self) -> BufferMode {
        self.mode
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&self, item: T) -> Result<PushOutcome, RingError> {
        match self.mode {
            BufferMode::Observe => match self.tx.try_send(item) {
                Ok(()) => {
                    self.counters.pushed.fetch_add(1, Ordering::Relaxed);
                    Ok(PushOutcome::Queued)
                }
                Err(TrySendError::Full(_)) => {
                    self.counters.dropped.fetch_add(1, Ordering::Relaxed);
                    Ok(PushOutcome::Dropped)
                }
                Err(TrySendError::Disconnected(_)) => Err(RingError::ConsumerGone),
            },
            BufferMode::Inline => match self.tx.send(item) {
                Ok(()) => {
                    self.counters.pushed.fetch_add(1, Ordering::Relaxed);
                    Ok(PushOutcome::Queued)
                }
                Err(_) => Err(RingError::ConsumerGone),
            },
        }
    }

    pub fn pushed(&self) -> u64 {
        self.counters.pushed.load(Ordering::Relaxed)
    }

    pub fn drop_count(&self) -> u64 {
        self.counters.dropped.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.tx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tx.is_empty()
    }
}

#[derive(Debug)]
pub struct RingConsumer<T> {
    rx: Receiver<T>,
    counters: Arc<Counters>,
}

impl<T> RingConsumer<T> {
    /// Blocks until an item arrives; `None` once the producer is gone and the
    /// buffer is drained.
    pub fn pop(&self) -> Option<T> {
        for _ in 0..POP_YIELDS {
            match self.rx.try_recv() {
                Ok(item) => return Some(item),
                Err(TryRecvError::Disconnected) => return None,
                Err(TryRecvError::Empty) => std::thread::yield_now(),
            }
        }
        self.rx.recv().ok()
    }

    pub fn try_pop(&self) -> Option<T> {
        self.rx.try_recv().ok()
    }

    pub fn drop_count(&self) -> u64 {
        self.counters.dropped.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.rx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rx.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::thread;

    #[test]
    fn rejects_non_power_of_two() {
        assert_eq!(
            ring_buffer::<u32>(100, BufferMode::Observe).unwrap_err(),
            RingError::NotPowerOfTwo(100)
        );
    }

    #[test]
    fn observe_drops_newest_when_full() {
        let (tx, rx) = ring_buffer(4, BufferMode::Observe).unwrap();
        for i in 0..6u32 {
            let outcome = tx.push(i).unwrap();
            assert_eq!(outcome == PushOutcome::Dropped, i >= 4);
        }
        assert_eq!(tx.drop_count(), 2);
        drop(tx);
        let got: Vec<u32> = std::iter::from_fn(|| rx.pop()).collect();
        assert_eq!(got, vec![0, 1, 2, 3]);
    }

    #[test]
    fn inline_blocks_instead_of_dropping() {
        let (tx, rx) = ring_buffer(2, BufferMode::Inline).unwrap();
        let producer = thread::spawn(move || {
            for i in 0..1000u32 {
                tx.push(i).unwrap();
            }
            tx.drop_count()
        });
        let mut expected = 0;
        while let Some(v) = rx.pop() {
            assert_eq!(v, expected);
            expected += 1;
        }
        assert_eq!(expected, 1000);
        assert_eq!(producer.join().unwrap(), 0);
    }

    #[test]
    fn consumer_gone_is_reported() {
        let (tx, rx) = ring_buffer::<u8>(2, BufferMode::Inline).unwrap();
        drop(rx);
        assert_eq!(tx.push(1), Err(RingError::ConsumerGone));
    }
}
