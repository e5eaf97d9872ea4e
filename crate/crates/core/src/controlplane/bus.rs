//! Single-writer event fan-out with bounded per-subscriber buffers.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Scalar;
use crate::runlog::{EventKind, LogEntry, RunNode, RunStatus};

/// Messages buffered per subscriber before it is cut off.
pub const EVENT_BUFFER: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Lifecycle {
    RunStarted {
        run_id: u64,
        config_version: u64,
        nodes: Vec<RunNode>,
    },
    RunFinished {
        run_id: u64,
        status: RunStatus,
        frames_processed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Notice {
    /// The subscriber fell `capacity` messages behind and was dropped.
    BufferOverrun { capacity: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub enum StreamBody<T> {
    Entry(LogEntry<T>),
    Lifecycle(Lifecycle),
    Notice(Notice),
}

impl<T> StreamBody<T> {
    pub fn kind(&self) -> Option<EventKind> {
        match self {
            StreamBody::Entry(e) => Some(e.event.kind()),
            StreamBody::Lifecycle(_) => Some(EventKind::Run),
            StreamBody::Notice(_) => None,
        }
    }
}

/// One message on a subscriber's stream. `seq` starts at 1 and increases by
/// one per delivered message, so a gap means loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
#[schemars(bound = "T: Scalar")]
pub struct StreamMessage<T> {
    pub seq: u64,
    pub body: StreamBody<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum BusError {
    #[error("subscriber fell behind by more than {0} messages and was disconnected")]
    BufferOverrun(usize),
    #[error("event bus closed")]
    Closed,
    #[error("timed out")]
    Timeout,
}

struct Subscriber<T> {
    kinds: Option<BTreeSet<EventKind>>,
    tx: SyncSender<Arc<StreamBody<T>>>,
    overrun: Arc<AtomicBool>,
}

pub struct Subscription<T> {
    rx: Receiver<Arc<StreamBody<T>>>,
    capacity: usize,
    overrun: Arc<AtomicBool>,
    next_seq: u64,
    done: bool,
}

impl<T: Scalar> Subscription<T> {
    fn wrap(&mut self, body: Arc<StreamBody<T>>) -> StreamMessage<T> {
        self.next_seq += 1;
        StreamMessage {
            seq: self.next_seq,
            body: (*body).clone(),
        }
    }

    fn closed(&mut self) -> BusError {
        self.done = true;
        if self.overrun.load(Ordering::SeqCst) {
            BusError::BufferOverrun(self.capacity)
        } else {
            BusError::Closed
        }
    }

    /// Blocks for the next message. After an overrun the buffered backlog is
    /// still delivered, then `BufferOverrun` is returned once.
    pub fn recv(&mut self) -> Result<StreamMessage<T>, BusError> {
        if self.done {
            return Err(BusError::Closed);
        }
        match self.rx.recv() {
            Ok(b) => Ok(self.wrap(b)),
            Err(_) => Err(self.closed()),
        }
    }

    pub fn recv_timeout(&mut self, d: Duration) -> Result<StreamMessage<T>, BusError> {
        if self.done {
            return Err(BusError::Closed);
        }
        match self.rx.recv_timeout(d) {
            Ok(b) => Ok(self.wrap(b)),
            Err(RecvTimeoutError::Timeout) => Err(BusError::Timeout),
            Err(RecvTimeoutError::Disconnected) => Err(self.closed()),
        }
    }

    /// Everything currently buffered, without blocking.
    pub fn drain(&mut self) -> Vec<StreamMessage<T>> {
        let mut out = Vec::new();
        while let Ok(b) = self.rx.try_recv() {
            out.push(self.wrap(b));
        }
        out
    }

    pub fn overrun(&self) -> bool {
        self.overrun.load(Ordering::SeqCst)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

/// Fan-out of run events. Publishing never blocks: a subscriber whose
/// buffer is full is dropped and sees `BufferOverrun` after its backlog.
pub struct EventBus<T> {
    subs: Mutex<Vec<Subscriber<T>>>,
}

impl<T: Scalar> Default for EventBus<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> EventBus<T> {
    pub fn new() -> Self {
        Self {
            subs: Mutex::new(Vec::new()),
        }
    }

    /// `kinds` empty means every kind.
    pub fn subscribe(&self, kinds: &[EventKind]) -> Subscription<T> {
        self.subscribe_with_capacity(kinds, EVENT_BUFFER)
    }

    pub fn subscribe_with_capacity(&self, kinds: &[EventKind], capacity: usize) -> Subscription<T> {
        let capacity = capacity.max(1);
        let (tx, rx) = mpsc::sync_channel(capacity);
        let overrun = Arc::new(AtomicBool::new(false));
        self.subs.lock().expect("bus lock").push(Subscriber {
            kinds: (!kinds.is_empty()).then(|| kinds.iter().copied().collect()),
            tx,
            overrun: overrun.clone(),
        });
        Subscription {
            rx,
            capacity,
            overrun,
            next_seq: 0,
            done: false,
        }
    }

    pub fn subscriber_count(&self) -> usize {
        self.subs.lock().expect("bus lock").len()
    }

    pub fn publish(&self, body: StreamBody<T>) {
        let body = Arc::new(body);
        let kind = body.kind();
        let mut subs = self.subs.lock().expect("bus lock");
        subs.retain_mut(|s| {
            if let (Some(k), Some(filter)) = (kind, &s.kinds) {
                if !filter.contains(&k) {
                    return true;
                }
            }
            match s.tx.try_send(body.clone()) {
                Ok(()) => true,
                Err(TrySendError::Full(_)) => {
                    s.overrun.store(true, Ordering::SeqCst);
                    false
                }
                Err(TrySendError::Disconnected(_)) => false,
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn life(n: u64) -> StreamBody<f64> {
        StreamBody::Lifecycle(Lifecycle::RunFinished {
            run_id: n,
            status: RunStatus::Completed,
            frames_processed: n,
        })
    }

    #[test]
    fn sequences_start_at_one_and_are_dense() {
        let bus = EventBus::<f64>::new();
        let mut a = bus.subscribe(&[]);
        for i in 0..5 {
            bus.publish(life(i));
        }
        let seqs: Vec<u64> = a.drain().iter().map(|m| m.seq).collect();
        assert_eq!(seqs, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn filter_skips_other_kinds() {
        let bus = EventBus::<f64>::new();
        let mut a = bus.subscribe(&[EventKind::Alert]);
        bus.publish(life(0));
        assert!(a.drain().is_empty());
    }

    #[test]
    fn overrun_drops_slow_subscriber() {
        let bus = EventBus::<f64>::new();
        let mut slow = bus.subscribe_with_capacity(&[], 3);
        let mut fast = bus.subscribe_with_capacity(&[], 100);
        for i in 0..10 {
            bus.publish(life(i));
        }
        assert_eq!(bus.subscriber_count(), 1);
        assert_eq!(slow.drain().len(), 3);
        assert_eq!(slow.recv(), Err(BusError::BufferOverrun(3)));
        assert_eq!(fast.drain().len(), 10);
    }

    #[test]
    fn dropped_subscription_is_pruned() {
        let bus = EventBus::<f64>::new();
        drop(bus.subscribe(&[]));
        bus.publish(life(0));
        assert_eq!(bus.subscriber_count(), 0);
    }
}
