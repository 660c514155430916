use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::entities::{DriverId, OrderId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// Index into the episode's pre-sampled arrival list.
    OrderArrival { draft: usize },
    OrderExpiry { order_id: OrderId },
    ServeComplete { driver_id: DriverId },
    RepositionComplete { driver_id: DriverId },
    DriverArrival { driver_id: DriverId },
    DriverDeparture { driver_id: DriverId },
}

#[derive(Debug, Clone, Copy)]
pub struct SimEvent {
    pub at: f64,
    pub seq: u64,
    pub kind: EventKind,
}

impl PartialEq for SimEvent {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for SimEvent {}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimEvent {
    // Reversed so that `BinaryHeap` pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .at
            .total_cmp(&self.at)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Min-queue on `(at, seq)`; `seq` is the insertion counter, so events at
/// equal times pop in insertion order.
#[derive(Debug, Default, Clone)]
pub struct EventQueue {
    heap: BinaryHeap<SimEvent>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, at: f64, kind: EventKind) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(SimEvent { at, seq, kind });
        seq
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        self.heap.pop()
    }

    pub fn peek(&self) -> Option<&SimEvent> {
        self.heap.peek()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn clear(&mut self) {
        self.heap.clear();
        self.next_seq = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_times_pop_in_insertion_order() {
        let mut q = EventQueue::new();
        q.push(1.0, EventKind::DriverArrival { driver_id: 0 });
        q.push(0.5, EventKind::DriverArrival { driver_id: 1 });
        q.push(1.0, EventKind::DriverArrival { driver_id: 2 });
        q.push(1.0, EventKind::DriverArrival { driver_id: 3 });
        let order: Vec<_> = std::iter::from_fn(|| q.pop())
            .map(|e| match e.kind {
                EventKind::DriverArrival { driver_id } => driver_id,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(order, vec![1, 0, 2, 3]);
    }

    proptest! {
        #[test]
        fn pops_are_sorted_by_time_then_seq(times in proptest::collection::vec(0u8..10, 0..64)) {
            let mut q = EventQueue::new();
            for (i, t) in times.iter().enumerate() {
                q.push(f64::from(*t), EventKind::OrderArrival { draft: i });
            }
            let mut last = (f64::NEG_INFINITY, 0u64);
            while let Some(e) = q.pop() {
                prop_assert!(e.at > last.0 || (e.at == last.0 && e.seq > last.1) || last.0 == f64::NEG_INFINITY);
                last = (e.at, e.seq);
            }
        }
    }
}
