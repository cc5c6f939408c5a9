use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Integer simulated clock, microseconds.
pub type Micros = u64;

/// Events at equal times with a lower `priority` pop first; remaining ties
/// pop in insertion order.
pub struct EventQueue<E> {
    heap: BinaryHeap<Reverse<(Micros, u8, u64, Slot<E>)>>,
    seq: u64,
    now: Micros,
}

/// Wrapper that keeps the payload out of the ordering.
struct Slot<E>(E);

impl<E> PartialEq for Slot<E> {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}
impl<E> Eq for Slot<E> {}
impl<E> PartialOrd for Slot<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Slot<E> {
    fn cmp(&self, _: &Self) -> std::cmp::Ordering {
        std::cmp::Ordering::Equal
    }
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        EventQueue { heap: BinaryHeap::new(), seq: 0, now: 0 }
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> Micros {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Panics if `at` lies before the current time.
    pub fn schedule(&mut self, at: Micros, priority: u8, event: E) {
        assert!(at >= self.now, "event scheduled in the past: {at} < {}", self.now);
        self.heap.push(Reverse((at, priority, self.seq, Slot(event))));
        self.seq += 1;
    }

    pub fn pop(&mut self) -> Option<(Micros, E)> {
        let Reverse((at, _, _, Slot(e))) = self.heap.pop()?;
        self.now = at;
        Some((at, e))
    }

    pub fn peek_time(&self) -> Option<Micros> {
        self.heap.peek().map(|Reverse((at, ..))| *at)
    }
}
