//! Discrete-event queue ordered by `(time, insertion order)`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use crate::error::{Error, Result};
use crate::time::SimTime;

/// Handle returned by [`EventQueue::schedule`], usable for cancellation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventId(u64);

struct Entry<E> {
    at: SimTime,
    id: EventId,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.id == other.id
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // BinaryHeap is a max-heap; invert so the earliest (time, id) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.at.cmp(&self.at).then_with(|| other.id.cmp(&self.id))
    }
}

pub struct EventQueue<E> {
    heap: BinaryHeap<Entry<E>>,
    cancelled: HashSet<EventId>,
    next_id: u64,
    now: SimTime,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            cancelled: HashSet::new(),
            next_id: 0,
            now: SimTime::ZERO,
        }
    }

    /// Current clock: the time of the most recently popped event.
    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn schedule(&mut self, event: E, at: SimTime) -> Result<EventId> {
        if at < self.now {
            return Err(Error::ScheduleInPast { at, now: self.now });
        }
        let id = EventId(self.next_id);
        self.next_id += 1;
        self.heap.push(Entry { at, id, event });
        Ok(id)
    }

    /// Returns `true` if the event was still pending.
    pub fn cancel(&mut self, id: EventId) -> bool {
        if id.0 >= self.next_id || !self.heap.iter().any(|e| e.id == id) {
            return false;
        }
        self.cancelled.insert(id)
    }

    pub fn pop(&mut self) -> Option<(SimTime, E)> {
        while let Some(entry) = self.heap.pop() {
            if self.cancelled.remove(&entry.id) {
                continue;
            }
            self.now = entry.at;
            return Some((entry.at, entry.event));
        }
        None
    }

    pub fn peek_time(&mut self) -> Option<SimTime> {
        while let Some(entry) = self.heap.peek() {
            if self.cancelled.contains(&entry.id) {
                let id = entry.id;
                self.heap.pop();
                self.cancelled.remove(&id);
                continue;
            }
            return Some(entry.at);
        }
        None
    }

    pub fn len(&self) -> usize {
        self.heap.len() - self.cancelled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_event_pops() {
        let mut q = EventQueue::new();
        q.schedule("x", SimTime(0)).unwrap();
        assert_eq!(q.pop(), Some((SimTime(0), "x")));
        assert_eq!(q.pop(), None);
    }

    #[test]
    fn ties_are_fifo() {
        let mut q = EventQueue::new();
        q.schedule("a", SimTime(5)).unwrap();
        q.schedule("b", SimTime(5)).unwrap();
        q.schedule("c", SimTime(1)).unwrap();
        assert_eq!(q.pop().unwrap().1, "c");
        assert_eq!(q.pop().unwrap().1, "a");
        assert_eq!(q.pop().unwrap().1, "b");
    }

    #[test]
    fn past_is_rejected() {
        let mut q = EventQueue::new();
        q.schedule("d", SimTime(4)).unwrap();
        q.pop();
        assert_eq!(q.now(), SimTime(4));
        assert!(matches!(
            q.schedule("c", SimTime(3)),
            Err(Error::ScheduleInPast { .. })
        ));
        // scheduling at the current instant is allowed
        q.schedule("e", SimTime(4)).unwrap();
    }

    #[test]
    fn cancel_skips_event() {
        let mut q = EventQueue::new();
        let a = q.schedule(1, SimTime(1)).unwrap();
        q.schedule(2, SimTime(2)).unwrap();
        assert!(q.cancel(a));
        assert!(!q.cancel(a));
        assert_eq!(q.len(), 1);
        assert_eq!(q.peek_time(), Some(SimTime(2)));
        assert_eq!(q.pop(), Some((SimTime(2), 2)));
        assert!(q.is_empty());
    }
}
