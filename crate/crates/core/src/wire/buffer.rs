use std::sync::atomic::{AtomicU64, Ordering};

use crossbeam::queue::ArrayQueue;

/// Default slot count: more than one control tick of slack against a 100 Hz source.
pub const DEFAULT_CAPACITY: usize = 8;

/// Bounded ingress queue that evicts its oldest entry on overflow.
///
/// Safe for one producer and one consumer operating concurrently; neither
/// side blocks. Every push stores the new item.
#[derive(Debug)]
pub struct DropOldestBuffer<T> {
    slots: ArrayQueue<T>,
    pushed: AtomicU64,
    evicted: AtomicU64,
    stale: AtomicU64,
}

/// Drop accounting, exported with telemetry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct BufferCounters {
    pub pushed: u64,
    /// Overwritten because the buffer was full.
    pub evicted: u64,
    /// Discarded by `take_latest` because a newer entry existed.
    pub stale: u64,
}

impl BufferCounters {
    pub fn dropped(&self) -> u64 {
        self.evicted + self.stale
    }

    pub fn merged(self, o: Self) -> Self {
        Self {
            pushed: self.pushed + o.pushed,
            evicted: self.evicted + o.evicted,
            stale: self.stale + o.stale,
        }
    }
}

impl<T> DropOldestBuffer<T> {
    /// # Panics
    /// If `capacity` is zero.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self {
            slots: ArrayQueue::new(capacity),
            pushed: AtomicU64::new(0),
            evicted: AtomicU64::new(0),
            stale: AtomicU64::new(0),
        }
    }

    pub fn capacity(&self) -> usize {
        self.slots.capacity()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Stores `item`, returning the evicted oldest entry if the buffer was full.
    pub fn push(&self, item: T) -> Option<T> {
        self.pushed.fetch_add(1, Ordering::Relaxed);
        let evicted = self.slots.force_push(item);
        if evicted.is_some() {
            self.evicted.fetch_add(1, Ordering::Relaxed);
        }
        evicted
    }

    /// Empties the buffer and returns its newest entry.
    pub fn take_latest(&self) -> Option<T> {
        let mut latest = self.slots.pop()?;
        let mut discarded = 0;
        while let Some(next) = self.slots.pop() {
            latest = next;
            discarded += 1;
        }
        if discarded > 0 {
            self.stale.fetch_add(discarded, Ordering::Relaxed);
        }
        Some(latest)
    }

    pub fn counters(&self) -> BufferCounters {
        BufferCounters {
            pushed: self.pushed.load(Ordering::Relaxed),
            evicted: self.evicted.load(Ordering::Relaxed),
            stale: self.stale.load(Ordering::Relaxed),
        }
    }
}

impl<T> Default for DropOldestBuffer<T> {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::VecDeque;
    use std::sync::Arc;

    #[test]
    fn evicts_oldest_when_full() {
        let b = DropOldestBuffer::new(2);
        assert_eq!(b.push('a'), None);
        assert_eq!(b.push('b'), None);
        assert_eq!(b.push('c'), Some('a'));
        assert_eq!(b.len(), 2);
        assert_eq!(b.counters().evicted, 1);
    }

    #[test]
    fn take_latest_clears_and_counts_stale() {
        let b = DropOldestBuffer::new(4);
        for c in ['a', 'b', 'c'] {
            b.push(c);
        }
        assert_eq!(b.take_latest(), Some('c'));
        assert!(b.is_empty());
        assert_eq!(b.counters().stale, 2);
        assert_eq!(b.take_latest(), None);
    }

    #[test]
    fn eviction_count_matches_overflow() {
        for (n, cap) in [(0usize, 3usize), (3, 3), (10, 3), (100, 8)] {
            let b = DropOldestBuffer::new(cap);
            let evicted = (0..n).filter(|&i| b.push(i).is_some()).count();
            assert_eq!(evicted, n.saturating_sub(cap));
        }
    }

    #[test]
    fn concurrent_producer_consumer_sees_monotone_items() {
        let b = Arc::new(DropOldestBuffer::new(DEFAULT_CAPACITY));
        let producer = {
            let b = Arc::clone(&b);
            std::thread::spawn(move || {
                for i in 0..200_000u64 {
                    b.push(i);
                }
            })
        };
        let mut last = None;
        let mut taken = 0u64;
        while !producer.is_finished() || !b.is_empty() {
            if let Some(v) = b.take_latest() {
                assert!(last.is_none_or(|l| v > l));
                last = Some(v);
                taken += 1;
            }
        }
        producer.join().unwrap();
        let c = b.counters();
        assert_eq!(c.pushed, 200_000);
        assert_eq!(last, Some(199_999));
        assert_eq!(taken + c.dropped(), 200_000);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Push(u32),
        Take,
    }

    fn arb_op() -> impl Strategy<Value = Op> {
        prop_oneof![any::<u32>().prop_map(Op::Push), Just(Op::Take)]
    }

    proptest! {
        // Reference model: a plain deque with explicit drop-oldest semantics.
        #[test]
        fn matches_reference_queue(cap in 1usize..6, ops in proptest::collection::vec(arb_op(), 0..200)) {
            let b = DropOldestBuffer::new(cap);
            let mut model: VecDeque<u32> = VecDeque::new();
            for op in ops {
                match op {
                    Op::Push(v) => {
                        let expect = if model.len() == cap { model.pop_front() } else { None };
                        model.push_back(v);
                        prop_assert_eq!(b.push(v), expect);
                        prop_assert!(b.len() <= cap);
                    }
                    Op::Take => {
                        let expect = model.back().copied();
                        model.clear();
                        prop_assert_eq!(b.take_latest(), expect);
                    }
                }
            }
        }
    }
}
