//! Discrete-event core: virtual clock, totally ordered event queue and the
//! optional event-trace sink.
//!
//! Events are ordered by `(fire_time, sequence)`. The sequence number is a
//! global insertion counter, so two events scheduled for the same instant
//! fire in the order they were scheduled.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

/// Handle returned by [`Scheduler::schedule`]; permits cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn sequence(self) -> u64 {
        self.0
    }
}

/// Virtual clock of a run. `now` never decreases and never passes `end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    now: f64,
    end: f64,
}

impl SimClock {
    pub fn new(end: f64) -> Self {
        SimClock { now: 0.0, end }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn set_end(&mut self, end: f64) {
        assert!(end >= self.now, "clock end {end} precedes now {}", self.now);
        self.end = end;
    }

    fn advance(&mut self, t: f64) {
        assert!(t >= self.now, "clock regression: {t} < {}", self.now);
        assert!(t <= self.end, "clock overrun: {t} > {}", self.end);
        self.now = t;
    }
}

struct Entry<E> {
    time: f64,
    seq: u64,
    payload: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // Reversed so that BinaryHeap (a max-heap) pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Event queue plus clock.
pub struct Scheduler<E> {
    clock: SimClock,
    next_seq: u64,
    heap: BinaryHeap<Entry<E>>,
    cancelled: HashSet<u64>,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            clock: SimClock::new(f64::INFINITY),
            next_seq: 0,
            heap: BinaryHeap::new(),
            cancelled: HashSet::new(),
        }
    }

    pub fn now(&self) -> f64 {
        self.clock.now()
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    /// Enqueue `payload` to fire `delay` seconds from now.
    ///
    /// Panics on a negative or non-finite delay: that is a programming error
    /// in a model and the run cannot continue meaningfully.
    pub fn schedule(&mut self, payload: E, delay: f64) -> EventHandle {
        assert!(
            delay >= 0.0 && delay.is_finite(),
            "schedule: invalid delay {delay}"
        );
        let time = self.clock.now() + delay;
        self.push(time, payload)
    }

    /// Enqueue at an absolute time, which must not be in the past.
    pub fn schedule_at(&mut self, payload: E, time: f64) -> EventHandle {
        assert!(
            time >= self.clock.now() && time.is_finite(),
            "schedule_at: {time} is before now {}",
            self.clock.now()
        );
        self.push(time, payload)
    }

    fn push(&mut self, time: f64, payload: E) -> EventHandle {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry { time, seq, payload });
        EventHandle(seq)
    }

    /// Cancel a pending event. Cancelling an event that already fired is a no-op.
    pub fn cancel(&mut self, handle: EventHandle) {
        if handle.0 < self.next_seq {
            self.cancelled.insert(handle.0);
        }
    }

    /// Pop the next live event with `fire_time <= end`, advancing the clock to it.
    pub fn pop_until(&mut self, end: f64) -> Option<(f64, EventHandle, E)> {
        self.clock.set_end(end.max(self.clock.now()));
        loop {
            let top = self.heap.peek()?;
            if top.time > end {
                return None;
            }
            let entry = self.heap.pop().expect("peeked");
            if self.cancelled.remove(&entry.seq) {
                continue;
            }
            self.clock.advance(entry.time);
            return Some((entry.time, EventHandle(entry.seq), entry.payload));
        }
    }

    /// Move the clock forward to `t` without processing anything.
    pub fn advance_to(&mut self, t: f64) {
        self.clock.set_end(t.max(self.clock.now()));
        self.clock.advance(t);
    }

    /// Number of queued entries, cancelled ones included.
    pub fn queued(&self) -> usize {
        self.heap.len()
    }
}

/// Where trace lines go.
enum Sink {
    Memory(Vec<u8>),
    File(BufWriter<File>),
}

/// Event trace: one line per record, `<time> <node> <kind> <detail>`.
///
/// Time is printed with nine decimals (nanosecond resolution) so traces
/// compare byte-for-byte across runs.
pub struct Trace {
    sink: Sink,
}

impl Trace {
    pub fn memory() -> Self {
        Trace {
            sink: Sink::Memory(Vec::new()),
        }
    }

    pub fn file(path: &Path) -> io::Result<Self> {
        Ok(Trace {
            sink: Sink::File(BufWriter::new(File::create(path)?)),
        })
    }

    pub fn record(&mut self, time: f64, node: Option<u32>, kind: &str, detail: fmt::Arguments<'_>) {
        let res = match &mut self.sink {
            Sink::Memory(buf) => write_line(buf, time, node, kind, detail),
            Sink::File(w) => write_line(w, time, node, kind, detail),
        };
        res.expect("trace write failed");
    }

    /// Flush and return the in-memory contents (empty for file sinks).
    pub fn finish(self) -> io::Result<Vec<u8>> {
        match self.sink {
            Sink::Memory(buf) => Ok(buf),
            Sink::File(mut w) => {
                w.flush()?;
                Ok(Vec::new())
            }
        }
    }
}

fn write_line<W: Write>(
    w: &mut W,
    time: f64,
    node: Option<u32>,
    kind: &str,
    detail: fmt::Arguments<'_>,
) -> io::Result<()> {
    match node {
        Some(n) => writeln!(w, "{time:.9} {n} {kind} {detail}"),
        None => writeln!(w, "{time:.9} - {kind} {detail}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_delay_fires_now_after_earlier_sequence() {
        let mut s = Scheduler::new();
        s.schedule("a", 0.0);
        s.schedule("b", 0.0);
        let (t, _, p) = s.pop_until(10.0).unwrap();
        assert_eq!((t, p), (0.0, "a"));
        let (t, _, p) = s.pop_until(10.0).unwrap();
        assert_eq!((t, p), (0.0, "b"));
    }

    #[test]
    fn same_time_ties_break_by_insertion() {
        let mut s = Scheduler::new();
        s.schedule(1, 1.0);
        s.schedule(2, 1.0);
        s.schedule(0, 0.5);
        let order: Vec<i32> = std::iter::from_fn(|| s.pop_until(5.0).map(|e| e.2)).collect();
        assert_eq!(order, vec![0, 1, 2]);
        assert_eq!(s.now(), 1.0);
    }

    #[test]
    #[should_panic(expected = "invalid delay")]
    fn negative_delay_faults() {
        let mut s = Scheduler::new();
        s.schedule((), -0.1);
    }

    #[test]
    fn cancelled_events_are_skipped() {
        let mut s = Scheduler::new();
        let h = s.schedule("x", 1.0);
        s.schedule("y", 2.0);
        s.cancel(h);
        assert_eq!(s.pop_until(5.0).unwrap().2, "y");
        assert!(s.pop_until(5.0).is_none());
    }

    #[test]
    fn pop_until_respects_horizon() {
        let mut s = Scheduler::new();
        s.schedule("late", 3.0);
        assert!(s.pop_until(2.0).is_none());
        s.advance_to(2.0);
        assert_eq!(s.now(), 2.0);
        assert_eq!(s.pop_until(3.0).unwrap().0, 3.0);
    }

    #[test]
    fn trace_line_format() {
        let mut t = Trace::memory();
        t.record(1.5, Some(3), "rx", format_args!("DATA from=2"));
        t.record(0.25, None, "end", format_args!(""));
        let s = String::from_utf8(t.finish().unwrap()).unwrap();
        assert_eq!(s, "1.500000000 3 rx DATA from=2\n0.250000000 - end \n");
    }
}
