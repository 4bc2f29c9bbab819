//! Per-node routing table, indexed by destination.

use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteState {
    Valid,
    Invalid,
    /// Local repair in progress; data is buffered rather than forwarded.
    UnderRepair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteEntry {
    pub dest: NodeId,
    pub next_hop: NodeId,
    pub hop_count: u32,
    /// Zero when unknown.
    pub dest_seq: u32,
    pub path_fpd: f64,
    pub expiry: f64,
    pub state: RouteState,
    /// When this next hop was last chosen (not merely refreshed).
    pub installed_at: f64,
    /// Upstream neighbors that route through us toward `dest`; sorted.
    pub precursors: Vec<NodeId>,
}

impl RouteEntry {
    pub fn usable(&self, now: f64) -> bool {
        self.state == RouteState::Valid && self.expiry > now
    }

    pub fn add_precursor(&mut self, n: NodeId) {
        if let Err(i) = self.precursors.binary_search(&n) {
            self.precursors.insert(i, n);
        }
    }
}

/// Candidate route learned from an RREQ or RREP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteUpdate {
    pub dest: NodeId,
    pub next_hop: NodeId,
    pub hop_count: u32,
    pub dest_seq: u32,
    pub path_fpd: f64,
}

#[derive(Debug, Clone)]
pub struct RouteTable {
    entries: Vec<Option<RouteEntry>>,
}

impl RouteTable {
    pub fn new(node_count: usize) -> Self {
        RouteTable {
            entries: vec![None; node_count],
        }
    }

    pub fn get(&self, dest: NodeId) -> Option<&RouteEntry> {
        self.entries.get(dest as usize)?.as_ref()
    }

    pub fn get_mut(&mut self, dest: NodeId) -> Option<&mut RouteEntry> {
        self.entries.get_mut(dest as usize)?.as_mut()
    }

    pub fn valid(&self, dest: NodeId, now: f64) -> Option<&RouteEntry> {
        self.get(dest).filter(|e| e.usable(now))
    }

    pub fn iter(&self) -> impl Iterator<Item = &RouteEntry> {
        self.entries.iter().flatten()
    }

    /// Apply the sequence-number freshness rule. A candidate replaces the
    /// current entry if its sequence number is higher, or equal while the
    /// current entry is unusable or longer. `force` skips the hop-count
    /// comparison but still never accepts a lower sequence number.
    ///
    /// Returns whether the entry was replaced.
    pub fn update(&mut self, now: f64, lifetime: f64, u: RouteUpdate, force: bool) -> bool {
        let slot = &mut self.entries[u.dest as usize];
        let replace = match slot {
            None => true,
            Some(e) => {
                u.dest_seq > e.dest_seq
                    || (u.dest_seq == e.dest_seq
                        && (!e.usable(now) || u.hop_count < e.hop_count || force))
            }
        };
        if !replace {
            if let Some(e) = slot {
                if e.usable(now) && e.next_hop == u.next_hop && u.dest_seq == e.dest_seq {
                    e.expiry = e.expiry.max(now + lifetime);
                }
            }
            return false;
        }
        let precursors = slot.take().map(|e| e.precursors).unwrap_or_default();
        *slot = Some(RouteEntry {
            dest: u.dest,
            next_hop: u.next_hop,
            hop_count: u.hop_count,
            dest_seq: u.dest_seq,
            path_fpd: u.path_fpd,
            expiry: now + lifetime,
            state: RouteState::Valid,
            installed_at: now,
            precursors,
        });
        true
    }

    /// Route to a direct neighbor heard on the air. Keeps any known sequence
    /// number.
    pub fn touch_neighbor(&mut self, now: f64, lifetime: f64, n: NodeId) {
        let slot = &mut self.entries[n as usize];
        match slot {
            Some(e) if e.usable(now) && e.hop_count == 1 && e.next_hop == n => {
                e.expiry = e.expiry.max(now + lifetime);
            }
            _ => {
                let (seq, precursors) = slot
                    .take()
                    .map(|e| (e.dest_seq, e.precursors))
                    .unwrap_or((0, Vec::new()));
                *slot = Some(RouteEntry {
                    dest: n,
                    next_hop: n,
                    hop_count: 1,
                    dest_seq: seq,
                    path_fpd: 0.0,
                    expiry: now + lifetime,
                    state: RouteState::Valid,
                    installed_at: now,
                    precursors,
                });
            }
        }
    }

    pub fn refresh(&mut self, dest: NodeId, now: f64, lifetime: f64) {
        if let Some(e) = self.get_mut(dest) {
            if e.usable(now) {
                e.expiry = e.expiry.max(now + lifetime);
            }
        }
    }

    /// Mark invalid and bump the sequence number so stale copies of the old
    /// route are never re-accepted.
    pub fn invalidate(&mut self, dest: NodeId) -> Option<&RouteEntry> {
        let e = self.get_mut(dest)?;
        if e.state != RouteState::Invalid {
            e.state = RouteState::Invalid;
            e.dest_seq = e.dest_seq.wrapping_add(1);
        }
        Some(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn upd(seq: u32, hops: u32, via: NodeId) -> RouteUpdate {
        RouteUpdate {
            dest: 3,
            next_hop: via,
            hop_count: hops,
            dest_seq: seq,
            path_fpd: 0.0,
        }
    }

    #[test]
    fn never_overwrites_with_lower_seq() {
        let mut t = RouteTable::new(5);
        assert!(t.update(0.0, 10.0, upd(5, 4, 1), false));
        assert!(!t.update(0.0, 10.0, upd(4, 1, 2), false));
        assert!(!t.update(0.0, 10.0, upd(4, 1, 2), true));
        assert_eq!(t.get(3).unwrap().next_hop, 1);
    }

    #[test]
    fn equal_seq_prefers_fewer_hops() {
        let mut t = RouteTable::new(5);
        t.update(0.0, 10.0, upd(5, 4, 1), false);
        assert!(!t.update(0.0, 10.0, upd(5, 4, 2), false));
        assert!(t.update(0.0, 10.0, upd(5, 2, 2), false));
        assert_eq!(t.get(3).unwrap().hop_count, 2);
    }

    #[test]
    fn invalidation_bumps_seq_and_allows_equal_replacement() {
        let mut t = RouteTable::new(5);
        t.update(0.0, 10.0, upd(5, 2, 1), false);
        t.invalidate(3);
        let e = t.get(3).unwrap();
        assert_eq!((e.state, e.dest_seq), (RouteState::Invalid, 6));
        assert!(t.valid(3, 0.0).is_none());
        assert!(t.update(1.0, 10.0, upd(6, 5, 2), false));
        assert!(t.valid(3, 1.0).is_some());
    }

    #[test]
    fn expiry_makes_route_unusable() {
        let mut t = RouteTable::new(5);
        t.update(0.0, 10.0, upd(5, 2, 1), false);
        assert!(t.valid(3, 9.9).is_some());
        assert!(t.valid(3, 10.0).is_none());
    }

    #[test]
    fn precursors_stay_sorted_and_unique() {
        let mut t = RouteTable::new(5);
        t.update(0.0, 10.0, upd(5, 2, 1), false);
        let e = t.get_mut(3).unwrap();
        for p in [4, 0, 4, 2] {
            e.add_precursor(p);
        }
        assert_eq!(e.precursors, vec![0, 2, 4]);
    }
}
