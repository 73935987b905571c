//! Spillable distinct-identity map. Entries live in a hash map until
//! the in-memory budget is hit, then flush as sorted fixed-width runs
//! on disk; queries k-way merge the runs with the live map. Merging is
//! commutative (min first-seen day, earliest country with lexicographic
//! ties, conflict marking), so duplicate keys across runs are fine and
//! ingestion never needs disk lookups.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::PathBuf;

const REC_LEN: usize = 20; // key u64 | day i32 | country [u8;3] | flags u8 | pad [u8;4]

/// Merged per-key state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub first_day: i32,
    /// Day the country was first observed; i32::MAX when none.
    pub country_day: i32,
    pub country: [u8; 3],
    pub conflicted: bool,
}

impl Slot {
    fn new(day: i32, country: Option<[u8; 3]>) -> Slot {
        Slot {
            first_day: day,
            country_day: if country.is_some() { day } else { i32::MAX },
            country: country.unwrap_or([0; 3]),
            conflicted: false,
        }
    }

    fn merge(&mut self, day: i32, country: Option<[u8; 3]>) {
        self.first_day = self.first_day.min(day);
        if let Some(c) = country {
            if self.country == [0; 3] {
                self.country = c;
                self.country_day = day;
            } else if c != self.country {
                self.conflicted = true;
                // first-seen wins; same-day ties resolve to the
                // lexicographically smaller code for order invariance
                if day < self.country_day || (day == self.country_day && c < self.country) {
                    self.country = c;
                    self.country_day = day;
                }
            } else {
                self.country_day = self.country_day.min(day);
            }
        }
    }

    fn merge_slot(&mut self, other: &Slot) {
        self.first_day = self.first_day.min(other.first_day);
        self.conflicted |= other.conflicted;
        if other.country != [0; 3] {
            let c = other.country;
            if self.country == [0; 3] {
                self.country = c;
                self.country_day = other.country_day;
            } else if c != self.country {
                self.conflicted = true;
                if other.country_day < self.country_day
                    || (other.country_day == self.country_day && c < self.country)
                {
                    self.country = c;
                    self.country_day = other.country_day;
                }
            } else {
                self.country_day = self.country_day.min(other.country_day);
            }
        }
    }
}

fn encode(key: u64, slot: &Slot, out: &mut Vec<u8>) {
    out.extend_from_slice(&key.to_be_bytes());
    out.extend_from_slice(&slot.first_day.to_be_bytes());
    out.extend_from_slice(&slot.country);
    out.push(slot.conflicted as u8);
    out.extend_from_slice(&slot.country_day.to_be_bytes());
}

fn decode(buf: &[u8; REC_LEN]) -> (u64, Slot) {
    let key = u64::from_be_bytes(buf[0..8].try_into().unwrap());
    let first_day = i32::from_be_bytes(buf[8..12].try_into().unwrap());
    let country = [buf[12], buf[13], buf[14]];
    let conflicted = buf[15] != 0;
    let country_day = i32::from_be_bytes(buf[16..20].try_into().unwrap());
    (
        key,
        Slot {
            first_day,
            country_day,
            country,
            conflicted,
        },
    )
}

pub struct SpillMap {
    mem: HashMap<u64, Slot>,
    budget: usize,
    spill_base: Option<PathBuf>,
    runs: Vec<PathBuf>,
}

impl std::fmt::Debug for SpillMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpillMap")
            .field("mem_entries", &self.mem.len())
            .field("runs", &self.runs.len())
            .finish()
    }
}

impl SpillMap {
    pub fn in_memory() -> SpillMap {
        SpillMap {
            mem: HashMap::new(),
            budget: usize::MAX,
            spill_base: None,
            runs: Vec::new(),
        }
    }

    pub fn spilling(base: PathBuf, budget: usize) -> SpillMap {
        SpillMap {
            mem: HashMap::new(),
            budget: budget.max(1),
            spill_base: Some(base),
            runs: Vec::new(),
        }
    }

    pub fn upsert(&mut self, key: u64, day: i32, country: Option<[u8; 3]>) {
        match self.mem.get_mut(&key) {
            Some(slot) => slot.merge(day, country),
            None => {
                if self.mem.len() >= self.budget && self.spill_base.is_some() {
                    self.flush_run();
                }
                self.mem.insert(key, Slot::new(day, country));
            }
        }
    }

    fn flush_run(&mut self) {
        let base = self.spill_base.as_ref().expect("spill dir configured");
        if let Some(parent) = base.parent() {
            let _ = std::fs::create_dir_all(parent);
        }
        let path = base.with_extension(format!("run{}", self.runs.len()));
        let mut entries: Vec<(u64, Slot)> = self.mem.drain().collect();
        entries.sort_by_key(|(k, _)| *k);
        let file = File::create(&path).expect("create spill run");
        let mut w = BufWriter::new(file);
        let mut buf = Vec::with_capacity(REC_LEN);
        for (key, slot) in entries {
            buf.clear();
            encode(key, &slot, &mut buf);
            w.write_all(&buf).expect("write spill run");
        }
        w.flush().expect("flush spill run");
        self.runs.push(path);
    }

    pub fn run_count(&self) -> usize {
        self.runs.len()
    }

    /// Visit every distinct key with its fully merged slot, in
    /// ascending key order.
    pub fn for_each_merged(&self, mut visit: impl FnMut(u64, &Slot)) {
        let mut mem_sorted: Vec<(u64, Slot)> =
            self.mem.iter().map(|(k, v)| (*k, *v)).collect();
        mem_sorted.sort_by_key(|(k, _)| *k);

        let mut sources: Vec<Box<dyn Iterator<Item = (u64, Slot)>>> =
            vec![Box::new(mem_sorted.into_iter())];
        for path in &self.runs {
            let file = File::open(path).expect("open spill run");
            sources.push(Box::new(RunReader {
                reader: BufReader::new(file),
            }));
        }

        // k-way merge, combining equal keys across sources
        let mut heap: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
        let mut heads: Vec<Option<(u64, Slot)>> = Vec::new();
        for (i, src) in sources.iter_mut().enumerate() {
            let head = src.next();
            if let Some((k, _)) = head {
                heap.push(Reverse((k, i)));
            }
            heads.push(head);
        }
        let mut current: Option<(u64, Slot)> = None;
        while let Some(Reverse((key, i))) = heap.pop() {
            let (_, slot) = heads[i].take().expect("head present");
            match &mut current {
                Some((ck, cs)) if *ck == key => cs.merge_slot(&slot),
                Some((ck, cs)) => {
                    visit(*ck, cs);
                    current = Some((key, slot));
                }
                None => current = Some((key, slot)),
            }
            let next = sources[i].next();
            if let Some((nk, _)) = next {
                heap.push(Reverse((nk, i)));
            }
            heads[i] = next;
        }
        if let Some((k, s)) = current {
            visit(k, &s);
        }
    }
}

struct RunReader {
    reader: BufReader<File>,
}

impl Iterator for RunReader {
    type Item = (u64, Slot);

    fn next(&mut self) -> Option<(u64, Slot)> {
        let mut buf = [0u8; REC_LEN];
        match self.reader.read_exact(&mut buf) {
            Ok(()) => Some(decode(&buf)),
            Err(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn collect(map: &SpillMap) -> Vec<(u64, Slot)> {
        let mut out = Vec::new();
        map.for_each_merged(|k, s| out.push((k, *s)));
        out
    }

    #[test]
    fn min_day_and_conflicts_merge() {
        let mut map = SpillMap::in_memory();
        map.upsert(1, 5, Some(*b"BRA"));
        map.upsert(1, 2, Some(*b"CHN"));
        map.upsert(2, 7, None);
        let out = collect(&map);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].1.first_day, 2);
        assert_eq!(&out[0].1.country, b"CHN");
        assert!(out[0].1.conflicted);
        assert_eq!(out[1].1.first_day, 7);
        assert_eq!(out[1].1.country, [0; 3]);
    }

    #[test]
    fn spilled_runs_merge_identically() {
        let dir = std::env::temp_dir().join(format!("tiktriage-spill-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();

        let mut spilled = SpillMap::spilling(dir.join("t"), 16);
        let mut mem = SpillMap::in_memory();
        // overlapping keys across flush boundaries, reverse day order
        for i in (0..200u64).rev() {
            let key = i % 50;
            let day = (i % 7) as i32;
            let country = if i % 3 == 0 { Some(*b"BRA") } else { Some(*b"CHN") };
            spilled.upsert(key, day, country);
            mem.upsert(key, day, country);
        }
        assert!(spilled.run_count() > 0, "budget must force spills");
        assert_eq!(collect(&spilled), collect(&mem));
        let _ = std::fs::remove_dir_all(&dir);
    }
}
