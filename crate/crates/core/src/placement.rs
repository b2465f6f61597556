//! Slot assignment for ciphertext blobs on a storage server.
//!
//! File `n` starts probing at `n² mod S` and walks forward one slot at a
//! time (wrapping modulo `S`) until it finds a free slot. The number of
//! steps taken is recorded as the entry's offset, so
//! `position == (n² + offset) mod S` always holds.
//!
//! Removal leaves a tombstone so that later entries whose probe chain ran
//! through the removed slot stay reachable.

use std::fmt;
use std::num::NonZeroU64;
use std::str::FromStr;

use thiserror::Error;

/// Global 1-based file sequence number assigned by the system server.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct FileNumber(NonZeroU64);

impl FileNumber {
    pub fn new(n: u64) -> Option<Self> {
        NonZeroU64::new(n).map(Self)
    }

    pub fn get(self) -> u64 {
        self.0.get()
    }

    pub fn next(self) -> Self {
        Self(self.0.checked_add(1).expect("file number overflow"))
    }
}

impl fmt::Display for FileNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for FileNumber {
    type Err = PlacementError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<u64>()
            .ok()
            .and_then(FileNumber::new)
            .ok_or_else(|| PlacementError::Parse(format!("bad file number {s:?}")))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub struct PlacementEntry {
    pub position: u64,
    pub offset: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlacementError {
    #[error("seed must be at least 1")]
    InvalidSeed,
    #[error("placement table is full")]
    TableFull,
    #[error("file number {0} already placed")]
    DuplicateFileNumber(FileNumber),
    #[error("file number not found")]
    NotFound,
    #[error("malformed placement table: {0}")]
    Parse(String),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Slot {
    Empty,
    Tombstone,
    Live(FileNumber),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PlacementTable {
    seed: u64,
    slots: Vec<Slot>,
    count: usize,
}

impl PlacementTable {
    pub fn new(seed: u64) -> Result<Self, PlacementError> {
        if seed < 1 {
            return Err(PlacementError::InvalidSeed);
        }
        Ok(Self {
            seed,
            slots: vec![Slot::Empty; seed as usize],
            count: 0,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// `n² mod S`, computed without overflow.
    pub fn start_position(&self, n: FileNumber) -> u64 {
        let n = n.get() as u128;
        ((n * n) % self.seed as u128) as u64
    }

    fn slot_at(&self, start: u64, step: u64) -> usize {
        ((start as u128 + step as u128) % self.seed as u128) as usize
    }

    pub fn insert(&mut self, n: FileNumber) -> Result<PlacementEntry, PlacementError> {
        let start = self.start_position(n);
        let mut free: Option<PlacementEntry> = None;
        // Walk the whole chain to rule out a duplicate, remembering the first free slot.
        for step in 0..self.seed {
            let idx = self.slot_at(start, step);
            match self.slots[idx] {
                Slot::Live(m) if m == n => return Err(PlacementError::DuplicateFileNumber(n)),
                Slot::Live(_) => {}
                Slot::Tombstone => {
                    free.get_or_insert(PlacementEntry {
                        position: idx as u64,
                        offset: step,
                    });
                }
                Slot::Empty => {
                    free.get_or_insert(PlacementEntry {
                        position: idx as u64,
                        offset: step,
                    });
                    break;
                }
            }
        }
        let entry = free.ok_or(PlacementError::TableFull)?;
        self.slots[entry.position as usize] = Slot::Live(n);
        self.count += 1;
        Ok(entry)
    }

    pub fn locate(&self, n: FileNumber) -> Result<PlacementEntry, PlacementError> {
        let start = self.start_position(n);
        for step in 0..self.seed {
            let idx = self.slot_at(start, step);
            match self.slots[idx] {
                Slot::Empty => break,
                Slot::Live(m) if m == n => {
                    return Ok(PlacementEntry {
                        position: idx as u64,
                        offset: step,
                    })
                }
                _ => {}
            }
        }
        Err(PlacementError::NotFound)
    }

    pub fn remove(&mut self, n: FileNumber) -> Result<(), PlacementError> {
        let entry = self.locate(n)?;
        self.slots[entry.position as usize] = Slot::Tombstone;
        self.count -= 1;
        Ok(())
    }

    /// File number held at `position`, if live.
    pub fn occupant(&self, position: u64) -> Option<FileNumber> {
        match self.slots.get(position as usize) {
            Some(Slot::Live(n)) => Some(*n),
            _ => None,
        }
    }

    /// Live entries in position order.
    pub fn entries(&self) -> impl Iterator<Item = (FileNumber, PlacementEntry)> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter_map(move |(idx, slot)| match slot {
                Slot::Live(n) => {
                    let start = self.start_position(*n);
                    let offset = (idx as u64 + self.seed - start) % self.seed;
                    Some((
                        *n,
                        PlacementEntry {
                            position: idx as u64,
                            offset,
                        },
                    ))
                }
                _ => None,
            })
    }

    /// `S=<seed>` header, then `position<TAB>file_number<TAB>offset` per live slot.
    pub fn to_text(&self) -> String {
        let mut out = format!("S={}\n", self.seed);
        for (n, e) in self.entries() {
            out.push_str(&format!("{}\t{}\t{}\n", e.position, n, e.offset));
        }
        out
    }

    /// Rebuilds a table from explicit entries.
    ///
    /// Free slots lying inside some entry's probe prefix must have been
    /// occupied when that entry went in, so they come back as tombstones.
    pub fn from_entries<I>(seed: u64, entries: I) -> Result<Self, PlacementError>
    where
        I: IntoIterator<Item = (FileNumber, PlacementEntry)>,
    {
        let mut table = Self::new(seed)?;
        let mut placed = Vec::new();
        for (n, e) in entries {
            if e.position >= seed || e.offset >= seed {
                return Err(PlacementError::Parse(format!(
                    "entry for {n} out of range for S={seed}"
                )));
            }
            if table.slot_at(table.start_position(n), e.offset) as u64 != e.position {
                return Err(PlacementError::Parse(format!(
                    "entry for {n} violates position = n^2 + offset mod S"
                )));
            }
            if table.slots[e.position as usize] != Slot::Empty {
                return Err(PlacementError::Parse(format!(
                    "position {} assigned twice",
                    e.position
                )));
            }
            table.slots[e.position as usize] = Slot::Live(n);
            table.count += 1;
            placed.push((n, e));
        }
        let mut seen = std::collections::HashSet::new();
        for (n, _) in &placed {
            if !seen.insert(*n) {
                return Err(PlacementError::DuplicateFileNumber(*n));
            }
        }
        for (n, e) in &placed {
            let start = table.start_position(*n);
            for step in 0..e.offset {
                let idx = table.slot_at(start, step);
                if table.slots[idx] == Slot::Empty {
                    table.slots[idx] = Slot::Tombstone;
                }
            }
        }
        Ok(table)
    }

    pub fn from_text(text: &str) -> Result<Self, PlacementError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| PlacementError::Parse("missing header".into()))?;
        let seed = header
            .strip_prefix("S=")
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| PlacementError::Parse(format!("bad header {header:?}")))?;
        let mut entries = Vec::new();
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(PlacementError::Parse(format!("bad row {line:?}")));
            }
            let num = |s: &str| {
                s.parse::<u64>()
                    .map_err(|_| PlacementError::Parse(format!("bad number {s:?}")))
            };
            entries.push((
                cols[1].parse::<FileNumber>()?,
                PlacementEntry {
                    position: num(cols[0])?,
                    offset: num(cols[2])?,
                },
            ));
        }
        Self::from_entries(seed, entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fnum(n: u64) -> FileNumber {
        FileNumber::new(n).unwrap()
    }

    fn entry(position: u64, offset: u64) -> PlacementEntry {
        PlacementEntry { position, offset }
    }

    fn sequential(seed: u64, upto: u64) -> (PlacementTable, Vec<PlacementEntry>) {
        let mut t = PlacementTable::new(seed).unwrap();
        let entries = (1..=upto).map(|n| t.insert(fnum(n)).unwrap()).collect();
        (t, entries)
    }

    /// Independent simulator: a plain position -> file map, probed by brute force.
    fn brute_force(seed: u64, order: &[u64]) -> Vec<Option<u64>> {
        let mut slots: Vec<Option<u64>> = vec![None; seed as usize];
        for &n in order {
            let start = (n * n) % seed;
            let pos = (0..seed)
                .map(|j| ((start + j) % seed) as usize)
                .find(|&p| slots[p].is_none())
                .expect("room");
            slots[pos] = Some(n);
        }
        slots
    }

    #[test]
    fn constructor() {
        let t = PlacementTable::new(100).unwrap();
        assert_eq!((t.capacity(), t.len()), (100, 0));
        assert_eq!(PlacementTable::new(1).unwrap().capacity(), 1);
        assert_eq!(PlacementTable::new(0), Err(PlacementError::InvalidSeed));
    }

    #[test]
    fn sample_rows_with_seed_100() {
        let (_, e) = sequential(100, 20);
        assert_eq!(e[0], entry(1, 0));
        assert_eq!(e[1], entry(4, 0));
        assert_eq!(e[4], entry(25, 0));
        assert_eq!(e[14], entry(26, 1));
        assert_eq!(e[19], entry(2, 2));
        let slots = brute_force(100, &(1..=20).collect::<Vec<_>>());
        assert_eq!(slots[2], Some(20));
        assert_eq!(slots[26], Some(15));
    }

    #[test]
    fn locate_and_remove() {
        let (mut t, _) = sequential(100, 15);
        assert_eq!(t.locate(fnum(15)), Ok(entry(26, 1)));
        t.remove(fnum(5)).unwrap();
        assert_eq!(t.locate(fnum(5)), Err(PlacementError::NotFound));
        assert_eq!(t.locate(fnum(15)), Ok(entry(26, 1)));
        assert_eq!(t.remove(fnum(99)), Err(PlacementError::NotFound));
        assert_eq!(t.remove(fnum(5)), Err(PlacementError::NotFound));
        assert_eq!(
            PlacementTable::new(7).unwrap().locate(fnum(1)),
            Err(PlacementError::NotFound)
        );
        // Tombstone is reused by the next colliding insert.
        assert_eq!(t.insert(fnum(25)).unwrap(), entry(25, 0));
    }

    #[test]
    fn tombstones_survive_text_round_trip() {
        let (mut t, _) = sequential(100, 15);
        t.remove(fnum(5)).unwrap();
        let back = PlacementTable::from_text(&t.to_text()).unwrap();
        assert_eq!(back.locate(fnum(15)), Ok(entry(26, 1)));
        assert_eq!(back.to_text(), t.to_text());
        assert!(!back.to_text().contains("\t5\t"));
    }

    #[test]
    fn duplicate_and_full() {
        let mut t = PlacementTable::new(3).unwrap();
        t.insert(fnum(1)).unwrap();
        assert_eq!(
            t.insert(fnum(1)),
            Err(PlacementError::DuplicateFileNumber(fnum(1)))
        );
        t.insert(fnum(2)).unwrap();
        t.insert(fnum(3)).unwrap();
        assert_eq!(t.insert(fnum(4)), Err(PlacementError::TableFull));
        assert_eq!(
            t.insert(fnum(2)),
            Err(PlacementError::DuplicateFileNumber(fnum(2)))
        );
    }

    #[test]
    fn text_format() {
        let (t, _) = sequential(100, 2);
        assert_eq!(t.to_text(), "S=100\n1\t1\t0\n4\t2\t0\n");
        assert!(PlacementTable::from_text("S=10\n3\t1\t0\n").is_err());
        assert!(PlacementTable::from_text("S=10\n1\t1\t0\n1\t9\t0\n").is_err());
        assert!(PlacementTable::from_text("seed=10\n").is_err());
    }

    #[test]
    fn huge_file_numbers_do_not_overflow() {
        let mut t = PlacementTable::new(101).unwrap();
        let n = fnum(u64::MAX);
        let e = t.insert(n).unwrap();
        let expected = ((u64::MAX as u128).pow(2) % 101) as u64;
        assert_eq!(e, entry(expected, 0));
    }

    proptest! {
        #[test]
        fn matches_brute_force(seed in prop_oneof![Just(7u64), Just(100), Just(101)],
                               order in Just(()).prop_flat_map(|_| {
                                   proptest::collection::vec(1u64..1000, 0..120)
                               })) {
            let mut order = order;
            order.sort_unstable();
            order.dedup();
            order.truncate(seed as usize);
            let mut t = PlacementTable::new(seed).unwrap();
            for &n in &order {
                let e = t.insert(fnum(n)).unwrap();
                prop_assert_eq!((n as u128 * n as u128 + e.offset as u128) % seed as u128, e.position as u128);
                prop_assert!(e.offset < seed);
            }
            let oracle = brute_force(seed, &order);
            for (pos, want) in oracle.iter().enumerate() {
                prop_assert_eq!(t.occupant(pos as u64).map(|f| f.get()), *want);
            }
        }

        #[test]
        fn live_positions_stay_injective(ops in proptest::collection::vec((any::<bool>(), 1u64..40), 0..200)) {
            let mut t = PlacementTable::new(13).unwrap();
            let mut live = std::collections::HashMap::new();
            for (ins, n) in ops {
                if ins {
                    match t.insert(fnum(n)) {
                        Ok(e) => { live.insert(n, e); }
                        Err(PlacementError::DuplicateFileNumber(_)) => prop_assert!(live.contains_key(&n)),
                        Err(PlacementError::TableFull) => prop_assert_eq!(live.len(), 13),
                        Err(e) => prop_assert!(false, "{e}"),
                    }
                } else if live.remove(&n).is_some() {
                    t.remove(fnum(n)).unwrap();
                } else {
                    prop_assert_eq!(t.remove(fnum(n)), Err(PlacementError::NotFound));
                }
                let positions: std::collections::HashSet<_> = live.values().map(|e| e.position).collect();
                prop_assert_eq!(positions.len(), live.len());
                for (n, e) in &live {
                    prop_assert_eq!(t.locate(fnum(*n)).unwrap(), *e);
                }
                let back = PlacementTable::from_text(&t.to_text()).unwrap();
                for (n, e) in &live {
                    prop_assert_eq!(back.locate(fnum(*n)).unwrap(), *e);
                }
            }
        }
    }
}
