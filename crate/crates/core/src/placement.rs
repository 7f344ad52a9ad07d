//! Guard-aware occupancy of one frame with earliest-fit search.

use crate::frame::FrameConfig;

#[derive(Debug, Clone)]
pub struct Occupancy {
    guard: u32,
    /// `(start, end)` of every placed burst, sorted and disjoint.
    busy: Vec<(u32, u32)>,
    /// `(size, latest, earliest)` searches that found nothing. Occupancy only
    /// grows, so any search at least as constrained fails as well.
    misses: Vec<(u32, u32, u32)>,
}

impl Occupancy {
    pub fn new(cfg: &FrameConfig) -> Self {
        Self {
            guard: cfg.guard_words,
            busy: Vec::new(),
            misses: Vec::new(),
        }
    }

    pub fn with_capacity(cfg: &FrameConfig, bursts: usize) -> Self {
        Self {
            guard: cfg.guard_words,
            busy: Vec::with_capacity(bursts),
            misses: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.busy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.busy.is_empty()
    }

    /// Placed bursts as `(start, end)` in start order.
    pub fn intervals(&self) -> &[(u32, u32)] {
        &self.busy
    }

    /// Index of the first burst starting at or after `start`, and the
    /// earliest start that clears its predecessor's guard.
    fn seek(&self, start: u32) -> (usize, u32) {
        let i = self.busy.partition_point(|&(s, _)| s < start);
        let start = match i.checked_sub(1).map(|p| self.busy[p]) {
            Some((_, end)) => start.max(end + self.guard),
            None => start,
        };
        (i, start)
    }

    /// Earliest start in `[earliest, latest]` where `size` words fit with a
    /// guard interval on both sides of every placed burst.
    pub fn first_fit(&self, earliest: u32, latest: u32, size: u32) -> Option<u32> {
        self.fit_at(earliest, latest, size).map(|(_, s)| s)
    }

    fn fit_at(&self, earliest: u32, latest: u32, size: u32) -> Option<(usize, u32)> {
        let (mut i, mut start) = self.seek(earliest);
        loop {
            if start > latest {
                return None;
            }
            match self.busy.get(i) {
                Some(&(next_start, next_end)) if start + size + self.guard > next_start => {
                    start = start.max(next_end + self.guard);
                    i += 1;
                }
                _ => return Some((i, start)),
            }
        }
    }

    pub fn is_free(&self, start: u32, size: u32) -> bool {
        self.fit_at(start, start, size).is_some()
    }

    pub fn insert(&mut self, start: u32, size: u32) {
        debug_assert!(
            self.is_free(start, size),
            "placing over a busy slot at {start}"
        );
        let i = self.busy.partition_point(|&(s, _)| s < start);
        self.busy.insert(i, (start, start + size));
    }

    pub fn try_place(&mut self, earliest: u32, latest: u32, size: u32) -> Option<u32> {
        if self
            .misses
            .iter()
            .any(|&(s, l, e)| size >= s && latest <= l && earliest >= e)
        {
            return None;
        }
        let Some((i, start)) = self.fit_at(earliest, latest, size) else {
            match self
                .misses
                .iter_mut()
                .find(|(s, l, _)| *s == size && *l == latest)
            {
                Some(miss) => miss.2 = miss.2.min(earliest),
                None => self.misses.push((size, latest, earliest)),
            }
            return None;
        };
        self.busy.insert(i, (start, start + size));
        Some(start)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn occ(guard: u32) -> Occupancy {
        Occupancy::new(&FrameConfig {
            capacity_words: 10_000,
            guard_words: guard,
        })
    }

    #[test]
    fn empty_frame_fits_at_earliest() {
        assert_eq!(occ(31).first_fit(17, 100, 50), Some(17));
    }

    #[test]
    fn skips_busy_slots_with_guard() {
        let mut o = occ(31);
        o.insert(0, 325);
        assert_eq!(o.first_fit(0, 3_888, 325), Some(356));
        o.insert(356, 325);
        assert_eq!(o.first_fit(0, 3_888, 325), Some(712));
        assert_eq!(o.first_fit(0, 700, 325), None);
    }

    #[test]
    fn fits_into_gap_only_when_guards_allow() {
        let mut o = occ(10);
        o.insert(0, 100);
        o.insert(300, 100);
        // gap [110, 290) holds 180 words
        assert_eq!(o.first_fit(0, 1_000, 180), Some(110));
        assert_eq!(o.first_fit(0, 1_000, 181), Some(410));
        assert_eq!(o.first_fit(150, 1_000, 140), Some(150));
        assert_eq!(o.first_fit(151, 1_000, 140), Some(410));
    }

    #[test]
    fn respects_latest_bound() {
        let mut o = occ(0);
        o.insert(10, 10);
        assert_eq!(o.first_fit(5, 9, 10), None);
        assert_eq!(o.first_fit(5, 20, 10), Some(20));
        assert_eq!(o.first_fit(0, 0, 10), Some(0));
    }
}
