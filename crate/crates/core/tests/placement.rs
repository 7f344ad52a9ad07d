use proptest::prelude::*;

use vdba::placement::Occupancy;
use vdba::FrameConfig;

/// Word-by-word model of a frame: `busy[w]` is true when word `w` is used.
struct Model {
    busy: Vec<bool>,
    guard: u32,
}

impl Model {
    fn fits(&self, start: u32, size: u32) -> bool {
        let lo = start.saturating_sub(self.guard) as usize;
        let hi = ((start + size + self.guard) as usize).min(self.busy.len());
        !self.busy[lo..hi].iter().any(|&b| b)
    }

    fn first_fit(&self, earliest: u32, latest: u32, size: u32) -> Option<u32> {
        (earliest..=latest).find(|&s| self.fits(s, size))
    }

    fn mark(&mut self, start: u32, size: u32) {
        for w in start..start + size {
            self.busy[w as usize] = true;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn matches_word_model(
        guard in 0u32..6,
        ops in prop::collection::vec((0u32..300, 0u32..120, 1u32..40), 1..60),
    ) {
        let cap = 400;
        let cfg = FrameConfig { capacity_words: cap, guard_words: guard };
        let mut occ = Occupancy::new(&cfg);
        // Padding past the frame end keeps the model's guard window in range.
        let mut model = Model { busy: vec![false; (cap + 64) as usize], guard };
        for (earliest, span, size) in ops {
            let latest = (earliest + span).min(cap - size);
            if earliest > latest {
                continue;
            }
            let expected = model.first_fit(earliest, latest, size);
            prop_assert_eq!(occ.first_fit(earliest, latest, size), expected);
            let placed = occ.try_place(earliest, latest, size);
            prop_assert_eq!(placed, expected, "try_place at [{}, {}] size {}", earliest, latest, size);
            if let Some(s) = placed {
                model.mark(s, size);
            }
            let iv = occ.intervals();
            prop_assert!(iv.windows(2).all(|w| w[0].1 + guard <= w[1].0));
        }
    }
}

#[test]
fn failed_search_is_remembered_but_looser_ones_still_run() {
    let cfg = FrameConfig {
        capacity_words: 100,
        guard_words: 2,
    };
    let mut occ = Occupancy::new(&cfg);
    assert_eq!(occ.try_place(10, 10, 20), Some(10));
    assert_eq!(occ.try_place(0, 20, 20), None);
    // Tighter than the miss: still fails.
    assert_eq!(occ.try_place(5, 15, 25), None);
    // Later latest bound: must search again and succeed.
    assert_eq!(occ.try_place(0, 40, 20), Some(32));
    assert_eq!(occ.len(), 2);
}
