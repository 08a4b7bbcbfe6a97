//! Round-robin selection of at most one UE per TTI.
//!
//! A UE is eligible when it is listening and has either queued bits or a
//! pending control element; CE-only grants must be possible so that the
//! policy can command sleep the moment a queue empties.

/// What the scheduler needs to know about one UE.
#[derive(Debug, Clone, Copy)]
pub struct UeSchedView {
    pub active: bool,
    pub queue_bits: u64,
    pub pending_ce: bool,
}

impl UeSchedView {
    fn eligible(&self) -> bool {
        self.active && (self.queue_bits > 0 || self.pending_ce)
    }
}

/// Rotation pointer of the round-robin scan.
#[derive(Debug, Clone, Copy, Default)]
pub struct RrState {
    next_index: usize,
}

impl RrState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Scans cyclically from the rotation pointer and grants the first
    /// eligible UE, advancing the pointer past it.
    pub fn schedule(&mut self, ues: &[UeSchedView]) -> Option<usize> {
        let picked = self.peek(ues)?;
        self.next_index = (picked + 1) % ues.len();
        Some(picked)
    }

    /// The UE `schedule` would grant, without advancing the rotation.
    pub fn peek(&self, ues: &[UeSchedView]) -> Option<usize> {
        if ues.is_empty() {
            return None;
        }
        let n = ues.len();
        (0..n).map(|k| (self.next_index + k) % n).find(|&i| ues[i].eligible())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn view(active: bool, queue_bits: u64, pending_ce: bool) -> UeSchedView {
        UeSchedView { active, queue_bits, pending_ce }
    }

    #[test]
    fn nothing_to_send_grants_nobody() {
        let mut rr = RrState::new();
        let ues = vec![view(true, 0, false), view(true, 0, false)];
        assert_eq!(rr.schedule(&ues), None);
    }

    #[test]
    fn single_backlogged_ue_gets_every_tti() {
        let mut rr = RrState::new();
        let ues = vec![view(true, 100, false)];
        for _ in 0..5 {
            assert_eq!(rr.schedule(&ues), Some(0));
        }
    }

    #[test]
    fn three_eligible_ues_rotate() {
        let mut rr = RrState::new();
        let ues = vec![view(true, 1, false), view(true, 1, false), view(true, 1, false)];
        let picks: Vec<_> = (0..6).map(|_| rr.schedule(&ues).unwrap()).collect();
        assert_eq!(picks, vec![0, 1, 2, 0, 1, 2]);
    }

    #[test]
    fn sleeping_ue_is_skipped_even_with_backlog() {
        let mut rr = RrState::new();
        let ues = vec![view(false, 1_000_000, true), view(true, 10, false)];
        for _ in 0..4 {
            assert_eq!(rr.schedule(&ues), Some(1));
        }
    }

    #[test]
    fn empty_queue_with_pending_ce_is_eligible() {
        let mut rr = RrState::new();
        let ues = vec![view(true, 0, true)];
        assert_eq!(rr.schedule(&ues), Some(0));
    }

    proptest! {
        /// Over a window where the eligible set is fixed, per-UE grant counts
        /// differ by at most one.
        #[test]
        fn fairness_over_fixed_eligible_set(
            eligible in prop::collection::vec(any::<bool>(), 1..10),
            start in 0usize..10,
            rounds in 1usize..100,
        ) {
            prop_assume!(eligible.iter().any(|&e| e));
            let ues: Vec<UeSchedView> =
                eligible.iter().map(|&e| view(e, if e { 1 } else { 0 }, false)).collect();
            let mut rr = RrState { next_index: start % ues.len() };
            let mut counts = vec![0u64; ues.len()];
            for _ in 0..rounds {
                let picked = rr.schedule(&ues).unwrap();
                prop_assert!(ues[picked].eligible());
                counts[picked] += 1;
            }
            let granted: Vec<u64> = counts
                .iter()
                .zip(&eligible)
                .filter(|(_, &e)| e)
                .map(|(&c, _)| c)
                .collect();
            let max = *granted.iter().max().unwrap();
            let min = *granted.iter().min().unwrap();
            prop_assert!(max - min <= 1, "counts {counts:?}");
        }
    }
}
