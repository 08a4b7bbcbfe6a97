//! Experience replay: a fixed-capacity ring buffer of decision transitions
//! with uniform with-replacement sampling.
//!
//! Only decisions actually executed while the UE was listening get stored;
//! the forced null actions of sleeping UEs never enter the memory.

use rand::Rng;

use crate::error::{Result, SimError};
use crate::rl::EncodedState;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: EncodedState,
    pub a: usize,
    /// Reward accumulated from this decision up to (excluding) the next one.
    pub r: f64,
    pub s_next: EncodedState,
    pub terminal: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayMemory {
    buf: Vec<Transition>,
    capacity: usize,
    /// Slot the next push overwrites once the buffer is full.
    write: usize,
    pushes: u64,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayMemory { buf: Vec::with_capacity(capacity.min(1 << 20)), capacity, write: 0, pushes: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// Total pushes ever, including those that evicted older entries.
    pub fn pushes(&self) -> u64 {
        self.pushes
    }

    pub fn push(&mut self, tr: Transition) {
        if self.buf.len() < self.capacity {
            self.buf.push(tr);
        } else {
            self.buf[self.write] = tr;
            self.write = (self.write + 1) % self.capacity;
        }
        self.pushes += 1;
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.buf[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buf.iter()
    }

    /// Uniform sampling with replacement over the current contents.
    pub fn sample_indices<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
        out: &mut Vec<usize>,
    ) -> Result<()> {
        if self.buf.is_empty() {
            return Err(SimError::EmptyReplay);
        }
        out.clear();
        out.extend((0..n).map(|_| rng.gen_range(0..self.buf.len())));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(tag: f64) -> Transition {
        Transition {
            s: EncodedState::zeroed(),
            a: 0,
            r: tag,
            s_next: EncodedState::zeroed(),
            terminal: false,
        }
    }

    #[test]
    fn ring_evicts_oldest_first() {
        let cap = 100_000;
        let mut erm = ReplayMemory::new(cap);
        for i in 0..=(cap as u64) {
            erm.push(tr(i as f64));
        }
        assert_eq!(erm.len(), cap);
        assert_eq!(erm.pushes(), cap as u64 + 1);
        // Entry 0 was evicted; 1..=cap survive.
        let min_tag = erm.iter().map(|t| t.r).fold(f64::INFINITY, f64::min);
        assert_eq!(min_tag, 1.0);
    }

    #[test]
    fn eviction_order_is_fifo() {
        let mut erm = ReplayMemory::new(4);
        for i in 0..10 {
            erm.push(tr(i as f64));
            let tags: Vec<f64> = erm.iter().map(|t| t.r).collect();
            let mut sorted = tags.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // The survivors are always the most recent <= 4 pushes.
            let lo = (i as i64 - 3).max(0) as f64;
            assert_eq!(sorted.first().copied().unwrap(), lo, "push {i}: {tags:?}");
            assert_eq!(sorted.last().copied().unwrap(), i as f64);
        }
    }

    #[test]
    fn sampling_from_empty_memory_fails() {
        let erm = ReplayMemory::new(8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut out = Vec::new();
        assert!(matches!(erm.sample_indices(4, &mut rng, &mut out), Err(SimError::EmptyReplay)));
    }

    #[test]
    fn sampling_covers_the_memory() {
        let mut erm = ReplayMemory::new(1000);
        for i in 0..1000 {
            erm.push(tr(i as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut out = Vec::new();
        let mut seen = vec![false; 1000];
        for _ in 0..100 {
            erm.sample_indices(1000, &mut rng, &mut out).unwrap();
            for &i in &out {
                seen[i] = true;
            }
        }
        let covered = seen.iter().filter(|&&s| s).count();
        assert!(covered >= 990, "covered {covered}/1000");
    }
}
