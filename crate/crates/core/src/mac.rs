//! Per-UE downlink MAC: FIFO SDU queue, TB assembly with segmentation and
//! zero padding, control elements riding in TBs, and ACK-gated removal.
//!
//! HARQ is stop-and-wait with a one-TTI feedback delay. A failed TB never
//! touches the queue; the next grant simply reassembles from the head, which
//! under ACK-gated removal delivers the same bits while letting the TB size
//! track fresher CSI.

/// MAC control elements the BTS can append to a TB.
///
/// `LongDrxCommand` puts the UE to sleep until the next long-cycle start.
/// `SkipDuration(d)` suspends PDCCH monitoring for exactly `d` TTIs,
/// d in {2,4,6,8,10,12}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacCe {
    LongDrxCommand,
    SkipDuration(u64),
}

impl MacCe {
    pub fn validate(&self) {
        if let MacCe::SkipDuration(d) = self {
            assert!(*d >= 2 && *d <= 12 && d % 2 == 0, "invalid skip duration {d}");
        }
    }
}

/// One downlink MAC SDU.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sdu {
    pub id: u64,
    pub arrival_tti: u64,
    pub size_bits: u64,
    pub bits_remaining: u64,
    pub delivered_tti: Option<u64>,
}

impl Sdu {
    pub fn new(id: u64, arrival_tti: u64, size_bits: u64) -> Self {
        Sdu { id, arrival_tti, size_bits, bits_remaining: size_bits, delivered_tti: None }
    }
}

/// FIFO downlink queue with a running bit total.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DlQueue {
    pending: std::collections::VecDeque<Sdu>,
    total_bits: u64,
}

impl DlQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn total_bits(&self) -> u64 {
        self.total_bits
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    /// Arrival TTI of the oldest queued SDU, if any.
    pub fn oldest_arrival_tti(&self) -> Option<u64> {
        self.pending.front().map(|s| s.arrival_tti)
    }

    pub fn enqueue(&mut self, sdu: Sdu) {
        assert!(sdu.size_bits > 0, "zero-size SDU");
        self.total_bits += sdu.bits_remaining;
        self.pending.push_back(sdu);
    }

    #[cfg(test)]
    fn check_total(&self) {
        let sum: u64 = self.pending.iter().map(|s| s.bits_remaining).sum();
        assert_eq!(sum, self.total_bits);
    }
}

/// One per-TTI downlink transmission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportBlock {
    pub ue_id: usize,
    pub tti: u64,
    pub tbs_bits: u64,
    /// (sdu_id, bits) taken from the FIFO head, in order.
    pub payload_segments: Vec<(u64, u64)>,
    pub ce: Option<MacCe>,
    pub padding_bits: u64,
}

impl TransportBlock {
    pub fn payload_bits(&self) -> u64 {
        self.payload_segments.iter().map(|(_, b)| b).sum()
    }

    /// True when the TB carries sub-PDUs but none with payload.
    pub fn is_ce_only(&self) -> bool {
        self.payload_segments.is_empty()
    }
}

/// Fills a TB of `tbs_bits` from the queue head, splitting SDUs as needed.
/// Whatever the queue cannot fill becomes zero padding. The queue itself is
/// not mutated: bits leave the queue only when the TB is ACKed.
///
/// Header and CE overheads are modeled as zero bits.
pub fn assemble_tb(
    queue: &DlQueue,
    ue_id: usize,
    tbs_bits: u64,
    ce: Option<MacCe>,
    tti: u64,
) -> TransportBlock {
    if let Some(c) = &ce {
        c.validate();
    }
    let mut segments = Vec::new();
    let mut remaining = tbs_bits;
    for sdu in &queue.pending {
        if remaining == 0 {
            break;
        }
        let take = remaining.min(sdu.bits_remaining);
        segments.push((sdu.id, take));
        remaining -= take;
    }
    TransportBlock { ue_id, tti, tbs_bits, payload_segments: segments, ce, padding_bits: remaining }
}

/// Outcome of applying HARQ feedback to the queue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedbackResult {
    /// (sdu_id, delay in TTIs) for every SDU completed by this TB, delay
    /// measured from queue entry to TB reception.
    pub delivered_sdus: Vec<(u64, u64)>,
    /// Whether a carried CE took effect (it does iff the TB was decoded).
    pub ce_applied: bool,
}

/// Applies the (delivered / not delivered) feedback for `tb` to the queue.
///
/// On success each segment's bits are removed from the head SDUs; SDUs
/// reaching zero remaining bits leave the queue with their delay recorded.
/// On failure the queue is untouched and any carried CE is void.
pub fn process_feedback(queue: &mut DlQueue, tb: &TransportBlock, delivered: bool) -> FeedbackResult {
    if !delivered {
        return FeedbackResult { delivered_sdus: Vec::new(), ce_applied: false };
    }
    let mut delivered_sdus = Vec::new();
    for &(sdu_id, bits) in &tb.payload_segments {
        let head = queue.pending.front_mut().unwrap_or_else(|| {
            panic!("TTI {}: feedback for SDU {sdu_id} but the queue is empty", tb.tti)
        });
        assert_eq!(
            head.id, sdu_id,
            "TTI {}: feedback segment for SDU {sdu_id} does not match queue head {}",
            tb.tti, head.id
        );
        assert!(
            head.bits_remaining >= bits,
            "TTI {}: segment of {bits} bits exceeds the {} remaining in SDU {sdu_id}",
            tb.tti,
            head.bits_remaining
        );
        head.bits_remaining -= bits;
        queue.total_bits -= bits;
        if head.bits_remaining == 0 {
            let mut done = queue.pending.pop_front().unwrap();
            done.delivered_tti = Some(tb.tti);
            delivered_sdus.push((done.id, tb.tti - done.arrival_tti));
        }
    }
    FeedbackResult { delivered_sdus, ce_applied: tb.ce.is_some() }
}
