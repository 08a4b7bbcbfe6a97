//! Link model: first-order autoregressive Rayleigh fading, periodic CSI
//! reporting with DRX-induced skips, TB size selection from the last report,
//! and a capacity-outage delivery rule.
//!
//! The BTS schedules on the channel value the UE last reported. Sleeping
//! skips reports, so the report goes stale and the selected TB size can
//! exceed what the instantaneous channel carries; that outage is the cost
//! of sleeping.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub const SPEED_OF_LIGHT_MPS: f64 = 2.998e8;

/// Per-UE fading and CSI reporting state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelState {
    /// Current fading coefficient, unit variance in stationarity.
    pub h: Complex64,
    /// Last value delivered to the BTS over a CSI report.
    pub h_reported: Complex64,
    pub last_report_tti: u64,
}

impl ChannelState {
    /// Draws h(0) ~ CN(0,1) and hands the BTS a genie initial report so the
    /// first TB size is well defined.
    pub fn init<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let h = draw_cn01(rng);
        ChannelState { h, h_reported: h, last_report_tti: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhyParams {
    /// Lag-1 fading autocorrelation, in (0,1).
    pub rho: f64,
    /// Linear SNR (10 dB -> 10.0).
    pub snr_linear: f64,
    /// Effective downlink payload bandwidth in Hz.
    pub bw_eff_hz: f64,
    /// TTI duration in seconds.
    pub tti_s: f64,
    /// CSI report period in TTIs.
    pub csi_period_ttis: u64,
    /// Link-adaptation backoff in dB: the scheduler derates the reported
    /// gain before picking the TB size, trading peak rate for resilience to
    /// CSI staleness. 0 selects the raw reported capacity.
    pub link_margin_db: f64,
}

impl Default for PhyParams {
    fn default() -> Self {
        PhyParams {
            rho: 0.99,
            snr_linear: 10.0,
            bw_eff_hz: 72e6,
            tti_s: 1e-3,
            csi_period_ttis: 10,
            link_margin_db: 0.0,
        }
    }
}

fn draw_cn01<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    // Circularly-symmetric complex Gaussian, unit total variance.
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * std::f64::consts::FRAC_1_SQRT_2, im * std::f64::consts::FRAC_1_SQRT_2)
}

/// Lag-1 autocorrelation from the Jakes-Clarke model restricted to one TTI:
/// J0(2 pi f_D T) with f_D = carrier * velocity / c.
pub fn rho_from_doppler(carrier_hz: f64, velocity_mps: f64, tti_s: f64) -> f64 {
    let f_d = carrier_hz * velocity_mps.abs() / SPEED_OF_LIGHT_MPS;
    libm::j0(2.0 * std::f64::consts::PI * f_d * tti_s)
}

/// One AR(1) step: h <- rho h + sqrt(1 - rho^2) w, w ~ CN(0,1).
pub fn step_channel<R: Rng + ?Sized>(state: &mut ChannelState, rho: f64, rng: &mut R) {
    let w = draw_cn01(rng);
    state.h = state.h * rho + w * (1.0 - rho * rho).sqrt();
}

/// A report is due when the period divides t and the UE is listening.
pub fn csi_report_due(t: u64, period: u64, ue_active: bool) -> bool {
    debug_assert!(period >= 1);
    ue_active && t.is_multiple_of(period)
}

/// Records a due report: the BTS now sees the current h.
pub fn deliver_csi_report(state: &mut ChannelState, t: u64) {
    state.h_reported = state.h;
    state.last_report_tti = t;
}

/// TB size matched to the last reported channel:
/// floor(BW_eff * T * log2(1 + SNR * |h_reported|^2 * 10^(-margin/10))).
///
/// With a zero margin the scheduler rides the reported capacity exactly and
/// any downward drift before the next report costs the TB.
pub fn select_tbs(h_reported: Complex64, p: &PhyParams) -> u64 {
    let gain = h_reported.norm_sqr() * 10f64.powf(-p.link_margin_db / 10.0);
    if gain == 0.0 {
        return 0;
    }
    let capacity = p.bw_eff_hz * p.tti_s * (1.0 + p.snr_linear * gain).log2();
    capacity.floor() as u64
}

/// Capacity-outage delivery: the TB goes through iff the instantaneous
/// capacity at transmission time covers the rate chosen from the (possibly
/// stale) report.
pub fn tb_outcome(h_actual: Complex64, tbs_bits: u64, p: &PhyParams) -> bool {
    if tbs_bits == 0 {
        return true;
    }
    let capacity = p.bw_eff_hz * p.tti_s * (1.0 + p.snr_linear * h_actual.norm_sqr()).log2();
    capacity >= tbs_bits as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::{stream, StreamId};

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        stream(seed, StreamId::Channel { ue: 0 })
    }

    /// Truncated power series J0(x) = 1 - x^2/4 + x^4/64 - x^6/2304, accurate
    /// far below 1e-6 for |x| <= 0.5; independent of libm.
    fn j0_series(x: f64) -> f64 {
        1.0 - x * x / 4.0 + x.powi(4) / 64.0 - x.powi(6) / 2304.0
    }

    #[test]
    fn rho_is_one_at_zero_velocity() {
        assert_eq!(rho_from_doppler(3.5e9, 0.0, 1e-3), 1.0);
    }

    #[test]
    fn rho_matches_series_oracle_at_small_argument() {
        // Pick carrier/velocity so that 2 pi f_D T = 0.2 exactly.
        let tti = 1e-3;
        let f_d = 0.2 / (2.0 * std::f64::consts::PI * tti);
        let carrier = 3e9;
        let velocity = f_d * SPEED_OF_LIGHT_MPS / carrier;
        let rho = rho_from_doppler(carrier, velocity, tti);
        assert!((rho - j0_series(0.2)).abs() < 1e-6, "rho {rho}");
        assert!((rho - 0.990025).abs() < 1e-6);
    }

    #[test]
    fn rho_is_even_in_velocity() {
        let r1 = rho_from_doppler(3.5e9, 25.0, 1e-3);
        let r2 = rho_from_doppler(3.5e9, -25.0, 1e-3);
        assert_eq!(r1, r2);
    }

    #[test]
    fn rho_one_freezes_the_channel() {
        let mut r = rng(1);
        let mut st = ChannelState::init(&mut r);
        let h0 = st.h;
        for _ in 0..100 {
            step_channel(&mut st, 1.0, &mut r);
        }
        assert!((st.h - h0).norm() < 1e-12);
    }

    #[test]
    fn rho_zero_is_white() {
        let mut r = rng(2);
        let mut st = ChannelState::init(&mut r);
        let n = 1_000_000;
        let mut prev = st.h.re;
        let (mut sum, mut sum2, mut cross) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            step_channel(&mut st, 0.0, &mut r);
            let x = st.h.re;
            sum += x;
            sum2 += x * x;
            cross += x * prev;
            prev = x;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        let lag1 = (cross / n as f64 - mean * mean) / var;
        assert!(lag1.abs() < 0.01, "lag-1 {lag1}");
    }

    #[test]
    fn rho_099_statistics() {
        let mut r = rng(3);
        let mut st = ChannelState::init(&mut r);
        let n = 1_000_000;
        let mut prev = st.h.re;
        let (mut sum, mut sum2, mut cross, mut pow) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            step_channel(&mut st, 0.99, &mut r);
            let x = st.h.re;
            sum += x;
            sum2 += x * x;
            cross += x * prev;
            prev = x;
            pow += st.h.norm_sqr();
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        let lag1 = (cross / n as f64 - mean * mean) / var;
        assert!((0.98..=1.0).contains(&lag1), "lag-1 {lag1}");
        let mean_pow = pow / n as f64;
        assert!((mean_pow - 1.0).abs() < 0.02, "E|h|^2 {mean_pow}");
    }

    #[test]
    fn stationarity_across_rho_values() {
        // The effective sample count scales with (1 - rho), so the step
        // count has to grow accordingly to keep the estimator inside 2%.
        for (i, rho) in [0.5f64, 0.9, 0.99].into_iter().enumerate() {
            let mut r = rng(10 + i as u64);
            let mut st = ChannelState::init(&mut r);
            let n = ((2e5 / (1.0 - rho)) as u64).max(1_000_000);
            let mut pow = 0.0;
            for _ in 0..n {
                step_channel(&mut st, rho, &mut r);
                pow += st.h.norm_sqr();
            }
            let mean_pow = pow / n as f64;
            assert!((mean_pow - 1.0).abs() < 0.02, "rho {rho}: E|h|^2 {mean_pow}");
        }
    }

    #[test]
    fn csi_due_truth_table() {
        assert!(csi_report_due(20, 10, true));
        assert!(!csi_report_due(20, 10, false));
        assert!(!csi_report_due(21, 10, true));
    }

    #[test]
    fn skipped_report_leaves_bts_view_unchanged() {
        let mut r = rng(4);
        let mut st = ChannelState::init(&mut r);
        let reported = st.h_reported;
        for t in 1..=20u64 {
            step_channel(&mut st, 0.99, &mut r);
            if csi_report_due(t, 10, false) {
                deliver_csi_report(&mut st, t);
            }
        }
        assert_eq!(st.h_reported, reported);
        assert_eq!(st.last_report_tti, 0);
    }

    #[test]
    fn tbs_at_unit_gain() {
        let p = PhyParams::default();
        let tbs = select_tbs(Complex64::new(1.0, 0.0), &p);
        // 72000 * log2(11) = 249079.07...
        assert_eq!(tbs, 249_079);
    }

    #[test]
    fn tbs_zero_on_zero_report() {
        let p = PhyParams::default();
        assert_eq!(select_tbs(Complex64::new(0.0, 0.0), &p), 0);
    }

    #[test]
    fn tbs_monotone_in_gain() {
        let p = PhyParams::default();
        let mut prev = 0;
        for k in 0..200 {
            let g = 0.02 * k as f64;
            let tbs = select_tbs(Complex64::new(g.sqrt(), 0.0), &p);
            assert!(tbs >= prev);
            prev = tbs;
        }
    }

    #[test]
    fn fresh_csi_always_delivers() {
        let p = PhyParams::default();
        let mut r = rng(5);
        for _ in 0..1000 {
            let h = draw_cn01(&mut r);
            let tbs = select_tbs(h, &p);
            assert!(tb_outcome(h, tbs, &p));
        }
    }

    #[test]
    fn dead_channel_fails_and_empty_tb_succeeds() {
        let p = PhyParams::default();
        let zero = Complex64::new(0.0, 0.0);
        assert!(!tb_outcome(zero, 100, &p));
        assert!(tb_outcome(zero, 0, &p));
    }
}
