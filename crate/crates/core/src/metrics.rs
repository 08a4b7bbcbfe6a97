//! KPI computation and CSV emission.
//!
//! Delay columns are in milliseconds, which on the 1 ms TTI grid equals the
//! delay in TTIs. Percentiles use the nearest-rank definition (no
//! interpolation) so any reimplementation reproduces the files exactly.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Result, SimError};

/// Nearest-rank percentile of an ascending-sorted sample.
pub fn nearest_rank_percentile(sorted: &[u64], p: f64) -> u64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Per-UE episode outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct UeEpisodeMetrics {
    pub activity: f64,
    /// Delay statistics are absent when the episode delivered no SDU.
    pub mean_delay_ttis: Option<f64>,
    pub delay_p5: Option<u64>,
    pub delay_p50: Option<u64>,
    pub delay_p95: Option<u64>,
    /// Sigma over the trailing window at episode end.
    pub satisfaction_final: f64,
    pub cum_reward: f64,
}

/// Cell-level episode outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub per_ue: Vec<UeEpisodeMetrics>,
    pub num_ues: usize,
    pub cum_reward_per_ue: f64,
    /// Post-stabilization decision counts, one slot per action index.
    pub action_histogram: Vec<u64>,
    pub max_queue_bits: u64,
}

impl EpisodeMetrics {
    pub fn mean_satisfaction(&self) -> f64 {
        self.per_ue.iter().map(|u| u.satisfaction_final).sum::<f64>() / self.num_ues as f64
    }
}

/// Raw per-episode material the simulation hands over for aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// Listening indicator per UE per TTI.
    pub w: Vec<Vec<bool>>,
    /// Delivered-SDU delays per UE, in arrival order.
    pub delays: Vec<Vec<u64>>,
    pub cum_rewards: Vec<f64>,
    pub satisfaction_final: Vec<f64>,
    pub action_histogram: Vec<u64>,
    pub max_queue_bits: u64,
    pub n_t: u64,
}

/// Collapses one episode's traces into metrics. Activity is recomputed from
/// the stored W trace; the simulation's streaming accumulation must agree
/// with it exactly.
pub fn finalize(rec: &EpisodeRecord) -> EpisodeMetrics {
    let num_ues = rec.w.len();
    let mut per_ue = Vec::with_capacity(num_ues);
    for u in 0..num_ues {
        let active = rec.w[u].iter().filter(|&&x| x).count() as f64;
        let activity = active / rec.n_t as f64;
        let mut sorted = rec.delays[u].clone();
        sorted.sort_unstable();
        let (mean, p5, p50, p95) = if sorted.is_empty() {
            (None, None, None, None)
        } else {
            let mean = sorted.iter().sum::<u64>() as f64 / sorted.len() as f64;
            (
                Some(mean),
                Some(nearest_rank_percentile(&sorted, 5.0)),
                Some(nearest_rank_percentile(&sorted, 50.0)),
                Some(nearest_rank_percentile(&sorted, 95.0)),
            )
        };
        per_ue.push(UeEpisodeMetrics {
            activity,
            mean_delay_ttis: mean,
            delay_p5: p5,
            delay_p50: p50,
            delay_p95: p95,
            satisfaction_final: rec.satisfaction_final[u],
            cum_reward: rec.cum_rewards[u],
        });
    }
    let cum_reward_per_ue = rec.cum_rewards.iter().sum::<f64>() / num_ues as f64;
    EpisodeMetrics {
        per_ue,
        num_ues,
        cum_reward_per_ue,
        action_histogram: rec.action_histogram.clone(),
        max_queue_bits: rec.max_queue_bits,
    }
}

/// Append-only CSV file that writes its header exactly once (on creation of
/// an empty file).
#[derive(Debug)]
pub struct CsvAppender {
    file: File,
    path: PathBuf,
}

impl CsvAppender {
    pub fn open(path: &Path, header: &str) -> Result<Self> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() && !dir.exists() {
                return Err(SimError::io(
                    path,
                    std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        format!("output directory {} does not exist", dir.display()),
                    ),
                ));
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| SimError::io(path, e))?;
        let empty = file.metadata().map_err(|e| SimError::io(path, e))?.len() == 0;
        if empty {
            writeln!(file, "{header}").map_err(|e| SimError::io(path, e))?;
        }
        Ok(CsvAppender { file, path: path.to_path_buf() })
    }

    pub fn write_row(&mut self, row: &str) -> Result<()> {
        writeln!(self.file, "{row}").map_err(|e| SimError::io(&self.path, e))
    }
}

fn fmt_opt_u64(v: Option<u64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub const LEARNING_CURVE_HEADER: &str =
    "run,episode,num_ues,epsilon,cum_reward_per_ue,mean_satisfaction";

#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurveRow {
    pub run: u64,
    pub episode: u64,
    pub num_ues: usize,
    pub epsilon: f64,
    pub cum_reward_per_ue: f64,
    pub mean_satisfaction: f64,
}

impl LearningCurveRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.run,
            self.episode,
            self.num_ues,
            self.epsilon,
            self.cum_reward_per_ue,
            self.mean_satisfaction
        )
    }

    pub fn parse(line: &str) -> Option<Self> {
        let mut it = line.split(',');
        let row = LearningCurveRow {
            run: it.next()?.parse().ok()?,
            episode: it.next()?.parse().ok()?,
            num_ues: it.next()?.parse().ok()?,
            epsilon: it.next()?.parse().ok()?,
            cum_reward_per_ue: it.next()?.parse().ok()?,
            mean_satisfaction: it.next()?.parse().ok()?,
        };
        it.next().is_none().then_some(row)
    }
}

pub const EVAL_HEADER: &str = "policy,action_space,num_ues,ue_id,activity,mean_delay_ms,\
                               delay_p5_ms,delay_p50_ms,delay_p95_ms,satisfaction";

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub policy: String,
    pub action_space: usize,
    pub num_ues: usize,
    pub ue_id: usize,
    pub activity: f64,
    pub mean_delay_ms: Option<f64>,
    pub delay_p5_ms: Option<u64>,
    pub delay_p50_ms: Option<u64>,
    pub delay_p95_ms: Option<u64>,
    pub satisfaction: f64,
}

impl EvalRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.policy,
            self.action_space,
            self.num_ues,
            self.ue_id,
            self.activity,
            fmt_opt_f64(self.mean_delay_ms),
            fmt_opt_u64(self.delay_p5_ms),
            fmt_opt_u64(self.delay_p50_ms),
            fmt_opt_u64(self.delay_p95_ms),
            self.satisfaction
        )
    }

    pub fn parse(line: &str) -> Option<Self> {
        fn opt_u64(s: &str) -> Option<Option<u64>> {
            if s == "NA" {
                Some(None)
            } else {
                s.parse().ok().map(Some)
            }
        }
        fn opt_f64(s: &str) -> Option<Option<f64>> {
            if s == "NA" {
                Some(None)
            } else {
                s.parse().ok().map(Some)
            }
        }
        let mut it = line.split(',');
        let row = EvalRow {
            policy: it.next()?.to_string(),
            action_space: it.next()?.parse().ok()?,
            num_ues: it.next()?.parse().ok()?,
            ue_id: it.next()?.parse().ok()?,
            activity: it.next()?.parse().ok()?,
            mean_delay_ms: opt_f64(it.next()?)?,
            delay_p5_ms: opt_u64(it.next()?)?,
            delay_p50_ms: opt_u64(it.next()?)?,
            delay_p95_ms: opt_u64(it.next()?)?,
            satisfaction: it.next()?.parse().ok()?,
        };
        it.next().is_none().then_some(row)
    }
}

pub const ACTIONS_HEADER: &str = "policy,action_space,action_index,skip_ms,count,frequency";

#[derive(Debug, Clone, PartialEq)]
pub struct ActionRow {
    pub policy: String,
    pub action_space: usize,
    pub action_index: usize,
    pub skip_ms: u64,
    pub count: u64,
    pub frequency: f64,
}

impl ActionRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.policy, self.action_space, self.action_index, self.skip_ms, self.count, self.frequency
        )
    }

    pub fn parse(line: &str) -> Option<Self> {
        let mut it = line.split(',');
        let row = ActionRow {
            policy: it.next()?.to_string(),
            action_space: it.next()?.parse().ok()?,
            action_index: it.next()?.parse().ok()?,
            skip_ms: it.next()?.parse().ok()?,
            count: it.next()?.parse().ok()?,
            frequency: it.next()?.parse().ok()?,
        };
        it.next().is_none().then_some(row)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_examples() {
        let delays = [2u64, 4, 6, 8];
        assert_eq!(nearest_rank_percentile(&delays, 50.0), 4);
        assert_eq!(nearest_rank_percentile(&delays, 5.0), 2);
        assert_eq!(nearest_rank_percentile(&delays, 95.0), 8);
        assert_eq!(nearest_rank_percentile(&delays, 100.0), 8);
        assert_eq!(nearest_rank_percentile(&[7], 50.0), 7);
    }

    fn record() -> EpisodeRecord {
        EpisodeRecord {
            w: vec![vec![true; 10], vec![true, true, false, false, false, false, false, false, false, false]],
            delays: vec![vec![2, 4, 6, 8], vec![]],
            cum_rewards: vec![3.0, 7.0],
            satisfaction_final: vec![1.0, 1.0],
            action_histogram: vec![5, 1],
            max_queue_bits: 123,
            n_t: 10,
        }
    }

    #[test]
    fn finalize_computes_means_and_percentiles() {
        let m = finalize(&record());
        assert_eq!(m.per_ue[0].activity, 1.0);
        assert_eq!(m.per_ue[0].mean_delay_ttis, Some(5.0));
        assert_eq!(m.per_ue[0].delay_p50, Some(4));
        assert_eq!(m.per_ue[1].activity, 0.2);
        assert_eq!(m.cum_reward_per_ue, 5.0);
    }

    #[test]
    fn empty_delay_list_flags_absent_stats() {
        let m = finalize(&record());
        let ue = &m.per_ue[1];
        assert!(ue.mean_delay_ttis.is_none());
        assert!(ue.delay_p95.is_none());
        assert_eq!(ue.activity, 0.2);
    }

    #[test]
    fn csv_appender_writes_header_once() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        {
            let mut w = CsvAppender::open(&path, LEARNING_CURVE_HEADER).unwrap();
            w.write_row("0,0,1,0.8,1.5,0.9").unwrap();
        }
        {
            let mut w = CsvAppender::open(&path, LEARNING_CURVE_HEADER).unwrap();
            w.write_row("0,1,1,0.8,2.5,0.95").unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let headers = text.lines().filter(|l| l.starts_with("run,")).count();
        assert_eq!(headers, 1);
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn missing_directory_is_fatal_with_path() {
        let err = CsvAppender::open(Path::new("/nonexistent-dir-xyz/out.csv"), EVAL_HEADER);
        let msg = format!("{}", err.unwrap_err());
        assert!(msg.contains("/nonexistent-dir-xyz"), "{msg}");
    }

    #[test]
    fn rows_roundtrip_exactly() {
        let r = LearningCurveRow {
            run: 3,
            episode: 42,
            num_ues: 7,
            epsilon: 0.2054433,
            cum_reward_per_ue: -123.456789012345,
            mean_satisfaction: 0.9499999999,
        };
        assert_eq!(LearningCurveRow::parse(&r.to_csv()).unwrap(), r);

        let e = EvalRow {
            policy: "naive".into(),
            action_space: 2,
            num_ues: 1,
            ue_id: 0,
            activity: 0.3333333333333333,
            mean_delay_ms: Some(8.25),
            delay_p5_ms: Some(2),
            delay_p50_ms: Some(7),
            delay_p95_ms: Some(19),
            satisfaction: 1.0,
        };
        assert_eq!(EvalRow::parse(&e.to_csv()).unwrap(), e);

        let e = EvalRow { mean_delay_ms: None, delay_p5_ms: None, delay_p50_ms: None, delay_p95_ms: None, ..e };
        assert_eq!(EvalRow::parse(&e.to_csv()).unwrap(), e);

        let a = ActionRow {
            policy: "rl".into(),
            action_space: 7,
            action_index: 5,
            skip_ms: 10,
            count: 12345,
            frequency: 0.07213,
        };
        assert_eq!(ActionRow::parse(&a.to_csv()).unwrap(), a);
    }
}
