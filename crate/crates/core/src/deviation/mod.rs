//! Chi-square scoring of test-period bins against a baseline model,
//! ranking, recurrence intervals and event merging.

mod export;
mod merge;

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use export::{deviations_from_csv, deviations_to_csv, events_to_csv};
pub use merge::{merge_events, same_time, EventScope, MergedEvent};

use crate::aggregate::{BinKey, CityHourBin};
use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::model::FittedModel;
use crate::polarity::Polarity;
use crate::stats;

/// Minimum bin size for a score to be ranked.
pub const MIN_ELIGIBLE_N: u64 = 30;
/// Minimum expected count in each of the two cells.
pub const MIN_EXPECTED_CELL: f64 = 5.0;
pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Surplus,
    Deficit,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Surplus => "surplus",
            Direction::Deficit => "deficit",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "surplus" => Ok(Direction::Surplus),
            "deficit" => Ok(Direction::Deficit),
            _ => Err(Error::Validation(format!("unknown direction {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeviationScore {
    pub city_id: String,
    pub local_date: NaiveDate,
    pub hour: u8,
    pub polarity: Polarity,
    pub n_total: u64,
    pub observed: u64,
    pub expected: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub direction: Direction,
    pub eligible: bool,
}

impl DeviationScore {
    pub fn key(&self) -> BinKey {
        BinKey {
            city_id: self.city_id.clone(),
            date: self.local_date,
            hour: self.hour,
        }
    }

    pub fn is_significant(&self, alpha: f64) -> bool {
        self.eligible && self.statistic > 0.0 && self.p_value < alpha
    }
}

/// Two-cell chi-square statistic for `o` labeled out of `n` with `e` expected.
///
/// Summed cell by cell; the closed form `(o − e)² n / (e (n − e))` is checked
/// against this in the tests.
pub fn two_cell_statistic(n: u64, o: u64, e: f64) -> f64 {
    let (n, o) = (n as f64, o as f64);
    let d1 = o - e;
    let d2 = (n - o) - (n - e);
    d1 * d1 / e + d2 * d2 / (n - e)
}

/// Scores one bin from its size, observed count and expected proportion.
pub fn score_counts(bin: &CityHourBin, polarity: Polarity, observed: u64, proportion: f64) -> DeviationScore {
    let n = bin.n_total;
    let expected = proportion * n as f64;
    let (statistic, direction) = if n == 0 || observed as f64 == expected {
        (0.0, Direction::Deficit)
    } else {
        let dir = if observed as f64 > expected {
            Direction::Surplus
        } else {
            Direction::Deficit
        };
        (two_cell_statistic(n, observed, expected), dir)
    };
    // keep p strictly positive even when the tail underflows
    let p_value = stats::chi_square_sf(statistic, 1.0).max(f64::MIN_POSITIVE);
    let eligible = n >= MIN_ELIGIBLE_N
        && expected >= MIN_EXPECTED_CELL
        && n as f64 - expected >= MIN_EXPECTED_CELL;
    DeviationScore {
        city_id: bin.city_id.clone(),
        local_date: bin.local_date,
        hour: bin.hour,
        polarity,
        n_total: n,
        observed,
        expected,
        statistic,
        p_value,
        direction,
        eligible,
    }
}

/// Scores `bin` against the model's clamped prediction.
pub fn score_bin(bin: &CityHourBin, m: &FittedModel) -> DeviationScore {
    let observed = match m.outcome {
        Polarity::Positive => bin.n_pos,
        Polarity::Negative => bin.n_neg,
    };
    score_counts(bin, m.outcome, observed, m.predict(bin).proportion)
}

pub fn score_bins(exec: Exec, bins: &[CityHourBin], m: &FittedModel) -> Vec<DeviationScore> {
    exec::map(exec, bins, |b| score_bin(b, m))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedDeviation {
    pub rank: usize,
    pub score: DeviationScore,
}

fn by_strength(a: &DeviationScore, b: &DeviationScore) -> std::cmp::Ordering {
    b.statistic
        .total_cmp(&a.statistic)
        .then(a.local_date.cmp(&b.local_date))
        .then(a.hour.cmp(&b.hour))
        .then_with(|| a.city_id.cmp(&b.city_id))
}

/// Eligible, nonzero scores of one polarity in decreasing statistic order.
pub fn rank_deviations(scores: &[DeviationScore], polarity: Polarity) -> Vec<RankedDeviation> {
    let mut picked: Vec<&DeviationScore> = scores
        .iter()
        .filter(|s| s.polarity == polarity && s.eligible && s.statistic > 0.0)
        .collect();
    picked.sort_by(|a, b| by_strength(a, b));
    picked
        .into_iter()
        .enumerate()
        .map(|(i, s)| RankedDeviation {
            rank: i + 1,
            score: s.clone(),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RecurrenceInterval {
    Days(f64),
    /// The top event was never exceeded during the observation period.
    AtLeast(f64),
}

impl RecurrenceInterval {
    pub fn days(self) -> f64 {
        match self {
            RecurrenceInterval::Days(d) | RecurrenceInterval::AtLeast(d) => d,
        }
    }
}

fn fmt_days(d: f64) -> String {
    if d.fract() == 0.0 {
        format!("{d:.0}")
    } else {
        format!("{d:.1}")
    }
}

impl fmt::Display for RecurrenceInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecurrenceInterval::Days(d) => f.write_str(&fmt_days(*d)),
            RecurrenceInterval::AtLeast(d) => write!(f, ">{} days", fmt_days(*d)),
        }
    }
}

/// Observation days divided by rank; the top rank only has a lower bound.
pub fn recurrence_interval(rank: usize, observation_days: f64) -> Result<RecurrenceInterval> {
    if rank < 1 {
        return Err(Error::Validation("rank must be at least 1".into()));
    }
    if !(observation_days > 0.0) {
        return Err(Error::Validation(format!(
            "observation period must be positive, got {observation_days}"
        )));
    }
    Ok(if rank == 1 {
        RecurrenceInterval::AtLeast(observation_days)
    } else {
        RecurrenceInterval::Days(observation_days / rank as f64)
    })
}
