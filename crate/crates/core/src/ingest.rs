//! Record parsing, interaction labeling and account/language filtering.

use std::fmt;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};

/// One ingested post.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TweetRecord {
    pub id: String,
    /// Seconds since the Unix epoch, UTC.
    pub created_at_utc: i64,
    pub text: String,
    pub lang: String,
    pub user_location_raw: String,
    pub follower_count: u64,
    pub is_reply: bool,
    pub is_retweet: bool,
    pub is_quote: bool,
    pub mention_count: u32,
}

#[derive(Debug, Deserialize, Serialize)]
struct WireRecord {
    id: String,
    created_at: String,
    text: String,
    lang: String,
    #[serde(default)]
    user_location: String,
    #[serde(default)]
    followers: u64,
    #[serde(default)]
    is_reply: bool,
    #[serde(default)]
    is_retweet: bool,
    #[serde(default)]
    is_quote: bool,
    #[serde(default)]
    mentions: u32,
}

/// Parses an ISO-8601 timestamp with a `Z` suffix into epoch seconds.
pub fn parse_utc(s: &str) -> Result<i64> {
    if !s.ends_with('Z') {
        return Err(Error::Validation(format!(
            "timestamp {s:?} must be UTC with a Z suffix"
        )));
    }
    DateTime::parse_from_rfc3339(s)
        .map(|dt| dt.timestamp())
        .map_err(|e| Error::Validation(format!("timestamp {s:?}: {e}")))
}

pub fn format_utc(epoch: i64) -> String {
    DateTime::<Utc>::from_timestamp(epoch, 0)
        .map(|dt| dt.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_default()
}

/// Parses one NDJSON line.
///
/// Missing `user_location` becomes the empty string; missing flags are false
/// and missing counts are zero. A retweet or quote is never also a reply.
pub fn parse_record(line: &str) -> Result<TweetRecord> {
    let wire: WireRecord = serde_json::from_str(line.trim())
        .map_err(|e| Error::parse("record", e.line(), e.to_string()))?;
    if wire.id.is_empty() {
        return Err(Error::Validation("record id is empty".into()));
    }
    let created_at_utc = parse_utc(&wire.created_at)?;
    let is_reply = wire.is_reply && !wire.is_retweet && !wire.is_quote;
    Ok(TweetRecord {
        id: wire.id,
        created_at_utc,
        text: wire.text,
        lang: wire.lang,
        user_location_raw: wire.user_location,
        follower_count: wire.followers,
        is_reply,
        is_retweet: wire.is_retweet,
        is_quote: wire.is_quote,
        mention_count: wire.mentions,
    })
}

impl TweetRecord {
    /// Canonical NDJSON form (no trailing newline).
    pub fn to_line(&self) -> String {
        let wire = WireRecord {
            id: self.id.clone(),
            created_at: format_utc(self.created_at_utc),
            text: self.text.clone(),
            lang: self.lang.clone(),
            user_location: self.user_location_raw.clone(),
            followers: self.follower_count,
            is_reply: self.is_reply,
            is_retweet: self.is_retweet,
            is_quote: self.is_quote,
            mentions: self.mention_count,
        };
        serde_json::to_string(&wire).expect("record serialization is infallible")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InteractionType {
    Broadcast,
    Social,
}

/// Replies and tweets that mention another user are social; plain tweets,
/// retweets and quotes are broadcast.
pub fn classify_interaction(rec: &TweetRecord) -> InteractionType {
    if rec.is_retweet || rec.is_quote {
        return InteractionType::Broadcast;
    }
    if rec.is_reply || rec.mention_count > 0 {
        InteractionType::Social
    } else {
        InteractionType::Broadcast
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterConfig {
    pub languages: Vec<String>,
    /// Accounts with at least this many followers are dropped.
    pub follower_threshold: u64,
    /// Half-open UTC window `[start, end)` in epoch seconds.
    pub window: Option<(i64, i64)>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            languages: vec!["en".to_string()],
            follower_threshold: 300_000,
            window: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DropReason {
    Language,
    FollowerThreshold,
    EmptyLocation,
    OutOfWindow,
}

/// Applies the account filters in a fixed order: language, followers,
/// location, window.
pub fn filter_record(rec: &TweetRecord, cfg: &FilterConfig) -> Result<(), DropReason> {
    if !cfg.languages.iter().any(|l| l.eq_ignore_ascii_case(&rec.lang)) {
        return Err(DropReason::Language);
    }
    if rec.follower_count >= cfg.follower_threshold {
        return Err(DropReason::FollowerThreshold);
    }
    if rec.user_location_raw.trim().is_empty() {
        return Err(DropReason::EmptyLocation);
    }
    if let Some((start, end)) = cfg.window {
        if rec.created_at_utc < start || rec.created_at_utc >= end {
            return Err(DropReason::OutOfWindow);
        }
    }
    Ok(())
}

/// Funnel counters. Merging is fieldwise addition, so shards can be
/// combined in any order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub parsed: u64,
    pub kept: u64,
    pub dropped_language: u64,
    pub dropped_follower: u64,
    pub dropped_empty_location: u64,
    pub dropped_malformed: u64,
    pub dropped_out_of_window: u64,
    pub resolved: u64,
    pub unresolved_location: u64,
    pub unresolved_transient: u64,
    /// Gazetteer returned a qualifying place that matches no registered city.
    pub gazetteer_unmatched: u64,
}

impl IngestReport {
    fn fields(&self) -> [(&'static str, u64); 11] {
        [
            ("parsed", self.parsed),
            ("kept", self.kept),
            ("dropped_language", self.dropped_language),
            ("dropped_follower", self.dropped_follower),
            ("dropped_empty_location", self.dropped_empty_location),
            ("dropped_malformed", self.dropped_malformed),
            ("dropped_out_of_window", self.dropped_out_of_window),
            ("resolved", self.resolved),
            ("unresolved_location", self.unresolved_location),
            ("unresolved_transient", self.unresolved_transient),
            ("gazetteer_unmatched", self.gazetteer_unmatched),
        ]
    }

    fn field_mut(&mut self, key: &str) -> Option<&mut u64> {
        Some(match key {
            "parsed" => &mut self.parsed,
            "kept" => &mut self.kept,
            "dropped_language" => &mut self.dropped_language,
            "dropped_follower" => &mut self.dropped_follower,
            "dropped_empty_location" => &mut self.dropped_empty_location,
            "dropped_malformed" => &mut self.dropped_malformed,
            "dropped_out_of_window" => &mut self.dropped_out_of_window,
            "resolved" => &mut self.resolved,
            "unresolved_location" => &mut self.unresolved_location,
            "unresolved_transient" => &mut self.unresolved_transient,
            "gazetteer_unmatched" => &mut self.gazetteer_unmatched,
            _ => return None,
        })
    }

    pub fn merge(mut self, other: &IngestReport) -> IngestReport {
        for (key, value) in other.fields() {
            *self.field_mut(key).expect("known key") += value;
        }
        self
    }

    pub fn record_drop(&mut self, reason: DropReason) {
        match reason {
            DropReason::Language => self.dropped_language += 1,
            DropReason::FollowerThreshold => self.dropped_follower += 1,
            DropReason::EmptyLocation => self.dropped_empty_location += 1,
            DropReason::OutOfWindow => self.dropped_out_of_window += 1,
        }
    }

    /// Parses the `key: value` text form.
    pub fn from_text(text: &str) -> Result<IngestReport> {
        let mut report = IngestReport::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| Error::parse("ingest report", i + 1, "expected key: value"))?;
            let value: u64 = value
                .trim()
                .parse()
                .map_err(|_| Error::parse("ingest report", i + 1, "value is not a count"))?;
            *report
                .field_mut(key.trim())
                .ok_or_else(|| Error::parse("ingest report", i + 1, format!("unknown key {key}")))? =
                value;
        }
        Ok(report)
    }
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (key, value) in self.fields() {
            writeln!(f, "{key}: {value}")?;
        }
        Ok(())
    }
}

/// Parses and filters a batch of lines. Blank lines are ignored.
pub fn ingest_lines<S: AsRef<str> + Sync>(
    exec: Exec,
    lines: &[S],
    cfg: &FilterConfig,
) -> (Vec<TweetRecord>, IngestReport) {
    let parts = exec::map_chunks(exec, lines, 4096, |chunk| {
        let mut report = IngestReport::default();
        let mut kept = Vec::with_capacity(chunk.len());
        for line in chunk {
            let line = line.as_ref();
            if line.trim().is_empty() {
                continue;
            }
            match parse_record(line) {
                Ok(rec) => {
                    report.parsed += 1;
                    match filter_record(&rec, cfg) {
                        Ok(()) => {
                            report.kept += 1;
                            kept.push(rec);
                        }
                        Err(reason) => report.record_drop(reason),
                    }
                }
                Err(_) => report.dropped_malformed += 1,
            }
        }
        (kept, report)
    });
    let mut records = Vec::new();
    let mut report = IngestReport::default();
    for (kept, part) in parts {
        records.extend(kept);
        report = report.merge(&part);
    }
    (records, report)
}
