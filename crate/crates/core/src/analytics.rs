//! Descriptive statistics over timestamped fact-checking tweets: D-tweet
//! response times, S-tweet inter-posting gaps, monthly volume and top terms.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use chrono::{DateTime, Datelike, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::text::TermStats;

pub const MINUTE: i64 = 60;
pub const HOUR: i64 = 3_600;
pub const DAY: i64 = 86_400;
pub const WEEK: i64 = 7 * DAY;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TweetKind {
    /// Direct fact-checking reply.
    D,
    /// Reshare of a D-tweet.
    S,
}

/// One input row. Timestamps are Unix seconds; `None` means the field was
/// missing or could not be parsed.
#[derive(Clone, Debug, PartialEq)]
pub struct Tweet {
    pub id: String,
    pub kind: TweetKind,
    pub ts: Option<i64>,
    pub parent_ts: Option<i64>,
    pub parent_id: Option<String>,
    pub text: Option<String>,
}

#[derive(Deserialize)]
struct RawTweet {
    id: Value,
    kind: String,
    #[serde(default)]
    ts: Value,
    #[serde(default)]
    parent_ts: Value,
    #[serde(default)]
    parent_id: Value,
    #[serde(default)]
    text: Option<String>,
}

/// Unix seconds from an integer, an integer string or an RFC 3339 string.
pub fn parse_timestamp(v: &Value) -> Option<i64> {
    match v {
        Value::Number(n) => n.as_i64().or_else(|| n.as_f64().filter(|f| f.is_finite()).map(|f| f.floor() as i64)),
        Value::String(s) => {
            let s = s.trim();
            s.parse::<i64>()
                .ok()
                .or_else(|| DateTime::parse_from_rfc3339(s).ok().map(|d| d.timestamp()))
        }
        _ => None,
    }
}

fn id_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Reads `tweets.jsonl`. Malformed JSON or an unknown `kind` is an error with
/// the line number; bad timestamps are kept as `None`.
pub fn load_tweets(path: &Path) -> Result<Vec<Tweet>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawTweet = serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        let kind = match raw.kind.as_str() {
            "D" | "d" => TweetKind::D,
            "S" | "s" => TweetKind::S,
            other => return Err(Error::parse(path, i + 1, format!("unknown kind `{other}`"))),
        };
        let id = id_string(&raw.id).ok_or_else(|| Error::parse(path, i + 1, "missing id"))?;
        out.push(Tweet {
            id,
            kind,
            ts: parse_timestamp(&raw.ts),
            parent_ts: parse_timestamp(&raw.parent_ts),
            parent_id: id_string(&raw.parent_id),
            text: raw.text,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConversationRecord {
    /// Posting time of the claim the D-tweet replies to, when known.
    pub original_post_time: Option<i64>,
    pub d_tweet_time: i64,
    pub d_tweet_id: String,
    pub s_tweets: Vec<(i64, String)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordStats {
    pub d_tweets: usize,
    pub s_attached: usize,
    /// S-tweets whose parent is not a known D-tweet.
    pub s_orphans: usize,
    /// Rows without a usable timestamp.
    pub untimed: usize,
}

/// Groups S-tweets under the D-tweet named by their `parent_id`. Records keep
/// the order of first appearance of their D-tweet.
pub fn build_records(tweets: &[Tweet]) -> (Vec<ConversationRecord>, RecordStats) {
    let mut stats = RecordStats::default();
    let mut records = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for t in tweets.iter().filter(|t| t.kind == TweetKind::D) {
        let Some(ts) = t.ts else {
            stats.untimed += 1;
            continue;
        };
        if index.contains_key(t.id.as_str()) {
            continue;
        }
        index.insert(&t.id, records.len());
        records.push(ConversationRecord {
            original_post_time: t.parent_ts,
            d_tweet_time: ts,
            d_tweet_id: t.id.clone(),
            s_tweets: Vec::new(),
        });
        stats.d_tweets += 1;
    }
    for t in tweets.iter().filter(|t| t.kind == TweetKind::S) {
        let Some(ts) = t.ts else {
            stats.untimed += 1;
            continue;
        };
        match t.parent_id.as_deref().and_then(|p| index.get(p)) {
            Some(&r) => {
                records[r].s_tweets.push((ts, t.id.clone()));
                stats.s_attached += 1;
            }
            None => stats.s_orphans += 1,
        }
    }
    (records, stats)
}

/// Duration buckets partitioning `[0, ∞)`.
pub const BUCKETS: [(&str, i64); 5] = [
    ("<1m", MINUTE),
    ("1m-1h", HOUR),
    ("1h-1d", DAY),
    ("1d-1w", WEEK),
    (">=1w", i64::MAX),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseTimeStats {
    pub count: usize,
    pub mean_seconds: f64,
    pub median_seconds: f64,
    /// Fraction of gaps in each of [`BUCKETS`].
    pub fraction_within: Vec<(String, f64)>,
    /// Fraction of gaps shorter than 86 400 s.
    pub within_one_day: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rejected {
    pub id: String,
    pub gap_seconds: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseTimes {
    pub stats: ResponseTimeStats,
    /// Accepted gaps in record order, for external hypothesis tests.
    pub gaps: Vec<i64>,
    pub rejected: Vec<Rejected>,
    /// Records without an original posting time.
    pub unknown_origin: usize,
}

fn median(sorted: &[i64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
    }
}

/// Summary statistics of nonnegative durations in seconds.
pub fn duration_stats(gaps: &[i64]) -> Result<ResponseTimeStats> {
    if gaps.is_empty() {
        return Err(Error::InvalidArgument("no durations to summarize".into()));
    }
    let n = gaps.len() as f64;
    let mut sorted = gaps.to_vec();
    sorted.sort_unstable();
    let mut lower = 0;
    let fraction_within = BUCKETS
        .iter()
        .map(|&(name, upper)| {
            let c = gaps.iter().filter(|&&g| g >= lower && g < upper).count();
            lower = upper;
            (name.to_string(), c as f64 / n)
        })
        .collect();
    Ok(ResponseTimeStats {
        count: gaps.len(),
        mean_seconds: gaps.iter().map(|&g| g as f64).sum::<f64>() / n,
        median_seconds: median(&sorted),
        fraction_within,
        within_one_day: gaps.iter().filter(|&&g| g < DAY).count() as f64 / n,
    })
}

/// Gap between each claim and the D-tweet answering it. Negative gaps are
/// rejected and listed.
pub fn d_response_times(records: &[ConversationRecord]) -> Result<ResponseTimes> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no conversation records".into()));
    }
    let mut gaps = Vec::new();
    let mut rejected = Vec::new();
    let mut unknown_origin = 0;
    for r in records {
        let Some(origin) = r.original_post_time else {
            unknown_origin += 1;
            continue;
        };
        let gap = r.d_tweet_time - origin;
        if gap < 0 {
            log::warn!("D-tweet {} precedes its claim by {} s; rejected", r.d_tweet_id, -gap);
            rejected.push(Rejected {
                id: r.d_tweet_id.clone(),
                gap_seconds: gap,
            });
        } else {
            gaps.push(gap);
        }
    }
    let stats = duration_stats(&gaps).map_err(|_| Error::InvalidArgument("no record has a valid response time".into()))?;
    Ok(ResponseTimes {
        stats,
        gaps,
        rejected,
        unknown_origin,
    })
}

/// Gap between each S-tweet and its D-tweet; negative gaps are rejected.
pub fn s_response_times(records: &[ConversationRecord]) -> (Vec<i64>, Vec<Rejected>) {
    let mut gaps = Vec::new();
    let mut rejected = Vec::new();
    for r in records {
        for (t, id) in &r.s_tweets {
            let gap = t - r.d_tweet_time;
            if gap < 0 {
                rejected.push(Rejected {
                    id: id.clone(),
                    gap_seconds: gap,
                });
            } else {
                gaps.push(gap);
            }
        }
    }
    (gaps, rejected)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterPosting {
    /// Consecutive `(δ_i, δ_{i+1})` within each D-tweet group.
    pub pairs: Vec<(i64, i64)>,
    pub deltas: Vec<i64>,
    pub mean_delta: Option<f64>,
}

/// Inter-posting gaps between time-sorted S-tweets of each group; a group of
/// `n` S-tweets yields `n − 1` gaps and `max(0, n − 2)` pairs.
pub fn s_inter_posting_pairs(records: &[ConversationRecord]) -> InterPosting {
    let mut pairs = Vec::new();
    let mut deltas = Vec::new();
    for r in records {
        let mut times: Vec<i64> = r.s_tweets.iter().map(|(t, _)| *t).collect();
        times.sort_unstable();
        let group: Vec<i64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        pairs.extend(group.windows(2).map(|w| (w[0], w[1])));
        deltas.extend(group);
    }
    let mean_delta = (!deltas.is_empty()).then(|| deltas.iter().map(|&d| d as f64).sum::<f64>() / deltas.len() as f64);
    InterPosting {
        pairs,
        deltas,
        mean_delta,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthCount {
    /// `YYYY-MM` in UTC.
    pub month: String,
    pub d: usize,
    pub s: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthlyCounts {
    pub months: Vec<MonthCount>,
    pub skipped: usize,
}

impl MonthlyCounts {
    pub fn total(&self) -> usize {
        self.months.iter().map(|m| m.d + m.s).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("month,d_tweets,s_tweets\n");
        for m in &self.months {
            out.push_str(&format!("{},{},{}\n", m.month, m.d, m.s));
        }
        out
    }
}

/// Per-month D and S counts over the full span, empty months included.
/// Tweets without a usable timestamp are counted in `skipped`.
pub fn monthly_counts(tweets: &[Tweet]) -> MonthlyCounts {
    let mut buckets: BTreeMap<(i32, u32), (usize, usize)> = BTreeMap::new();
    let mut skipped = 0;
    for t in tweets {
        let Some(dt) = t.ts.and_then(|s| DateTime::<Utc>::from_timestamp(s, 0)) else {
            skipped += 1;
            continue;
        };
        let e = buckets.entry((dt.year(), dt.month())).or_default();
        match t.kind {
            TweetKind::D => e.0 += 1,
            TweetKind::S => e.1 += 1,
        }
    }
    let mut months = Vec::new();
    if let (Some((&first, _)), Some((&last, _))) = (buckets.first_key_value(), buckets.last_key_value()) {
        let (mut y, mut m) = first;
        loop {
            let (d, s) = buckets.get(&(y, m)).copied().unwrap_or((0, 0));
            months.push(MonthCount {
                month: format!("{y:04}-{m:02}"),
                d,
                s,
            });
            if (y, m) == last {
                break;
            }
            if m == 12 {
                y += 1;
                m = 1;
            } else {
                m += 1;
            }
        }
    }
    MonthlyCounts { months, skipped }
}

/// Terms ranked by corpus-wide tf-idf, `Σ_d tf(t, d) · ln(N / df(t))`, ties
/// lexicographic.
pub fn top_terms<S: AsRef<str>>(docs: &[S], n: usize) -> Result<Vec<(String, f64)>> {
    if docs.is_empty() {
        return Err(Error::InvalidArgument("no documents".into()));
    }
    let stats = TermStats::from_corpus(docs);
    if stats.df.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let mut score: HashMap<&str, f64> = HashMap::new();
    for tf in &stats.counts {
        let mut terms: Vec<(&String, &usize)> = tf.iter().collect();
        terms.sort();
        for (t, &c) in terms {
            *score.entry(t.as_str()).or_insert(0.0) += c as f64 * stats.idf(t);
        }
    }
    let mut ranked: Vec<(String, f64)> = score.into_iter().map(|(t, s)| (t.to_string(), s)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(n);
    Ok(ranked)
}
