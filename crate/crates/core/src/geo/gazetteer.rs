use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use super::resolve::normalize_location;
use crate::error::{Error, Result};

/// Place types that may stand for a user's home location.
pub const ACCEPTED_PLACE_TYPES: [&str; 7] =
    ["city", "county", "village", "suburb", "hamlet", "state", "country"];

#[derive(Clone, Debug, PartialEq)]
pub struct GazetteerCandidate {
    pub resolved_name: String,
    pub type_tag: String,
    pub confidence: f64,
    pub raw: String,
}

/// First candidate, in response order, whose type is an accepted place type.
pub fn filter_gazetteer_candidates(cands: &[GazetteerCandidate]) -> Option<&GazetteerCandidate> {
    cands
        .iter()
        .find(|c| ACCEPTED_PLACE_TYPES.contains(&c.type_tag.as_str()))
}

#[derive(Deserialize)]
struct WirePlace {
    #[serde(rename = "type")]
    type_tag: String,
    display_name: String,
    #[serde(default)]
    importance: Option<f64>,
}

/// Parses a JSON array of place objects (`type`, `display_name`, optional
/// `importance`). Order is preserved.
pub fn parse_gazetteer_response(body: &str) -> Result<Vec<GazetteerCandidate>> {
    let values: Vec<serde_json::Value> = serde_json::from_str(body)
        .map_err(|e| Error::Transport(format!("malformed gazetteer response: {e}")))?;
    values
        .into_iter()
        .map(|v| {
            let raw = v.to_string();
            let place: WirePlace = serde_json::from_value(v)
                .map_err(|e| Error::Transport(format!("malformed gazetteer place: {e}")))?;
            Ok(GazetteerCandidate {
                resolved_name: place.display_name,
                type_tag: place.type_tag.to_lowercase(),
                confidence: place.importance.unwrap_or(0.0),
                raw,
            })
        })
        .collect()
}

/// Anything that can answer a free-text place query.
pub trait GazetteerSource: Send + Sync {
    /// `Err(Error::Transport)` for failures worth retrying later.
    fn query(&self, raw: &str) -> Result<Vec<GazetteerCandidate>>;
}

/// Replays recorded responses keyed by normalized query. Unknown queries get
/// an empty answer.
#[derive(Clone, Debug, Default)]
pub struct RecordedGazetteer {
    responses: HashMap<String, String>,
}

impl RecordedGazetteer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query: &str, response_json: &str) {
        self.responses
            .insert(normalize_location(query), response_json.to_string());
    }

    /// Loads a JSON object mapping query strings to response arrays.
    pub fn from_json(text: &str) -> Result<Self> {
        let map: HashMap<String, serde_json::Value> = serde_json::from_str(text)
            .map_err(|e| Error::parse("gazetteer fixture", e.line(), e.to_string()))?;
        let mut out = Self::new();
        for (q, v) in map {
            out.insert(&q, &v.to_string());
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

impl GazetteerSource for RecordedGazetteer {
    fn query(&self, raw: &str) -> Result<Vec<GazetteerCandidate>> {
        match self.responses.get(&normalize_location(raw)) {
            Some(body) => parse_gazetteer_response(body),
            None => Ok(Vec::new()),
        }
    }
}

#[cfg(feature = "http")]
mod http {
    use std::sync::Mutex;
    use std::time::{Duration, Instant};

    use super::{parse_gazetteer_response, GazetteerCandidate, GazetteerSource};
    use crate::error::{Error, Result};

    /// Live HTTP client for a Nominatim-style search endpoint.
    ///
    /// Requests are serialized and spaced at least `1 / max_rate` seconds
    /// apart, across all threads sharing the client.
    pub struct HttpGazetteer {
        endpoint: String,
        user_agent: String,
        min_interval: Duration,
        agent: ureq::Agent,
        last_request: Mutex<Option<Instant>>,
    }

    impl HttpGazetteer {
        pub fn new(endpoint: &str, user_agent: &str, max_requests_per_sec: f64) -> Result<Self> {
            if !(max_requests_per_sec > 0.0) {
                return Err(Error::Validation("gazetteer rate limit must be positive".into()));
            }
            if user_agent.trim().is_empty() {
                return Err(Error::Validation("gazetteer user agent must be set".into()));
            }
            let agent: ureq::Agent = ureq::Agent::config_builder()
                .timeout_global(Some(Duration::from_secs(30)))
                .http_status_as_error(true)
                .build()
                .into();
            Ok(Self {
                endpoint: endpoint.to_string(),
                user_agent: user_agent.to_string(),
                min_interval: Duration::from_secs_f64(1.0 / max_requests_per_sec),
                agent,
                last_request: Mutex::new(None),
            })
        }
    }

    impl GazetteerSource for HttpGazetteer {
        fn query(&self, raw: &str) -> Result<Vec<GazetteerCandidate>> {
            let mut last = self.last_request.lock().expect("rate limiter poisoned");
            if let Some(prev) = *last {
                let elapsed = prev.elapsed();
                if elapsed < self.min_interval {
                    std::thread::sleep(self.min_interval - elapsed);
                }
            }
            *last = Some(Instant::now());
            let body = self
                .agent
                .get(&self.endpoint)
                .query("q", raw)
                .query("format", "json")
                .header("User-Agent", &self.user_agent)
                .call()
                .map_err(|e| Error::Transport(e.to_string()))?
                .body_mut()
                .read_to_string()
                .map_err(|e| Error::Transport(e.to_string()))?;
            drop(last);
            parse_gazetteer_response(&body)
        }
    }
}

#[cfg(feature = "http")]
pub use http::HttpGazetteer;
