use super::cache::ResolutionCache;
use super::gazetteer::{filter_gazetteer_candidates, GazetteerSource};
use super::registry::CityRegistry;
use crate::error::Error;

/// Lowercase, trim, collapse internal whitespace and strip non-alphanumeric
/// characters from both ends.
pub fn normalize_location(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_string()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Resolution {
    City(String),
    Unresolved {
        /// The gazetteer accepted a place that no registered city aliases.
        gazetteer_unmatched: bool,
    },
    /// Gazetteer unreachable; not cached, retried on the next run.
    Transient,
}

/// Alias table first, then cache, then the gazetteer (if any).
pub struct Resolver<'a> {
    registry: &'a CityRegistry,
    gazetteer: Option<&'a dyn GazetteerSource>,
    cache: &'a ResolutionCache,
}

impl<'a> Resolver<'a> {
    pub fn new(
        registry: &'a CityRegistry,
        gazetteer: Option<&'a dyn GazetteerSource>,
        cache: &'a ResolutionCache,
    ) -> Self {
        Self {
            registry,
            gazetteer,
            cache,
        }
    }

    pub fn resolve(&self, raw: &str, now_epoch: u64) -> Resolution {
        let key = normalize_location(raw);
        if key.is_empty() {
            return Resolution::Unresolved {
                gazetteer_unmatched: false,
            };
        }
        if let Some(entry) = self.registry.lookup_alias(&key) {
            return Resolution::City(entry.city_id.clone());
        }
        if let Some(hit) = self.cache.get(&key, now_epoch) {
            return match hit.city_id {
                Some(id) if self.registry.get(&id).is_some() => Resolution::City(id),
                _ => Resolution::Unresolved {
                    gazetteer_unmatched: false,
                },
            };
        }
        let Some(gazetteer) = self.gazetteer else {
            return Resolution::Unresolved {
                gazetteer_unmatched: false,
            };
        };
        let cands = match gazetteer.query(raw) {
            Ok(c) => c,
            Err(Error::Transport(_)) => return Resolution::Transient,
            Err(_) => return Resolution::Transient,
        };
        let Some(best) = filter_gazetteer_candidates(&cands) else {
            self.cache.put_negative(&key, now_epoch);
            return Resolution::Unresolved {
                gazetteer_unmatched: false,
            };
        };
        match self.match_place_name(&best.resolved_name) {
            Some(id) => {
                self.cache.put_positive(&key, &id);
                Resolution::City(id)
            }
            None => {
                self.cache.put_negative(&key, now_epoch);
                Resolution::Unresolved {
                    gazetteer_unmatched: true,
                }
            }
        }
    }

    /// Whole display name first, then its leading comma-separated component.
    fn match_place_name(&self, name: &str) -> Option<String> {
        let whole = normalize_location(name);
        if let Some(e) = self.registry.lookup_alias(&whole) {
            return Some(e.city_id.clone());
        }
        let head = normalize_location(name.split(',').next().unwrap_or(""));
        self.registry.lookup_alias(&head).map(|e| e.city_id.clone())
    }
}
