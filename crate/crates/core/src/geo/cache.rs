use std::collections::HashMap;
use std::path::Path;
use std::sync::RwLock;

use crate::error::{Error, Result};

pub const DEFAULT_NEGATIVE_TTL_SECS: u64 = 30 * 24 * 3600;

/// A cached answer. `expires_at_epoch == 0` never expires.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheEntry {
    pub city_id: Option<String>,
    pub expires_at_epoch: u64,
}

impl CacheEntry {
    pub fn is_live(&self, now_epoch: u64) -> bool {
        self.expires_at_epoch == 0 || now_epoch < self.expires_at_epoch
    }
}

/// Normalized query → resolution, shared between workers.
#[derive(Debug, Default)]
pub struct ResolutionCache {
    entries: RwLock<HashMap<String, CacheEntry>>,
    negative_ttl_secs: u64,
}

impl ResolutionCache {
    pub fn new(negative_ttl_secs: u64) -> Self {
        Self {
            entries: RwLock::new(HashMap::new()),
            negative_ttl_secs,
        }
    }

    pub fn get(&self, key: &str, now_epoch: u64) -> Option<CacheEntry> {
        let map = self.entries.read().expect("cache lock poisoned");
        map.get(key).filter(|e| e.is_live(now_epoch)).cloned()
    }

    pub fn put_positive(&self, key: &str, city_id: &str) {
        self.put(
            key,
            CacheEntry {
                city_id: Some(city_id.to_string()),
                expires_at_epoch: 0,
            },
        );
    }

    pub fn put_negative(&self, key: &str, now_epoch: u64) {
        self.put(
            key,
            CacheEntry {
                city_id: None,
                expires_at_epoch: now_epoch + self.negative_ttl_secs.max(1),
            },
        );
    }

    fn put(&self, key: &str, entry: CacheEntry) {
        self.entries
            .write()
            .expect("cache lock poisoned")
            .insert(key.to_string(), entry);
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// CSV with header `normalized_query,city_id_or_NONE,expires_at_epoch`,
    /// rows sorted by query.
    pub fn to_csv(&self) -> String {
        let map = self.entries.read().expect("cache lock poisoned");
        let mut keys: Vec<&String> = map.keys().collect();
        keys.sort();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["normalized_query", "city_id_or_NONE", "expires_at_epoch"])
            .expect("in-memory write");
        for k in keys {
            let e = &map[k];
            w.write_record([
                k.as_str(),
                e.city_id.as_deref().unwrap_or("NONE"),
                &e.expires_at_epoch.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn from_csv(text: &str, negative_ttl_secs: u64) -> Result<Self> {
        let cache = Self::new(negative_ttl_secs);
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        for (i, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| Error::parse("resolution cache", i + 2, e.to_string()))?;
            if row.len() != 3 {
                return Err(Error::parse("resolution cache", i + 2, "expected 3 fields"));
            }
            let expires_at_epoch = row[2]
                .parse()
                .map_err(|_| Error::parse("resolution cache", i + 2, "bad expires_at_epoch"))?;
            let city_id = (&row[1] != "NONE").then(|| row[1].to_string());
            cache.put(
                &row[0],
                CacheEntry {
                    city_id,
                    expires_at_epoch,
                },
            );
        }
        Ok(cache)
    }

    /// Loads a cache file; a missing file yields an empty cache.
    pub fn load(path: impl AsRef<Path>, negative_ttl_secs: u64) -> Result<Self> {
        let path = path.as_ref();
        match std::fs::read_to_string(path) {
            Ok(text) => Self::from_csv(&text, negative_ttl_secs),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::new(negative_ttl_secs)),
            Err(e) => Err(Error::io(path, e)),
        }
    }
}
