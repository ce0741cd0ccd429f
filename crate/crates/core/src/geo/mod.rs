//! Location resolution and local-time conversion.

mod cache;
mod gazetteer;
mod registry;
mod resolve;
mod time;

pub use cache::{CacheEntry, ResolutionCache, DEFAULT_NEGATIVE_TTL_SECS};
#[cfg(feature = "http")]
pub use gazetteer::HttpGazetteer;
pub use gazetteer::{
    filter_gazetteer_candidates, parse_gazetteer_response, GazetteerCandidate, GazetteerSource,
    RecordedGazetteer, ACCEPTED_PLACE_TYPES,
};
pub use registry::{load_city_registry, CityEntry, CityRegistry, ZoneRule};
pub use resolve::{normalize_location, Resolution, Resolver};
pub use time::{localize_timestamp, LocalTime};
