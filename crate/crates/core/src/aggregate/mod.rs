//! City-hour aggregation and the hourly weather join.

mod bins;
mod weather;

pub use bins::{
    bin_stream, bins_from_csv, bins_to_csv, finalize_bins, merge_partial_bins, BinInput, BinKey,
    CityHourBin, PartialBin,
};
pub use weather::{
    load_weather_table, map_weather_condition, WeatherCategory, WeatherTable, DEFAULT_WEATHER_MAP,
};
