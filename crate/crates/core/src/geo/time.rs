use chrono::{DateTime, Datelike, FixedOffset, NaiveDate, NaiveDateTime, Timelike};

use super::registry::{CityEntry, ZoneRule};

/// Local calendar position of an instant. `day_of_week` 0 is Monday.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LocalTime {
    pub date: NaiveDate,
    pub hour: u8,
    pub day_of_week: u8,
}

impl LocalTime {
    pub fn from_naive(dt: NaiveDateTime) -> Self {
        Self {
            date: dt.date(),
            hour: dt.hour() as u8,
            day_of_week: dt.weekday().num_days_from_monday() as u8,
        }
    }
}

pub fn localize_timestamp(utc_epoch: i64, entry: &CityEntry) -> LocalTime {
    let utc = DateTime::from_timestamp(utc_epoch, 0).expect("timestamp in chrono range");
    let local = match entry.zone() {
        ZoneRule::Iana(tz) => utc.with_timezone(&tz).naive_local(),
        ZoneRule::Fixed(minutes) => {
            let offset = FixedOffset::east_opt(minutes * 60).unwrap_or_else(|| {
                FixedOffset::east_opt(0).expect("zero offset")
            });
            utc.with_timezone(&offset).naive_local()
        }
    };
    LocalTime::from_naive(local)
}
