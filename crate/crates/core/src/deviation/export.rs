use std::io::Read;

use chrono::NaiveDate;

use super::{DeviationScore, MergedEvent};
use crate::error::{Error, Result};

const DEVIATION_HEADER: [&str; 10] = [
    "city_id", "local_date", "hour", "polarity", "observed", "expected", "statistic", "p_value",
    "direction", "eligible",
];

fn csv_string(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv")
}

pub fn deviations_to_csv(scores: &[DeviationScore]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(DEVIATION_HEADER).expect("in-memory write");
    for s in scores {
        w.write_record([
            s.city_id.clone(),
            s.local_date.to_string(),
            s.hour.to_string(),
            s.polarity.to_string(),
            s.observed.to_string(),
            s.expected.to_string(),
            s.statistic.to_string(),
            s.p_value.to_string(),
            s.direction.to_string(),
            s.eligible.to_string(),
        ])
        .expect("in-memory write");
    }
    csv_string(w)
}

/// Reads a deviations export back. `n_total` is not exported and is
/// reconstructed as zero.
pub fn deviations_from_csv<R: Read>(reader: R) -> Result<Vec<DeviationScore>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse("deviations csv", line, e.to_string()))?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let bad = |what: &str| Error::parse("deviations csv", line, format!("bad {what}"));
        out.push(DeviationScore {
            city_id: field(0).to_string(),
            local_date: NaiveDate::parse_from_str(field(1), "%Y-%m-%d").map_err(|_| bad("local_date"))?,
            hour: field(2).parse().map_err(|_| bad("hour"))?,
            polarity: field(3).parse()?,
            n_total: 0,
            observed: field(4).parse().map_err(|_| bad("observed"))?,
            expected: field(5).parse().map_err(|_| bad("expected"))?,
            statistic: field(6).parse().map_err(|_| bad("statistic"))?,
            p_value: field(7).parse().map_err(|_| bad("p_value"))?,
            direction: field(8).parse()?,
            eligible: field(9).parse().map_err(|_| bad("eligible"))?,
        });
    }
    Ok(out)
}

pub fn events_to_csv(events: &[MergedEvent]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "rank", "scope", "id", "polarity", "direction", "start", "end", "max_statistic",
        "recurrence_interval",
    ])
    .expect("in-memory write");
    for e in events {
        w.write_record([
            e.rank.to_string(),
            e.scope.to_string(),
            e.id.clone(),
            e.polarity.to_string(),
            e.direction.to_string(),
            e.start.format("%Y-%m-%dT%H:%M").to_string(),
            e.end.format("%Y-%m-%dT%H:%M").to_string(),
            e.max_statistic.to_string(),
            e.recurrence_interval.to_string(),
        ])
        .expect("in-memory write");
    }
    csv_string(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deviation::Direction;
    use crate::polarity::Polarity;

    #[test]
    fn deviations_round_trip() {
        let s = DeviationScore {
            city_id: "nyc".into(),
            local_date: NaiveDate::from_ymd_opt(2017, 10, 2).unwrap(),
            hour: 7,
            polarity: Polarity::Positive,
            n_total: 0,
            observed: 41,
            expected: 33.123456789012345,
            statistic: 1.0 / 3.0,
            p_value: 0.5637028616507731,
            direction: Direction::Surplus,
            eligible: true,
        };
        let text = deviations_to_csv(std::slice::from_ref(&s));
        assert!(text.starts_with("city_id,local_date,hour,polarity,observed,expected,statistic,p_value,direction,eligible\n"));
        assert_eq!(deviations_from_csv(text.as_bytes()).unwrap(), vec![s]);
    }
}
