//! Timestamps, the injectable simulation clock and vehicle-local time helpers.

use chrono::{DateTime, Duration, NaiveDate, NaiveTime, TimeZone, Timelike, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

pub type Timestamp = DateTime<Utc>;

/// Default vehicle-local time zone.
pub const DEFAULT_TZ: Tz = chrono_tz::Europe::Luxembourg;

/// Start of simulations that do not name one: Monday 2023-01-02, 00:00 UTC.
pub fn default_epoch() -> Timestamp {
    Utc.with_ymd_and_hms(2023, 1, 2, 0, 0, 0).single().expect("valid date")
}

/// Truncates to millisecond precision, the storage resolution.
pub fn to_millis(ts: Timestamp) -> Timestamp {
    let ms = ts.timestamp_millis();
    Utc.timestamp_millis_opt(ms).single().expect("millisecond timestamp in range")
}

pub fn format_rfc3339(ts: &Timestamp) -> String {
    ts.to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn parse_rfc3339(raw: &str) -> Result<Timestamp, chrono::ParseError> {
    DateTime::parse_from_rfc3339(raw).map(|t| t.with_timezone(&Utc))
}

/// Serde adapter writing RFC 3339 UTC with millisecond precision.
pub mod rfc3339 {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &Timestamp, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rfc3339(ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Timestamp, D::Error> {
        let raw = String::deserialize(d)?;
        parse_rfc3339(&raw).map_err(serde::de::Error::custom)
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(ts: &Option<Timestamp>, s: S) -> Result<S::Ok, S::Error> {
            match ts {
                Some(ts) => s.serialize_some(&format_rfc3339(ts)),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Timestamp>, D::Error> {
            let raw: Option<String> = Option::deserialize(d)?;
            raw.map(|r| parse_rfc3339(&r).map_err(serde::de::Error::custom))
                .transpose()
        }
    }
}

/// Simulated clock. Time only moves when the owner advances it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimClock {
    #[serde(with = "rfc3339")]
    now: Timestamp,
}

impl SimClock {
    pub fn starting_at(now: Timestamp) -> Self {
        Self { now: to_millis(now) }
    }

    pub fn now(&self) -> Timestamp {
        self.now
    }

    pub fn advance(&mut self, by: Duration) -> Timestamp {
        self.now += by;
        self.now
    }

    /// Moves the clock forward to `to`; never moves it backwards.
    pub fn set(&mut self, to: Timestamp) -> Timestamp {
        if to > self.now {
            self.now = to_millis(to);
        }
        self.now
    }
}

/// Resolves a vehicle-local wall-clock time to UTC. Nonexistent local times
/// (spring-forward gap) resolve to the instant right after the gap.
pub fn local_to_utc(tz: Tz, date: NaiveDate, time: NaiveTime) -> Timestamp {
    let naive = date.and_time(time);
    match tz.from_local_datetime(&naive) {
        chrono::LocalResult::Single(t) => t.with_timezone(&Utc),
        chrono::LocalResult::Ambiguous(first, _) => first.with_timezone(&Utc),
        chrono::LocalResult::None => {
            let shifted = naive + Duration::hours(1);
            tz.from_local_datetime(&shifted)
                .earliest()
                .expect("one hour past a DST gap is a valid local time")
                .with_timezone(&Utc)
        }
    }
}

pub fn local_date(tz: Tz, ts: Timestamp) -> NaiveDate {
    ts.with_timezone(&tz).date_naive()
}

pub fn local_time(tz: Tz, ts: Timestamp) -> NaiveTime {
    ts.with_timezone(&tz).time()
}

/// Seconds since local midnight, used by window membership tests.
pub fn local_seconds_of_day(tz: Tz, ts: Timestamp) -> u32 {
    local_time(tz, ts).num_seconds_from_midnight()
}

/// A daily wall-clock window such as 22:00-05:00. Windows whose end precedes
/// their start wrap across midnight. Membership is half-open: `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyWindow {
    pub start: NaiveTime,
    pub end: NaiveTime,
}

impl DailyWindow {
    pub fn new(start: NaiveTime, end: NaiveTime) -> Self {
        Self { start, end }
    }

    /// 22:00-05:00.
    pub fn night() -> Self {
        Self {
            start: NaiveTime::from_hms_opt(22, 0, 0).unwrap(),
            end: NaiveTime::from_hms_opt(5, 0, 0).unwrap(),
        }
    }

    pub fn contains(&self, t: NaiveTime) -> bool {
        if self.start <= self.end {
            t >= self.start && t < self.end
        } else {
            t >= self.start || t < self.end
        }
    }

    pub fn contains_instant(&self, tz: Tz, ts: Timestamp) -> bool {
        self.contains(local_time(tz, ts))
    }
}

impl Default for DailyWindow {
    fn default() -> Self {
        Self::night()
    }
}

pub fn hms(h: u32, m: u32, s: u32) -> NaiveTime {
    NaiveTime::from_hms_opt(h, m, s).expect("valid wall-clock time")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn night_window_wraps_midnight() {
        let w = DailyWindow::night();
        assert!(w.contains(hms(22, 0, 0)));
        assert!(w.contains(hms(2, 15, 0)));
        assert!(w.contains(hms(4, 59, 59)));
        assert!(!w.contains(hms(5, 0, 0)));
        assert!(!w.contains(hms(21, 59, 59)));
        assert!(!w.contains(hms(12, 0, 0)));
    }

    #[test]
    fn local_slot_resolution_follows_dst() {
        let winter = local_to_utc(DEFAULT_TZ, NaiveDate::from_ymd_opt(2022, 1, 10).unwrap(), hms(5, 0, 0));
        let summer = local_to_utc(DEFAULT_TZ, NaiveDate::from_ymd_opt(2022, 7, 10).unwrap(), hms(5, 0, 0));
        assert_eq!(winter.hour(), 4);
        assert_eq!(summer.hour(), 3);
    }

    #[test]
    fn clock_never_goes_back() {
        let t0 = Utc.with_ymd_and_hms(2022, 2, 1, 0, 0, 0).unwrap();
        let mut c = SimClock::starting_at(t0);
        c.advance(Duration::seconds(90));
        c.set(t0);
        assert_eq!(c.now(), t0 + Duration::seconds(90));
    }

    #[test]
    fn rfc3339_is_millisecond_utc() {
        let t = Utc.with_ymd_and_hms(2022, 2, 15, 5, 0, 0).unwrap();
        assert_eq!(format_rfc3339(&t), "2022-02-15T05:00:00.000Z");
    }
}
