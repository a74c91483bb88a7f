use chrono::{Days, Duration, NaiveTime};
use chrono_tz::Tz;

use crate::time::{self, Timestamp};

/// Poll slots (vehicle-local `times`) falling in `(after, until]`, in order.
pub fn slots_between(tz: Tz, times: &[NaiveTime], after: Timestamp, until: Timestamp) -> Vec<Timestamp> {
    if until <= after {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut day = time::local_date(tz, after) - Days::new(1);
    let last = time::local_date(tz, until) + Days::new(1);
    while day <= last {
        for t in times {
            let slot = time::local_to_utc(tz, day, *t);
            if slot > after && slot <= until {
                out.push(slot);
            }
        }
        day = day + Days::new(1);
    }
    out.sort();
    out.dedup();
    out
}

/// A slot fires when the first tick at or after it comes within one tick
/// period; later than that it counts as missed and is never back-filled.
pub fn slot_is_missed(slot: Timestamp, now: Timestamp, tick: Duration) -> bool {
    now - slot >= tick
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::{hms, DEFAULT_TZ};
    use chrono::NaiveDate;

    fn at(d: u32, h: u32, m: u32) -> Timestamp {
        time::local_to_utc(DEFAULT_TZ, NaiveDate::from_ymd_opt(2022, 3, d).unwrap(), hms(h, m, 0))
    }

    #[test]
    fn slots_in_half_open_range() {
        let times = [hms(5, 0, 0), hms(22, 0, 0)];
        assert_eq!(slots_between(DEFAULT_TZ, &times, at(1, 4, 59), at(1, 5, 0)), vec![at(1, 5, 0)]);
        assert!(slots_between(DEFAULT_TZ, &times, at(1, 5, 0), at(1, 5, 1)).is_empty());
        assert_eq!(slots_between(DEFAULT_TZ, &times, at(1, 0, 0), at(3, 0, 0)).len(), 4);
    }

    #[test]
    fn slots_follow_local_time_across_dst() {
        // Summer time starts on 27 March 2022 in Luxembourg.
        let s = slots_between(DEFAULT_TZ, &[hms(5, 0, 0)], at(26, 0, 0), at(28, 0, 0));
        assert_eq!(s.len(), 2);
        assert_eq!((s[1] - s[0]).num_hours(), 23);
    }

    #[test]
    fn lateness_beyond_a_tick_is_missed() {
        let tick = Duration::seconds(60);
        assert!(!slot_is_missed(at(1, 5, 0), at(1, 5, 0), tick));
        assert!(!slot_is_missed(at(1, 5, 0), at(1, 5, 0) + Duration::seconds(59), tick));
        assert!(slot_is_missed(at(1, 5, 0), at(1, 5, 5), tick));
    }
}
