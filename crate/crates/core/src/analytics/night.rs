//! Splitting distance between the night window and the rest of the day.

use chrono_tz::Tz;

use super::kinematics::SpeedSegment;
use crate::scalar::Scalar;
use crate::time::DailyWindow;

/// Distance by time of day. `night_km + day_km` is the segment total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DayNightSplit<T> {
    pub night_km: T,
    pub day_km: T,
}

impl<T: Scalar> DayNightSplit<T> {
    pub fn total_km(&self) -> T {
        self.night_km + self.day_km
    }
}

/// Assigns each segment by the vehicle-local time of its midpoint.
pub fn split_day_night<T: Scalar>(segments: &[SpeedSegment<T>], tz: Tz, window: DailyWindow) -> DayNightSplit<T> {
    let mut split = DayNightSplit { night_km: T::zero(), day_km: T::zero() };
    for s in segments {
        if window.contains_instant(tz, s.mid()) {
            split.night_km = split.night_km + s.distance_km;
        } else {
            split.day_km = split.day_km + s.distance_km;
        }
    }
    split
}

pub fn night_km<T: Scalar>(segments: &[SpeedSegment<T>], tz: Tz, window: DailyWindow) -> T {
    split_day_night(segments, tz, window).night_km
}
