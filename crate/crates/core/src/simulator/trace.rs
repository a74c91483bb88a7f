//! Synthetic trip generator.
//!
//! Trips are sequences of constant-speed legs whose durations are whole
//! seconds, so sampling a trip every second lands exactly on leg boundaries.
//! Positions advance along great circles on a sphere of radius
//! [`EARTH_RADIUS_KM`]. Each trip carries its own ground truth (distance,
//! night distance, scripted harsh-brake instants) computed from the legs, not
//! from the sampled positions.

use std::io::{BufRead, Write};

use chrono::{Days, Duration, NaiveDate};
use chrono_tz::Tz;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Position, RoadClass, Vin};
use crate::time::{self, DailyWindow, Timestamp};

pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Acceleration used when pulling away and when stopping (km/h per second).
const START_STOP_STEP_KMH: f64 = 7.2;
/// Acceleration between road sections and after a harsh brake.
const CRUISE_CHANGE_STEP_KMH: f64 = 3.6;
/// Speed lost per second during a scripted harsh brake (5 m/s²).
const HARSH_BRAKE_STEP_KMH: f64 = 18.0;
/// Minimum separation between consecutive trips.
const TRIP_GAP_SECS: i64 = 20 * 60;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("trip model field {0} must be strictly positive")]
    NotPositive(&'static str),
    #[error("night_trip_fraction must lie in [0, 1], got {0}")]
    BadFraction(f64),
    #[error("gps_emit_interval_secs must be at least 1")]
    BadEmitInterval,
    #[error("speed profile shares must sum to a positive value")]
    EmptySpeedProfile,
    #[error("days must be at least 1")]
    NoDays,
    #[error("trace line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("trace io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthDistribution {
    pub mean: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadShare {
    pub share: f64,
    pub speed_kmh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile {
    pub urban: RoadShare,
    pub rural: RoadShare,
    pub highway: RoadShare,
}

impl SpeedProfile {
    fn get(&self, class: RoadClass) -> RoadShare {
        match class {
            RoadClass::Urban => self.urban,
            RoadClass::Rural => self.rural,
            RoadClass::Highway => self.highway,
        }
    }
}

/// How many trips a generated day holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripCount {
    #[default]
    Poisson,
    /// `trips_per_day` rounded, every day.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripModel {
    pub trips_per_day: f64,
    #[serde(default)]
    pub trip_count: TripCount,
    pub trip_length_km: LengthDistribution,
    pub night_trip_fraction: f64,
    pub speed_profile: SpeedProfile,
    /// Scripted harsh brakes per 100 km.
    pub harsh_brake_rate: f64,
    pub gps_emit_interval_secs: u32,
}

impl TripModel {
    pub fn validate(&self) -> Result<(), TraceError> {
        let positive = [
            ("trips_per_day", self.trips_per_day),
            ("trip_length_km.mean", self.trip_length_km.mean),
            ("speed_profile.urban.speed_kmh", self.speed_profile.urban.speed_kmh),
            ("speed_profile.rural.speed_kmh", self.speed_profile.rural.speed_kmh),
            ("speed_profile.highway.speed_kmh", self.speed_profile.highway.speed_kmh),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(TraceError::NotPositive(name));
            }
        }
        if !(self.trip_length_km.spread >= 0.0) {
            return Err(TraceError::NotPositive("trip_length_km.spread"));
        }
        if !(self.harsh_brake_rate >= 0.0) {
            return Err(TraceError::NotPositive("harsh_brake_rate"));
        }
        if !(0.0..=1.0).contains(&self.night_trip_fraction) {
            return Err(TraceError::BadFraction(self.night_trip_fraction));
        }
        if self.gps_emit_interval_secs == 0 {
            return Err(TraceError::BadEmitInterval);
        }
        let p = &self.speed_profile;
        let shares = [p.urban.share, p.rural.share, p.highway.share];
        if shares.iter().any(|s| !(*s >= 0.0)) || shares.iter().sum::<f64>() <= 0.0 {
            return Err(TraceError::EmptySpeedProfile);
        }
        Ok(())
    }

    /// Occasional short urban driving, tuned to the volume of a small city car.
    pub fn city_car() -> Self {
        Self {
            trips_per_day: 0.6,
            trip_count: TripCount::Poisson,
            trip_length_km: LengthDistribution { mean: 4.0, spread: 1.5 },
            night_trip_fraction: 0.1,
            speed_profile: SpeedProfile {
                urban: RoadShare { share: 0.8, speed_kmh: 38.0 },
                rural: RoadShare { share: 0.2, speed_kmh: 70.0 },
                highway: RoadShare { share: 0.0, speed_kmh: 110.0 },
            },
            harsh_brake_rate: 3.0,
            gps_emit_interval_secs: 30,
        }
    }

    /// Daily commuting with a motorway share.
    pub fn commuter() -> Self {
        Self {
            trips_per_day: 2.0,
            trip_count: TripCount::Poisson,
            trip_length_km: LengthDistribution { mean: 12.0, spread: 4.0 },
            night_trip_fraction: 0.15,
            speed_profile: SpeedProfile {
                urban: RoadShare { share: 0.4, speed_kmh: 40.0 },
                rural: RoadShare { share: 0.35, speed_kmh: 75.0 },
                highway: RoadShare { share: 0.25, speed_kmh: 115.0 },
            },
            harsh_brake_rate: 2.0,
            gps_emit_interval_secs: 30,
        }
    }
}

/// A constant-speed stretch of a trip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub duration_s: u32,
    pub speed_kmh: f64,
    pub heading_deg: f64,
    pub road_class: RoadClass,
}

impl Leg {
    pub fn distance_km(&self) -> f64 {
        self.speed_kmh * self.duration_s as f64 / 3600.0
    }
}

/// Vehicle kinematic state at one instant of a trip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    #[serde(with = "time::rfc3339")]
    pub at: Timestamp,
    pub position: Position,
    pub speed_kmh: f64,
    pub heading_deg: f64,
    /// Distance covered since the trip started.
    pub distance_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub vin: Vin,
    pub seq: u32,
    #[serde(with = "time::rfc3339")]
    pub start: Timestamp,
    pub origin: Position,
    pub legs: Vec<Leg>,
    pub night: bool,
    /// Start of the first decelerating second of each scripted harsh brake.
    #[serde(with = "timestamps")]
    pub scripted_brakes: Vec<Timestamp>,
    pub distance_km: f64,
    pub night_km: f64,
}

mod timestamps {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Timestamp], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(time::format_rfc3339))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Timestamp>, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter()
            .map(|r| time::parse_rfc3339(r).map_err(serde::de::Error::custom))
            .collect()
    }
}

impl Trip {
    pub fn duration_s(&self) -> u32 {
        self.legs.iter().map(|l| l.duration_s).sum()
    }

    pub fn end(&self) -> Timestamp {
        self.start + Duration::seconds(self.duration_s() as i64)
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        t >= self.start && t <= self.end()
    }

    fn leg_starts(&self) -> Vec<Position> {
        let mut out = Vec::with_capacity(self.legs.len() + 1);
        let mut p = self.origin;
        out.push(p);
        for leg in &self.legs {
            p = destination(p, leg.heading_deg, leg.distance_km());
            out.push(p);
        }
        out
    }

    pub fn end_position(&self) -> Position {
        *self.leg_starts().last().expect("origin is always present")
    }

    /// State at `t`, clamped to the trip's extent.
    pub fn state_at(&self, t: Timestamp) -> TracePoint {
        let offset_ms = (t - self.start).num_milliseconds().clamp(0, self.duration_s() as i64 * 1000);
        let starts = self.leg_starts();
        let mut elapsed_ms = 0i64;
        let mut covered = 0.0;
        for (i, leg) in self.legs.iter().enumerate() {
            let leg_ms = leg.duration_s as i64 * 1000;
            if offset_ms < elapsed_ms + leg_ms || i + 1 == self.legs.len() {
                let into = ((offset_ms - elapsed_ms) as f64 / 1000.0).min(leg.duration_s as f64);
                let d = leg.speed_kmh * into / 3600.0;
                return TracePoint {
                    at: t.max(self.start).min(self.end()),
                    position: destination(starts[i], leg.heading_deg, d),
                    speed_kmh: if into >= leg.duration_s as f64 { 0.0 } else { leg.speed_kmh },
                    heading_deg: leg.heading_deg,
                    distance_km: covered + d,
                };
            }
            elapsed_ms += leg_ms;
            covered += leg.distance_km();
        }
        TracePoint { at: self.start, position: self.origin, speed_kmh: 0.0, heading_deg: 0.0, distance_km: 0.0 }
    }

    /// Points every `interval_s` seconds from the start, plus the end point.
    pub fn sample(&self, interval_s: u32) -> Vec<TracePoint> {
        let interval = interval_s.max(1) as i64;
        let total = self.duration_s() as i64;
        let starts = self.leg_starts();
        let mut out = Vec::with_capacity((total / interval + 2) as usize);
        let mut leg_idx = 0usize;
        let mut leg_start_s = 0i64;
        let mut covered = 0.0;
        let mut offsets: Vec<i64> = (0..=total).step_by(interval as usize).collect();
        if *offsets.last().unwrap() != total {
            offsets.push(total);
        }
        for off in offsets {
            while leg_idx + 1 < self.legs.len() && off >= leg_start_s + self.legs[leg_idx].duration_s as i64 {
                covered += self.legs[leg_idx].distance_km();
                leg_start_s += self.legs[leg_idx].duration_s as i64;
                leg_idx += 1;
            }
            let leg = &self.legs[leg_idx];
            let into = (off - leg_start_s) as f64;
            let d = leg.speed_kmh * into / 3600.0;
            let moving = off < total;
            out.push(TracePoint {
                at: self.start + Duration::seconds(off),
                position: destination(starts[leg_idx], leg.heading_deg, d),
                speed_kmh: if moving { leg.speed_kmh } else { 0.0 },
                heading_deg: leg.heading_deg,
                distance_km: covered + d,
            });
        }
        out
    }

    /// Instants at which a location_change notification fires while driving.
    pub fn emission_times(&self, interval_s: u32) -> impl Iterator<Item = Timestamp> + '_ {
        let interval = interval_s.max(1) as i64;
        let n = self.duration_s() as i64 / interval;
        (1..=n).map(move |k| self.start + Duration::seconds(k * interval))
    }
}

/// Point reached from `from` after `distance_km` along initial bearing `bearing_deg`.
pub fn destination(from: Position, bearing_deg: f64, distance_km: f64) -> Position {
    if distance_km == 0.0 {
        return from;
    }
    let delta = distance_km / EARTH_RADIUS_KM;
    let theta = bearing_deg.to_radians();
    let phi1 = from.lat.to_radians();
    let lambda1 = from.lon.to_radians();
    let sin_phi2 = phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos();
    let phi2 = sin_phi2.asin();
    let lambda2 = lambda1 + (theta.sin() * delta.sin() * phi1.cos()).atan2(delta.cos() - phi1.sin() * sin_phi2);
    let lon = (lambda2.to_degrees() + 540.0).rem_euclid(360.0) - 180.0;
    Position::new(phi2.to_degrees(), lon)
}

fn initial_bearing(from: Position, to: Position) -> f64 {
    let (p1, p2) = (from.lat.to_radians(), to.lat.to_radians());
    let dl = (to.lon - from.lon).to_radians();
    let y = dl.sin() * p2.cos();
    let x = p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos();
    (y.atan2(x).to_degrees() + 360.0) % 360.0
}

fn approx_km(a: Position, b: Position) -> f64 {
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians() * ((a.lat + b.lat) / 2.0).to_radians().cos();
    EARTH_RADIUS_KM * (dlat * dlat + dlon * dlon).sqrt()
}

/// Inputs for trace generation beyond the trip model itself.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSpec<'a> {
    pub vin: &'a Vin,
    pub home: Position,
    pub tz: Tz,
    pub model: &'a TripModel,
    /// Local date of generation day 0.
    pub first_day: NaiveDate,
}

/// Legs of a trip before it has been placed in time and space.
struct Draft {
    legs: Vec<Leg>,
    /// Offsets in seconds from trip start of scripted brakes.
    brake_offsets: Vec<u32>,
    night: bool,
}

impl Draft {
    fn duration_s(&self) -> i64 {
        self.legs.iter().map(|l| l.duration_s as i64).sum()
    }
}

fn day_seed(seed: u64, vin: &Vin, day: u32) -> u64 {
    // FNV-1a over the VIN, mixed with seed and day.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in vin.as_str().bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed.rotate_left(17) ^ (day as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

struct LegBuilder {
    legs: Vec<Leg>,
    speed: f64,
    elapsed: u32,
    heading: f64,
}

impl LegBuilder {
    fn push(&mut self, duration_s: u32, speed_kmh: f64, class: RoadClass) {
        if duration_s == 0 {
            return;
        }
        self.legs.push(Leg { duration_s, speed_kmh, heading_deg: self.heading, road_class: class });
        self.speed = speed_kmh;
        self.elapsed += duration_s;
    }

    /// One-second steps from the current speed towards `target`, stopping short of it.
    fn ramp(&mut self, target: f64, step: f64, class: RoadClass) {
        let mut v = self.speed;
        loop {
            let next = if target > v { v + step } else { v - step };
            if (target > v && next >= target) || (target < v && next <= target) || target == v {
                break;
            }
            v = (next * 10.0).round() / 10.0;
            self.push(1, v, class);
        }
    }
}

fn draft_trip(model: &TripModel, night: bool, rng: &mut ChaCha8Rng) -> Draft {
    let profile = &model.speed_profile;
    let length_dist = Normal::new(model.trip_length_km.mean, model.trip_length_km.spread.max(1e-9))
        .expect("validated spread");
    let target_km = length_dist.sample(rng).max(1.0);
    let shares: Vec<(RoadClass, f64)> = RoadClass::ALL.iter().map(|c| (*c, profile.get(*c).share)).collect();
    let share_total: f64 = shares.iter().map(|s| s.1).sum();
    let heading_noise = Normal::new(0.0, 20.0).expect("constant");

    let mut b = LegBuilder { legs: Vec::new(), speed: 0.0, elapsed: 0, heading: 0.0 };
    let mut brake_offsets = Vec::new();
    let mut built_km = 0.0;
    let mut first = true;
    while built_km < target_km - 0.05 {
        let mut pick = rng.gen::<f64>() * share_total;
        let mut class = RoadClass::Urban;
        for (c, s) in &shares {
            if pick < *s {
                class = *c;
                break;
            }
            pick -= s;
        }
        let (lo, hi): (f64, f64) = match class {
            RoadClass::Urban => (0.5, 3.0),
            RoadClass::Rural => (2.0, 8.0),
            RoadClass::Highway => (5.0, 20.0),
        };
        let section_km = rng.gen_range(lo..hi).min(target_km - built_km).max(0.3);
        let speed = (profile.get(class).speed_kmh * rng.gen_range(0.9..1.1) * 10.0).round() / 10.0;
        if !first {
            b.heading = (b.heading + heading_noise.sample(rng) + 360.0) % 360.0;
        }
        let dist_before: f64 = b.legs.iter().map(|l| l.distance_km()).sum();
        b.ramp(speed, if first { START_STOP_STEP_KMH } else { CRUISE_CHANGE_STEP_KMH }, class);
        first = false;
        let ramp_km: f64 = b.legs.iter().map(|l| l.distance_km()).sum::<f64>() - dist_before;
        let cruise_km = (section_km - ramp_km).max(0.05);
        let cruise_s = ((cruise_km / speed * 3600.0).round() as u32).max(1);

        let brakes = if model.harsh_brake_rate > 0.0 && speed >= 28.0 {
            Poisson::new(model.harsh_brake_rate * section_km / 100.0)
                .map(|p| p.sample(rng) as usize)
                .unwrap_or(0)
        } else {
            0
        };
        let mut cuts: Vec<u32> = (0..brakes).map(|_| rng.gen_range(1..cruise_s.max(2))).collect();
        cuts.sort_unstable();
        cuts.dedup();
        let mut cruised = 0u32;
        for cut in cuts {
            b.push(cut - cruised, speed, class);
            cruised = cut;
            brake_offsets.push(b.elapsed);
            let floor = (speed * 0.3).max(10.0);
            let mut v = speed - HARSH_BRAKE_STEP_KMH;
            while v >= floor {
                b.push(1, v, class);
                v -= HARSH_BRAKE_STEP_KMH;
            }
            b.ramp(speed, CRUISE_CHANGE_STEP_KMH, class);
        }
        b.push(cruise_s - cruised, speed, class);
        built_km = b.legs.iter().map(|l| l.distance_km()).sum();
    }
    let class = b.legs.last().map(|l| l.road_class).unwrap_or(RoadClass::Urban);
    b.ramp(0.0, START_STOP_STEP_KMH, class);
    Draft { legs: b.legs, brake_offsets, night }
}

/// Day windows in which trips may be placed, as UTC instants.
fn windows(spec: &TraceSpec<'_>, date: NaiveDate) -> [(Timestamp, Timestamp); 2] {
    let night = DailyWindow::night();
    let margin = Duration::seconds(TRIP_GAP_SECS);
    let day_start = time::local_to_utc(spec.tz, date, night.end) + margin;
    let night_start = time::local_to_utc(spec.tz, date, night.start);
    let day_end = night_start - margin;
    let night_end = time::local_to_utc(spec.tz, date + Days::new(1), night.end) - margin;
    [(day_start, day_end), (night_start, night_end)]
}

/// Generates one local day (05:00 to 05:00) of trips.
pub fn generate_day(
    spec: &TraceSpec<'_>,
    seed: u64,
    day: u32,
    mut origin: Position,
    first_seq: u32,
) -> Vec<Trip> {
    let mut rng = ChaCha8Rng::seed_from_u64(day_seed(seed, spec.vin, day));
    let model = spec.model;
    let count = match model.trip_count {
        TripCount::Fixed => model.trips_per_day.round() as usize,
        TripCount::Poisson => Poisson::new(model.trips_per_day).map(|p| p.sample(&mut rng) as usize).unwrap_or(0),
    };
    let drafts: Vec<Draft> = (0..count)
        .map(|_| {
            let night = rng.gen::<f64>() < model.night_trip_fraction;
            draft_trip(model, night, &mut rng)
        })
        .collect();

    let date = spec.first_day + Days::new(day as u64);
    let mut placed: Vec<(Timestamp, Draft)> = Vec::new();
    for (w, (ws, we)) in windows(spec, date).into_iter().enumerate() {
        let want_night = w == 1;
        let mut in_window: Vec<(i64, Draft)> = Vec::new();
        for d in drafts.iter().filter(|d| d.night == want_night) {
            let span = (we - ws).num_seconds() - d.duration_s();
            let offset = if span > 0 { rng.gen_range(0..=span) } else { 0 };
            in_window.push((offset, Draft { legs: d.legs.clone(), brake_offsets: d.brake_offsets.clone(), night: d.night }));
        }
        in_window.sort_by_key(|(o, _)| *o);
        let mut free_from = ws;
        for (offset, d) in in_window {
            let start = (ws + Duration::seconds(offset)).max(free_from);
            let end = start + Duration::seconds(d.duration_s());
            if end > we {
                continue;
            }
            free_from = end + Duration::seconds(TRIP_GAP_SECS);
            placed.push((start, d));
        }
    }

    let mut trips = Vec::with_capacity(placed.len());
    for (i, (start, mut d)) in placed.into_iter().enumerate() {
        let away = approx_km(origin, spec.home);
        let heading0 = if away > 5.0 {
            (initial_bearing(origin, spec.home) + rng.gen_range(-20.0..20.0) + 360.0) % 360.0
        } else {
            rng.gen_range(0.0..360.0)
        };
        for leg in &mut d.legs {
            leg.heading_deg = (leg.heading_deg + heading0) % 360.0;
        }
        let distance_km: f64 = d.legs.iter().map(|l| l.distance_km()).sum();
        let trip = Trip {
            vin: spec.vin.clone(),
            seq: first_seq + i as u32,
            start,
            origin,
            scripted_brakes: d.brake_offsets.iter().map(|o| start + Duration::seconds(*o as i64)).collect(),
            night: d.night,
            night_km: if d.night { distance_km } else { 0.0 },
            distance_km,
            legs: d.legs,
        };
        origin = trip.end_position();
        trips.push(trip);
    }
    trips
}

/// Deterministic trip list covering `days` generation days.
pub fn generate_trace(spec: &TraceSpec<'_>, days: u32, seed: u64) -> Result<Vec<Trip>, TraceError> {
    spec.model.validate()?;
    if days == 0 {
        return Err(TraceError::NoDays);
    }
    let mut trips: Vec<Trip> = Vec::new();
    let mut origin = spec.home;
    for day in 0..days {
        let day_trips = generate_day(spec, seed, day, origin, trips.len() as u32);
        if let Some(last) = day_trips.last() {
            origin = last.end_position();
        }
        trips.extend(day_trips);
    }
    Ok(trips)
}

/// Writes one trip per line.
pub fn write_trace<W: Write>(trips: &[Trip], mut out: W) -> Result<(), TraceError> {
    for t in trips {
        let line = serde_json::to_string(t).map_err(|e| TraceError::Io(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| TraceError::Io(e.to_string()))?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<Trip>, TraceError> {
    let mut trips = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| TraceError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let trip: Trip =
            serde_json::from_str(&line).map_err(|e| TraceError::Parse { line: i + 1, detail: e.to_string() })?;
        trips.push(trip);
    }
    Ok(trips)
}

/// Whether the trip starts and ends inside `window`.
pub fn trip_is_inside(tz: Tz, trip: &Trip, window: DailyWindow) -> bool {
    window.contains_instant(tz, trip.start) && window.contains_instant(tz, trip.end())
}
