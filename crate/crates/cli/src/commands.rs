use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, Write};
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use chrono::Duration;
use serde::Serialize;
use serde_json::json;
use ubi_core::analytics::{self, SpeedLimitMap, TripSummary, DEFAULT_VIABILITY_THRESHOLD};
use ubi_core::consent::ConsentRecord;
use ubi_core::domain::{DataPointKind, PrivacyMechanism, ProfileRegistry, Vin};
use ubi_core::eligibility::FleetFixture;
use ubi_core::simulator::{presets, FaultPlan, OutageWindow};
use ubi_core::storage::TimeRange;
use ubi_core::time::{self, Timestamp};
use ubi_core::world::{persist, ConsentStep, World, WorldConfig};

use crate::args::*;
use crate::output::{usage, Output};

const DEFAULT_PRESETS: &[&str] = &["bmw-x5", "mercedes-clean", "peugeot-208"];

pub fn run(cli: Cli) -> Result<Output> {
    let ctx = Ctx { cli: &cli };
    match &cli.command {
        Command::Sim(c) => ctx.sim(c),
        Command::Eligibility(c) => ctx.eligibility(c),
        Command::Consent(c) => ctx.consent(c),
        Command::Collect(CollectCommand::Run(a)) => ctx.collect(a),
        Command::Report(c) => ctx.report(c),
        Command::Export(a) => ctx.export(a),
        Command::Import(a) => ctx.import(a),
        Command::Metrics => {
            let world = ctx.open()?;
            let m = world.collector().metrics();
            Output::new(m, m.render())
        }
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
}

fn parse_ts(raw: &str, what: &str) -> Result<Timestamp> {
    time::parse_rfc3339(raw).map_err(|e| usage(format!("{what}: {raw:?} is not an RFC 3339 timestamp ({e})")))
}

fn parse_vin(raw: &str) -> Result<Vin> {
    Vin::parse(raw).map_err(|e| usage(e.to_string()))
}

fn fmt_ts(t: &Timestamp) -> String {
    time::format_rfc3339(t)
}

impl Ctx<'_> {
    fn dir(&self) -> &Path {
        &self.cli.data_dir
    }

    fn open(&self) -> Result<World> {
        Ok(World::open_in(self.dir(), ProfileRegistry::builtin())?)
    }

    fn save(&self, world: &World) -> Result<()> {
        Ok(world.save_to(self.dir())?)
    }

    fn config(&self, presets: &[String], epoch: Option<&str>) -> Result<WorldConfig> {
        let mut config = match &self.cli.config {
            Some(path) => {
                let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str::<WorldConfig>(&raw).with_context(|| format!("parsing {}", path.display()))?
            }
            None => {
                let epoch = epoch.map(|e| parse_ts(e, "--epoch")).transpose()?.unwrap_or_else(time::default_epoch);
                let names: Vec<&str> = if presets.is_empty() {
                    DEFAULT_PRESETS.to_vec()
                } else {
                    presets.iter().map(String::as_str).collect()
                };
                for n in &names {
                    if presets::preset(n, epoch).is_none() {
                        return Err(usage(format!(
                            "unknown preset {n:?}; known: {}",
                            presets::PRESET_NAMES.join(", ")
                        )));
                    }
                }
                WorldConfig::from_presets(self.cli.seed.unwrap_or(42), epoch, &names)?
            }
        };
        if let Some(seed) = self.cli.seed {
            config.simulation.seed = seed;
        }
        Ok(config)
    }

    /// Removes a previous simulation; refuses to touch anything else.
    fn reset_dir(&self) -> Result<()> {
        let dir = self.dir();
        if !dir.exists() {
            return Ok(());
        }
        for entry in fs::read_dir(dir)? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            let ours = [persist::STATE_FILE, persist::STATIC_FILE, persist::SERIES_DIR].contains(&name.as_ref());
            if !ours {
                return Err(anyhow!("{} contains {name:?}; refusing to replace it", dir.display()));
            }
        }
        let _ = fs::remove_file(dir.join(persist::STATE_FILE));
        let _ = fs::remove_file(dir.join(persist::STATIC_FILE));
        let series = dir.join(persist::SERIES_DIR);
        if series.exists() {
            fs::remove_dir_all(series)?;
        }
        Ok(())
    }

    fn create(&self, presets: &[String], epoch: Option<&str>, force: bool) -> Result<World> {
        let config = self.config(presets, epoch)?;
        if persist::exists(self.dir()) {
            if !force {
                return Err(anyhow!("{} already holds a simulation; pass --force to replace it", self.dir().display()));
            }
            self.reset_dir()?;
        }
        let mut world = World::create_in(self.dir(), config, ProfileRegistry::builtin())?;
        let vins: Vec<Vin> = world.config().simulation.vehicles.iter().map(|v| v.vin.clone()).collect();
        for vin in &vins {
            world.enroll_simulated(vin)?;
        }
        Ok(world)
    }

    fn pick_vin(&self, world: &World, vin: Option<&str>) -> Result<Vin> {
        if let Some(v) = vin {
            return parse_vin(v);
        }
        let mut all = world.statics().records().vehicles().map(|v| v.vin.clone());
        match (all.next(), all.next()) {
            (Some(v), None) => Ok(v),
            (None, _) => Err(anyhow!("no vehicle is enrolled")),
            _ => Err(usage("several vehicles are enrolled; pass --vin")),
        }
    }

    // ---- sim ----------------------------------------------------------------

    fn sim(&self, c: &SimCommand) -> Result<Output> {
        match c {
            SimCommand::Start(a) => {
                let world = self.create(&a.presets, a.epoch.as_deref(), a.force)?;
                self.save(&world)?;
                self.status(&world)
            }
            SimCommand::Advance(a) => {
                let mut world = self.open()?;
                let target = match &a.to {
                    Some(t) => parse_ts(t, "--to")?,
                    None => {
                        let secs = a.days.unwrap_or(0) * 86_400 + a.hours.unwrap_or(0) * 3600 + a.seconds.unwrap_or(0);
                        if secs <= 0 {
                            return Err(usage("give a positive --days, --hours or --seconds, or --to"));
                        }
                        world.now() + Duration::seconds(secs)
                    }
                };
                world.advance_to(target)?;
                self.save(&world)?;
                self.status(&world)
            }
            SimCommand::Scenario(a) => {
                let mut world = self.open()?;
                let vin = parse_vin(&a.vin)?;
                let mut plan = match &a.fault_plan {
                    Some(p) => serde_json::from_str::<FaultPlan>(&fs::read_to_string(p)?)
                        .with_context(|| format!("parsing {}", p.display()))?,
                    None => world.sim().vehicle(&vin).map(|v| v.fault_plan().clone()).unwrap_or_default(),
                };
                if let (Some(from), Some(to)) = (&a.outage_from, &a.outage_to) {
                    plan.api_outages.push(OutageWindow { from: parse_ts(from, "--outage-from")?, to: parse_ts(to, "--outage-to")? });
                }
                if let Some(n) = a.transmission_failures {
                    plan.transmission_test_failures = n;
                }
                world.sim_mut().apply_fault_plan(&vin, plan.clone())?;
                self.save(&world)?;
                Output::new(&json!({ "vin": vin, "fault_plan": plan }), format!("fault plan applied to {vin}"))
            }
            SimCommand::Status => self.status(&self.open()?),
        }
    }

    fn status(&self, world: &World) -> Result<Output> {
        #[derive(Serialize)]
        struct Row {
            vin: Vin,
            brand: String,
            consent: Option<String>,
            data_points: usize,
        }
        let rows: Vec<Row> = world
            .statics()
            .records()
            .vehicles()
            .map(|v| Row {
                vin: v.vin.clone(),
                brand: v.brand.to_string(),
                consent: world.consent(&v.vin).map(|c| c.state.to_string()),
                data_points: world.data_points(&v.vin),
            })
            .collect();
        let mut text = format!("now {}\n", fmt_ts(&world.now()));
        for r in &rows {
            let _ = writeln!(
                text,
                "{}  {:<10} {:<26} {} points",
                r.vin,
                r.brand,
                r.consent.as_deref().unwrap_or("no consent"),
                r.data_points
            );
        }
        let value = json!({
            "now": fmt_ts(&world.now()),
            "vehicles": rows,
            "pending_requests": world.collector().pending_total(),
        });
        Output::new(&value, text)
    }

    // ---- eligibility --------------------------------------------------------

    fn eligibility(&self, c: &EligibilityCommand) -> Result<Output> {
        match c {
            EligibilityCommand::Report(a) => {
                let fixture = match &a.fixture_file {
                    Some(p) => FleetFixture::from_json(&fs::read_to_string(p)?)?,
                    None => FleetFixture::named(&a.fixture).map_err(|e| usage(e.to_string()))?,
                };
                let report = fixture.report(&ProfileRegistry::builtin(), time::default_epoch())?;
                let mut text = format!("{:<14} {:>8} {:>13} {:>10}\n", "brand", "vehicles", "requirements", "vin check");
                for r in &report.rows {
                    let _ = writeln!(
                        text,
                        "{:<14} {:>8} {:>13} {:>10}",
                        r.display_name, r.vehicles, r.requirements_passed, r.vin_check_passed
                    );
                }
                let (req, vin) = report.totals();
                let _ = writeln!(text, "{:<14} {:>8} {:>13} {:>10}", "total", fixture.vehicles.len(), req, vin);
                let value = json!({
                    "fixture": fixture.name,
                    "rows": report.rows,
                    "totals": { "requirements_passed": req, "vin_check_passed": vin },
                });
                Output::new(&value, text)
            }
            EligibilityCommand::Check(a) => {
                let mut world = self.open()?;
                let vins: Vec<Vin> = if a.vins.is_empty() {
                    world.statics().records().vehicles().map(|v| v.vin.clone()).collect()
                } else {
                    a.vins.iter().map(|v| parse_vin(v)).collect::<Result<_>>()?
                };
                let mut outcomes = Vec::new();
                let mut text = String::new();
                for vin in &vins {
                    let o = world.check_eligibility(vin)?;
                    let _ = writeln!(
                        text,
                        "{vin}  requirements {}  vin check {:?}",
                        if o.requirement_ok { "ok" } else { "failed" },
                        o.vin_check
                    );
                    outcomes.push(o);
                }
                self.save(&world)?;
                Output::new(&outcomes, text)
            }
        }
    }

    // ---- consent ------------------------------------------------------------

    fn consent(&self, c: &ConsentCommand) -> Result<Output> {
        let mut world = self.open()?;
        let rec = match c {
            ConsentCommand::Initiate(a) => world.initiate_consent(&parse_vin(&a.vin)?, &a.email)?,
            ConsentCommand::Activate(a) => world.activate(&parse_vin(&a.vin)?, &a.email)?,
            ConsentCommand::Revoke(a) => world.revoke(&parse_vin(&a.vin)?)?,
            ConsentCommand::Show(a) => {
                let vin = parse_vin(&a.vin)?;
                world.consent(&vin).cloned().ok_or_else(|| anyhow!("no consent for {vin}"))?
            }
            ConsentCommand::Step(a) => {
                let vin = parse_vin(&a.vin)?;
                let step = self.step(&mut world, &vin, a)?;
                world.consent_step(&vin, step)?
            }
        };
        self.save(&world)?;
        consent_output(&rec)
    }

    fn step(&self, world: &mut World, vin: &Vin, a: &StepArgs) -> Result<ConsentStep> {
        Ok(match a.step {
            StepName::AcceptLink => {
                let token = match &a.token {
                    Some(t) => t.clone(),
                    None => world
                        .consent(vin)
                        .and_then(|c| c.link.as_ref())
                        .map(|l| l.token.clone())
                        .ok_or_else(|| anyhow!("no consent link issued for {vin}"))?,
                };
                ConsentStep::AcceptLink { token }
            }
            StepName::Confirm => ConsentStep::OemConfirm { approved: a.approved },
            StepName::Identity => ConsentStep::VerifyIdentity { passed: a.passed },
            StepName::Privacy => {
                let mechanism = match &a.mechanism {
                    Some(m) => m.parse::<PrivacyMechanism>().map_err(|e| usage(e.to_string()))?,
                    None => world.sim().privacy_mechanism(vin).ok_or_else(|| anyhow!("unknown vehicle {vin}"))?,
                };
                ConsentStep::PrivacySettings { mechanism }
            }
            StepName::TransmissionTest => ConsentStep::TransmissionTest,
            StepName::Background => ConsentStep::CompleteBackground,
            StepName::OdometerReport => ConsentStep::ReportOdometer {
                km: match a.km {
                    Some(km) => km,
                    None => world.odometer_now(vin)?,
                },
            },
        })
    }

    // ---- collect ------------------------------------------------------------

    fn collect(&self, a: &CollectArgs) -> Result<Output> {
        if a.days <= 0 {
            return Err(usage("--days must be positive"));
        }
        let mut names = a.presets.clone();
        for b in &a.brands {
            let p = presets::preset_for_brand(b)
                .ok_or_else(|| usage(format!("unknown brand {b:?}; use bmw-like, mercedes-like or stellantis-like")))?;
            names.push(p.to_string());
        }
        let fresh = !names.is_empty() || self.cli.config.is_some() || !persist::exists(self.dir());
        let mut world = if fresh {
            if names.is_empty() && self.cli.config.is_none() {
                return Err(usage("no simulation yet; pass --brand or --preset, or run `sim start`"));
            }
            let mut world = self.create(&names, a.epoch.as_deref(), true)?;
            let vins: Vec<Vin> = world.statics().records().vehicles().map(|v| v.vin.clone()).collect();
            for (i, vin) in vins.iter().enumerate() {
                world.activate(vin, &format!("driver{}@example.lu", i + 1))?;
            }
            world
        } else {
            self.open()?
        };
        let from = world.now();
        let to = from + Duration::days(a.days);
        world.advance_to(to)?;
        self.save(&world)?;

        #[derive(Serialize)]
        struct Row {
            vin: Vin,
            brand: String,
            consent: Option<String>,
            samples: usize,
            events: usize,
            data_points: usize,
        }
        let index = world.series().index();
        let rows: Vec<Row> = world
            .statics()
            .records()
            .vehicles()
            .map(|v| Row {
                vin: v.vin.clone(),
                brand: v.brand.to_string(),
                consent: world.consent(&v.vin).map(|c| c.state.to_string()),
                samples: index.sample_count(&v.vin),
                events: index.event_count(&v.vin),
                data_points: index.data_point_count(&v.vin),
            })
            .collect();
        let mut text = format!("collected {} .. {}\n", fmt_ts(&from), fmt_ts(&to));
        for r in &rows {
            let _ = writeln!(text, "{}  {:<10} {:>6} data points ({} samples, {} events)", r.vin, r.brand, r.data_points, r.samples, r.events);
        }
        let value = json!({
            "from": fmt_ts(&from),
            "to": fmt_ts(&to),
            "vehicles": rows,
            "metrics": world.collector().metrics(),
        });
        Output::new(&value, text)
    }

    // ---- reports ------------------------------------------------------------

    fn with_map(&self, world: &mut World, map: Option<&Path>) -> Result<()> {
        if let Some(p) = map {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let map: SpeedLimitMap<f64> = text.parse()?;
            world.set_speed_limit_map(Some(map));
        }
        Ok(())
    }

    fn period(&self, world: &World, a: &PeriodArgs) -> Result<(Timestamp, Timestamp)> {
        let from = a.from.as_deref().map(|f| parse_ts(f, "--from")).transpose()?.unwrap_or(world.config().simulation.epoch);
        let to = a.to.as_deref().map(|t| parse_ts(t, "--to")).transpose()?.unwrap_or(world.now());
        if to < from {
            return Err(usage("--to is before --from"));
        }
        Ok((from, to))
    }

    fn report(&self, c: &ReportCommand) -> Result<Output> {
        match c {
            ReportCommand::Cost(a) if a.vin.is_none() => {
                cost_output(a.data_cost.expect("required without --vin"), a.premium, a.threshold)
            }
            ReportCommand::Cost(a) => {
                let world = self.open()?;
                let vin = parse_vin(a.vin.as_deref().expect("checked"))?;
                cost_output(world.data_cost(&vin)?, a.premium, a.threshold)
            }
            ReportCommand::Trips(a) => {
                let mut world = self.open()?;
                self.with_map(&mut world, a.period.map.as_deref())?;
                let vin = self.pick_vin(&world, a.period.vin.as_deref())?;
                let (from, to) = self.period(&world, &a.period)?;
                let trips = world.trip_summaries(&vin, TimeRange::between(from, to))?;
                if a.csv {
                    let mut buf = Vec::new();
                    analytics::write_trip_csv(&trips, &mut buf)?;
                    return Ok(Output::raw(String::from_utf8(buf)?));
                }
                trips_output(&world, &vin, from, to, &trips)
            }
            ReportCommand::Risk(a) => {
                let mut world = self.open()?;
                self.with_map(&mut world, a.map.as_deref())?;
                let vin = self.pick_vin(&world, a.vin.as_deref())?;
                let (from, to) = self.period(&world, a)?;
                let r = world.risk_features(&vin, from, to)?;
                let text = format!(
                    "{vin} {} .. {} ({:?})\ntrips {}\ntotal_km {:.3}\nnight_km {:.3}\nnight_fraction {:.3}\nurban_fraction {:.3}\noverspeed_fraction {:.3}\nharsh_brakes_per_100km {:.3}\nincidents accident {} breakdown {} emergency {}\n",
                    fmt_ts(&from), fmt_ts(&to), r.source, r.trip_count, r.total_km, r.night_km, r.night_fraction,
                    r.urban_fraction, r.overspeed_fraction, r.harsh_brakes_per_100km,
                    r.accident_flags.accident, r.accident_flags.breakdown, r.accident_flags.emergency
                );
                Output::new(&r, text)
            }
            ReportCommand::Theft(a) => {
                let world = self.open()?;
                let vin = self.pick_vin(&world, a.vin.as_deref())?;
                let r = world.theft_report(&vin)?;
                let lock = match (&r.last_lock_state, &r.last_lock_at) {
                    (Some(s), Some(t)) => format!("{s:?} at {}", fmt_ts(t)),
                    _ => "unknown".into(),
                };
                let points = r.last_trajectory.as_ref().map_or(0, Vec::len);
                let seen = fmt_ts(&r.last_seen_at);
                Output::new(&r, format!("{vin}\nlast lock state: {lock}\nlast trajectory: {points} points\nlast seen: {seen}\n"))
            }
        }
    }

    // ---- export / import ------------------------------------------------------

    fn export(&self, a: &ExportArgs) -> Result<Output> {
        let world = self.open()?;
        let mut buf = Vec::new();
        let n = match &a.vin {
            Some(v) => world.series().export_vin(&parse_vin(v)?, &mut buf)?,
            None => world.series().export_all(&mut buf)?,
        };
        match &a.out {
            Some(path) => {
                let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
                f.write_all(&buf)?;
                Output::new(&json!({ "entries": n, "out": path }), format!("{n} entries written to {}", path.display()))
            }
            None => Ok(Output::raw(String::from_utf8(buf)?)),
        }
    }

    fn import(&self, a: &ImportArgs) -> Result<Output> {
        let mut world = self.open()?;
        let f = fs::File::open(&a.file).with_context(|| format!("opening {}", a.file.display()))?;
        let (written, skipped) = world.series_mut().import(&mut BufReader::new(f))?;
        self.save(&world)?;
        Output::new(&json!({ "written": written, "skipped": skipped }), format!("{written} written, {skipped} skipped"))
    }
}

fn consent_output(rec: &ConsentRecord) -> Result<Output> {
    let mut text = format!("{}  {}  ({:?}, enrolment {})\n", rec.vin, rec.state, rec.variant, rec.enrolment);
    if let Some(link) = &rec.link {
        let _ = writeln!(text, "link expires {}", fmt_ts(&link.expires_at));
    }
    if let Some(t) = &rec.last_odometer_report_at {
        let _ = writeln!(text, "last odometer report {}", fmt_ts(t));
    }
    if let Some(r) = &rec.revocation {
        let _ = writeln!(text, "revoked {} by {:?}", fmt_ts(&r.at), r.source);
    }
    Output::new(rec, text)
}

fn cost_output(cost: f64, premium: f64, threshold: Option<f64>) -> Result<Output> {
    let r = analytics::cost_viability(cost, premium, threshold.unwrap_or(DEFAULT_VIABILITY_THRESHOLD))?;
    let text = format!(
        "data cost {:.2} EUR/month, premium {:.2} EUR/month\nratio {:.3} ({:.1}%), threshold {:.3}: {}\n",
        r.data_cost_eur_month,
        r.premium_eur_month,
        r.ratio,
        r.ratio * 100.0,
        r.threshold,
        r.verdict.as_str()
    );
    Output::new(&r, text)
}

fn trips_output(world: &World, vin: &Vin, from: Timestamp, to: Timestamp, trips: &[TripSummary]) -> Result<Output> {
    let odo = world.series().query_series(vin, DataPointKind::Odometer, TimeRange::between(from, to), None);
    let km: Vec<f64> = odo.iter().filter_map(|s| s.value.as_km()).collect();
    let odometer = json!({
        "samples": odo.len(),
        "first_km": km.first(),
        "last_km": km.last(),
        "first_at": odo.first().map(|s| fmt_ts(&s.observed_at)),
        "last_at": odo.last().map(|s| fmt_ts(&s.observed_at)),
    });
    let mut text = String::new();
    if trips.is_empty() {
        text.push_str("no GPS trips\n");
    } else {
        let _ = writeln!(text, "{:<24} {:<24} {:>9} {:>9} {:>8} {:>6} {:>10}", "start", "end", "km", "night_km", "max_kmh", "brakes", "overspeed");
        for t in trips {
            let _ = writeln!(
                text,
                "{:<24} {:<24} {:>9.3} {:>9.3} {:>8.1} {:>6} {:>10.3}",
                fmt_ts(&t.start), fmt_ts(&t.end), t.distance_km, t.night_km, t.max_speed_kmh, t.harsh_brake_count, t.overspeed_km
            );
        }
        let total: f64 = trips.iter().map(|t| t.distance_km).sum();
        let _ = writeln!(text, "{} trips, {:.3} km", trips.len(), total);
    }
    match (km.first(), km.last()) {
        (Some(a), Some(b)) => {
            let _ = writeln!(text, "odometer: {} samples, {a:.1} -> {b:.1} km ({:.1} km)", odo.len(), b - a);
        }
        _ => text.push_str("odometer: no samples\n"),
    }
    let value = json!({
        "vin": vin,
        "from": fmt_ts(&from),
        "to": fmt_ts(&to),
        "trips": trips,
        "odometer": odometer,
    });
    Output::new(&value, text)
}
