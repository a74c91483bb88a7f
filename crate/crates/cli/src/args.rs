use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ubi", version, about = "Operate the UBI data platform and its simulated OEM aggregator")]
pub struct Cli {
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    pub json: bool,
    /// World config file (JSON) used when a simulation is created.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Simulation seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory holding the simulation and its stores.
    #[arg(long, global = true, env = "UBI_DATA_DIR", default_value = "ubi-data")]
    pub data_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create, advance and inspect the simulation.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Requirement and VIN checks.
    #[command(subcommand)]
    Eligibility(EligibilityCommand),
    /// Drive consent steps headlessly.
    #[command(subcommand)]
    Consent(ConsentCommand),
    /// Collect data for a number of simulated days.
    #[command(subcommand)]
    Collect(CollectCommand),
    /// Analytics reports.
    #[command(subcommand)]
    Report(ReportCommand),
    /// Dump series as JSON-lines.
    Export(ExportArgs),
    /// Load a JSON-lines series dump.
    Import(ImportArgs),
    /// Collector counters.
    Metrics,
}

#[derive(Debug, Subcommand)]
pub enum SimCommand {
    /// Create a simulation in the data directory and enrol its vehicles.
    Start(StartArgs),
    /// Move simulated time forward, running collection on the way.
    Advance(AdvanceArgs),
    /// Apply a fault plan to one vehicle.
    Scenario(ScenarioArgs),
    /// Clock, vehicles and queue state.
    Status,
}

#[derive(Debug, Args)]
pub struct StartArgs {
    /// Vehicle preset; repeatable.
    #[arg(long = "preset", value_name = "NAME")]
    pub presets: Vec<String>,
    /// Simulation start (RFC 3339).
    #[arg(long)]
    pub epoch: Option<String>,
    /// Replace an existing simulation.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct AdvanceArgs {
    #[arg(long)]
    pub days: Option<i64>,
    #[arg(long)]
    pub hours: Option<i64>,
    #[arg(long)]
    pub seconds: Option<i64>,
    /// Absolute target (RFC 3339).
    #[arg(long, conflicts_with_all = ["days", "hours", "seconds"])]
    pub to: Option<String>,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub vin: String,
    /// Fault plan JSON file.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["outage_from", "transmission_failures"])]
    pub fault_plan: Option<PathBuf>,
    /// Start of an API outage (RFC 3339).
    #[arg(long, requires = "outage_to")]
    pub outage_from: Option<String>,
    #[arg(long, requires = "outage_from")]
    pub outage_to: Option<String>,
    /// Number of transmission tests that fail.
    #[arg(long)]
    pub transmission_failures: Option<u32>,
}

#[derive(Debug, Subcommand)]
pub enum EligibilityCommand {
    /// Check enrolled vehicles against the requirements and the OEM.
    Check(CheckArgs),
    /// Per-brand counts for a bundled or file fleet.
    Report(FleetArgs),
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Vehicle to check; all enrolled vehicles when omitted.
    #[arg(long = "vin")]
    pub vins: Vec<String>,
}

#[derive(Debug, Args)]
pub struct FleetArgs {
    /// Bundled fleet name.
    #[arg(long, default_value = "fleet19", conflicts_with = "fixture_file")]
    pub fixture: String,
    /// Fleet fixture JSON file.
    #[arg(long, value_name = "PATH")]
    pub fixture_file: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ConsentCommand {
    /// Send the consent email.
    Initiate(InitiateArgs),
    /// Perform one consent step.
    Step(StepArgs),
    /// Revoke at the platform and at the OEM.
    Revoke(VinArg),
    /// Print the consent record.
    Show(VinArg),
    /// Run every step a cooperative driver takes until the consent is active.
    Activate(InitiateArgs),
}

#[derive(Debug, Args)]
pub struct VinArg {
    #[arg(long)]
    pub vin: String,
}

#[derive(Debug, Args)]
pub struct InitiateArgs {
    #[arg(long)]
    pub vin: String,
    #[arg(long)]
    pub email: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StepName {
    AcceptLink,
    Confirm,
    Identity,
    Privacy,
    TransmissionTest,
    Background,
    OdometerReport,
}

#[derive(Debug, Args)]
pub struct StepArgs {
    #[arg(long)]
    pub vin: String,
    pub step: StepName,
    /// Link token; defaults to the one in the consent record.
    #[arg(long)]
    pub token: Option<String>,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub approved: bool,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub passed: bool,
    /// Privacy mechanism; defaults to the one installed in the car.
    #[arg(long)]
    pub mechanism: Option<String>,
    /// Odometer reading; defaults to the dashboard value.
    #[arg(long)]
    pub km: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum CollectCommand {
    /// Activate every vehicle and collect for N days.
    Run(CollectArgs),
}

#[derive(Debug, Args)]
pub struct CollectArgs {
    #[arg(long)]
    pub days: i64,
    /// Brand archetype (bmw-like, mercedes-like, stellantis-like); repeatable.
    #[arg(long = "brand")]
    pub brands: Vec<String>,
    /// Vehicle preset; repeatable.
    #[arg(long = "preset")]
    pub presets: Vec<String>,
    /// Simulation start (RFC 3339) for a new simulation.
    #[arg(long)]
    pub epoch: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum ReportCommand {
    /// Trip summaries from GPS series, with odometer poll totals.
    Trips(TripsArgs),
    /// Risk feature vector over a period.
    Risk(PeriodArgs),
    /// Data cost against premium.
    Cost(CostArgs),
    /// Last lock state and trajectory.
    Theft(VinOpt),
}

#[derive(Debug, Args)]
pub struct VinOpt {
    /// Defaults to the only enrolled vehicle.
    #[arg(long)]
    pub vin: Option<String>,
}

#[derive(Debug, Args)]
pub struct PeriodArgs {
    #[arg(long)]
    pub vin: Option<String>,
    #[arg(long)]
    pub from: Option<String>,
    #[arg(long)]
    pub to: Option<String>,
    /// Speed-limit map in the text segment format.
    #[arg(long, value_name = "PATH")]
    pub map: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TripsArgs {
    #[command(flatten)]
    pub period: PeriodArgs,
    /// CSV instead of a table.
    #[arg(long, conflicts_with = "json")]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Monthly data cost in euros; taken from the vehicle's brand with --vin.
    #[arg(long, required_unless_present = "vin", conflicts_with = "vin")]
    pub data_cost: Option<f64>,
    #[arg(long)]
    pub vin: Option<String>,
    /// Monthly premium in euros.
    #[arg(long)]
    pub premium: f64,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Only this vehicle.
    #[arg(long)]
    pub vin: Option<String>,
    /// Output file; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    pub file: PathBuf,
}
