//! Shared domain types: identifiers, data-point catalogues and OEM profiles.

mod kinds;
mod profile;
mod sample;
mod vehicle;
mod vin;

pub use kinds::{parse_kind_list, DataPointKind, NotificationKind, UnknownKind};
pub use profile::{
    BrandId, ConsentVariant, OemProfile, PrivacyMechanism, ProfileError, ProfileRegistry,
    QuotaWindow, RequestQuota,
};
pub use sample::{
    validate_value, HoodState, LockState, NotificationEvent, Position, SampleError, SampleSource,
    SampleValue, TelemetrySample,
};
pub use vehicle::{is_plausible_email, Driver, RoadClass, Vehicle};
pub use vin::{Vin, VinError, VIN_LENGTH};
