use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::domain::Vin;
use crate::time::{self, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmailPurpose {
    ConsentLink,
    OdometerReportPrompt,
    RenewalPrompt,
    WorkshopAdvisory,
    SupportEscalation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutboundEmail {
    pub to: String,
    pub vin: Vin,
    pub purpose: EmailPurpose,
    pub subject: String,
    pub body: String,
    #[serde(with = "time::rfc3339")]
    pub sent_at: Timestamp,
}

/// Outbound email port. Development transports only: an in-memory outbox, the
/// console, or a JSON-lines file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MailTransport {
    Memory(Vec<OutboundEmail>),
    Console,
    File(PathBuf),
}

impl Default for MailTransport {
    fn default() -> Self {
        MailTransport::Memory(Vec::new())
    }
}

impl MailTransport {
    pub fn send(&mut self, email: OutboundEmail) {
        match self {
            MailTransport::Memory(outbox) => outbox.push(email),
            MailTransport::Console => {
                println!("[mail] to={} subject={:?}\n{}", email.to, email.subject, email.body);
            }
            MailTransport::File(path) => {
                let line = serde_json::to_string(&email).expect("email serializes");
                let written = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&*path)
                    .and_then(|mut f| writeln!(f, "{line}"));
                if let Err(e) = written {
                    tracing::warn!(path = %path.display(), error = %e, "mail file transport failed");
                }
            }
        }
    }

    pub fn outbox(&self) -> &[OutboundEmail] {
        match self {
            MailTransport::Memory(outbox) => outbox,
            _ => &[],
        }
    }
}
