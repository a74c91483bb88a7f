use std::io::Write;

use serde::Serialize;
use serde_json::{json, Value};

/// Bad invocation the argument parser cannot catch; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Result of one command in both renderings.
pub struct Output {
    pub json: Value,
    pub text: String,
}

impl Output {
    pub fn new<T: Serialize>(value: &T, text: impl Into<String>) -> anyhow::Result<Self> {
        Ok(Self { json: serde_json::to_value(value)?, text: text.into() })
    }

    /// Raw text in both modes, for CSV and JSON-lines.
    pub fn raw(text: String) -> Self {
        Self { json: Value::Null, text }
    }

    pub fn print(&self, json: bool) {
        let mut text = if json && !self.json.is_null() {
            serde_json::to_string_pretty(&self.json).expect("values serialize")
        } else {
            self.text.clone()
        };
        if !text.is_empty() && !text.ends_with('\n') {
            text.push('\n');
        }
        // A closed pipe (`ubi export | head`) is not an error.
        let _ = std::io::stdout().lock().write_all(text.as_bytes());
    }
}

pub fn print_error(e: &anyhow::Error, usage: bool, json: bool) {
    let message = format!("{e:#}");
    if json {
        let kind = if usage { "usage" } else { "domain" };
        println!("{}", serde_json::to_string_pretty(&json!({ "error": kind, "message": message })).expect("serializes"));
    }
    eprintln!("error: {message}");
}
