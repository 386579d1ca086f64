//! Report model and command pipelines behind the `oistab` binary.

pub mod commands;
pub mod report;
pub mod text;

pub use commands::{Analysis, Failure};
pub use report::Report;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Text,
}

/// Pretty JSON with a trailing newline, or the step-by-step text rendering.
pub fn emit_report(report: &Report, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Text => text::render(report),
    }
}

/// Several reports as one JSON array, or text blocks separated by blank lines.
pub fn emit_reports(reports: &[Report], format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(reports).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Text => reports
            .iter()
            .map(text::render)
            .collect::<Vec<_>>()
            .join("\n"),
    }
}

pub fn parse_report(json: &str) -> serde_json::Result<Report> {
    serde_json::from_str(json)
}
