//! Command-line front end. [`run`] takes the argument vector and returns the
//! exit code and captured output, so tests can drive it in-process.

pub mod args;
pub mod commands;
pub mod render;

use std::ffi::OsString;

use clap::Parser;
use serde_json::Value;

use args::{Cli, Command};
use commands::{Artifact, Outcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] tinydeploy::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(e) if e.is_input_error() => EXIT_USAGE,
            CliError::Lib(_) => EXIT_DOMAIN,
        }
    }
}

/// Result of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn run<I, T>(argv: I) -> Run
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            return if code == EXIT_OK {
                Run { code, stdout: text, stderr: String::new() }
            } else {
                Run { code, stdout: String::new(), stderr: text }
            };
        }
    };
    let output = cli.output.clone();
    let out_path = out_path(&cli.command).cloned();
    match dispatch(cli.command).and_then(|o| finish(o, out_path.as_deref())) {
        Ok(mut report) => {
            render::round_floats(&mut report);
            let stdout = if output.quiet {
                String::new()
            } else if output.json {
                serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
            } else {
                render::render_text(&report)
            };
            Run { code: EXIT_OK, stdout, stderr: String::new() }
        }
        Err(e) => Run { code: e.exit_code(), stdout: String::new(), stderr: format!("error: {e}\n") },
    }
}

fn out_path(cmd: &Command) -> Option<&std::path::PathBuf> {
    match cmd {
        Command::Analyze { out, .. }
        | Command::Quantize { out, .. }
        | Command::Plan { out, .. }
        | Command::Estimate { out, .. }
        | Command::Detect { out, .. }
        | Command::Eval { out, .. }
        | Command::Report { out, .. } => out.as_ref(),
    }
}

fn dispatch(cmd: Command) -> Result<Outcome, CliError> {
    match cmd {
        Command::Analyze { model, .. } => commands::analyze(&model),
        Command::Quantize { model, weights, calib, seed, calib_count, .. } => {
            if calib.is_none() && calib_count == 0 {
                return Err(CliError::Usage("--calib-count must be at least 1".into()));
            }
            commands::quantize(&model, weights.as_deref(), calib.as_deref(), seed, calib_count)
        }
        Command::Plan { model, profile, precision, .. } => commands::plan(&model, &profile, precision),
        Command::Estimate { profile, engine, precision, model, mmac, duty, .. } => {
            commands::estimate(&profile, engine, precision, model.as_deref(), mmac, &duty)
        }
        Command::Detect { head, raw, anchors, model, image_size, iou_thr, score_thr, top_k, .. } => {
            commands::detect(head, &raw, anchors.as_deref(), model.as_deref(), image_size, iou_thr, score_thr, top_k)
        }
        Command::Eval { detections, ground_truth, iou_thr, .. } => commands::eval(&detections, &ground_truth, iou_thr),
        Command::Report { model, profile, precision, duty, detections, ground_truth, iou_thr, .. } => {
            commands::report(&model, &profile, &precision, &duty, detections.as_deref(), ground_truth.as_deref(), iou_thr)
        }
    }
}

/// Writes the command's artifact (or the JSON report) to `--out`.
fn finish(outcome: Outcome, out: Option<&std::path::Path>) -> Result<Value, CliError> {
    let mut report = outcome.report;
    if let Some(path) = out {
        match outcome.artifact {
            Some(Artifact::Tensors(file)) => file.write(path)?,
            Some(Artifact::Text(text)) => std::fs::write(path, text).map_err(|e| tinydeploy::Error::io(path, e))?,
            None => {
                let mut copy = report.clone();
                render::round_floats(&mut copy);
                let text = serde_json::to_string_pretty(&copy).expect("report serializes") + "\n";
                std::fs::write(path, text).map_err(|e| tinydeploy::Error::io(path, e))?;
            }
        }
        report.as_object_mut().map(|o| o.insert("written".into(), Value::String(path.display().to_string())));
    }
    Ok(report)
}
