//! Command-line front end: runs module batteries from a [`RunConfig`] and
//! writes JSON/CSV reports with a `summary.json` envelope.
//!
//! Exit codes: 0 when every asserted check holds, 1 on a failed check or a
//! failed computation, 2 on a usage or parameter error.

pub mod batteries;
pub mod config;
pub mod output;

pub use config::{Command, Format, GridArgs, RunConfig};
pub use output::{Envelope, NamedReport, Status};

/// Runs the configured command without touching the disk except for the
/// kernel tables and trajectories that some batteries export.
pub fn run(config: &RunConfig) -> Envelope {
    if let Err(e) = config.validate() {
        return Envelope::new(config, Vec::new(), Some(e.to_string()));
    }
    let mut runner = batteries::Runner::new(config);
    let outcome = runner.run(config.command);
    let reports = std::mem::take(&mut runner.reports);
    match outcome {
        Ok(()) => Envelope::new(config, reports, None),
        Err(e) if e.is_usage() => Envelope::new(config, reports, Some(e.to_string())),
        Err(e) => {
            let mut reports = reports;
            reports.push(NamedReport::failure(config.command.name(), "run", "run_error", &e));
            Envelope::new(config, reports, None)
        }
    }
}

/// [`run`] followed by writing every report under `config.out`.
pub fn execute(config: &RunConfig) -> Envelope {
    let mut envelope = run(config);
    if let Err(e) = envelope.write(&config.out) {
        envelope.error = Some(format!("could not write reports: {e}"));
        if envelope.status == Status::Pass {
            envelope.status = Status::Fail;
            envelope.exit_code = 1;
        }
    }
    envelope
}
