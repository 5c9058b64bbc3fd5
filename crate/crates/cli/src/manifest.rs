//! Run manifests: every subcommand writes `manifest.toml` describing the run
//! well enough to reproduce it bit for bit with the same build — subcommand,
//! fully resolved configuration (including the seed, whether given or drawn),
//! and artifact version. `wall_secs` is the one field allowed to differ
//! between reruns.

use std::path::Path;
use std::time::Instant;

use jmix_core::{Error, Result};
use serde::Serialize;

#[derive(Serialize)]
struct Manifest<'a, C: Serialize, R: Serialize> {
    artifact_version: &'static str,
    subcommand: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<&'a str>,
    /// Wall-clock duration of the run; informational only and the sole
    /// field that may differ between identical reruns.
    wall_secs: f64,
    config: C,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<R>,
}

/// No-result marker for subcommands whose manifest is configuration only.
#[derive(Serialize)]
pub struct NoResult {}

pub fn write_manifest<C: Serialize, R: Serialize>(
    dir: &Path,
    subcommand: &str,
    label: Option<&str>,
    started: Instant,
    config: &C,
    result: Option<&R>,
) -> Result<()> {
    let manifest = Manifest {
        artifact_version: env!("CARGO_PKG_VERSION"),
        subcommand,
        label,
        wall_secs: started.elapsed().as_secs_f64(),
        config,
        result,
    };
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| Error::Param(format!("manifest serialization: {e}")))?;
    let path = dir.join("manifest.toml");
    std::fs::write(&path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}
