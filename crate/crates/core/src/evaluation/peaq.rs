//! Adapter for an external PEAQ (basic version) executable.

use std::path::Path;
use std::process::Command;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dataset::codec::find_executable;
use crate::error::{Error, Result};

pub const PEAQ_ENV: &str = "MP3GAN_PEAQ";

/// How to run the tool: `<executable> <ref.wav> <test.wav>`, with the two
/// grades parsed from its standard output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeaqConfig {
    /// Unset: read `MP3GAN_PEAQ`; still unset: PEAQ is skipped.
    pub executable: Option<String>,
    /// Regex whose first group is the objective difference grade.
    pub odg_pattern: String,
    /// Regex whose first group is the distortion index.
    pub di_pattern: String,
}

impl Default for PeaqConfig {
    fn default() -> Self {
        Self {
            executable: None,
            odg_pattern: r"(?i)ODG\s*[:=]\s*(-?[0-9]+(?:\.[0-9]+)?(?:[eE][-+]?[0-9]+)?)".into(),
            di_pattern: r"(?i)\bDI\s*[:=]\s*(-?[0-9]+(?:\.[0-9]+)?(?:[eE][-+]?[0-9]+)?)".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeaqScores {
    pub odg: f64,
    pub di: f64,
}

impl PeaqConfig {
    pub fn executable(&self) -> Option<String> {
        self.executable
            .clone()
            .or_else(|| std::env::var(PEAQ_ENV).ok())
            .filter(|s| !s.is_empty())
    }

    /// Resolved path of the tool, or `None` (with a warning) when it is not
    /// configured or cannot be found.
    pub fn resolve(&self) -> Option<std::path::PathBuf> {
        let Some(name) = self.executable() else {
            log::warn!("no PEAQ executable configured (set {PEAQ_ENV}); ODG and DI are left empty");
            return None;
        };
        match find_executable(Path::new(&name)) {
            Ok(p) => Some(p),
            Err(_) => {
                log::warn!("PEAQ executable {name:?} not found; ODG and DI are left empty");
                None
            }
        }
    }
}

fn capture(pattern: &str, text: &str, what: &str) -> Result<f64> {
    let re = Regex::new(pattern).map_err(|e| Error::Config(format!("{what} pattern: {e}")))?;
    let caps = re
        .captures(text)
        .and_then(|c| c.get(1))
        .ok_or_else(|| Error::ExternalTool(format!("PEAQ output has no {what}: {text:?}")))?;
    caps.as_str()
        .parse()
        .map_err(|_| Error::ExternalTool(format!("cannot parse {what} from {:?}", caps.as_str())))
}

/// Parse tool output. An ODG outside `[-4, 0]` is clamped into it.
pub fn parse_peaq_output(config: &PeaqConfig, stdout: &str) -> Result<PeaqScores> {
    let odg = capture(&config.odg_pattern, stdout, "ODG")?;
    let di = capture(&config.di_pattern, stdout, "DI")?;
    if !odg.is_finite() || !di.is_finite() {
        return Err(Error::ExternalTool(format!("PEAQ returned ODG {odg}, DI {di}")));
    }
    let clamped = odg.clamp(-4.0, 0.0);
    if clamped != odg {
        log::debug!("PEAQ ODG {odg} clamped to {clamped}");
    }
    Ok(PeaqScores { odg: clamped, di })
}

/// Grades of `test_wav` against `ref_wav`; `None` when no tool is
/// available.
pub fn peaq_scores(config: &PeaqConfig, ref_wav: &Path, test_wav: &Path) -> Result<Option<PeaqScores>> {
    let Some(exe) = config.resolve() else {
        return Ok(None);
    };
    run_peaq(config, &exe, ref_wav, test_wav).map(Some)
}

pub fn run_peaq(config: &PeaqConfig, exe: &Path, ref_wav: &Path, test_wav: &Path) -> Result<PeaqScores> {
    let out = Command::new(exe)
        .arg(ref_wav)
        .arg(test_wav)
        .output()
        .map_err(|e| Error::ExternalTool(format!("{}: {e}", exe.display())))?;
    if !out.status.success() {
        return Err(Error::ExternalTool(format!(
            "{} exited with {}: {}",
            exe.display(),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    parse_peaq_output(config, &String::from_utf8_lossy(&out.stdout))
}
