//! Output formatting and the configuration echo carried by every file.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, Result};

const CONFIG_PREFIX: &str = "# config: ";

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:?}")
    }
}

/// `#`-prefixed header: version, command, seed and the resolved
/// configuration as one `key = value` line each.
pub fn header<C: Serialize>(command: &str, seed: Option<u64>, config: &C) -> Result<String> {
    let mut out = format!("# jdvol {}\n# command: {command}\n", env!("CARGO_PKG_VERSION"));
    if let Some(seed) = seed {
        out.push_str(&format!("# seed: {seed}\n"));
    }
    let body = toml::to_string(config).map_err(|e| CliError::Usage(format!("config echo: {e}")))?;
    for line in body.lines().filter(|l| !l.trim().is_empty()) {
        out.push_str(CONFIG_PREFIX);
        out.push_str(line);
        out.push('\n');
    }
    Ok(out)
}

/// Configuration text from a file: the echoed `# config:` lines of a
/// previous output, or the whole file otherwise.
pub fn config_text(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let echoed: Vec<&str> = text.lines().filter_map(|l| l.strip_prefix(CONFIG_PREFIX)).collect();
    Ok(if echoed.is_empty() { text } else { echoed.join("\n") })
}

/// Merges command-line values over an optional config file and
/// deserializes the result; flags win over the file.
pub fn resolve<A: Serialize, C: DeserializeOwned>(args: &A, config: Option<&PathBuf>) -> Result<C> {
    let mut table = match config {
        Some(path) => toml::from_str::<toml::Table>(&config_text(path)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?,
        None => toml::Table::new(),
    };
    let flags = toml::Table::try_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    table.extend(flags);
    table.try_into().map_err(|e: toml::de::Error| CliError::Usage(e.message().to_string()))
}

/// Buffered writer to `path`, or stdout when absent.
pub fn writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}
