//! Optional key=value config files. Values merge under explicit flags: a
//! flag given on the command line always wins, the config fills the rest,
//! and built-in defaults cover whatever remains.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

pub struct Overlay {
    values: HashMap<String, String>,
}

impl Overlay {
    /// Loads `path` if given; `None` yields an empty overlay. Lines are
    /// `key=value`; blank lines and `#` comments are ignored.
    pub fn load(path: Option<&Path>) -> Result<Overlay, CliError> {
        let mut values = HashMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                match line.split_once('=') {
                    Some((k, v)) => {
                        values.insert(k.trim().to_string(), v.trim().to_string());
                    }
                    None => {
                        return Err(CliError::Usage(format!(
                            "{}:{}: expected key=value, got {line:?}",
                            path.display(),
                            lineno + 1
                        )));
                    }
                }
            }
        }
        Ok(Overlay { values })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| {
                CliError::Usage(format!("config key {key}: cannot parse value {raw:?}"))
            }),
        }
    }

    /// Flag value if given, else config value, else `default`.
    pub fn resolve<T: FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T, CliError> {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.get(key)?.unwrap_or(default)),
        }
    }

    /// Flag value if given, else config value; missing is a usage error.
    pub fn resolve_required<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T, CliError> {
        match flag {
            Some(v) => Ok(v),
            None => self
                .get(key)?
                .ok_or_else(|| CliError::Usage(format!("missing required option --{key}"))),
        }
    }

    /// True if the flag was given or the config sets the key to true.
    pub fn resolve_switch(&self, flag: bool, key: &str) -> Result<bool, CliError> {
        if flag {
            return Ok(true);
        }
        Ok(self.get(key)?.unwrap_or(false))
    }
}
