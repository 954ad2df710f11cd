//! Flat `key = value` run configuration with `--key value` overrides.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

/// A key a subcommand accepts. An empty default marks an optional key.
#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
}

pub const fn key(name: &'static str, default: &'static str) -> Key {
    Key { name, default }
}

/// Parses a config file: one `key = value` per line, `#` starts a comment.
pub fn parse_file(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Parses `--key value` and `--key=value` pairs.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--") else {
            return Err(CliError::Usage(format!("unexpected argument `{arg}`")));
        };
        let (k, v) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| CliError::Usage(format!("--{body} needs a value")))?;
                (body.to_string(), v.clone())
            }
        };
        out.push((k.replace('-', "_"), v));
    }
    Ok(out)
}

/// Effective configuration of one subcommand: defaults, then the file, then
/// command-line overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: String,
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn resolve(
        command: &str,
        keys: &[Key],
        file: &[(String, String)],
        overrides: &[(String, String)],
    ) -> Result<Self, CliError> {
        let mut values: BTreeMap<String, String> =
            keys.iter().map(|k| (k.name.to_string(), k.default.to_string())).collect();
        for (k, v) in file.iter().chain(overrides) {
            match values.get_mut(k) {
                Some(slot) => *slot = v.clone(),
                None => return Err(CliError::Usage(format!("`{command}` has no setting `{k}`"))),
            }
        }
        Ok(Self { command: command.to_string(), values })
    }

    pub fn str(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let raw = self.str(key);
        raw.parse().map_err(|e| CliError::Invalid(format!("{key} = `{raw}`: {e}")))
    }

    /// `None` for an empty or `auto` value.
    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        match self.str(key) {
            "" | "auto" => Ok(None),
            _ => self.get(key).map(Some),
        }
    }

    pub fn required(&self, key: &str) -> Result<&str, CliError> {
        match self.str(key) {
            "" => Err(CliError::Invalid(format!("`{key}` must be set"))),
            v => Ok(v),
        }
    }

    /// Comma-separated list, empty entries dropped.
    pub fn list(&self, key: &str) -> Vec<String> {
        self.str(key).split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
    }

    pub fn echo(&self) -> String {
        let mut out = format!("# umo {}\n", self.command);
        for (k, v) in &self.values {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// Writes the echo to `dir/config.txt`, creating `dir`.
    pub fn write_echo(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.txt"), self.echo())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KEYS: [Key; 3] = [key("seed", "0"), key("out", "runs"), key("split", "")];

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn overrides_beat_file_beat_defaults() {
        let file = parse_file("# comment\nseed = 3\n\nout = a # trailing\n").unwrap();
        let over = parse_overrides(&strings(&["--seed", "9"])).unwrap();
        let cfg = RunConfig::resolve("x", &KEYS, &file, &over).unwrap();
        assert_eq!(cfg.get::<u64>("seed").unwrap(), 9);
        assert_eq!(cfg.str("out"), "a");
        assert_eq!(cfg.opt::<usize>("split").unwrap(), None);
    }

    #[test]
    fn echo_reparses_to_the_same_config() {
        let over = parse_overrides(&strings(&["--out=b", "--split", "12"])).unwrap();
        let cfg = RunConfig::resolve("x", &KEYS, &[], &over).unwrap();
        let again = RunConfig::resolve("x", &KEYS, &parse_file(&cfg.echo()).unwrap(), &[]).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn malformed_input_is_reported() {
        assert!(matches!(parse_file("seed 3"), Err(CliError::Usage(_))));
        assert!(matches!(parse_overrides(&strings(&["--seed"])), Err(CliError::Usage(_))));
        assert!(matches!(parse_overrides(&strings(&["seed", "1"])), Err(CliError::Usage(_))));
        let over = parse_overrides(&strings(&["--sede", "1"])).unwrap();
        assert!(matches!(RunConfig::resolve("x", &KEYS, &[], &over), Err(CliError::Usage(_))));
        let cfg = RunConfig::resolve("x", &KEYS, &[], &[("seed".into(), "abc".into())]).unwrap();
        assert!(matches!(cfg.get::<u64>("seed"), Err(CliError::Invalid(_))));
    }
}
