//! Parameter resolution: command-line flags override a flat `key=value`
//! file, which overrides per-command defaults.

use std::collections::BTreeMap;
use std::path::Path;

use super::CliError;

/// Keys accepted in a config file. Each matches a long flag name.
pub const KNOWN_KEYS: &[&str] = &[
    "lambda",
    "p-dbm",
    "is-dbm",
    "beta-db",
    "beta-c-db",
    "rt-m",
    "alpha",
    "w0",
    "m",
    "seed",
    "jobs",
    "out",
    "skip-sim",
    "with-sim",
    "seeds",
    "slots",
    "region-m",
    "bounded",
    "replications",
    "from-dbm",
    "to-dbm",
    "step-db",
    "method",
    "derivative",
    "no-beb-mapping",
];

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// ignored; a later duplicate key overrides an earlier one.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "config line {}: expected key=value, got {line:?}",
                no + 1
            )));
        };
        let key = key.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::Usage(format!("config line {}: unknown key {key:?}", no + 1)));
        }
        out.insert(key.to_string(), value.trim().to_string());
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Resolved parameter lookups with typed accessors.
#[derive(Debug, Default, Clone)]
pub struct Params {
    values: BTreeMap<String, String>,
}

impl Params {
    /// Layers `flags` (only those present) over `file`.
    pub fn layered(file: BTreeMap<String, String>, flags: Vec<(&'static str, Option<String>)>) -> Self {
        let mut values = file;
        for (key, value) in flags {
            if let Some(v) = value {
                values.insert(key.to_string(), v);
            }
        }
        Params { values }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        self.raw(key).map_or(Ok(default), |s| parse_f64(key, s))
    }

    pub fn u32_or(&self, key: &str, default: u32) -> Result<u32, CliError> {
        self.raw(key).map_or(Ok(default), |s| parse_int(key, s))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64, CliError> {
        self.raw(key).map_or(Ok(default), |s| parse_int(key, s))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, CliError> {
        self.raw(key).map_or(Ok(default), |s| parse_int(key, s))
    }

    pub fn opt_u64(&self, key: &str) -> Result<Option<u64>, CliError> {
        self.raw(key).map(|s| parse_int(key, s)).transpose()
    }

    pub fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.raw(key) {
            None => Ok(false),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(other) => Err(CliError::Usage(format!("{key}: expected true or false, got {other:?}"))),
        }
    }

    pub fn list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(s) => parse_list(key, s),
        }
    }

    pub fn scalar_list_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        let v = self.list_or(key, &[default])?;
        match v.as_slice() {
            [x] => Ok(*x),
            _ => Err(CliError::Usage(format!("{key}: this command takes a single value"))),
        }
    }
}

pub fn parse_f64(key: &str, s: &str) -> Result<f64, CliError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("{key}: not a number: {s:?}")))?;
    if !v.is_finite() {
        return Err(CliError::Usage(format!("{key}: must be finite")));
    }
    Ok(v)
}

fn parse_int<T: std::str::FromStr>(key: &str, s: &str) -> Result<T, CliError> {
    s.trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("{key}: not a non-negative integer: {s:?}")))
}

/// A comma-separated list (`1,2,5`) or an inclusive range
/// `start:stop:step` (`0:20:5` gives 0, 5, 10, 15, 20).
pub fn parse_list(key: &str, s: &str) -> Result<Vec<f64>, CliError> {
    let s = s.trim();
    if s.is_empty() {
        return Err(CliError::Usage(format!("{key}: empty list")));
    }
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, step] = parts.as_slice() else {
            return Err(CliError::Usage(format!("{key}: range must be start:stop:step")));
        };
        return range(key, parse_f64(key, a)?, parse_f64(key, b)?, parse_f64(key, step)?);
    }
    s.split(',').map(|p| parse_f64(key, p)).collect()
}

/// Inclusive arithmetic range. Points are `start + k·step`, so there is no
/// accumulated drift.
pub fn range(key: &str, start: f64, stop: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0) {
        return Err(CliError::Usage(format!("{key}: step must be positive")));
    }
    if stop < start {
        return Err(CliError::Usage(format!("{key}: range end is below its start")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if count > 1_000_000 {
        return Err(CliError::Usage(format!("{key}: range has too many points")));
    }
    Ok((0..count).map(|k| start + k as f64 * step).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_lines() {
        let c = parse_config("# comment\n\nlambda = 0.2\nbeta-db=10\nlambda=0.3\n").unwrap();
        assert_eq!(c.get("lambda").unwrap(), "0.3");
        assert_eq!(c.get("beta-db").unwrap(), "10");
        assert!(parse_config("nonsense").is_err());
        assert!(parse_config("colour=blue").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = parse_config("lambda=0.2\nw0=16").unwrap();
        let p = Params::layered(file, vec![("lambda", Some("0.5".into())), ("m", None)]);
        assert_eq!(p.f64_or("lambda", 0.0).unwrap(), 0.5);
        assert_eq!(p.u32_or("w0", 0).unwrap(), 16);
        assert_eq!(p.u32_or("m", 7).unwrap(), 7);
    }

    #[test]
    fn lists_and_ranges() {
        assert_eq!(parse_list("x", "1, 2,5").unwrap(), vec![1.0, 2.0, 5.0]);
        assert_eq!(parse_list("x", "0:20:5").unwrap(), vec![0.0, 5.0, 10.0, 15.0, 20.0]);
        assert_eq!(parse_list("x", "-60:-10:1").unwrap().len(), 51);
        assert!(parse_list("x", "0:1:0").is_err());
        assert!(parse_list("x", "").is_err());
        assert!(parse_list("x", "a,b").is_err());
        assert!(parse_list("x", "1:2").is_err());
    }

    #[test]
    fn booleans() {
        let p = Params::layered(parse_config("bounded=true\nskip-sim=maybe").unwrap(), vec![]);
        assert!(p.flag("bounded").unwrap());
        assert!(!p.flag("with-sim").unwrap());
        assert!(p.flag("skip-sim").is_err());
    }
}
