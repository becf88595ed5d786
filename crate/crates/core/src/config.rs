//! Flat `key = value` run configuration.
//!
//! A config file holds one `key = value` pair per line; `#` starts a comment
//! and blank lines are ignored. Keys are the long flag names of the command
//! line (`H`, `N`, `Nref`, `M`, `delta`, `f`, ...). When a key repeats, the
//! last occurrence wins and a warning is logged. Values are layered, lowest
//! precedence first: built-in defaults, config file, environment
//! (`ROUGHVOL_THREADS`, `ROUGHVOL_SEED`), command-line flags.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::estimators::QuadratureConfig;

/// Every key accepted in a config file or on the command line.
pub const KNOWN_KEYS: &[&str] = &[
    "H", "N", "Nref", "M", "delta", "d", "f", "scheme", "seed", "threads", "out", "summary",
    "emit-plot-data", "rho", "K", "S0", "psi-variant", "sigma0", "eta", "y", "n-grid", "u", "v",
    "z", "stepper", "paths", "times",
];

/// Keys left out of provenance headers: they choose where and how fast the
/// run executes, not what it computes.
const NON_SEMANTIC_KEYS: &[&str] = &["threads", "out", "summary", "emit-plot-data"];

/// Raw key-value pairs from a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub values: BTreeMap<String, String>,
    /// Human-readable notes about duplicate keys.
    pub warnings: Vec<String>,
}

/// Parse config text.
pub fn parse_config(text: &str) -> Result<ConfigFile> {
    let mut out = ConfigFile::default();
    let mut seen_at: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse { line: line_no, msg: format!("expected `key = value`, got `{line}`") })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Parse { line: line_no, msg: "empty key".into() });
        }
        if !KNOWN_KEYS.contains(&k) {
            return Err(Error::Parse { line: line_no, msg: format!("unknown key `{k}`") });
        }
        if let Some(prev) = seen_at.insert(k.to_string(), line_no) {
            let w = format!("key `{k}` on line {line_no} overrides line {prev}");
            log::warn!("{w}");
            out.warnings.push(w);
        }
        out.values.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

/// Read and parse a config file.
pub fn load_config(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config `{}`: {e}", path.display())))?;
    parse_config(&text)
}

/// Resolved configuration of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: String,
    values: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl RunConfig {
    /// Layer file values, environment overrides and flags (highest precedence last).
    pub fn layered(
        command: &str,
        file: Option<ConfigFile>,
        env: &[(&str, Option<String>)],
        flags: Vec<(&str, String)>,
    ) -> Self {
        let mut values = file.map(|f| f.values).unwrap_or_default();
        for (k, v) in env {
            if let Some(v) = v {
                values.insert((*k).to_string(), v.clone());
            }
        }
        for (k, v) in flags {
            values.insert(k.to_string(), v);
        }
        Self { command: command.to_string(), values, resolved: BTreeMap::new() }
    }

    /// Raw value, if set anywhere.
    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn note(&mut self, key: &str, value: String) {
        self.resolved.insert(key.to_string(), value);
    }

    /// Record a resolved value that did not come from a single key.
    pub fn record(&mut self, key: &str, value: impl ToString) {
        self.note(key, value.to_string());
    }

    fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        raw.parse::<T>().map_err(|e| Error::Config(format!("invalid value `{raw}` for `{key}`: {e}")))
    }

    /// Typed value of `key`, or `default` when unset.
    pub fn get_or<T>(&mut self, key: &str, default: T) -> Result<T>
    where
        T: FromStr + ToString,
        T::Err: std::fmt::Display,
    {
        let v = match self.raw(key) {
            Some(raw) => Self::parse_value::<T>(key, raw)?,
            None => default,
        };
        self.note(key, v.to_string());
        Ok(v)
    }

    /// Typed value of a required key.
    pub fn require<T>(&mut self, key: &str) -> Result<T>
    where
        T: FromStr + ToString,
        T::Err: std::fmt::Display,
    {
        let raw = self
            .raw(key)
            .ok_or_else(|| Error::Config(format!("missing required key `{key}` (set it in the config file or pass --{key})")))?
            .to_string();
        let v: T = Self::parse_value(key, &raw)?;
        self.note(key, v.to_string());
        Ok(v)
    }

    /// Typed value when set, recorded; `None` otherwise.
    pub fn optional<T>(&mut self, key: &str) -> Result<Option<T>>
    where
        T: FromStr + ToString,
        T::Err: std::fmt::Display,
    {
        match self.raw(key).map(str::to_string) {
            Some(raw) => {
                let v: T = Self::parse_value(key, &raw)?;
                self.note(key, v.to_string());
                Ok(Some(v))
            }
            None => Ok(None),
        }
    }

    /// Level list such as `4..7`, `4,5,6` or `8`.
    pub fn levels_or(&mut self, key: &str, default: &str) -> Result<Vec<u32>> {
        let raw = self.raw(key).unwrap_or(default).to_string();
        let v = parse_levels(&raw).map_err(|e| Error::Config(format!("`{key}`: {e}")))?;
        self.note(key, raw);
        Ok(v)
    }

    /// Comma-separated numbers, or `lo:hi:count` for an evenly spaced grid.
    pub fn list_or(&mut self, key: &str, default: &str) -> Result<Vec<f64>> {
        let raw = self.raw(key).unwrap_or(default).to_string();
        let v = parse_list(&raw).map_err(|e| Error::Config(format!("`{key}`: {e}")))?;
        self.note(key, raw);
        Ok(v)
    }

    /// `d` (points per cell) or `delta` (step, e.g. `2^-12`); not both.
    pub fn quadrature(&mut self) -> Result<QuadratureConfig> {
        match (self.raw("d").map(str::to_string), self.raw("delta").map(str::to_string)) {
            (Some(_), Some(_)) => Err(Error::Config("set either `d` or `delta`, not both".into())),
            (Some(d), None) => {
                let d: usize = Self::parse_value("d", &d)?;
                if d < 2 {
                    return Err(Error::Config(format!("`d` must be at least 2, got {d}")));
                }
                self.note("d", d.to_string());
                Ok(QuadratureConfig::PointsPerCell(d))
            }
            (None, delta) => {
                let raw = delta.unwrap_or_else(|| "2^-12".to_string());
                let step = parse_step(&raw).map_err(|e| Error::Config(format!("`delta`: {e}")))?;
                self.note("delta", raw);
                Ok(QuadratureConfig::Step(step))
            }
        }
    }

    /// `# key = value` lines: version, command, every resolved key except output locations and threads.
    pub fn provenance(&self) -> Vec<String> {
        let mut lines = vec![
            format!("# roughvol {}", env!("CARGO_PKG_VERSION")),
            format!("# command = {}", self.command),
        ];
        for (k, v) in &self.resolved {
            if !NON_SEMANTIC_KEYS.contains(&k.as_str()) {
                lines.push(format!("# {k} = {v}"));
            }
        }
        lines
    }
}

/// `a..b` (inclusive), `a,b,c` or a single level.
pub fn parse_levels(s: &str) -> std::result::Result<Vec<u32>, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|_| format!("bad range start in `{s}`"))?;
        let b: u32 = b.trim().trim_start_matches('=').parse().map_err(|_| format!("bad range end in `{s}`"))?;
        if b < a {
            return Err(format!("empty range `{s}`"));
        }
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(|p| p.trim().parse::<u32>().map_err(|_| format!("`{p}` is not a level")))
        .collect()
}

/// Comma-separated numbers or `lo:hi:count`.
pub fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    let s = s.trim();
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let lo: f64 = parts[0].trim().parse().map_err(|_| format!("bad start in `{s}`"))?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| format!("bad end in `{s}`"))?;
        let n: usize = parts[2].trim().parse().map_err(|_| format!("bad count in `{s}`"))?;
        if n < 2 {
            return Err(format!("grid `{s}` needs at least 2 points"));
        }
        return Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect());
    }
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("`{p}` is not a number")))
        .collect()
}

/// A positive step, either decimal or `2^-k`.
pub fn parse_step(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let v = match s.strip_prefix("2^") {
        Some(exp) => {
            let e: i32 = exp.trim().parse().map_err(|_| format!("bad exponent in `{s}`"))?;
            2f64.powi(e)
        }
        None => s.parse::<f64>().map_err(|_| format!("`{s}` is not a number"))?,
    };
    if !(v > 0.0 && v.is_finite()) {
        return Err(format!("step must be positive, got `{s}`"));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_duplicates() {
        let cfg = parse_config("# run\nH = 0.3\n\nN = 4..7   # levels\nH=0.1\n").unwrap();
        assert_eq!(cfg.values["H"], "0.1");
        assert_eq!(cfg.values["N"], "4..7");
        assert_eq!(cfg.warnings.len(), 1);
        assert!(cfg.warnings[0].contains("line 5 overrides line 2"));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match parse_config("H = 0.3\nnonsense\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse_config("\n\nbogus = 1\n") {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("bogus"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_file_equals_flags_only() {
        let flags = || vec![("H", "0.2".to_string()), ("M", "100".to_string())];
        let a = RunConfig::layered("price", Some(parse_config("").unwrap()), &[], flags());
        let b = RunConfig::layered("price", None, &[], flags());
        assert_eq!(a, b);
    }

    #[test]
    fn precedence() {
        let file = parse_config("seed = 1\nM = 50\n").unwrap();
        let mut c = RunConfig::layered("price", Some(file), &[("seed", Some("2".into()))], vec![("M", "70".into())]);
        assert_eq!(c.get_or::<u64>("seed", 0).unwrap(), 2);
        assert_eq!(c.get_or::<usize>("M", 0).unwrap(), 70);
    }

    #[test]
    fn missing_key_is_named() {
        let mut c = RunConfig::layered("price", None, &[], vec![]);
        match c.require::<f64>("rho") {
            Err(Error::Config(msg)) => assert!(msg.contains("`rho`")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn list_syntaxes() {
        assert_eq!(parse_levels("4..7").unwrap(), vec![4, 5, 6, 7]);
        assert_eq!(parse_levels("3, 5").unwrap(), vec![3, 5]);
        assert_eq!(parse_levels("8").unwrap(), vec![8]);
        assert!(parse_levels("7..4").is_err());
        assert_eq!(parse_list("-0.2,0.05,0.3").unwrap(), vec![-0.2, 0.05, 0.3]);
        assert_eq!(parse_list("-1:1:3").unwrap(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(parse_step("2^-12").unwrap(), 1.0 / 4096.0);
        assert!(parse_step("0").is_err());
    }

    #[test]
    fn provenance_skips_locations() {
        let mut c = RunConfig::layered("strong-rate", None, &[], vec![("out", "x.csv".into()), ("threads", "4".into())]);
        c.get_or::<String>("out", String::new()).unwrap();
        c.get_or::<usize>("threads", 0).unwrap();
        c.get_or::<f64>("H", 0.3).unwrap();
        let p = c.provenance().join("\n");
        assert!(p.contains("# H = 0.3"));
        assert!(!p.contains("x.csv") && !p.contains("threads"));
    }

    #[test]
    fn quadrature_choice() {
        let mut c = RunConfig::layered("price", None, &[], vec![]);
        assert_eq!(c.quadrature().unwrap(), QuadratureConfig::Step(1.0 / 4096.0));
        let mut c = RunConfig::layered("price", None, &[], vec![("d", "9".into())]);
        assert_eq!(c.quadrature().unwrap(), QuadratureConfig::PointsPerCell(9));
        let mut c = RunConfig::layered("price", None, &[], vec![("d", "9".into()), ("delta", "0.1".into())]);
        assert!(c.quadrature().is_err());
    }
}
