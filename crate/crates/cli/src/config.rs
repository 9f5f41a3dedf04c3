//! Flat `key = value` configuration with dotted keys.
//!
//! Values are layered: built-in defaults, then the config file, then
//! `--set key=value` overrides, then dedicated flags. Every value remembers
//! where it came from so that a bad value can be reported against its line.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::CliError;

/// Every recognised key with its default (empty means unset).
pub const KEYS: &[(&str, &str)] = &[
    ("map.name", "doubling"),
    ("map.alpha", "0.1"),
    ("map.custom", ""),
    ("topology", ""),
    ("grid.n_cells", "500"),
    ("noise.epsilon", "0.05"),
    ("seed", "0"),
    ("schedule.rho", "0.1,0.05,0.02"),
    ("schedule.n", "200,500,1000"),
    ("schedule.eps", "0.05,0.02,0.01,0.005"),
    ("schedule.g", "512"),
    ("schedule.tail_start", ""),
    ("schedule.cluster_radius", "0.03"),
    ("schedule.boundary_slack", "0.02"),
    ("schedule.pass_fraction", "0.02"),
    ("evolve.x", "0.1234"),
    ("evolve.n", "10"),
    ("basin.target", "scan"),
    ("basin.criterion", "zero_noise"),
    ("stability.target", "scan"),
    ("scan.candidates", "pomega"),
    ("oracle.x0", "0.1234"),
    ("oracle.n", "50"),
    ("oracle.orbits", "100000"),
    ("oracle.seeds", ""),
    ("oracle.skip_initial", "true"),
    ("pesin.orbit_length", "1000000"),
    ("pesin.depths", "4..10"),
    ("pesin.x_samples", "8"),
];

#[derive(Clone, Debug)]
pub enum Origin {
    Default,
    File { path: String, line: usize },
    Set,
    Flag(&'static str),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => write!(f, "default"),
            Origin::File { path, line } => write!(f, "{path}:{line}"),
            Origin::Set => write!(f, "--set"),
            Origin::Flag(name) => write!(f, "flag {name}"),
        }
    }
}

#[derive(Clone, Debug)]
struct Entry {
    value: String,
    origin: Origin,
}

#[derive(Clone, Debug)]
pub struct RawConfig {
    entries: BTreeMap<&'static str, Entry>,
}

fn known(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(k, _)| *k)
}

impl RawConfig {
    pub fn defaults() -> Self {
        let entries = KEYS
            .iter()
            .map(|&(k, v)| {
                (
                    k,
                    Entry {
                        value: v.to_string(),
                        origin: Origin::Default,
                    },
                )
            })
            .collect();
        RawConfig { entries }
    }

    pub fn apply_text(&mut self, text: &str, path: &str) -> Result<(), CliError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(CliError::Config(format!(
                    "{path}:{line}: expected `key = value`, found `{content}`"
                )));
            };
            let key = key.trim();
            let Some(key) = known(key) else {
                return Err(CliError::Config(format!("{path}:{line}: unknown field `{key}`")));
            };
            let origin = Origin::File {
                path: path.to_string(),
                line,
            };
            self.put(key, value.trim(), origin);
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config `{}`: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn apply_set(&mut self, assignment: &str) -> Result<(), CliError> {
        let Some((key, value)) = assignment.split_once('=') else {
            return Err(CliError::Config(format!(
                "--set: expected `key=value`, found `{assignment}`"
            )));
        };
        let Some(key) = known(key.trim()) else {
            return Err(CliError::Config(format!("--set: unknown field `{}`", key.trim())));
        };
        self.put(key, value.trim(), Origin::Set);
        Ok(())
    }

    pub fn apply_flag(&mut self, key: &'static str, flag: &'static str, value: Option<&str>) {
        if let Some(v) = value {
            self.put(key, v.trim(), Origin::Flag(flag));
        }
    }

    fn put(&mut self, key: &'static str, value: &str, origin: Origin) {
        self.entries.insert(
            key,
            Entry {
                value: value.to_string(),
                origin,
            },
        );
    }

    fn entry(&self, key: &str) -> &Entry {
        self.entries
            .get(key)
            .unwrap_or_else(|| panic!("unregistered config key `{key}`"))
    }

    pub fn error(&self, key: &str, msg: impl fmt::Display) -> CliError {
        CliError::Config(format!("{}: field `{key}`: {msg}", self.entry(key).origin))
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        let v = self.entry(key).value.as_str();
        (!v.is_empty()).then_some(v)
    }

    pub fn string(&self, key: &str) -> Result<&str, CliError> {
        self.raw(key).ok_or_else(|| self.error(key, "a value is required"))
    }

    pub fn f64(&self, key: &str) -> Result<f64, CliError> {
        let v = self.string(key)?;
        parse_f64(v).ok_or_else(|| self.error(key, format!("expected a finite number, found `{v}`")))
    }

    pub fn usize(&self, key: &str) -> Result<usize, CliError> {
        let v = self.string(key)?;
        v.parse()
            .map_err(|_| self.error(key, format!("expected a non-negative integer, found `{v}`")))
    }

    pub fn opt_usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        match self.raw(key) {
            None => Ok(None),
            Some(_) => self.usize(key).map(Some),
        }
    }

    pub fn u64(&self, key: &str) -> Result<u64, CliError> {
        let v = self.string(key)?;
        v.parse()
            .map_err(|_| self.error(key, format!("expected a non-negative integer, found `{v}`")))
    }

    pub fn bool(&self, key: &str) -> Result<bool, CliError> {
        match self.string(key)? {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            v => Err(self.error(key, format!("expected true or false, found `{v}`"))),
        }
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        let v = self.string(key)?;
        split_list(v)
            .map(|item| {
                parse_f64(item).ok_or_else(|| self.error(key, format!("expected a list of numbers, found `{item}`")))
            })
            .collect()
    }

    /// Comma list of integers; `a..b` expands to the inclusive range.
    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>, CliError> {
        let v = self.string(key)?;
        let bad = |item: &str| {
            self.error(
                key,
                format!("expected a list of integers or a range `a..b`, found `{item}`"),
            )
        };
        let mut out = Vec::new();
        for item in split_list(v) {
            if let Some((a, b)) = item.split_once("..") {
                let a: usize = a.trim().parse().map_err(|_| bad(item))?;
                let b: usize = b.trim().parse().map_err(|_| bad(item))?;
                if a > b {
                    return Err(bad(item));
                }
                out.extend(a..=b);
            } else {
                out.push(item.parse().map_err(|_| bad(item))?);
            }
        }
        Ok(out)
    }

    pub fn u64_list(&self, key: &str) -> Result<Vec<u64>, CliError> {
        let v = self.string(key)?;
        split_list(v)
            .map(|item| {
                item.parse()
                    .map_err(|_| self.error(key, format!("expected a list of integers, found `{item}`")))
            })
            .collect()
    }

    /// Every resolved key except run-local ones, in key order.
    pub fn echo(&self) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = self
            .entries
            .iter()
            .map(|(k, e)| (k.to_string(), serde_json::Value::String(e.value.clone())))
            .collect();
        serde_json::Value::Object(map)
    }
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_f64(v: &str) -> Option<f64> {
    v.trim().parse::<f64>().ok().filter(|x| x.is_finite())
}

/// Parse `[(x0,y0),(x1,y1),...]`.
pub fn parse_points(v: &str) -> Option<Vec<(f64, f64)>> {
    let s: String = v.chars().filter(|c| !c.is_whitespace()).collect();
    let s = s.strip_prefix('[')?.strip_suffix(']')?;
    let mut out = Vec::new();
    for piece in s.split(')') {
        let piece = piece.trim_start_matches(',');
        if piece.is_empty() {
            continue;
        }
        let (x, y) = piece.strip_prefix('(')?.split_once(',')?;
        out.push((parse_f64(x)?, parse_f64(y)?));
    }
    Some(out)
}
