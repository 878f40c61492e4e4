//! Flat `key = value` run configuration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_M_GRID: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
pub const DEFAULT_PATHS: u64 = 100_000;
pub const DEFAULT_STEPS: usize = 2000;

const KEYS: [&str; 11] = ["d", "M", "m", "p", "N", "t", "n", "m_grid", "paths", "steps", "seed"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Compute,
    Limit,
    Sweep,
    Mc,
    Check,
}

/// Raw key/value pairs in file order, duplicates rejected.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::usage(format!("line {}: expected key = value, got `{line}`", lineno + 1)));
        };
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(CliError::usage(format!("{k}: unknown key (line {})", lineno + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(CliError::usage(format!("{k}: given more than once")));
        }
    }
    Ok(out)
}

fn number(key: &str, s: &str) -> Result<f64, CliError> {
    let v: f64 = s.trim().parse().map_err(|_| CliError::usage(format!("{key}: `{}` is not a number", s.trim())))?;
    if !v.is_finite() {
        return Err(CliError::usage(format!("{key}: value must be finite")));
    }
    Ok(v)
}

fn list(key: &str, s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',').map(|x| number(key, x)).collect()
}

fn integer<T: std::str::FromStr>(key: &str, s: &str) -> Result<T, CliError> {
    s.parse().map_err(|_| CliError::usage(format!("{key}: `{s}` is not a non-negative integer")))
}

/// Fully resolved configuration. Only the fields the command reads are kept,
/// so reports embed exactly what produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub d: usize,
    /// Row-major rows of M.
    #[serde(rename = "M")]
    pub matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    pub p: Vec<f64>,
    #[serde(rename = "N")]
    pub depth: usize,
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RunConfig {
    /// Resolve a config file for `command`; `seed` overrides the file value.
    pub fn resolve(command: Command, text: &str, seed: Option<u64>) -> Result<Self, CliError> {
        let kv = parse_pairs(text)?;
        let get = |k: &str| kv.get(k).map(String::as_str);
        let need = |k: &str| get(k).ok_or_else(|| CliError::usage(format!("{k}: required for `{}`", command_name(command))));

        let rows: Vec<Vec<f64>> = need("M")?.split(';').map(|r| list("M", r)).collect::<Result<_, _>>()?;
        let d = match get("d") {
            Some(s) => integer::<usize>("d", s)?,
            None => rows.len(),
        };
        if d == 0 {
            return Err(CliError::usage("d: must be at least 1"));
        }
        if rows.len() != d {
            return Err(CliError::usage(format!("M: has {} rows but d = {d}", rows.len())));
        }
        if let Some(r) = rows.iter().position(|r| r.len() != d) {
            return Err(CliError::usage(format!("M: row {} has {} entries but d = {d}", r + 1, rows[r].len())));
        }
        let p = list("p", need("p")?)?;
        if p.len() != d {
            return Err(CliError::usage(format!("p: has {} entries but d = {d}", p.len())));
        }
        let t = number("t", need("t")?)?;
        if t <= 0.0 {
            return Err(CliError::usage("t: must be positive"));
        }
        let positive_mass = |k: &str, v: f64| {
            if v > 0.0 {
                Ok(v)
            } else {
                Err(CliError::usage(format!("{k}: masses must be positive")))
            }
        };

        let mut cfg = RunConfig {
            command,
            d,
            matrix: rows,
            m: None,
            p,
            depth: 0,
            t,
            n: None,
            m_grid: None,
            paths: None,
            steps: None,
            seed: None,
        };
        if command != Command::Sweep {
            cfg.depth = integer("N", need("N")?)?;
            if cfg.depth == 0 {
                return Err(CliError::usage("N: must be at least 1"));
            }
        }
        match command {
            Command::Compute | Command::Mc | Command::Check => {
                cfg.m = Some(positive_mass("m", number("m", need("m")?)?)?);
            }
            Command::Limit => {}
            Command::Sweep => {
                let n: usize = integer("n", need("n")?)?;
                if n == 0 {
                    return Err(CliError::usage("n: must be at least 1"));
                }
                cfg.n = Some(n);
                cfg.depth = match get("N") {
                    Some(s) => integer("N", s)?,
                    None => n,
                };
                if cfg.depth < n {
                    return Err(CliError::usage(format!("N: must be at least n = {n}")));
                }
                let grid = match get("m_grid") {
                    Some(s) => list("m_grid", s)?,
                    None => DEFAULT_M_GRID.to_vec(),
                };
                for &g in &grid {
                    positive_mass("m_grid", g)?;
                }
                if grid.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(CliError::usage("m_grid: must be strictly decreasing"));
                }
                cfg.m_grid = Some(grid);
            }
        }
        if command == Command::Mc {
            cfg.paths = Some(match get("paths") {
                Some(s) => integer("paths", s)?,
                None => DEFAULT_PATHS,
            });
            cfg.steps = Some(match get("steps") {
                Some(s) => integer("steps", s)?,
                None => DEFAULT_STEPS,
            });
            cfg.seed = Some(match (seed, get("seed")) {
                (Some(s), _) => s,
                (None, Some(s)) => integer("seed", s)?,
                (None, None) => 0,
            });
            if cfg.paths < Some(2) {
                return Err(CliError::usage("paths: need at least 2"));
            }
            if cfg.steps == Some(0) {
                return Err(CliError::usage("steps: must be at least 1"));
            }
        }
        Ok(cfg)
    }

    pub fn row_major(&self) -> Vec<f64> {
        self.matrix.iter().flatten().copied().collect()
    }
}

pub fn command_name(c: Command) -> &'static str {
    match c {
        Command::Compute => "compute",
        Command::Limit => "limit",
        Command::Sweep => "sweep",
        Command::Mc => "mc",
        Command::Check => "check",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "d = 2\nM = 1,1;0,2\nm = 0.5\np = 1,-1\nN = 3\nt = 1\n";

    #[test]
    fn parses_matrix_rows() {
        let c = RunConfig::resolve(Command::Compute, BASE, None).unwrap();
        assert_eq!(c.matrix, vec![vec![1.0, 1.0], vec![0.0, 2.0]]);
        assert_eq!(c.p, vec![1.0, -1.0]);
        assert_eq!(c.m, Some(0.5));
        assert_eq!(c.paths, None);
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = format!("# header\n\n{BASE}  # trailing\n");
        assert!(RunConfig::resolve(Command::Compute, &text, None).is_ok());
    }

    #[test]
    fn errors_name_the_key() {
        let cases = [
            (BASE.replace("p = 1,-1", "p = 1"), "p:"),
            (BASE.replace("M = 1,1;0,2", "M = 1,1;0"), "M:"),
            (BASE.replace("t = 1", "t = x"), "t:"),
            (format!("{BASE}q = 1\n"), "q:"),
            (format!("{BASE}t = 2\n"), "t:"),
            (BASE.replace("m = 0.5\n", ""), "m:"),
        ];
        for (text, key) in cases {
            let e = RunConfig::resolve(Command::Mc, &text, None).unwrap_err();
            assert!(e.message().starts_with(key), "{}", e.message());
            assert_eq!(e.exit_code(), 1);
        }
    }

    #[test]
    fn sweep_defaults() {
        let text = "M = 1\np = 1\nt = 1\nn = 3\n";
        let c = RunConfig::resolve(Command::Sweep, text, None).unwrap();
        assert_eq!(c.d, 1);
        assert_eq!(c.depth, 3);
        assert_eq!(c.m_grid.as_deref(), Some(&DEFAULT_M_GRID[..]));
        let bad = RunConfig::resolve(Command::Sweep, "M = 1\np = 1\nt = 1\nn = 3\nm_grid = 0.1,0.2\n", None);
        assert!(bad.unwrap_err().message().starts_with("m_grid:"));
    }

    #[test]
    fn seed_flag_overrides_file() {
        let text = format!("{BASE}seed = 5\n");
        assert_eq!(RunConfig::resolve(Command::Mc, &text, None).unwrap().seed, Some(5));
        assert_eq!(RunConfig::resolve(Command::Mc, &text, Some(9)).unwrap().seed, Some(9));
    }
}
