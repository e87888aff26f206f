//! `--config` files: flat `key=value` lines turned into flags.
//!
//! `n=20` becomes `--n 20`; `unsafe=true` becomes `--unsafe` and `false`
//! drops the flag; a value with spaces (`random=10 4 100`) becomes several
//! arguments. The expanded flags are placed ahead of the command-line flags
//! so the latter win.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use softmax_newton::io::{parse_key_values, read_text};
use softmax_newton::Result;

pub const SUBCOMMANDS: [&str; 4] = ["generate", "solve", "verify", "bench"];

/// Finds the value of `--config` in raw arguments.
pub fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

pub fn expand(pairs: &[(String, String)]) -> Vec<OsString> {
    let mut out = Vec::new();
    for (k, v) in pairs {
        let flag = format!("--{}", k.replace('_', "-"));
        match v.as_str() {
            "true" => out.push(flag.into()),
            "false" => {}
            _ => {
                out.push(flag.into());
                out.extend(v.split_whitespace().map(OsString::from));
            }
        }
    }
    out
}

/// Inserts the flags from `path` right after the subcommand name.
pub fn merge(args: Vec<OsString>, path: &Path) -> Result<Vec<OsString>> {
    let pairs = parse_key_values(&read_text(path)?).map_err(|e| e.in_file(path))?;
    let Some(pos) = args.iter().position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref())) else {
        return Ok(args);
    };
    let mut merged = args[..=pos].to_vec();
    merged.extend(expand(&pairs));
    merged.extend_from_slice(&args[pos + 1..]);
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(v: &[(&str, &str)]) -> Vec<(String, String)> {
        v.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn expands_flags() {
        let got = expand(&pairs(&[("max_iters", "5"), ("unsafe", "true"), ("no_sampling", "false"), ("random", "10 4 100")]));
        let want: Vec<OsString> = ["--max-iters", "5", "--unsafe", "--random", "10", "4", "100"].iter().map(OsString::from).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn finds_config_in_either_form() {
        let a = |v: &[&str]| v.iter().map(OsString::from).collect::<Vec<_>>();
        assert_eq!(config_path(&a(&["x", "solve", "--config", "c"])), Some(PathBuf::from("c")));
        assert_eq!(config_path(&a(&["x", "--config=d", "solve"])), Some(PathBuf::from("d")));
        assert_eq!(config_path(&a(&["x", "solve"])), None);
    }
}
