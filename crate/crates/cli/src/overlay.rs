//! `--config` files: `key = value` (or `key: value`) lines naming long flags.

use std::ffi::OsString;
use std::path::Path;

use crate::args::SUBCOMMANDS;

/// Flag arguments equivalent to a config file. `true` becomes a bare flag and `false` omits it.
pub fn config_args(text: &str, origin: &Path) -> Result<Vec<OsString>, String> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .or_else(|| line.split_once(':'))
            .ok_or_else(|| format!("{}:{}: expected `key = value`", origin.display(), n + 1))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            return Err(format!("{}:{}: invalid key", origin.display(), n + 1));
        }
        match value {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            v => {
                out.push(format!("--{key}").into());
                out.push(v.into());
            }
        }
    }
    Ok(out)
}

/// Path given by `--config PATH` or `--config=PATH`, if any.
pub fn find_config(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(rest.into());
        }
    }
    None
}

/// Inserts `extra` right after the subcommand so explicit flags, which come later, win.
pub fn splice(argv: Vec<OsString>, extra: Vec<OsString>) -> Vec<OsString> {
    if extra.is_empty() {
        return argv;
    }
    let pos = argv.iter().skip(1).position(|a| SUBCOMMANDS.iter().any(|s| a == *s)).map(|p| p + 2);
    match pos {
        Some(p) => {
            let mut out = argv[..p].to_vec();
            out.extend(extra);
            out.extend_from_slice(&argv[p..]);
            out
        }
        None => argv,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_lines() {
        let text = "# comment\nsteps = 20\nno_reverse = true\ndirect-connections = false\nlr: 0.01\n";
        let args = config_args(text, Path::new("c.txt")).unwrap();
        assert_eq!(args, os(&["--steps", "20", "--no-reverse", "--lr", "0.01"]));
        assert!(config_args("oops", Path::new("c.txt")).is_err());
    }

    #[test]
    fn splices_after_subcommand() {
        let argv = os(&["mlnmt", "--seed", "3", "train", "--steps", "5"]);
        let out = splice(argv, os(&["--steps", "9"]));
        assert_eq!(out, os(&["mlnmt", "--seed", "3", "train", "--steps", "9", "--steps", "5"]));
        assert_eq!(find_config(&os(&["mlnmt", "train", "--config=x.cfg"])), Some("x.cfg".into()));
    }
}
