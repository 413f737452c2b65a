//! Flat `key = value` config files, spliced into the argument list so that
//! flags given on the command line take precedence.

use std::path::Path;

use rffq::Error;

/// Parse `key = value` lines. Blank lines and `#` comments are ignored.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, Error> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("expected key = value, got '{line}'") })?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(Error::Parse { line: i + 1, msg: format!("bad key '{}'", k.trim()) });
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

const GLOBAL_WITH_VALUE: [&str; 2] = ["--threads", "--config"];

fn config_path(args: &[String]) -> Option<String> {
    args.iter().enumerate().find_map(|(i, a)| match a.strip_prefix("--config=") {
        Some(p) => Some(p.to_string()),
        None if a == "--config" => args.get(i + 1).cloned(),
        None => None,
    })
}

/// Index of the subcommand token, skipping global flags.
fn subcommand_index(args: &[String]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let a = &args[i];
        if GLOBAL_WITH_VALUE.contains(&a.as_str()) {
            i += 2;
        } else if a.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}

fn given(args: &[String], flag: &str) -> bool {
    args.iter().any(|a| a == flag || a.strip_prefix(flag).is_some_and(|rest| rest.starts_with('=')))
}

/// Insert the entries of the `--config` file (if any) right after the
/// subcommand, leaving out keys already present on the command line.
/// `key = true` becomes a bare switch and `key = false` is dropped.
pub fn splice(args: Vec<String>) -> Result<Vec<String>, Error> {
    let Some(path) = config_path(&args) else { return Ok(args) };
    let entries = parse(&std::fs::read_to_string(Path::new(&path))?)?;
    let Some(at) = subcommand_index(&args) else { return Ok(args) };
    let mut extra = Vec::new();
    for (key, value) in entries {
        let flag = format!("--{key}");
        if given(&args, &flag) {
            continue;
        }
        match value.as_str() {
            "true" => extra.push(flag),
            "false" => {}
            _ => {
                extra.push(flag);
                extra.push(value);
            }
        }
    }
    let mut out = args[..=at].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[at + 1..]);
    Ok(out)
}
