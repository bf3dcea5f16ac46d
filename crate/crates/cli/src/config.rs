//! JSON job files.
//!
//! A job file is an object whose keys are long flag names (`max_iters` and
//! `max-iters` both work). Its entries are turned into flags placed before the
//! ones typed on the command line, so explicit flags override the file.

use serde_json::Value;

use crate::error::CliError;

pub const SUBCOMMANDS: [&str; 7] = [
    "route",
    "sweep",
    "best-response",
    "equilibrium",
    "replay",
    "expected-fees",
    "synth-trades",
];

/// Removes `--config <file>` from `args` and splices the file's entries in
/// right after the subcommand.
pub fn expand(args: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut rest = Vec::with_capacity(args.len());
    let mut path = None;
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        if arg == "--config" {
            path = Some(iter.next().ok_or_else(|| CliError::Config("--config needs a file".into()))?);
        } else if let Some(p) = arg.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };

    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{path}: line {}, column {}: {e}", e.line(), e.column())))?;
    let injected = flags_from_json(&value).map_err(|m| CliError::Config(format!("{path}: {m}")))?;

    let Some(at) = rest.iter().skip(1).position(|a| SUBCOMMANDS.contains(&a.as_str())) else {
        return Err(CliError::Config("--config needs a subcommand".into()));
    };
    let at = at + 2;
    rest.splice(at..at, injected);
    Ok(rest)
}

fn flags_from_json(value: &Value) -> Result<Vec<String>, String> {
    let Value::Object(map) = value else {
        return Err("job file must be a JSON object".into());
    };
    let mut out = Vec::new();
    for (key, v) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" {
            return Err("job files cannot nest `config`".into());
        }
        match v {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => out.push(flag),
            Value::String(s) => out.extend([flag, s.clone()]),
            Value::Number(n) => out.extend([flag, n.to_string()]),
            Value::Array(items) if items.iter().all(Value::is_number) => {
                let joined: Vec<String> = items.iter().map(Value::to_string).collect();
                out.extend([flag, joined.join(",")]);
            }
            Value::Array(_) | Value::Object(_) => out.extend([flag, v.to_string()]),
        }
    }
    Ok(out)
}
