//! Flat `key = value` config files, spliced into the command line as flags.

use std::path::Path;

use anyhow::{bail, Context, Result};

/// Flags from a config file, in file order. `true` becomes a bare flag, `false` drops it.
pub fn config_flags(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("--config: cannot read {}", path.display()))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("--config: {} line {}: expected `key = value`", path.display(), k + 1);
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || key.starts_with('-') {
            bail!("--config: {} line {}: bad key `{key}`", path.display(), k + 1);
        }
        match value {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            _ => {
                out.push(format!("--{key}"));
                out.push(value.to_string());
            }
        }
    }
    Ok(out)
}

/// Removes `--config FILE` and inserts its flags right after the subcommand,
/// so flags given on the command line override the file.
pub fn expand(args: Vec<String>, subcommands: &[&str]) -> Result<Vec<String>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            let Some(p) = it.next() else { bail!("--config: missing file name") };
            config = Some(p);
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(config) = config else { return Ok(rest) };
    let flags = config_flags(Path::new(&config))?;
    let Some(pos) = rest.iter().position(|a| subcommands.contains(&a.as_str())) else {
        bail!("--config: needs a subcommand");
    };
    rest.splice(pos + 1..pos + 1, flags);
    Ok(rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splices_after_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        std::fs::write(&p, "# comment\nn = 3\np=5\n\nclassify = true\nquiet = false\n").unwrap();
        let args: Vec<String> = ["varcurv", "exponent", "--config", p.to_str().unwrap(), "--p", "7"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let out = expand(args, &["exponent"]).unwrap();
        assert_eq!(out, ["varcurv", "exponent", "--n", "3", "--p", "5", "--classify", "--p", "7"]);
    }

    #[test]
    fn malformed_line_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.cfg");
        std::fs::write(&p, "n = 2\njunk\n").unwrap();
        let e = config_flags(&p).unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
    }
}
