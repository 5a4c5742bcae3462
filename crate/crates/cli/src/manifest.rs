use std::collections::BTreeMap;
use std::hash::Hasher;
use std::path::{Component, Path, PathBuf};

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MANIFEST_SUFFIX: &str = ".manifest.json";

/// 64-bit FNV-1a of `bytes`, as 16 lowercase hex digits.
pub fn fnv1a64(bytes: &[u8]) -> String {
    let mut h = FnvHasher::default();
    h.write(bytes);
    format!("{:016x}", h.finish())
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(fnv1a64(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    /// Positional argument name, or the `--flag` that carried the path.
    pub arg: String,
    pub path: String,
    pub fnv1a64: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Relative to the directory holding the manifest.
    pub path: String,
    pub fnv1a64: String,
}

/// Everything needed to rerun a command and check that its outputs come back
/// byte for byte. Output paths are stored relative to the manifest so an
/// artifact directory can be moved or compared against another run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub inputs: Vec<InputRecord>,
    pub flags: BTreeMap<String, String>,
    pub output_flags: BTreeMap<String, String>,
    pub outputs: Vec<OutputRecord>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: not a run manifest: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Argument vector (without the program name) that reproduces the run
    /// when output paths are resolved against `base`.
    pub fn argv(&self, base: &Path) -> Vec<String> {
        let mut args = vec![self.command.clone(), "--seed".into(), self.seed.to_string()];
        for input in &self.inputs {
            if input.arg.starts_with("--") {
                args.push(input.arg.clone());
            }
            args.push(input.path.clone());
        }
        for (k, v) in &self.flags {
            args.push(format!("--{k}"));
            args.push(v.clone());
        }
        for (k, v) in &self.output_flags {
            args.push(format!("--{k}"));
            args.push(base.join(v).to_string_lossy().into_owned());
        }
        args
    }
}

/// What a command consumed and produced, before it is written out as manifests.
#[derive(Debug, Default)]
pub struct Invocation {
    pub command: String,
    pub seed: u64,
    pub inputs: Vec<(String, PathBuf)>,
    pub flags: BTreeMap<String, String>,
    pub output_flags: Vec<(String, PathBuf)>,
    pub outputs: Vec<PathBuf>,
    /// Where manifests go. Empty means one `<output>.manifest.json` per output file.
    pub manifest_paths: Vec<PathBuf>,
}

impl Invocation {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.into(),
            seed,
            ..Default::default()
        }
    }

    pub fn input(&mut self, arg: &str, path: &Path) {
        self.inputs.push((arg.into(), path.to_path_buf()));
    }

    pub fn flag(&mut self, name: &str, value: impl ToString) {
        self.flags.insert(name.into(), value.to_string());
    }

    pub fn output_flag(&mut self, name: &str, path: &Path) {
        self.output_flags.push((name.into(), path.to_path_buf()));
    }

    /// Digests every input and output and writes the manifests. Returns their paths.
    pub fn write_manifests(&self) -> Result<Vec<PathBuf>, CliError> {
        let mut inputs = Vec::new();
        for (arg, path) in &self.inputs {
            inputs.push(InputRecord {
                arg: arg.clone(),
                path: absolute(path)?.to_string_lossy().into_owned(),
                fnv1a64: file_digest(path)?,
            });
        }
        let targets: Vec<PathBuf> = if self.manifest_paths.is_empty() {
            self.outputs
                .iter()
                .map(|p| {
                    let mut s = p.clone().into_os_string();
                    s.push(MANIFEST_SUFFIX);
                    PathBuf::from(s)
                })
                .collect()
        } else {
            self.manifest_paths.clone()
        };
        for target in &targets {
            let base = absolute(target.parent().unwrap_or(Path::new(".")))?;
            let mut output_flags = BTreeMap::new();
            for (k, p) in &self.output_flags {
                output_flags.insert(k.clone(), relative(&base, &absolute(p)?));
            }
            let mut outputs = Vec::new();
            for p in &self.outputs {
                outputs.push(OutputRecord {
                    path: relative(&base, &absolute(p)?),
                    fnv1a64: file_digest(p)?,
                });
            }
            let m = RunManifest {
                tool: "psyman".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: self.command.clone(),
                seed: self.seed,
                inputs: inputs.clone(),
                flags: self.flags.clone(),
                output_flags,
                outputs,
            };
            crate::write_output(target, m.to_json().as_bytes())?;
        }
        Ok(targets)
    }
}

/// Canonical form of `path`; the final component need not exist yet.
pub fn absolute(path: &Path) -> Result<PathBuf, CliError> {
    let fail = |e: std::io::Error| CliError::Data(format!("{}: {e}", path.display()));
    if let Ok(p) = path.canonicalize() {
        return Ok(p);
    }
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Data(format!("{}: not a file path", path.display())))?;
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.canonicalize().map_err(fail)?,
        _ => std::env::current_dir().map_err(fail)?,
    };
    Ok(parent.join(name))
}

/// Lexical path from directory `base` to `target`, both absolute.
pub fn relative(base: &Path, target: &Path) -> String {
    let b: Vec<Component> = base.components().collect();
    let t: Vec<Component> = target.components().collect();
    let common = b.iter().zip(&t).take_while(|(x, y)| x == y).count();
    let mut out = PathBuf::new();
    for _ in common..b.len() {
        out.push("..");
    }
    for c in &t[common..] {
        out.push(c);
    }
    if out.as_os_str().is_empty() {
        ".".into()
    } else {
        out.to_string_lossy().into_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), "cbf29ce484222325");
        assert_eq!(fnv1a64(b"a"), "af63dc4c8601ec8c");
        assert_eq!(fnv1a64(b"foobar"), "85944171f73967e8");
    }

    #[test]
    fn relative_paths() {
        assert_eq!(relative(Path::new("/a/b"), Path::new("/a/b/c.svg")), "c.svg");
        assert_eq!(relative(Path::new("/a/b"), Path::new("/a/d/c.svg")), "../d/c.svg");
        assert_eq!(relative(Path::new("/a/b"), Path::new("/a/b")), ".");
    }

    #[test]
    fn argv_puts_flag_inputs_behind_their_flag() {
        let m = RunManifest {
            tool: "psyman".into(),
            version: "0".into(),
            command: "embed".into(),
            seed: 7,
            inputs: vec![
                InputRecord {
                    arg: "features".into(),
                    path: "/x/f.csv".into(),
                    fnv1a64: String::new(),
                },
                InputRecord {
                    arg: "--labels".into(),
                    path: "/x/l.csv".into(),
                    fnv1a64: String::new(),
                },
            ],
            flags: [("dims".to_string(), "2".to_string())].into(),
            output_flags: [("out".to_string(), "e.csv".to_string())].into(),
            outputs: vec![],
        };
        assert_eq!(
            m.argv(Path::new("/o")),
            ["embed", "--seed", "7", "/x/f.csv", "--labels", "/x/l.csv", "--dims", "2", "--out", "/o/e.csv"]
        );
    }
}
