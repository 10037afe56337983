use std::path::{Path, PathBuf};

use hrspec::io::{digest_file, sha256_hex, write_atomic, write_manifest, FileDigest, Manifest};
use hrspec::{Error, Result};

use crate::OutputArgs;

/// Everything a subcommand produces, held in memory until all of it is ready.
pub struct Outputs {
    files: Vec<(String, String)>,
    inputs: Vec<FileDigest>,
}

impl Outputs {
    pub fn new(inputs: Vec<FileDigest>) -> Self {
        Self { files: Vec::new(), inputs }
    }

    pub fn add(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    /// Check every target first, then write each file atomically.
    pub fn commit(self, args: &OutputArgs) -> Result<()> {
        std::fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
        let mut names: Vec<&str> = self.files.iter().map(|(n, _)| n.as_str()).collect();
        if args.manifest {
            names.push("manifest.json");
        }
        if !args.force {
            if let Some(n) = names.iter().find(|n| args.out.join(n).exists()) {
                return Err(Error::InvalidValue {
                    field: "--out".into(),
                    reason: format!("{} exists (use --force to replace)", args.out.join(n).display()),
                });
            }
        }
        for (name, text) in &self.files {
            write_atomic(&args.out.join(name), text.as_bytes(), args.force)?;
        }
        if args.manifest {
            let outputs = self
                .files
                .iter()
                .map(|(name, text)| FileDigest {
                    path: name.clone(),
                    sha256: sha256_hex(text.as_bytes()),
                })
                .collect();
            let argv = std::env::args().collect();
            let m = Manifest::new(argv, self.inputs, outputs);
            write_atomic(&args.out.join("manifest.json"), write_manifest(&m).as_bytes(), args.force)?;
        }
        Ok(())
    }
}

pub fn read_input(path: &Path, digests: &mut Vec<FileDigest>) -> Result<String> {
    let text = hrspec::io::read_file(path)?;
    digests.push(digest_file(path)?);
    Ok(text)
}

fn io_error(path: &PathBuf, source: std::io::Error) -> Error {
    Error::Io {
        path: path.clone(),
        source,
    }
}

/// Provenance lines shared by every TSV header.
pub fn header(command: &str, inputs: &[FileDigest], params: &[(&str, String)]) -> Vec<String> {
    let mut h = vec![format!("hrspec {} {command}", env!("CARGO_PKG_VERSION"))];
    for d in inputs {
        let name = Path::new(&d.path)
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        h.push(format!("input {name} {}", d.sha256));
    }
    for (k, v) in params {
        h.push(format!("{k} = {v}"));
    }
    h
}
