//! Artifact writers. Every file carries the code version and the normalized
//! run file: JSON under `header`, CSV as leading `#` lines.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use matldc::trainer::VERSION;
use serde::Serialize;

use crate::config::RunFile;

#[derive(Debug, Serialize)]
pub struct Header<'a> {
    pub version: &'static str,
    pub command: &'a str,
    pub config: &'a RunFile,
}

#[derive(Serialize)]
struct Document<'a, P: Serialize> {
    header: Header<'a>,
    #[serde(flatten)]
    payload: &'a P,
}

pub struct Writer<'a> {
    pub dir: PathBuf,
    pub command: &'a str,
    pub run: &'a RunFile,
}

impl<'a> Writer<'a> {
    pub fn new(command: &'a str, run: &'a RunFile) -> anyhow::Result<Self> {
        let dir = run.output.clone();
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir, command, run })
    }

    pub fn header(&self) -> Header<'a> {
        Header { version: VERSION, command: self.command, config: self.run }
    }

    /// Header lines for CSV artifacts, without the `# ` prefix.
    pub fn comment_lines(&self) -> Vec<String> {
        vec![
            format!("version: {VERSION}"),
            format!("command: {}", self.command),
            format!("config: {}", serde_json::to_string(self.run).expect("run file serializes")),
        ]
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes `{"header": ..., <payload fields>}`; the payload must serialize
    /// to a JSON object.
    pub fn json<P: Serialize>(&self, name: &str, payload: &P) -> anyhow::Result<PathBuf> {
        let doc = Document { header: self.header(), payload };
        let path = self.path(name);
        let text = serde_json::to_string_pretty(&doc)?;
        write(&path, text + "\n")?;
        Ok(path)
    }

    pub fn csv(&self, name: &str, body: &str) -> anyhow::Result<PathBuf> {
        let mut text = String::new();
        for line in self.comment_lines() {
            text.push_str("# ");
            text.push_str(&line);
            text.push('\n');
        }
        text.push_str(body);
        let path = self.path(name);
        write(&path, text)?;
        Ok(path)
    }
}

fn write(path: &Path, text: String) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
