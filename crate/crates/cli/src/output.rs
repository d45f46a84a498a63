//! Where reports go: files under `--out`, or stdout.

use std::path::PathBuf;

use anyhow::Context;
use clap::ValueEnum;

use conekit_core::report::{append_csv, Format, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    /// Aligned columns for reading.
    Text,
    Csv,
    Json,
}

impl OutputFormat {
    fn extension(self) -> &'static str {
        match self {
            OutputFormat::Text => "txt",
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }

    fn render(self, table: &Table) -> String {
        match self {
            OutputFormat::Text => table.to_text(),
            OutputFormat::Csv => table.render(Format::Csv),
            OutputFormat::Json => table.render(Format::Json),
        }
    }
}

pub struct Output {
    dir: Option<PathBuf>,
    format: OutputFormat,
}

impl Output {
    pub fn new(dir: Option<PathBuf>, format: OutputFormat) -> anyhow::Result<Self> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        }
        Ok(Self { dir, format })
    }

    fn write(&self, file: &str, content: &str) -> anyhow::Result<()> {
        if let Some(d) = &self.dir {
            let path = d.join(file);
            std::fs::write(&path, content).with_context(|| format!("stage `emit_report`: writing {}", path.display()))?;
            log::info!("wrote {}", path.display());
        }
        Ok(())
    }

    /// The subcommand's main table: a file under `--out`, otherwise stdout.
    pub fn emit(&self, name: &str, table: &Table) -> anyhow::Result<()> {
        let text = self.format.render(table);
        match &self.dir {
            Some(_) => self.write(&format!("{name}.{}", self.format.extension()), &text),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }

    /// A secondary table, written only when `--out` is given.
    pub fn emit_file(&self, name: &str, table: &Table) -> anyhow::Result<()> {
        self.write(&format!("{name}.{}", self.format.extension()), &self.format.render(table))
    }

    /// Preformatted content under `--out`; printed instead when it is the
    /// main result (`.json`) and there is no directory.
    pub fn emit_text(&self, file: &str, content: &str) -> anyhow::Result<()> {
        if self.dir.is_none() && file.ends_with(".json") {
            print!("{content}");
        }
        self.write(file, content)
    }

    /// Landmark rows: CSV output appends to `landmarks.csv` so mono and
    /// stereo runs share one file.
    pub fn emit_landmarks(&self, table: &Table) -> anyhow::Result<()> {
        match (&self.dir, self.format) {
            (Some(d), OutputFormat::Csv) => {
                let path = d.join("landmarks.csv");
                append_csv(table, &path).with_context(|| format!("stage `emit_report`: appending {}", path.display()))
            }
            _ => self.emit("landmarks", table),
        }
    }
}
