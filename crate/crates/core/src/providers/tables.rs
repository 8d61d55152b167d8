//! Fixture tables for the offline vision providers.
//!
//! Both formats are tab-separated text, one entry per line, with blank lines
//! and lines starting with `#` ignored.
//!
//! Caption table: `<image_file>\t<caption>`
//!
//! VQA table: `<image_file>\t<question>\t<answer>`, where an image_file of
//! `*` supplies the answer for any image without a specific entry.

use std::collections::BTreeMap;
use std::path::Path;

use super::ProviderError;

pub type CaptionTable = BTreeMap<String, String>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VqaTable {
    pub answers: BTreeMap<(String, String), String>,
    pub defaults: BTreeMap<String, String>,
}

impl VqaTable {
    pub fn insert(&mut self, image_file: &str, question: &str, answer: &str) {
        if image_file == "*" {
            self.defaults
                .insert(question.to_string(), answer.to_string());
        } else {
            self.answers.insert(
                (image_file.to_string(), question.to_string()),
                answer.to_string(),
            );
        }
    }

    pub fn lookup(&self, image_file: &str, question: &str) -> Option<&str> {
        self.answers
            .get(&(image_file.to_string(), question.to_string()))
            .or_else(|| self.defaults.get(question))
            .map(String::as_str)
    }
}

fn rows(text: &str, columns: usize) -> Result<Vec<Vec<&str>>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.splitn(columns, '\t').map(str::trim).collect();
        if fields.len() != columns || fields.iter().any(|f| f.is_empty()) {
            return Err(format!(
                "line {}: expected {columns} tab-separated non-empty fields",
                i + 1
            ));
        }
        out.push(fields);
    }
    Ok(out)
}

pub fn parse_caption_table(text: &str) -> Result<CaptionTable, String> {
    Ok(rows(text, 2)?
        .into_iter()
        .map(|r| (r[0].to_string(), r[1].to_string()))
        .collect())
}

pub fn parse_vqa_table(text: &str) -> Result<VqaTable, String> {
    let mut table = VqaTable::default();
    for r in rows(text, 3)? {
        table.insert(r[0], r[1], r[2]);
    }
    Ok(table)
}

fn read(path: &Path) -> Result<String, ProviderError> {
    std::fs::read_to_string(path)
        .map_err(|e| ProviderError::Unavailable(format!("{}: {e}", path.display())))
}

pub fn load_caption_table(path: &Path) -> Result<CaptionTable, ProviderError> {
    parse_caption_table(&read(path)?)
        .map_err(|e| ProviderError::Failed(format!("{}: {e}", path.display())))
}

pub fn load_vqa_table(path: &Path) -> Result<VqaTable, ProviderError> {
    parse_vqa_table(&read(path)?)
        .map_err(|e| ProviderError::Failed(format!("{}: {e}", path.display())))
}
