use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::Args;
use serde_json::json;

use robodiary_core::config::Config;
use robodiary_core::fixture::write_walk;
use robodiary_core::memory::{validate_dir, Finding, MemoryError, Severity, StoredFolder};
use robodiary_core::summarize::{
    generate_control_diary, generate_diary, save_diary, DiaryMode, PremiseInputs,
};
use robodiary_service::AppState;

#[derive(Debug, Clone, Copy)]
pub struct Output {
    pub json: bool,
}

impl Output {
    /// Writes to stdout; a closed pipe (`| head`) is not an error.
    pub fn print(&self, value: &serde_json::Value, text: impl FnOnce() -> String) {
        let mut stdout = std::io::stdout().lock();
        let _ = if self.json {
            writeln!(stdout, "{value}")
        } else {
            writeln!(stdout, "{}", text())
        };
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Session folder (`<root>/<YYYY-MM-DD>`).
    #[arg(long)]
    folder: PathBuf,
    /// `with` runs the full pipeline; `without` writes the captions-only
    /// control diary.
    #[arg(long)]
    mode: DiaryMode,
    #[arg(long)]
    place: String,
    #[arg(long)]
    event: String,
    /// Defaults to the partner name.
    #[arg(long, default_value = "")]
    person: String,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for the diary file instead of beside the session folder.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the diary without writing a file.
    #[arg(long)]
    no_save: bool,
}

pub fn generate(config: &Config, args: GenerateArgs, out: Output) -> anyhow::Result<ExitCode> {
    let providers = config.providers()?;
    let mut diary_config = config.diary_config()?;
    if args.k.is_some() {
        diary_config.k = args.k;
    }
    if let Some(seed) = args.seed {
        diary_config.seed = seed;
    }
    let stored = StoredFolder::load(&args.folder, &config.rules()?.emotions().clone())
        .with_context(|| format!("cannot load {}", args.folder.display()))?;
    let inputs = PremiseInputs::new(&args.place, &args.person, &args.event);
    let diary = match args.mode {
        DiaryMode::WithInteraction => generate_diary(&stored, &inputs, &providers, &diary_config)?,
        DiaryMode::WithoutInteraction => generate_control_diary(
            &stored,
            &inputs,
            &providers,
            &diary_config,
            diary_config.seed,
        )?,
    };
    let saved_to = if args.no_save {
        None
    } else {
        // save_diary writes beside the folder it is given
        let anchor = match &args.out {
            Some(dir) => dir.join(stored.folder.folder_name()),
            None => stored.dir.clone(),
        };
        Some(save_diary(&diary, &anchor)?)
    };
    out.print(&json!({ "diary": diary, "saved_to": saved_to }), || {
        let mut text = diary.text.clone();
        if let Some(path) = &saved_to {
            text.push_str(&format!("\n\nsaved to {}", path.display()));
        }
        text
    });
    Ok(ExitCode::SUCCESS)
}

fn describe_finding(f: &Finding) -> String {
    let severity = match f.severity {
        Severity::Error => "error",
        Severity::Warning => "warning",
    };
    let mut line = severity.to_string();
    if let Some(field) = &f.field {
        line.push_str(&format!(" [{field}]"));
    }
    if let Some(i) = f.record_index {
        line.push_str(&format!(" record {i}"));
    }
    format!("{line}: {}", f.message)
}

/// Parse and schema failures reported as a single finding.
fn unreadable(error: MemoryError) -> Result<Finding, MemoryError> {
    match error {
        MemoryError::Parse { .. } => Ok(Finding {
            severity: Severity::Error,
            field: Some("events.json".into()),
            record_index: None,
            message: error.to_string(),
        }),
        MemoryError::Schema {
            index, ref field, ..
        } => Ok(Finding {
            severity: Severity::Error,
            field: Some(field.clone()),
            record_index: Some(index),
            message: error.to_string(),
        }),
        other => Err(other),
    }
}

pub fn validate(config: &Config, folder: &Path, out: Output) -> anyhow::Result<ExitCode> {
    let emotions = config.rules()?.emotions().clone();
    let findings = match validate_dir(folder, &emotions) {
        Ok((_, findings)) => findings,
        Err(e) => vec![unreadable(e).with_context(|| format!("cannot read {}", folder.display()))?],
    };
    let errors = findings.iter().filter(|f| f.is_error()).count();
    let warnings = findings.len() - errors;
    out.print(
        &json!({
            "folder": folder,
            "errors": errors,
            "warnings": warnings,
            "findings": findings,
        }),
        || {
            let mut lines: Vec<String> = findings.iter().map(describe_finding).collect();
            lines.push(format!("{errors} errors, {warnings} warnings"));
            lines.join("\n")
        },
    );
    Ok(if errors > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

pub fn inspect(config: &Config, folder: &Path, out: Output) -> anyhow::Result<ExitCode> {
    let emotions = config.rules()?.emotions().clone();
    let (memory, findings) = match validate_dir(folder, &emotions) {
        Ok(v) => v,
        Err(e) => {
            unreadable(e).with_context(|| format!("cannot read {}", folder.display()))?;
            anyhow::bail!(
                "{} is not a readable session folder; run validate",
                folder.display()
            );
        }
    };
    let referenced: std::collections::BTreeSet<&str> = memory
        .records
        .iter()
        .map(|r| r.image_file.as_str())
        .collect();
    let images: Vec<serde_json::Value> = memory
        .images
        .iter()
        .map(|name| json!({ "file": name, "referenced": referenced.contains(name.as_str()) }))
        .collect();
    out.print(
        &json!({
            "date": memory.folder_name(),
            "events": memory.records,
            "images": images,
            "findings": findings,
        }),
        || {
            let mut lines = vec![format!(
                "{:>3}  {:<8}  {:<9}  {:<10}  {:<7}  {:<30}  {}",
                "#", "action", "emotion", "object", "status", "speech", "image"
            )];
            for r in &memory.records {
                let speech: String = r.human_speech.chars().take(30).collect();
                lines.push(format!(
                    "{:>3}  {:<8}  {:<9}  {:<10}  {:<7}  {:<30}  {}",
                    r.event_number,
                    r.action.to_string(),
                    r.emotion.as_str(),
                    r.object_name.as_deref().unwrap_or("-"),
                    r.event_status.as_deref().unwrap_or("-"),
                    speech,
                    r.image_file
                ));
            }
            lines.push(String::new());
            lines.push(format!("{} images:", memory.images.len()));
            for name in &memory.images {
                let mark = if referenced.contains(name.as_str()) {
                    " "
                } else {
                    "?"
                };
                lines.push(format!(" {mark} {name}"));
            }
            lines.join("\n")
        },
    );
    Ok(ExitCode::SUCCESS)
}

pub fn show_config(config: &Config, out: Output) -> anyhow::Result<ExitCode> {
    out.print(&serde_json::to_value(config)?, || config.to_toml());
    Ok(ExitCode::SUCCESS)
}

pub fn serve(mut config: Config, bind: Option<String>) -> anyhow::Result<ExitCode> {
    if let Some(bind) = bind {
        config.service.bind = bind;
    }
    let addr = config.service.bind.clone();
    let state = AppState::new(config)?;
    tokio::runtime::Runtime::new()?
        .block_on(robodiary_service::serve(state, &addr))
        .with_context(|| format!("serving on {addr}"))?;
    Ok(ExitCode::SUCCESS)
}

pub fn write_fixture(dir: &Path, out: Output) -> anyhow::Result<ExitCode> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let fixture = write_walk(dir)?;
    out.print(
        &json!({
            "folder": fixture.dir,
            "captions": fixture.captions,
            "answers": fixture.answers,
            "config": fixture.config,
        }),
        || {
            format!(
                "wrote {}\nconfig: {}",
                fixture.dir.display(),
                fixture.config.display()
            )
        },
    );
    Ok(ExitCode::SUCCESS)
}
