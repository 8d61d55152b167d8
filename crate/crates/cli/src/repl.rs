use std::io::{BufRead, IsTerminal, Write};
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use serde_json::json;

use robodiary_core::config::Config;
use robodiary_core::memory::{parse_date, EventRecord, Session};
use robodiary_core::recorder::{ActionOutcome, RecordError, Recorder};

use crate::commands::Output;

#[derive(Debug, PartialEq)]
enum Line<'a> {
    Chat(&'a str),
    Toy {
        name: &'a str,
        probability: f64,
        speech: Option<&'a str>,
    },
    Feed {
        tag: &'a str,
        speech: Option<&'a str>,
    },
    End,
}

const USAGE: &str = "commands: /toy <name> <probability> [speech], /feed <tag> [speech], /end";

/// Splits off the first whitespace-delimited word.
fn word(s: &str) -> Option<(&str, &str)> {
    let s = s.trim_start();
    if s.is_empty() {
        return None;
    }
    Some(match s.split_once(char::is_whitespace) {
        Some((head, rest)) => (head, rest.trim()),
        None => (s, ""),
    })
}

fn optional(s: &str) -> Option<&str> {
    (!s.is_empty()).then_some(s)
}

fn parse(line: &str) -> Result<Option<Line<'_>>, String> {
    let line = line.trim();
    if line.is_empty() {
        return Ok(None);
    }
    let Some(command) = line.strip_prefix('/') else {
        return Ok(Some(Line::Chat(line)));
    };
    let (name, rest) = word(command).ok_or_else(|| USAGE.to_string())?;
    match name {
        "end" if rest.is_empty() => Ok(Some(Line::End)),
        "toy" => {
            let (toy, rest) = word(rest).ok_or("usage: /toy <name> <probability> [speech]")?;
            let (p, speech) = word(rest).ok_or("usage: /toy <name> <probability> [speech]")?;
            let probability = p
                .parse::<f64>()
                .map_err(|_| format!("not a probability: {p:?}"))?;
            Ok(Some(Line::Toy {
                name: toy,
                probability,
                speech: optional(speech),
            }))
        }
        "feed" => {
            let (tag, speech) = word(rest).ok_or("usage: /feed <tag> [speech]")?;
            Ok(Some(Line::Feed {
                tag,
                speech: optional(speech),
            }))
        }
        _ => Err(format!("unknown command /{name}; {USAGE}")),
    }
}

fn show_record(record: &EventRecord) -> String {
    let mut line = format!(
        "#{} {} [{}]",
        record.event_number,
        record.action,
        record.emotion.as_str()
    );
    if let Some(object) = &record.object_name {
        line.push_str(&format!(" {object}"));
    }
    if let Some(status) = &record.event_status {
        line.push_str(&format!(" {status}"));
    }
    if !record.human_speech.is_empty() {
        line.push_str(&format!(" \"{}\"", record.human_speech));
    }
    if !record.robot_response.is_empty() {
        line.push_str(&format!(" -> {}", record.robot_response));
    }
    line
}

fn emit(out: Output, record: &EventRecord) {
    out.print(&json!(record), || show_record(record));
}

fn emit_action(out: Output, outcome: &ActionOutcome) {
    // records in stored order
    let mut records: Vec<&EventRecord> = outcome.chat.iter().collect();
    records.push(&outcome.record);
    records.sort_by_key(|r| r.event_number);
    for record in records {
        emit(out, record);
    }
}

fn warn(out: Output, message: &str) {
    if out.json {
        eprintln!("{}", json!({ "warning": message }));
    } else {
        eprintln!("warning: {message}");
    }
}

/// Runs an interactive recording session until `/end` or end of input.
pub fn run(config: &Config, root: &Path, date: &str, out: Output) -> anyhow::Result<ExitCode> {
    let date = parse_date(date)?;
    let rules = Arc::new(config.rules()?);
    let session = Session::create(root, date, rules.emotions().clone())?
        .with_policy(config.recording_policy())?;
    let mut recorder = Recorder::new(session, rules);
    let dir = recorder.session().dir().to_path_buf();
    if !out.json {
        eprintln!("recording into {}", dir.display());
    }

    let stdin = std::io::stdin();
    let interactive = stdin.is_terminal();
    let mut lines = stdin.lock().lines();
    loop {
        if interactive {
            print!("> ");
            std::io::stdout().flush()?;
        }
        let Some(line) = lines.next() else { break };
        let line = line.context("reading stdin")?;
        let parsed = match parse(&line) {
            Ok(Some(parsed)) => parsed,
            Ok(None) => continue,
            Err(message) => {
                warn(out, &message);
                continue;
            }
        };
        let result = match parsed {
            Line::End => {
                if recorder.close() {
                    let events = recorder.session().folder().records.len();
                    out.print(&json!({ "closed": dir, "events": events }), || {
                        format!("session closed with {events} events")
                    });
                } else {
                    warn(out, "session already closed");
                }
                continue;
            }
            Line::Chat(message) => recorder.chat(message, None).map(|o| emit(out, &o.record)),
            Line::Toy {
                name,
                probability,
                speech,
            } => recorder
                .toy_play(name, probability, None, speech)
                .map(|o| emit_action(out, &o)),
            Line::Feed { tag, speech } => recorder
                .feed(tag, None, speech)
                .map(|o| emit_action(out, &o)),
        };
        match result {
            Ok(()) => {}
            // bad input leaves the session usable
            Err(RecordError::Memory(e)) if is_input_error(&e) => warn(out, &e.to_string()),
            Err(RecordError::Classifier(e)) => warn(out, &e.to_string()),
            Err(e) => return Err(e.into()),
        }
    }
    recorder.close();
    Ok(ExitCode::SUCCESS)
}

fn is_input_error(e: &robodiary_core::memory::MemoryError) -> bool {
    use robodiary_core::memory::MemoryError;
    matches!(e, MemoryError::Validation { .. } | MemoryError::Closed)
}
