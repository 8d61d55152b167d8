//! The bundled example walk: a session on 2022-12-12 with twelve chats, two
//! toy plays and one feeding, plus the caption and answer tables that let
//! the offline providers describe it.
//!
//! The walk is recorded through [`Recorder`] with placeholder images, so
//! regenerating it reproduces the bundled copy byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::emotion::IntentRuleSet;
use crate::memory::{parse_date, EmotionSet, MemoryError, Session};
use crate::recorder::{RecordError, Recorder};

pub const WALK_DATE: &str = "2022-12-12";
pub const WALK_PLACE: &str = "University of Tokyo";
pub const WALK_EVENT: &str = "a walk";
pub const CAPTIONS_FILE: &str = "captions.tsv";
pub const ANSWERS_FILE: &str = "vqa.tsv";
pub const CONFIG_FILE: &str = "robodiary.toml";

/// One moment of the walk with the caption of each image it produces.
#[derive(Debug, Clone, Copy)]
pub enum Step {
    Chat {
        speech: &'static str,
        caption: &'static str,
    },
    ToyPlay {
        toy: &'static str,
        probability: f64,
        speech: &'static str,
        caption: &'static str,
        chat_caption: &'static str,
    },
    Feed {
        food: &'static str,
        speech: &'static str,
        caption: &'static str,
        chat_caption: &'static str,
    },
}

pub const WALK: [Step; 12] = [
    Step::Chat {
        speech: "Hello!",
        caption: "a woman waving at the camera on a sunny path",
    },
    Step::Chat {
        speech: "It is a little cold, isn't it?",
        caption: "a paved path lined with tall trees",
    },
    Step::Chat {
        speech: "The trees are so beautiful today.",
        caption: "yellow leaves scattered on the ground under ginkgo trees",
    },
    Step::ToyPlay {
        toy: "dice",
        probability: 0.85,
        speech: "Can you get the dice?",
        caption: "a robot arm reaching toward a small toy on the grass",
        chat_caption: "a woman crouching next to a robot on the grass",
    },
    Step::Chat {
        speech: "Good job, you did it!",
        caption: "a woman clapping her hands and smiling",
    },
    Step::Chat {
        speech: "Look at that old building.",
        caption: "a cobblestone street next to a building and trees",
    },
    Step::Chat {
        speech: "I wonder what they study there.",
        caption: "a brick building with many windows",
    },
    Step::ToyPlay {
        toy: "ball",
        probability: 0.65,
        speech: "Try to pick it up!",
        caption: "a robot arm stretched out over a patch of grass",
        chat_caption: "a woman pointing at something on the ground",
    },
    Step::Chat {
        speech: "Too bad, that one was hard.",
        caption: "a woman looking down at a robot",
    },
    Step::Feed {
        food: "fish",
        speech: "Was the fish good?",
        caption: "a hand touching the head of a robot",
        chat_caption: "a woman kneeling in front of a robot",
    },
    Step::Chat {
        speech: "Let's head back now.",
        caption: "a stone gate in front of an old hall",
    },
    Step::Chat {
        speech: "Thank you for the walk!",
        caption: "a woman smiling under a cloudy sky",
    },
];

/// Answers shared by every image, keyed by question name.
const DEFAULT_ANSWERS: [(&str, &str); 6] = [
    ("attire", "a warm coat"),
    ("eye_direction", "at the robot"),
    ("expression", "a gentle smile"),
    ("action", "walking along the path"),
    ("atmosphere", "calm and quiet"),
    ("object", "the trees"),
];

/// Per-image answers, keyed by event number and question name.
const IMAGE_ANSWERS: [(u32, &str, &str); 10] = [
    (1, "action", "waving at the camera"),
    (1, "eye_direction", "at the camera"),
    (2, "object", "a long row of trees"),
    (3, "object", "yellow leaves"),
    (5, "action", "crouching on the grass"),
    (6, "expression", "a big smile"),
    (7, "object", "an old building"),
    (8, "atmosphere", "academic and still"),
    (8, "object", "many windows"),
    (14, "object", "a stone gate"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkFixture {
    pub root: PathBuf,
    /// The dated session folder.
    pub dir: PathBuf,
    pub captions: PathBuf,
    pub answers: PathBuf,
    pub config: PathBuf,
}

impl WalkFixture {
    fn at(root: &Path) -> Self {
        WalkFixture {
            root: root.to_path_buf(),
            dir: root.join(WALK_DATE),
            captions: root.join(CAPTIONS_FILE),
            answers: root.join(ANSWERS_FILE),
            config: root.join(CONFIG_FILE),
        }
    }
}

/// The copy committed with the crate.
pub fn bundled_walk() -> WalkFixture {
    WalkFixture::at(
        &Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("fixtures")
            .join("walk"),
    )
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RecordError + '_ {
    move |e| {
        RecordError::Memory(MemoryError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

/// Records the walk under `root` and writes its provider tables and config
/// file beside the session folder.
pub fn write_walk(root: &Path) -> Result<WalkFixture, RecordError> {
    let fixture = WalkFixture::at(root);
    let session = Session::create(root, parse_date(WALK_DATE)?, EmotionSet::default())?;
    let mut recorder = Recorder::new(session, Arc::new(IntentRuleSet::default()));
    let questions = &crate::describe::Templates::default().questions;

    let mut captions = String::from("# image_file\tcaption\n");
    let mut caption_row = |file: &str, caption: &str| {
        writeln!(captions, "{file}\t{caption}").expect("write to string");
    };
    let mut files = Vec::new();
    for step in WALK {
        match step {
            Step::Chat { speech, caption } => {
                let out = recorder.chat(speech, None)?;
                caption_row(&out.record.image_file, caption);
                files.push((out.record.event_number, out.record.image_file));
            }
            Step::ToyPlay {
                toy,
                probability,
                speech,
                caption,
                chat_caption,
            } => {
                let out = recorder.toy_play(toy, probability, None, Some(speech))?;
                let chat = out.chat.expect("speech given");
                caption_row(&out.record.image_file, caption);
                caption_row(&chat.image_file, chat_caption);
                files.push((out.record.event_number, out.record.image_file));
                files.push((chat.event_number, chat.image_file));
            }
            Step::Feed {
                food,
                speech,
                caption,
                chat_caption,
            } => {
                let out = recorder.feed(food, None, Some(speech))?;
                let chat = out.chat.expect("speech given");
                caption_row(&chat.image_file, chat_caption);
                caption_row(&out.record.image_file, caption);
                files.push((chat.event_number, chat.image_file));
                files.push((out.record.event_number, out.record.image_file));
            }
        }
    }
    recorder.close();

    let mut answers = String::from("# image_file\tquestion\tanswer (* applies to every image)\n");
    for (key, answer) in DEFAULT_ANSWERS {
        let question = questions.get(key).expect("known question");
        writeln!(answers, "*\t{question}\t{answer}").expect("write to string");
    }
    for (event, key, answer) in IMAGE_ANSWERS {
        let file = &files
            .iter()
            .find(|(n, _)| *n == event)
            .expect("event recorded")
            .1;
        let question = questions.get(key).expect("known question");
        writeln!(answers, "{file}\t{question}\t{answer}").expect("write to string");
    }

    let config = format!(
        "# Offline providers for the bundled walk.\n\
         root = \".\"\n\n\
         [select]\n\
         k = 5\n\
         seed = 0\n\
         captions = \"{CAPTIONS_FILE}\"\n\n\
         [describe]\n\
         answers = \"{ANSWERS_FILE}\"\n"
    );
    fs::write(&fixture.captions, captions).map_err(io(&fixture.captions))?;
    fs::write(&fixture.answers, answers).map_err(io(&fixture.answers))?;
    fs::write(&fixture.config, config).map_err(io(&fixture.config))?;
    Ok(fixture)
}
