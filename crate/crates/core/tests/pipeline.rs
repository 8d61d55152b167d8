use robodiary_core::config::Config;
use robodiary_core::fixture::{write_walk, WalkFixture, WALK_EVENT, WALK_PLACE};
use robodiary_core::memory::{ActionKind, EmotionSet, StoredFolder, DEFAULT_EMOTIONS};
use robodiary_core::providers::Providers;
use robodiary_core::select::select_scenes;
use robodiary_core::summarize::{
    generate_control_diary, generate_diary, render_prompt, save_diary, DiaryConfig, DiaryMode,
    PremiseInputs, DESCRIPTION_LABEL, DIRECTION_LABEL, PREMISE_LABEL,
};

struct Walk {
    _tmp: tempfile::TempDir,
    fixture: WalkFixture,
    stored: StoredFolder,
    providers: Providers,
    config: DiaryConfig,
}

fn walk() -> Walk {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = write_walk(tmp.path()).unwrap();
    let config = Config::from_file(&fixture.config).unwrap();
    let stored = StoredFolder::load(&fixture.dir, &EmotionSet::default()).unwrap();
    Walk {
        providers: config.providers().unwrap(),
        config: config.diary_config().unwrap(),
        stored,
        fixture,
        _tmp: tmp,
    }
}

fn inputs() -> PremiseInputs {
    PremiseInputs::new(WALK_PLACE, "", WALK_EVENT)
}

fn objects(stored: &StoredFolder) -> Vec<String> {
    stored
        .folder
        .additional_records()
        .map(|r| r.object_name.clone().unwrap())
        .collect()
}

#[test]
fn selection_covers_additional_actions_in_order() {
    let w = walk();
    let selection = select_scenes(
        &w.stored,
        w.providers.captioner.as_ref(),
        w.providers.embedder.as_ref(),
        w.config.k,
        w.config.seed,
    )
    .unwrap();
    let numbers = selection.images.event_numbers();
    assert_eq!(numbers.len(), 8);
    assert!(numbers.windows(2).all(|p| p[0] < p[1]));
    for record in w.stored.folder.additional_records() {
        assert!(numbers.contains(&record.event_number));
    }
    assert_eq!(selection.captions.len(), 15);
}

#[test]
fn interaction_diary_mentions_every_interaction() {
    let w = walk();
    let diary = generate_diary(&w.stored, &inputs(), &w.providers, &w.config).unwrap();
    assert_eq!(diary.mode, DiaryMode::WithInteraction);
    for object in objects(&w.stored) {
        assert!(
            diary.text.contains(&object),
            "{object} missing from {}",
            diary.text
        );
    }
    assert!(diary.text.contains("Was the fish good?"));
    assert!(diary.text.contains("yummy"));
    assert!(DEFAULT_EMOTIONS.iter().any(|e| diary.text.contains(e)));
    assert!(diary.text.contains("December 12, 2022"));
    assert_eq!(diary.prompt.premise.person, "Aiko");
}

#[test]
fn control_diary_has_no_interactions() {
    let w = walk();
    let diary = generate_control_diary(&w.stored, &inputs(), &w.providers, &w.config, 7).unwrap();
    assert_eq!(diary.mode, DiaryMode::WithoutInteraction);
    assert_eq!(diary.source_images.len(), 5);
    for object in objects(&w.stored) {
        assert!(
            !diary.text.contains(&object),
            "{object} leaked into {}",
            diary.text
        );
    }
    for record in &w.stored.folder.records {
        assert!(!diary.text.contains(&record.human_speech));
    }
    assert!(!diary.text.contains("succeeded"));
    for file in &diary.source_images {
        let record = w.stored.folder.record_for_image(file).unwrap();
        assert_eq!(record.action, ActionKind::Chat);
    }
    let again = generate_control_diary(&w.stored, &inputs(), &w.providers, &w.config, 7).unwrap();
    assert_eq!(again.source_images, diary.source_images);
}

#[test]
fn control_captions_follow_event_order() {
    let w = walk();
    let diary = generate_control_diary(&w.stored, &inputs(), &w.providers, &w.config, 3).unwrap();
    let numbers: Vec<u32> = diary
        .source_images
        .iter()
        .map(|f| w.stored.folder.record_for_image(f).unwrap().event_number)
        .collect();
    assert!(numbers.windows(2).all(|p| p[0] < p[1]));
    let table = robodiary_core::providers::load_caption_table(&w.fixture.captions).unwrap();
    let mut last = 0;
    for file in &diary.source_images {
        // sentences start with a capital, so match past the first letter
        let caption = &table[file];
        let at = diary.prompt.description.find(&caption[1..]).unwrap();
        assert!(at >= last);
        last = at;
    }
}

#[test]
fn end_to_end_runs_are_identical() {
    let a = walk();
    let b = walk();
    let first = generate_diary(&a.stored, &inputs(), &a.providers, &a.config).unwrap();
    let second = generate_diary(&b.stored, &inputs(), &b.providers, &b.config).unwrap();
    assert_eq!(first.text, second.text);
    assert_eq!(first.source_images, second.source_images);
}

#[test]
fn diary_prompt_re_renders() {
    let w = walk();
    for diary in [
        generate_diary(&w.stored, &inputs(), &w.providers, &w.config).unwrap(),
        generate_control_diary(&w.stored, &inputs(), &w.providers, &w.config, 0).unwrap(),
    ] {
        let rendered = render_prompt(&diary.prompt, false).unwrap();
        assert_eq!(diary.rendered_prompt(), rendered);
        let p = rendered.find(PREMISE_LABEL).unwrap();
        let d = rendered.find(DESCRIPTION_LABEL).unwrap();
        let r = rendered.find(DIRECTION_LABEL).unwrap();
        assert!(p < d && d < r);
    }
}

#[test]
fn saved_diary_sits_beside_the_session() {
    let w = walk();
    let diary = generate_diary(&w.stored, &inputs(), &w.providers, &w.config).unwrap();
    let path = save_diary(&diary, &w.stored.dir).unwrap();
    assert_eq!(path.parent().unwrap(), w.fixture.root);
    let name = path.file_name().unwrap().to_str().unwrap();
    assert!(name.starts_with("diary_with_interaction_") && name.ends_with(".json"));
    let back: robodiary_core::summarize::Diary =
        serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(back, diary);
}

#[test]
fn generation_failure_keeps_the_prompt() {
    use robodiary_core::providers::{ProviderError, ProviderResult, TextGenerator};
    use robodiary_core::PipelineError;

    struct Down;
    impl TextGenerator for Down {
        fn name(&self) -> &str {
            "down"
        }
        fn generate(&self, _: &str) -> ProviderResult<String> {
            Err(ProviderError::Unavailable("connection refused".into()))
        }
    }

    let w = walk();
    let providers = Providers {
        generator: std::sync::Arc::new(Down),
        ..w.providers.clone()
    };
    match generate_diary(&w.stored, &inputs(), &providers, &w.config) {
        Err(PipelineError::Generation { prompt, .. }) => assert!(prompt.starts_with(PREMISE_LABEL)),
        other => panic!("expected a generation error, got {other:?}"),
    }
}

#[test]
fn folder_without_interactions_has_no_interaction_phrasing() {
    let tmp = tempfile::tempdir().unwrap();
    let mut session = robodiary_core::memory::Session::create(
        tmp.path(),
        robodiary_core::memory::parse_date("2023-01-05").unwrap(),
        EmotionSet::default(),
    )
    .unwrap();
    for (i, speech) in ["Hello!", "Nice weather.", "Let's go home."]
        .iter()
        .enumerate()
    {
        session
            .record_chat(speech, "🙂", "neutral", format!("frame {i}").as_bytes())
            .unwrap();
    }
    let stored = StoredFolder::load(session.dir(), &EmotionSet::default()).unwrap();
    let providers = Providers::offline("Aiko");
    let diary = generate_diary(&stored, &inputs(), &providers, &DiaryConfig::default()).unwrap();
    assert!(!diary.text.contains("succeeded"));
    assert!(!diary.text.contains("yummy"));
    assert!(!diary.text.contains("fed me"));
    assert_eq!(diary.source_images.len(), 3);
}
