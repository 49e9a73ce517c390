mod common;

use std::path::Path;

use common::{template_grid, template_round_trip};
use hypergen::arch::{infer_task_type, RuleTable, TaskKind};
use hypergen::data::{load_csv_task, sample_rows, CsvSchema, LabelColumn};
use hypergen::requirement::{
    build_prompt, fallback_template, Modality, PromptTemplate, Requirement, RequirementSource, UserInput,
    DEFAULT_MAX_ROWS,
};
use hypergen::Error;

fn data(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn template_file(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("templates").join(name)).unwrap()
}

#[test]
fn template_grid_round_trips() {
    let grid = template_grid();
    assert_eq!(grid.len(), 40);
    let failures: Vec<String> = grid.iter().filter_map(|m| template_round_trip(m).err()).collect();
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn csv_metadata_feeds_the_template() {
    let ds = load_csv_task(&data("wine.csv"), &CsvSchema::classification_last(1)).unwrap();
    let req = fallback_template(&ds.meta()).unwrap();
    let t = infer_task_type(&req, Some(&ds.meta()), &RuleTable::default()).unwrap();
    assert_eq!(t, ds.task);
}

#[test]
fn llm_sentences_without_counts_use_metadata() {
    let ds = load_csv_task(&data("iris.csv"), &CsvSchema::classification_last(1)).unwrap();
    let req = Requirement::new(
        "This is a tabular classification task on measurements of iris flowers.",
        RequirementSource::Llm,
    )
    .unwrap();
    let rules = RuleTable::default();
    assert_eq!(infer_task_type(&req, Some(&ds.meta()), &rules).unwrap(), ds.task);
    assert!(matches!(infer_task_type(&req, None, &rules), Err(Error::Input(_))));

    let wrong = Requirement::new("A tabular regression task on iris flowers.", RequirementSource::Llm).unwrap();
    assert!(matches!(
        infer_task_type(&wrong, Some(&ds.meta()), &rules),
        Err(Error::Consistency(_))
    ));
    let vague = Requirement::new("Some data about flowers.", RequirementSource::Llm).unwrap();
    assert!(matches!(
        infer_task_type(&vague, Some(&ds.meta()), &rules),
        Err(Error::UnrecognizedRequirement(_))
    ));
}

#[test]
fn custom_rule_table_from_toml() {
    let rules = RuleTable::from_toml(
        "classification = [\"categorize\"]\nregression = [\"estimate\"]\n[class_words]\nquaternary = 4\n",
    )
    .unwrap();
    let req = Requirement::new("Categorize quaternary signals from 6 features.", RequirementSource::Template).unwrap();
    let t = infer_task_type(&req, None, &rules).unwrap();
    assert_eq!((t.kind(), t.n_classes(), t.n_inputs()), (TaskKind::Classification, Some(4), 6));
    assert!(RuleTable::from_toml("[class_words]\nunary = 1\nclassification = [\"x\"]").is_err());
}

#[test]
fn prompt_carries_both_rules_verbatim() {
    let file = template_file("tabular.txt");
    let type_rule = file.lines().find(|l| l.contains("type of the task")).unwrap();
    let data_rule = file.lines().find(|l| l.contains("data-specific")).unwrap();

    let rows = sample_rows(&data("iris.csv"), &LabelColumn::Last, 20).unwrap();
    assert_eq!(rows.len(), 20);
    let input = UserInput {
        description: Some("Measurements of three iris species.".into()),
        data_sample: rows,
        modality: Modality::Tabular,
    };
    let prompt = build_prompt(&input, &PromptTemplate::builtin(Modality::Tabular), DEFAULT_MAX_ROWS).unwrap();
    let p = prompt.as_str();
    assert!(p.contains(type_rule) && p.contains(data_rule));
    assert!(p.contains("User Description: Measurements of three iris species."));
    assert_eq!(p.matches(" -> ").count(), 3 + DEFAULT_MAX_ROWS, "example rows plus capped user rows");
    assert!(!p.contains("{USER_DATA}") && !p.contains("{USER_DESCRIPTION}"));
}

#[test]
fn text_template_and_missing_slots() {
    let file = template_file("text.txt");
    let input = UserInput {
        description: Some("Short product reviews.".into()),
        data_sample: vec![],
        modality: Modality::Text,
    };
    let p = build_prompt(&input, &PromptTemplate::builtin(Modality::Text), DEFAULT_MAX_ROWS).unwrap();
    assert!(p.as_str().contains(file.lines().find(|l| l.contains("type of the task")).unwrap()));
    assert!(!p.as_str().contains("User Data:{"));
    assert!(PromptTemplate::parse("no slots here").is_err());
    let empty = UserInput {
        description: None,
        data_sample: vec![],
        modality: Modality::Text,
    };
    assert!(build_prompt(&empty, &PromptTemplate::builtin(Modality::Text), 8).is_err());
}
