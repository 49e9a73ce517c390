#![no_main]

use hypergen::arch::{infer_task_type, parse_hint, RuleTable};
use hypergen::encoder::tokenize;
use hypergen::requirement::{normalize_sentence, Requirement, RequirementSource};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = tokenize(text);
    let rules = RuleTable::default();
    let _ = parse_hint(text, &rules);
    if let Some(s) = normalize_sentence(text) {
        assert_eq!(normalize_sentence(&s).as_deref(), Some(s.as_str()));
    }
    if let Ok(req) = Requirement::new(text, RequirementSource::Llm) {
        let _ = infer_task_type(&req, None, &rules);
    }
});
