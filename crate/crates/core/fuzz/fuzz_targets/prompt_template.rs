#![no_main]

use hypergen::requirement::{build_prompt, Modality, PromptTemplate, SampleRow, UserInput};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(t) = PromptTemplate::parse(text) {
        let input = UserInput {
            description: Some("desc".into()),
            data_sample: vec![SampleRow {
                features: "a: 1".into(),
                label: "x".into(),
            }],
            modality: Modality::Tabular,
        };
        let _ = build_prompt(&input, &t, 8);
    }
});
