#![no_main]

use hypergen::arch::{parse_hint, RuleTable};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(rules) = RuleTable::from_toml(text) {
            let _ = parse_hint("This is a tabular classification into 3 classes task on 4-dimensional rows.", &rules);
        }
    }
});
