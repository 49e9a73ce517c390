#![no_main]

use std::path::Path;

use hypergen::data::{read_csv_task, CsvSchema};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = read_csv_task(data, Path::new("fuzz.csv"), "fuzz", &CsvSchema::classification_last(0)) {
        assert_eq!(ds.features.shape()[0], ds.targets.len());
        assert!(ds.features.data().iter().all(|v| v.is_finite()));
    }
});
