#![no_main]

use hypergen::arch::ArchitectureSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(spec) = ArchitectureSpec::from_text(text) {
            assert_eq!(ArchitectureSpec::from_text(&spec.to_text()).unwrap(), spec);
        }
    }
});
