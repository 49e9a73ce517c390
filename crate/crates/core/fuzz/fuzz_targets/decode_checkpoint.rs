#![no_main]

use hypergen::artifact::{decode_checkpoint, encode_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = decode_checkpoint(data) {
        let again = decode_checkpoint(&encode_checkpoint(&c)).unwrap();
        assert!(again.hypernet.same_weights(&c.hypernet));
    }
});
