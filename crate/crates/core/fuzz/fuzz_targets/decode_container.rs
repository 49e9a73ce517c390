#![no_main]

use hypergen::artifact::{decode_container, encode_container};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = decode_container(data) {
        let refs: Vec<(String, &hypergen::tensor::Tensor)> = c.tensors.iter().map(|(n, t)| (n.clone(), t)).collect();
        assert_eq!(encode_container(&c.text, &refs), data);
    }
});
