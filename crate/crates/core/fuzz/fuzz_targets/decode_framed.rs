#![no_main]

//! Input is a container without its trailing checksum; the valid CRC is
//! appended so mutations reach the header and tensor parsers.

use hypergen::artifact::{decode_checkpoint, decode_container, decode_model};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let mut framed = data.to_vec();
    framed.extend_from_slice(&crc32fast::hash(data).to_le_bytes());
    let _ = decode_container(&framed);
    let _ = decode_model(&framed);
    let _ = decode_checkpoint(&framed);
});
