#![no_main]

use libfuzzer_sys::fuzz_target;
use twolocal::format::{parse_matrix, parse_matrix_bytes, to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(m) = parse_matrix_bytes(data) else { return };
    let again = parse_matrix(&to_json(&m)).expect("serialized matrices parse");
    assert_eq!(again, m);
});
