#![no_main]

use gsdet::sampling::{decode_detector_input, encode_detector_input, parse_detector_header};
use libfuzzer_sys::fuzz_target;

// Input: header JSON, a NUL byte, then the binary payload.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let Ok(text) = std::str::from_utf8(&data[..split]) else { return };
    let Ok(header) = parse_detector_header(text) else { return };
    let payload = data.get(split + 1..).unwrap_or(&[]);
    if let Ok(m) = decode_detector_input(&header, payload) {
        if let Ok((bin, _)) = encode_detector_input(&m) {
            assert_eq!(bin, payload);
        }
    }
});
