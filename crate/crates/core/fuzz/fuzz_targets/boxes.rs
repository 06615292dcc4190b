#![no_main]

use gsdet::io::{boxes_to_json, parse_boxes};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let palette = gsdet::synth::default_palette();
    if let Ok(set) = parse_boxes(text, &palette) {
        let again = parse_boxes(&boxes_to_json(&set, &palette), &palette).unwrap();
        assert_eq!(again.box_count(), set.box_count());
    }
});
