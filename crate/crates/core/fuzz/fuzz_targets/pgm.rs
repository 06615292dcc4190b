#![no_main]

use gsdet::io::{decode_pgm, encode_pgm};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(raster) = decode_pgm(data) {
        assert_eq!(decode_pgm(&encode_pgm(&raster)).unwrap(), raster);
    }
});
