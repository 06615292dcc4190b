#![no_main]

use gsdet::io::{decode_gaussian_ply, encode_gaussian_ply, PlyReadOptions};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let opts = PlyReadOptions { max_vertices: 1 << 16 };
    if let Ok(scene) = decode_gaussian_ply(data, &opts, "fuzz") {
        // Anything accepted must survive a rewrite unchanged.
        let (bytes, _) = encode_gaussian_ply(&scene);
        let again = decode_gaussian_ply(&bytes, &opts, "fuzz").unwrap();
        assert_eq!(encode_gaussian_ply(&again).0, bytes);
    }
});
