#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(mesh) = iqles::io::decode_grid(data) {
        // a decoded grid must re-encode to something that decodes the same
        let again = iqles::io::encode_grid(&mesh);
        let back = iqles::io::decode_grid(&again).expect("re-encoded grid decodes");
        assert_eq!(back.leaf_count(), mesh.leaf_count());
    }
});
