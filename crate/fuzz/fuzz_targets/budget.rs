#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(b) = iqles::io::decode_budget(data) {
        assert_eq!(iqles::io::encode_budget(&b), data);
    }
});
