#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = iqles::io::decode_stats(data) {
        assert_eq!(iqles::io::encode_stats(&s), data);
    }
});
