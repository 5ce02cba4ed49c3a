#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(p) = iqles::io::decode_plan(data) {
        assert!(p.flagged.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(iqles::io::encode_plan(&p), data);
    }
});
