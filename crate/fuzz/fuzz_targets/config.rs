#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = iqles::config::RunConfig::from_toml(text) {
            iqles::config::RunConfig::from_toml(&cfg.echo()).expect("echo parses");
        }
    }
});
