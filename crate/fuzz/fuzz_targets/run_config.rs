#![no_main]

use libfuzzer_sys::fuzz_target;
use mosaicreg::pipeline::RunConfig;
use std::path::Path;

fuzz_target!(|data: &[u8]| {
    let _ = RunConfig::from_json(data, &[], Path::new("/fuzz"));
});
