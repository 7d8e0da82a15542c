#![no_main]

use libfuzzer_sys::fuzz_target;
use mosaicreg::mosaic::parse_roi_config;

fuzz_target!(|data: &[u8]| {
    let _ = parse_roi_config(data);
});
