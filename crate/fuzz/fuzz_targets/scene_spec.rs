#![no_main]

use libfuzzer_sys::fuzz_target;
use mosaicreg::synth::SceneSpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(spec) = SceneSpec::from_json(data) {
        let _ = spec.validate();
    }
});
