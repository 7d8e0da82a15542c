#![no_main]

use libfuzzer_sys::fuzz_target;
use mosaicreg::mosaic::{load_patch, save_patch};

// Input is the sidecar JSON, a NUL byte, then the pixmap.
fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|&b| b == 0) else {
        return;
    };
    let (sidecar, pixmap) = (&data[..split], &data[split + 1..]);
    if let Ok(patch) = load_patch(pixmap, sidecar) {
        let (pgm, json) = save_patch(&patch).expect("loaded patch must encode");
        let again = load_patch(&pgm, json.as_bytes()).expect("encoded patch must decode");
        assert_eq!(again.mask(), patch.mask());
        assert_eq!((again.width(), again.height()), (patch.width(), patch.height()));
    }
});
