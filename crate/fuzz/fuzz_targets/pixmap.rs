#![no_main]

use libfuzzer_sys::fuzz_target;
use mosaicreg::pixmap::{load_pixmap, save_pixmap};

fuzz_target!(|data: &[u8]| {
    if let Ok(raster) = load_pixmap(data) {
        let again = load_pixmap(&save_pixmap(&raster)).expect("encoded pixmap must decode");
        assert_eq!(again, raster);
    }
});
