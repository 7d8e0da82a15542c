#![no_main]

use libfuzzer_sys::fuzz_target;
use mosaicreg::model::{parse_model, write_model};

// Input is cameras.txt, images.txt and points3D.txt joined by NUL bytes.
fuzz_target!(|data: &[u8]| {
    let mut parts = data.splitn(3, |&b| b == 0);
    let cameras = parts.next().unwrap_or_default();
    let images = parts.next().unwrap_or_default();
    let points = parts.next().unwrap_or_default();
    if let Ok((model, _)) = parse_model(cameras, images, points) {
        let text = write_model(&model);
        let (again, _) = parse_model(text.cameras.as_bytes(), text.images.as_bytes(), text.points.as_bytes())
            .expect("written model must parse");
        assert_eq!(again.cameras.len(), model.cameras.len());
        assert_eq!(again.images.len(), model.images.len());
        assert_eq!(again.points.len(), model.points.len());
    }
});
