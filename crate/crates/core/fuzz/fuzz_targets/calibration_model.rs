#![no_main]

use libfuzzer_sys::fuzz_target;
use rmtdiag::calib::{detect_noise, CalibrationModel};

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = CalibrationModel::from_json(data) {
        // a model that loads must answer for any α
        for alpha in [0.0, 1.5, 4.0, 1e9] {
            let _ = detect_noise(&model, alpha);
        }
        let _ = CalibrationModel::from_json(model.to_json().as_bytes()).expect("re-parses");
    }
});
