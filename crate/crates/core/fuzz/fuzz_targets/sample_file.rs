#![no_main]

use libfuzzer_sys::fuzz_target;
use rmtdiag::pipeline::SampleFile;

fuzz_target!(|data: &[u8]| {
    if let Ok(sample) = SampleFile::from_json(data) {
        let _ = sample.spectrum();
    }
});
