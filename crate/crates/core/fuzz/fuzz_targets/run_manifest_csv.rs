#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use rmtdiag::runs::{parse_run_manifest, write_run_manifest};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(entries) = parse_run_manifest(text, Path::new("")) {
        let _ = write_run_manifest(&entries);
    }
});
