#![no_main]

use libfuzzer_sys::fuzz_target;
use rmtdiag::weight_io::{decode_values, encode_values, Dtype};

fuzz_target!(|data: &[u8]| {
    let Some((&head, payload)) = data.split_first() else {
        return;
    };
    let dtype = if head & 1 == 0 { Dtype::F32 } else { Dtype::F64 };
    let elems = payload.len() / dtype.size();
    // pick a shape from the header byte; wrong sizes must be rejected, not panic
    let rows = 1 + (head >> 1) as usize % 8;
    let cols = if elems % rows == 0 { elems / rows } else { elems };
    if let Ok(values) = decode_values(payload, dtype, rows, cols, "fuzz", "fuzz.bin") {
        assert!(values.iter().all(|v| v.is_finite()));
        let back = encode_values(&values, dtype);
        assert_eq!(back, payload);
    }
});
