#![no_main]

use libfuzzer_sys::fuzz_target;
use rmtdiag::weight_io::{decode_bundle, encode_bundle};
use rmtdiag::Error;

// Input layout: manifest bytes, a NUL separator, then one payload served for
// every file name the manifest asks for.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let (manifest, rest) = data.split_at(split);
    let payload = rest.get(1..).unwrap_or_default();
    let fetched = decode_bundle(manifest, |name| {
        if name.len() > 64 {
            return Err(Error::InvalidInput("long name".into()));
        }
        Ok(payload.to_vec())
    });
    if let Ok(bundle) = fetched {
        encode_bundle(&bundle).expect("a decoded bundle re-encodes");
    }
});
