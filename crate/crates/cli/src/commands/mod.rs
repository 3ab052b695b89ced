pub mod analyze;
pub mod calibrate;
pub mod fit_mp;
pub mod synth;

use std::path::Path;

use rmtdiag::pipeline::{is_sample_path, read_sample, SampleFile};
use rmtdiag::weight_io::{read_bundle, WeightBundle};
use rmtdiag::Result;

/// A command input: either a bundle directory or a sample file.
pub enum Input {
    Bundle(WeightBundle),
    Sample(SampleFile),
}

pub fn load_input(path: &Path) -> Result<Input> {
    if is_sample_path(path) {
        read_sample(path).map(Input::Sample)
    } else {
        read_bundle(path).map(Input::Bundle)
    }
}
