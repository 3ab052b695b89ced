//! A bundle written by hand (as an external exporter would) is read, analyzed
//! and written back unchanged.

use std::fs;

use rmtdiag::pipeline::{analyze_bundle, AnalyzeOptions};
use rmtdiag::weight_io::{read_bundle, write_bundle, Dtype};

fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

#[test]
fn handwritten_f32_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let (rows, cols) = (64usize, 96usize);
    // deterministic, full-rank-ish values without a generator
    let w: Vec<f32> = (0..rows * cols)
        .map(|i| ((i * 7919 % 1009) as f32 / 1009.0 - 0.5) * 0.25)
        .collect();
    let init: Vec<f32> = (0..rows * cols)
        .map(|i| ((i * 104_729 % 997) as f32 / 997.0 - 0.5) * 0.25)
        .collect();
    fs::write(root.join("w0.bin"), f32_bytes(&w)).unwrap();
    fs::write(root.join("w0_init.bin"), f32_bytes(&init)).unwrap();
    fs::write(root.join("head.bin"), f32_bytes(&w[..10 * rows])).unwrap();
    fs::write(
        root.join("manifest.json"),
        format!(
            r#"{{
  "model_id": "mlp-eta0.25-seed3",
  "metadata": {{"noise_fraction": "0.25", "test_accuracy": "0.8125", "seed": "3"}},
  "layers": [
    {{"name": "head", "rows": 10, "cols": {rows}, "depth_index": 1, "dtype": "f32", "file": "head.bin"}},
    {{"name": "fc1", "rows": {rows}, "cols": {cols}, "depth_index": 0, "dtype": "f32",
      "file": "w0.bin", "init_file": "w0_init.bin"}}
  ]
}}"#
        ),
    )
    .unwrap();

    let bundle = read_bundle(root).unwrap();
    assert_eq!(bundle.model_id(), "mlp-eta0.25-seed3");
    assert_eq!(bundle.metadata_f64("test_accuracy").unwrap(), Some(0.8125));
    let names: Vec<&str> = bundle.layers().iter().map(|l| l.name()).collect();
    assert_eq!(names, ["fc1", "head"]);
    let fc1 = bundle.layer("fc1").unwrap();
    assert_eq!(fc1.dtype(), Dtype::F32);
    assert_eq!(fc1.values()[5], w[5] as f64);
    assert_eq!(fc1.init_values().unwrap()[7], init[7] as f64);

    let report = analyze_bundle(&bundle, &AnalyzeOptions::default()).unwrap();
    assert_eq!(report.bottleneck.layer_name, "fc1");
    assert_eq!(report.layers.len(), 2);
    assert_eq!(report.hill_sweep.points.len(), 6);

    let out = root.join("copy");
    write_bundle(&bundle, &out).unwrap();
    let again = read_bundle(&out).unwrap();
    assert_eq!(again.layers(), bundle.layers());
    assert_eq!(again.metadata(), bundle.metadata());
}
