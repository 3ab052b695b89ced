use std::collections::BTreeMap;
use std::fs;

use rmtdiag::pipeline::{SampleFile, SampleKind};
use rmtdiag::rmt::{
    bbp_threshold, gen_iid_gaussian, gen_pareto_sample, gen_poisson_levels, gen_spiked, SpikeSpec,
};
use rmtdiag::weight_io::{write_bundle, LayerMatrix, WeightBundle};
use rmtdiag::{Error, Result};

use crate::report::ReportDocument;
use crate::{Output, SynthKind};

// The init draw of a Gaussian fixture uses a stream separate from its weights.
const INIT_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn run(kind: &SynthKind, seed: u64) -> Result<Output> {
    let mut report = ReportDocument::new("synth");
    let (out, what) = match kind {
        SynthKind::Gaussian { dims, out } => {
            let w = gen_iid_gaussian(dims.m, dims.n, dims.sigma2, seed)?;
            let init = gen_iid_gaussian(dims.m, dims.n, dims.sigma2, seed ^ INIT_STREAM)?;
            let layer = w.with_init(init.values().to_vec())?;
            let mut meta = base_meta("gaussian", seed);
            meta.insert("m".into(), dims.m.to_string());
            meta.insert("n".into(), dims.n.to_string());
            meta.insert("sigma2".into(), dims.sigma2.to_string());
            let id = format!("gaussian-{}x{}-seed{seed}", dims.m, dims.n);
            write_single(&id, layer, meta, out, &mut report)?;
            (out, "bundle")
        }
        SynthKind::Spiked {
            dims,
            theta_mult,
            spikes,
            out,
        } => {
            let gamma = dims.n as f64 / dims.m as f64;
            let theta = theta_mult * bbp_threshold(dims.sigma2, gamma)?;
            let spec = [SpikeSpec {
                strength: theta,
                multiplicity: *spikes,
            }];
            let layer = gen_spiked(dims.m, dims.n, dims.sigma2, &spec, seed)?;
            let mut meta = base_meta("spiked", seed);
            meta.insert("m".into(), dims.m.to_string());
            meta.insert("n".into(), dims.n.to_string());
            meta.insert("sigma2".into(), dims.sigma2.to_string());
            meta.insert("theta".into(), theta.to_string());
            meta.insert("spikes".into(), spikes.to_string());
            let id = format!("spiked-{}x{}-seed{seed}", dims.m, dims.n);
            write_single(&id, layer, meta, out, &mut report)?;
            (out, "bundle")
        }
        SynthKind::Pareto {
            alpha,
            count,
            x_min,
            out,
        } => {
            let sample = SampleFile {
                kind: SampleKind::Pareto,
                seed,
                alpha: Some(*alpha),
                values: gen_pareto_sample(*count, *alpha, *x_min, seed)?,
            };
            write_sample(&sample, out)?;
            (out, "sample")
        }
        SynthKind::PoissonGaps { count, out } => {
            if *count == 0 {
                return Err(Error::InvalidInput("count must be positive".into()));
            }
            let sample = SampleFile {
                kind: SampleKind::PoissonGaps,
                seed,
                alpha: None,
                values: gen_poisson_levels(*count, seed),
            };
            write_sample(&sample, out)?;
            (out, "sample")
        }
    };
    report.output_path = Some(out.display().to_string());
    let text = format!("wrote {what} to {}\n", out.display());
    Ok(Output { report, text })
}

fn base_meta(kind: &str, seed: u64) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("generator".to_owned(), kind.to_owned()),
        ("seed".to_owned(), seed.to_string()),
    ])
}

fn write_single(
    id: &str,
    layer: LayerMatrix,
    meta: BTreeMap<String, String>,
    out: &std::path::Path,
    report: &mut ReportDocument,
) -> Result<()> {
    let bundle = WeightBundle::new(id, vec![layer], meta)?;
    write_bundle(&bundle, out)?;
    report.bundle_ids.push(id.to_owned());
    Ok(())
}

fn write_sample(sample: &SampleFile, out: &std::path::Path) -> Result<()> {
    fs::write(out, sample.to_json()).map_err(|source| Error::Io {
        path: out.to_owned(),
        source,
    })
}
