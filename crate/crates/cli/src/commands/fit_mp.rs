use std::path::Path;

use rmtdiag::bottleneck::{override_bottleneck, select_bottleneck};
use rmtdiag::eigen::gram_spectrum;
use rmtdiag::rmt::fit_mp_sigma;
use rmtdiag::Result;

use super::{load_input, Input};
use crate::report::{MpFitReport, ReportDocument};
use crate::Output;

pub fn run(path: &Path, layer: Option<&str>, min_resolution: usize) -> Result<Output> {
    let mut report = ReportDocument::new("fit-mp");
    let (name, spectrum) = match load_input(path)? {
        Input::Bundle(bundle) => {
            let verdict = match layer {
                Some(l) => override_bottleneck(&bundle, l, min_resolution)?,
                None => select_bottleneck(&bundle, min_resolution)?,
            };
            let l = bundle.layer(&verdict.layer_name).expect("verdict names a bundle layer");
            report.bundle_ids.push(bundle.model_id().to_owned());
            let spectrum = gram_spectrum(l, false)?;
            report.bottleneck = Some(verdict);
            (Some(l.name().to_owned()), spectrum)
        }
        Input::Sample(sample) => (None, sample.spectrum()?),
    };
    let fit = fit_mp_sigma(&spectrum)?;
    let p = fit.params;
    let text = format!(
        "{}sigma² {:.6}  gamma {:.4}  edges [{:.6}, {:.6}]  KS {:.4}  ({} positive eigenvalues)\n",
        name.as_deref().map(|n| format!("layer {n}: ")).unwrap_or_default(),
        p.sigma_sq(),
        p.gamma(),
        p.lambda_minus(),
        p.lambda_plus(),
        fit.ks,
        spectrum.positive_count()
    );
    report.mp_fit = Some(MpFitReport {
        layer: name,
        sigma_sq: p.sigma_sq(),
        gamma: p.gamma(),
        lambda_minus: p.lambda_minus(),
        lambda_plus: p.lambda_plus(),
        ks: fit.ks,
        positive_count: spectrum.positive_count(),
    });
    Ok(Output { report, text })
}
