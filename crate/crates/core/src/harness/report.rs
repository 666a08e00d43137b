use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::evaluate::{EvalReport, RowKind};
use super::HarnessError;
use crate::metrics::TripleSummary;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `# recondet <version> inputs=name:sha256,...`
pub fn comment_line(inputs: &[(&str, &str)]) -> String {
    let list: Vec<String> = inputs.iter().map(|(n, h)| format!("{n}:{h}")).collect();
    format!("# recondet {} inputs={}\n", env!("CARGO_PKG_VERSION"), list.join(","))
}

/// One Table 2 row. SSIM and detection metrics are percentages; empty cells
/// mark metrics that do not apply (the fully sampled row) or are undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub model: String,
    pub kind: String,
    pub nrmse_mean: Option<f64>,
    pub nrmse_std: Option<f64>,
    pub psnr_mean: Option<f64>,
    pub psnr_std: Option<f64>,
    pub ssim_mean: Option<f64>,
    pub ssim_std: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub map: Option<f64>,
    pub f1: Option<f64>,
    pub box_nrmse_mean: Option<f64>,
    pub box_nrmse_std: Option<f64>,
    pub box_psnr_mean: Option<f64>,
    pub box_psnr_std: Option<f64>,
    pub box_ssim_mean: Option<f64>,
    pub box_ssim_std: Option<f64>,
    #[serde(default)]
    pub skipped_boxes: Option<usize>,
    #[serde(default)]
    pub tp: Option<usize>,
    #[serde(default)]
    pub fp: Option<usize>,
    #[serde(default, rename = "fn")]
    pub fn_: Option<usize>,
    #[serde(default)]
    pub provenance: Option<String>,
}

type Cells = (Option<f64>, Option<f64>, Option<f64>, Option<f64>, Option<f64>, Option<f64>);

fn triple_cells(t: Option<&TripleSummary>) -> Cells {
    match t {
        None => (None, None, None, None, None, None),
        Some(t) => (
            Some(t.nrmse.mean),
            Some(t.nrmse.std),
            Some(t.psnr.mean),
            Some(t.psnr.std),
            Some(100.0 * t.ssim.mean),
            Some(100.0 * t.ssim.std),
        ),
    }
}

impl Table2Row {
    pub fn from_report(r: &EvalReport) -> Self {
        let image = triple_cells(r.recon.as_ref().map(|m| &m.image));
        let boxes = triple_cells(r.recon.as_ref().and_then(|m| m.boxes.as_ref()));
        let d = &r.detection;
        let pct = |v: f64, undefined: bool| (!undefined).then_some(100.0 * v);
        Self {
            model: r.model_name.clone(),
            kind: r.kind.as_str().to_string(),
            nrmse_mean: image.0,
            nrmse_std: image.1,
            psnr_mean: image.2,
            psnr_std: image.3,
            ssim_mean: image.4,
            ssim_std: image.5,
            precision: pct(d.precision, d.flags.precision_undefined),
            recall: pct(d.recall, d.flags.recall_undefined),
            map: Some(100.0 * d.map),
            f1: pct(d.f1, d.flags.f1_undefined),
            box_nrmse_mean: boxes.0,
            box_nrmse_std: boxes.1,
            box_psnr_mean: boxes.2,
            box_psnr_std: boxes.3,
            box_ssim_mean: boxes.4,
            box_ssim_std: boxes.5,
            skipped_boxes: r.recon.as_ref().map(|m| m.skipped_boxes),
            tp: Some(r.counts.tp),
            fp: Some(r.counts.fp),
            fn_: Some(r.counts.fn_),
            provenance: Some(r.provenance.clone()),
        }
    }

    pub fn row_kind(&self) -> Result<RowKind, HarnessError> {
        self.kind.parse().map_err(HarnessError::Invalid)
    }
}

/// Comment line listing each row's provenance, then the rows.
pub fn write_table2_csv(reports: &[EvalReport]) -> Result<String, HarnessError> {
    let inputs: Vec<(&str, &str)> = reports.iter().map(|r| (r.model_name.as_str(), r.provenance.as_str())).collect();
    let mut out = comment_line(&inputs);
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(Table2Row::from_report(r))?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Csv(e.to_string()))?;
    out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
    Ok(out)
}

pub fn read_table2_csv(text: &str) -> Result<Vec<Table2Row>, HarnessError> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}
