//! Preprocessing, two-stage inference, evaluation and σ sweeps.
//!
//! Inference runs
//!
//! ```text
//! gray = luma(I)           C_gt = canny(gray)
//! C_pred = G1(gray ⊙ (1−M), C_gt ⊙ (1−M), M)
//! C_comp = C_gt ⊙ (1−M) + [C_pred ≥ 0.5] ⊙ M
//! I_pred = G2(I ⊙ (1−M), C_comp)
//! I_comp = I ⊙ (1−M) + I_pred ⊙ M
//! ```

mod config;
mod io;
mod preprocess;

pub use config::{MaskSource, PipelineConfig, Preprocess, CONFIG_KEYS, DEFAULT_MASK_RATIO};
pub use io::{load_image, save_edges, save_image};
pub use preprocess::{crop, preprocess_celeba, preprocess_psv, psv_offsets, CELEBA_CROP, PSV_CROP, TARGET_SIZE};

use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::edge::{canny, composite_edges, composite_image, to_grayscale, CannyParams, EdgeMap, Maskable};
use crate::error::{Error, Result};
use crate::mask::{coverage_class, load_mask, square_mask, CoverageBucket, Mask, Placement};
use crate::metrics::{
    aggregate, edge_precision_recall_with_tolerance, fit_gaussian, frechet_distance, psnr, relative_l1, ssim,
    BucketAggregate, FeatureExtractor, MetricRecord, MetricsReport, SurrogateExtractor,
};
use crate::networks::{build_generator, load_weights, GeneratorKind, NetworkInstance};
use crate::tensor::Tensor;

/// Threshold applied to the edge generator's probabilities before compositing.
pub const EDGE_THRESHOLD: f32 = 0.5;

/// An independent seed for work item `index`, derived from the root seed.
pub fn item_seed(root: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(index);
    rng.next_u64()
}

/// The two generators used at inference time.
#[derive(Debug, Clone)]
pub struct Models {
    pub g1: NetworkInstance,
    pub g2: NetworkInstance,
}

impl Models {
    /// Freshly initialised generators.
    pub fn random(seed: u64) -> Self {
        Models {
            g1: build_generator(GeneratorKind::Edge, item_seed(seed, 0)),
            g2: build_generator(GeneratorKind::Inpaint, item_seed(seed, 1)),
        }
    }

    /// Loads the configured archives. A missing path falls back to random
    /// weights with a warning.
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self> {
        let mut models = Models::random(cfg.seed);
        for (net, path, name) in [
            (&mut models.g1, &cfg.g1_weights, "g1_weights"),
            (&mut models.g2, &cfg.g2_weights, "g2_weights"),
        ] {
            match path {
                Some(p) => load_weights(net, p)?,
                None => warn!("{name} not set; using randomly initialised {} weights", net.kind()),
            }
        }
        Ok(models)
    }
}

/// Every intermediate of one inference.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceOutput {
    pub c_gt: EdgeMap,
    /// Raw edge probabilities.
    pub c_pred: EdgeMap,
    pub c_comp: EdgeMap,
    pub i_pred: Tensor,
    pub i_comp: Tensor,
}

impl InferenceOutput {
    /// Writes `<stem>_{c_gt,c_pred,c_comp,i_pred,i_comp}.png` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = |name: &str| dir.join(format!("{stem}_{name}.png"));
        let written = vec![path("c_gt"), path("c_pred"), path("c_comp"), path("i_pred"), path("i_comp")];
        save_edges(&self.c_gt, &written[0])?;
        save_edges(&self.c_pred, &written[1])?;
        save_edges(&self.c_comp, &written[2])?;
        save_image(&self.i_pred, &written[3])?;
        save_image(&self.i_comp, &written[4])?;
        Ok(written)
    }
}

/// Runs both stages on one `1×3×H×W` image in `[0, 1]`.
pub fn run_inference(models: &Models, params: &CannyParams, image: &Tensor, mask: &Mask) -> Result<InferenceOutput> {
    if image.n() != 1 {
        return Err(Error::dim("batch", 1, image.n()));
    }
    let gray = to_grayscale(image)?;
    let c_gt = canny(&gray, params)?;
    let m = mask.to_tensor();
    let g1_in = Tensor::concat_channels(&[&gray.mask_out(mask)?, &c_gt.mask_out(mask)?.to_tensor(), &m])?;
    let c_pred = EdgeMap::from_tensor(&models.g1.forward(&g1_in)?)?;
    let c_comp = composite_edges(&c_gt, &c_pred.binarize(EDGE_THRESHOLD), mask)?;
    let g2_in = Tensor::concat_channels(&[&image.mask_out(mask)?, &c_comp.to_tensor()])?;
    let i_pred = models.g2.forward(&g2_in)?;
    let i_comp = composite_image(image, &i_pred, mask)?;
    Ok(InferenceOutput {
        c_gt,
        c_pred,
        c_comp,
        i_pred,
        i_comp,
    })
}

/// A named image ready for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageItem {
    pub id: String,
    pub image: Tensor,
}

/// PNG files directly inside `dir`, sorted by name.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if path.is_file() && is_png {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Decodes and preprocesses `paths`. Inputs that cannot be decoded or
/// preprocessed are skipped with a warning; the second value counts them.
pub fn load_items(paths: &[PathBuf], preprocess: Preprocess) -> (Vec<ImageItem>, usize) {
    let mut items = Vec::new();
    let mut skipped = 0;
    for path in paths {
        let id = stem(path);
        let loaded = load_image(path).and_then(|img| match preprocess {
            Preprocess::None => Ok(vec![ImageItem { id: id.clone(), image: img }]),
            Preprocess::Celeba => Ok(vec![ImageItem {
                id: id.clone(),
                image: preprocess_celeba(&img)?,
            }]),
            Preprocess::Psv => Ok(preprocess_psv(&img)?
                .into_iter()
                .zip(["left", "middle", "right"])
                .map(|(image, part)| ImageItem {
                    id: format!("{id}_{part}"),
                    image,
                })
                .collect()),
        });
        match loaded {
            Ok(v) => items.extend(v),
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                skipped += 1;
            }
        }
    }
    (items, skipped)
}

/// Resolved per-item mask assignment.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskPlan {
    Regular { ratio: f64, placement: Placement, seed: u64 },
    /// Cycled through in order.
    Fixed(Vec<Mask>),
}

impl MaskPlan {
    /// Reads the configured source; a mask directory is loaded eagerly in
    /// file-name order.
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self> {
        match cfg.mask_source() {
            MaskSource::Regular { ratio, placement } => Ok(MaskPlan::Regular {
                ratio,
                placement,
                seed: cfg.seed,
            }),
            MaskSource::Directory(dir) => {
                let masks = list_images(&dir)?.iter().map(load_mask).collect::<Result<Vec<_>>>()?;
                if masks.is_empty() {
                    return Err(Error::Config(format!("mask directory {} has no PNG masks", dir.display())));
                }
                Ok(MaskPlan::Fixed(masks))
            }
        }
    }

    pub fn mask_for(&self, index: usize, h: usize, w: usize) -> Result<Mask> {
        match self {
            MaskPlan::Regular { ratio, placement, seed } => {
                square_mask(h, w, *ratio, *placement, item_seed(*seed, index as u64))
            }
            MaskPlan::Fixed(masks) => {
                if masks.is_empty() {
                    return Err(Error::Config("empty mask list".into()));
                }
                let m = &masks[index % masks.len()];
                if (m.h(), m.w()) != (h, w) {
                    return Err(Error::Shape(format!(
                        "mask {} is {}x{} but the image is {h}x{w}",
                        index % masks.len(),
                        m.h(),
                        m.w()
                    )));
                }
                Ok(m.clone())
            }
        }
    }
}

struct Scored {
    record: MetricRecord,
    gt: Tensor,
    pred: Tensor,
}

fn score_item(cfg: &PipelineConfig, models: &Models, item: &ImageItem, mask: &Mask) -> Result<Scored> {
    let out = run_inference(models, &cfg.canny, &item.image, mask)?;
    let pred = if cfg.composited { out.i_comp } else { out.i_pred };
    let pr = edge_precision_recall_with_tolerance(
        &out.c_pred.binarize(EDGE_THRESHOLD),
        &out.c_gt,
        mask,
        cfg.edge_tolerance,
    )?;
    let record = MetricRecord {
        id: item.id.clone(),
        bucket: coverage_class(mask),
        rel_l1: relative_l1(&pred, &item.image)?,
        ssim: ssim(&pred, &item.image)?,
        psnr: psnr(&pred, &item.image, 1.0)?,
        precision: pr.precision.value,
        recall: pr.recall.value,
    };
    Ok(Scored {
        record,
        gt: item.image.clone(),
        pred,
    })
}

fn batch(images: &[&Tensor]) -> Result<Tensor> {
    let dims = images[0].dims();
    let mut data = Vec::with_capacity(images.len() * images[0].len());
    for t in images {
        if t.dims() != dims {
            return Err(Error::Shape(format!("cannot batch {:?} with {:?}", t.dims(), dims)));
        }
        data.extend_from_slice(t.data());
    }
    Tensor::new([images.len(), dims[1], dims[2], dims[3]], data)
}

fn attach_fid(report: &mut MetricsReport, scored: &[Scored], seed: u64) -> Result<()> {
    let extractor = SurrogateExtractor::new(seed);
    let buckets: Vec<CoverageBucket> = report.buckets.iter().filter_map(|b| b.bucket).collect();
    for bucket in buckets {
        let members: Vec<&Scored> = scored.iter().filter(|s| s.record.bucket == bucket).collect();
        if members.len() < 2 {
            continue;
        }
        let gt = extractor.features(&batch(&members.iter().map(|s| &s.gt).collect::<Vec<_>>())?)?;
        let pred = extractor.features(&batch(&members.iter().map(|s| &s.pred).collect::<Vec<_>>())?)?;
        report.set_fid(bucket, frechet_distance(&fit_gaussian(&gt)?, &fit_gaussian(&pred)?)?)?;
    }
    Ok(())
}

/// Runs inference on every item and aggregates metrics per coverage bucket.
/// Items whose reference image is all black are skipped and counted.
pub fn evaluate_items(cfg: &PipelineConfig, models: &Models, items: &[ImageItem], plan: &MaskPlan) -> Result<MetricsReport> {
    let mut scored = Vec::with_capacity(items.len());
    let mut skipped = 0;
    for (i, item) in items.iter().enumerate() {
        let mask = plan.mask_for(i, item.image.h(), item.image.w())?;
        match score_item(cfg, models, item, &mask) {
            Ok(s) => scored.push(s),
            Err(Error::Degenerate(msg)) => {
                warn!("skipping {}: {msg}", item.id);
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    let mut report = aggregate(scored.iter().map(|s| s.record.clone()).collect())?;
    report.skipped = skipped;
    if cfg.fid {
        attach_fid(&mut report, &scored, cfg.seed)?;
    }
    Ok(report)
}

/// Loads `paths`, evaluates them and writes the CSV report to `out`.
pub fn evaluate(cfg: &PipelineConfig, models: &Models, paths: &[PathBuf], out: impl Write) -> Result<MetricsReport> {
    let (items, unreadable) = load_items(paths, cfg.preprocess);
    if items.is_empty() {
        return Err(Error::Parameter(format!("no readable images among {} inputs", paths.len())));
    }
    let plan = MaskPlan::from_config(cfg)?;
    let mut report = evaluate_items(cfg, models, &items, &plan)?;
    report.skipped += unreadable;
    report.write_csv(out)?;
    Ok(report)
}

/// Edge statistics (and optionally metrics) at one σ.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sigma: f32,
    /// Mean fraction of edge pixels over the image set.
    pub edge_density: f64,
    /// Overall aggregate of a full evaluation, when models are given.
    pub metrics: Option<BucketAggregate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// Ascending in σ.
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_HEADER: [&str; 7] = ["sigma", "edge_density", "rel_l1", "ssim", "psnr", "precision", "recall"];

impl SweepReport {
    /// One row per σ; metric columns are empty when no models were run.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SWEEP_HEADER)?;
        for r in &self.rows {
            let mut row = vec![format!("{}", r.sigma), format!("{:.6}", r.edge_density)];
            match &r.metrics {
                Some(m) => row.extend([m.rel_l1, m.ssim, m.psnr, m.precision, m.recall].map(|v| format!("{v:.6}"))),
                None => row.extend(std::iter::repeat_n(String::new(), 5)),
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::Format(format!("writing sweep csv: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Canny edge density for every σ (sorted ascending) and, with `models`, the
/// overall evaluation aggregate at that σ.
pub fn sigma_sweep(
    cfg: &PipelineConfig,
    models: Option<&Models>,
    items: &[ImageItem],
    plan: &MaskPlan,
    sigmas: &[f32],
) -> Result<SweepReport> {
    if sigmas.is_empty() {
        return Err(Error::Parameter("sigma sweep needs at least one sigma".into()));
    }
    if items.is_empty() {
        return Err(Error::Parameter("sigma sweep needs at least one image".into()));
    }
    if let Some(s) = sigmas.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
        return Err(Error::Parameter(format!("sigma must be a non-negative number, got {s}")));
    }
    let mut sorted = sigmas.to_vec();
    sorted.sort_by(f32::total_cmp);
    let grays = items.iter().map(|it| to_grayscale(&it.image)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(sorted.len());
    for sigma in sorted {
        let mut at_sigma = cfg.clone();
        at_sigma.canny.sigma = sigma;
        at_sigma.canny.validate()?;
        let mut density = 0.0;
        for g in &grays {
            density += canny(g, &at_sigma.canny)?.density();
        }
        let metrics = match models {
            Some(m) => Some(evaluate_items(&at_sigma, m, items, plan)?.overall),
            None => None,
        };
        rows.push(SweepRow {
            sigma,
            edge_density: density / grays.len() as f64,
            metrics,
        });
    }
    Ok(SweepReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn scene(h: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cy, cx) = (rng.random_range(h / 4..h / 2), rng.random_range(w / 4..w / 2));
        Tensor::from_fn([1, 3, h, w], |_, c, y, x| {
            let inside = y >= cy && y < cy + h / 3 && x >= cx && x < cx + w / 3;
            let base = if inside { 0.8 } else { 0.2 };
            base + 0.05 * c as f32 + 0.002 * ((x + 2 * y) % 7) as f32
        })
    }

    #[test]
    fn item_seeds_differ_and_repeat() {
        assert_eq!(item_seed(5, 3), item_seed(5, 3));
        assert_ne!(item_seed(5, 3), item_seed(5, 4));
        assert_ne!(item_seed(5, 3), item_seed(6, 3));
    }

    #[test]
    fn empty_mask_preserves_everything() {
        let models = Models::random(1);
        let img = scene(32, 32, 2);
        let m = Mask::zeros(32, 32);
        let out = run_inference(&models, &CannyParams::default(), &img, &m).unwrap();
        assert_eq!(out.i_comp, img);
        assert_eq!(out.c_comp, canny(&to_grayscale(&img).unwrap(), &CannyParams::default()).unwrap());
        assert_eq!(out.c_comp, out.c_gt);
    }

    #[test]
    fn square_mask_smoke() {
        let models = Models::random(3);
        let img = scene(48, 48, 4);
        let m = square_mask(48, 48, 0.25, Placement::Random, 9).unwrap();
        let out = run_inference(&models, &CannyParams::default(), &img, &m).unwrap();
        let (lo, hi) = out.i_comp.min_max();
        assert!(lo >= 0.0 && hi <= 1.0);
        let mut masked_nonzero = false;
        for c in 0..3 {
            for y in 0..48 {
                for x in 0..48 {
                    if m.get(y, x) == 0 {
                        assert_eq!(out.i_comp.get(0, c, y, x), img.get(0, c, y, x));
                    } else {
                        masked_nonzero |= out.i_comp.get(0, c, y, x) != 0.0;
                    }
                }
            }
        }
        assert!(masked_nonzero);
        assert_eq!(out.i_pred.dims(), img.dims());
    }

    #[test]
    fn inference_rejects_bad_shapes() {
        let models = Models::random(0);
        let img = scene(32, 32, 0);
        assert!(run_inference(&models, &CannyParams::default(), &img, &Mask::zeros(32, 28)).is_err());
        let odd = scene(30, 30, 0);
        assert!(run_inference(&models, &CannyParams::default(), &odd, &Mask::zeros(30, 30)).is_err());
    }

    #[test]
    fn empty_mask_evaluation_is_perfect() {
        let cfg = PipelineConfig::default();
        let items = vec![ImageItem {
            id: "a".into(),
            image: scene(32, 32, 5),
        }];
        let plan = MaskPlan::Fixed(vec![Mask::zeros(32, 32)]);
        let rep = evaluate_items(&cfg, &Models::random(0), &items, &plan).unwrap();
        let r = &rep.records[0];
        assert_eq!((r.rel_l1, r.ssim, r.psnr), (0.0, 1.0, 100.0));
    }

    #[test]
    fn buckets_are_reported_in_order() {
        let cfg = PipelineConfig::default();
        let items: Vec<ImageItem> = (0..2)
            .map(|i| ImageItem {
                id: format!("img{i}"),
                image: scene(32, 32, i),
            })
            .collect();
        let m25 = Mask::from_fn(32, 32, |y, _| y < 8);
        let m15 = Mask::from_fn(32, 32, |y, x| y < 4 || (y < 5 && x < 25));
        assert_eq!(coverage_class(&m25).to_string(), "20-30%");
        assert_eq!(coverage_class(&m15).to_string(), "10-20%");
        let plan = MaskPlan::Fixed(vec![m25, m15]);
        let rep = evaluate_items(&cfg, &Models::random(0), &items, &plan).unwrap();
        let labels: Vec<String> = rep.buckets.iter().map(|b| b.bucket.unwrap().to_string()).collect();
        assert_eq!(labels, ["10-20%", "20-30%"]);
    }

    #[test]
    fn black_images_are_skipped() {
        let cfg = PipelineConfig::default();
        let items = vec![
            ImageItem {
                id: "black".into(),
                image: Tensor::zeros([1, 3, 32, 32]),
            },
            ImageItem {
                id: "ok".into(),
                image: scene(32, 32, 1),
            },
        ];
        let plan = MaskPlan::Fixed(vec![Mask::zeros(32, 32)]);
        let rep = evaluate_items(&cfg, &Models::random(0), &items, &plan).unwrap();
        assert_eq!(rep.skipped, 1);
        assert_eq!(rep.records.len(), 1);
    }

    #[test]
    fn fid_attached_to_populated_buckets() {
        let mut cfg = PipelineConfig::default();
        cfg.fid = true;
        let items: Vec<ImageItem> = (0..3)
            .map(|i| ImageItem {
                id: format!("{i}"),
                image: scene(32, 32, i),
            })
            .collect();
        let plan = MaskPlan::Regular {
            ratio: 0.25,
            placement: Placement::Random,
            seed: 2,
        };
        let rep = evaluate_items(&cfg, &Models::random(0), &items, &plan).unwrap();
        let fid = rep.buckets[0].fid.unwrap();
        assert!(fid >= 0.0 && fid.is_finite());
    }

    #[test]
    fn sweep_sorts_and_validates() {
        let cfg = PipelineConfig::default();
        let items = vec![ImageItem {
            id: "s".into(),
            image: scene(40, 40, 3),
        }];
        let plan = MaskPlan::from_config(&cfg).unwrap();
        let rep = sigma_sweep(&cfg, None, &items, &plan, &[4.0, 0.0, 1.0]).unwrap();
        let sig: Vec<f32> = rep.rows.iter().map(|r| r.sigma).collect();
        assert_eq!(sig, [0.0, 1.0, 4.0]);
        assert!(rep.rows.iter().all(|r| r.metrics.is_none()));
        let csv = rep.to_csv_string().unwrap();
        assert!(csv.starts_with("sigma,edge_density,rel_l1,ssim,psnr,precision,recall\n0,"));
        assert!(csv.lines().nth(1).unwrap().ends_with(",,,,,"));
        assert!(matches!(
            sigma_sweep(&cfg, None, &items, &plan, &[1.0, -0.5]),
            Err(Error::Parameter(_))
        ));
        assert!(sigma_sweep(&cfg, None, &items, &plan, &[]).is_err());
    }

    #[test]
    fn single_sigma_sweep_matches_evaluate() {
        let cfg = PipelineConfig::default();
        let items = vec![ImageItem {
            id: "s".into(),
            image: scene(32, 32, 8),
        }];
        let plan = MaskPlan::from_config(&cfg).unwrap();
        let models = Models::random(4);
        let sweep = sigma_sweep(&cfg, Some(&models), &items, &plan, &[2.0]).unwrap();
        let eval = evaluate_items(&cfg, &models, &items, &plan).unwrap();
        assert_eq!(sweep.rows[0].metrics.as_ref().unwrap(), &eval.overall);
    }

    #[test]
    fn fixed_masks_must_match_image() {
        let plan = MaskPlan::Fixed(vec![Mask::zeros(8, 8)]);
        assert!(plan.mask_for(0, 8, 12).is_err());
        assert_eq!(plan.mask_for(5, 8, 8).unwrap(), Mask::zeros(8, 8));
    }
}
