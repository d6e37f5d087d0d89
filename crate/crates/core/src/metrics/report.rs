//! Per-image metric records, per-bucket aggregation and CSV output.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::mask::CoverageBucket;

pub const CSV_HEADER: [&str; 7] = ["id", "bucket", "rel_l1", "ssim", "psnr", "precision", "recall"];
const AGG_HEADER: [&str; 9] = ["#agg", "bucket", "count", "rel_l1", "ssim", "psnr", "precision", "recall", "fid"];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub id: String,
    pub bucket: CoverageBucket,
    /// Fraction, not percent.
    pub rel_l1: f64,
    pub ssim: f64,
    pub psnr: f64,
    pub precision: f64,
    pub recall: f64,
}

impl MetricRecord {
    fn values(&self) -> [f64; 5] {
        [self.rel_l1, self.ssim, self.psnr, self.precision, self.recall]
    }
}

/// Arithmetic means over one bucket (`bucket == None` for all records).
#[derive(Debug, Clone, PartialEq)]
pub struct BucketAggregate {
    pub bucket: Option<CoverageBucket>,
    pub count: usize,
    pub rel_l1: f64,
    pub ssim: f64,
    pub psnr: f64,
    pub precision: f64,
    pub recall: f64,
    pub fid: Option<f64>,
}

impl BucketAggregate {
    fn of<'a>(bucket: Option<CoverageBucket>, records: impl Iterator<Item = &'a MetricRecord>) -> Self {
        let mut sums = [0.0f64; 5];
        let mut count = 0;
        for r in records {
            for (s, v) in sums.iter_mut().zip(r.values()) {
                *s += v;
            }
            count += 1;
        }
        let [rel_l1, ssim, psnr, precision, recall] = sums.map(|s| s / count as f64);
        BucketAggregate {
            bucket,
            count,
            rel_l1,
            ssim,
            psnr,
            precision,
            recall,
            fid: None,
        }
    }

    fn label(&self) -> String {
        self.bucket.map_or_else(|| "all".to_string(), |b| b.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub records: Vec<MetricRecord>,
    /// Ascending by bucket.
    pub buckets: Vec<BucketAggregate>,
    pub overall: BucketAggregate,
    /// Inputs that could not be read and were left out.
    pub skipped: usize,
}

/// Groups records by bucket and averages every metric.
pub fn aggregate(records: Vec<MetricRecord>) -> Result<MetricsReport> {
    if records.is_empty() {
        return Err(Error::Parameter("cannot aggregate an empty record set".into()));
    }
    let mut groups: BTreeMap<CoverageBucket, Vec<&MetricRecord>> = BTreeMap::new();
    for r in &records {
        groups.entry(r.bucket).or_default().push(r);
    }
    let buckets = groups
        .into_iter()
        .map(|(b, rs)| BucketAggregate::of(Some(b), rs.into_iter()))
        .collect();
    let overall = BucketAggregate::of(None, records.iter());
    Ok(MetricsReport {
        records,
        buckets,
        overall,
        skipped: 0,
    })
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

impl MetricsReport {
    pub fn bucket(&self, bucket: CoverageBucket) -> Option<&BucketAggregate> {
        self.buckets.iter().find(|b| b.bucket == Some(bucket))
    }

    /// Attaches a distribution distance to one bucket's aggregate row.
    pub fn set_fid(&mut self, bucket: CoverageBucket, fid: f64) -> Result<()> {
        let row = self
            .buckets
            .iter_mut()
            .find(|b| b.bucket == Some(bucket))
            .ok_or_else(|| Error::Parameter(format!("no records in bucket {bucket}")))?;
        row.fid = Some(fid);
        Ok(())
    }

    /// Per-image rows under [`CSV_HEADER`], then a `#agg` section with one
    /// row per bucket and a final `all` row. Values use six decimals.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.records {
            let mut row = vec![r.id.clone(), r.bucket.to_string()];
            row.extend(r.values().map(fmt));
            w.write_record(&row)?;
        }
        w.write_record(AGG_HEADER)?;
        for a in self.buckets.iter().chain(std::iter::once(&self.overall)) {
            let mut row = vec!["#agg".to_string(), a.label(), a.count.to_string()];
            row.extend([a.rel_l1, a.ssim, a.psnr, a.precision, a.recall].map(fmt));
            row.push(a.fid.map(fmt).unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::Format(format!("writing metrics csv: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
    }
}
