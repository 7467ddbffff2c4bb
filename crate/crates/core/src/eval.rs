//! Segment-level scoring: patch aggregation, accuracy breakdowns, early
//! classification and fold averaging.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::decoders::argmax;
use crate::{Error, Result};

/// How patch scores become one segment score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Arithmetic mean of patch probabilities.
    #[default]
    Mean,
    /// Elementwise maximum, renormalized to sum to one.
    Max,
    /// Fraction of patches voting for each class.
    Vote,
}

impl Aggregation {
    pub fn name(self) -> &'static str {
        match self {
            Aggregation::Mean => "mean",
            Aggregation::Max => "max",
            Aggregation::Vote => "vote",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(Aggregation::Mean),
            "max" => Ok(Aggregation::Max),
            "vote" | "majority" => Ok(Aggregation::Vote),
            other => Err(Error::Config(format!("unknown aggregation '{other}'"))),
        }
    }
}

/// Segment scores and class (ties to the lowest class index).
pub fn aggregate_segment(patches: &[Vec<f32>], mode: Aggregation) -> Result<(Vec<f32>, usize)> {
    let c = patches.first().ok_or_else(|| Error::Empty("no patch predictions to aggregate".into()))?.len();
    if let Some(p) = patches.iter().find(|p| p.len() != c) {
        return Err(Error::shape("patch prediction", &[c], &[p.len()]));
    }
    let n = patches.len() as f64;
    let scores: Vec<f32> = match mode {
        Aggregation::Mean => (0..c)
            .map(|k| (patches.iter().map(|p| p[k] as f64).sum::<f64>() / n) as f32)
            .collect(),
        Aggregation::Max => {
            let m: Vec<f64> = (0..c)
                .map(|k| patches.iter().map(|p| p[k] as f64).fold(f64::NEG_INFINITY, f64::max))
                .collect();
            let s: f64 = m.iter().sum();
            m.iter().map(|v| if s > 0.0 { (v / s) as f32 } else { *v as f32 }).collect()
        }
        Aggregation::Vote => {
            let mut votes = vec![0usize; c];
            for p in patches {
                votes[argmax(p)] += 1;
            }
            votes.iter().map(|&v| (v as f64 / n) as f32).collect()
        }
    };
    let class = argmax(&scores);
    Ok((scores, class))
}

/// One scored segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPrediction {
    pub segment_id: String,
    pub scores: Vec<f32>,
    pub predicted: usize,
    pub label: Option<usize>,
    pub device_id: Option<String>,
}

/// Identity of the segment a patch score belongs to.
#[derive(Debug, Clone, Copy)]
pub struct PatchOrigin<'a> {
    pub segment_id: &'a str,
    pub label: Option<usize>,
    pub device_id: Option<&'a str>,
}

/// Aggregates patch scores into one prediction per segment, in order of
/// each segment's first patch. Label and device come from that first patch.
pub fn group_by_segment(origins: &[PatchOrigin<'_>], scores: &[Vec<f32>], mode: Aggregation) -> Result<Vec<SegmentPrediction>> {
    if origins.len() != scores.len() {
        return Err(Error::shape("patch origins vs scores", &[origins.len()], &[scores.len()]));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, o) in origins.iter().enumerate() {
        groups
            .entry(o.segment_id)
            .or_insert_with(|| {
                order.push(o.segment_id);
                Vec::new()
            })
            .push(i);
    }
    order
        .iter()
        .map(|id| {
            let idx = &groups[id];
            let rows: Vec<Vec<f32>> = idx.iter().map(|&i| scores[i].clone()).collect();
            let (scores, predicted) = aggregate_segment(&rows, mode)?;
            let first = &origins[idx[0]];
            Ok(SegmentPrediction {
                segment_id: String::from(*id),
                scores,
                predicted,
                label: first.label,
                device_id: first.device_id.map(String::from),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub classes: usize,
    pub segments: usize,
    pub overall: f64,
    /// `None` where a class has no test segments.
    pub per_class: Vec<Option<f64>>,
    pub per_device: BTreeMap<String, f64>,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
    /// Early-classification points `(crop seconds, accuracy)`.
    pub crops: Vec<(f64, Option<f64>)>,
    pub fold: Option<usize>,
}

impl EvaluationReport {
    pub fn support(&self, class: usize) -> usize {
        self.confusion[class].iter().sum()
    }
}

/// Accuracy breakdowns over segment predictions. Every prediction needs a
/// label; device accuracies cover only segments that carry a device.
pub fn evaluate(predictions: &[SegmentPrediction], classes: usize) -> Result<EvaluationReport> {
    if classes == 0 {
        return Err(Error::Config("evaluation needs at least one class".into()));
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    let mut devices: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut correct = 0usize;
    for p in predictions {
        let label = p
            .label
            .ok_or_else(|| Error::Invalid(format!("segment {} has no label", p.segment_id)))?;
        if label >= classes || p.predicted >= classes {
            return Err(Error::Invalid(format!(
                "segment {}: class index outside {classes} classes",
                p.segment_id
            )));
        }
        confusion[label][p.predicted] += 1;
        let hit = usize::from(label == p.predicted);
        correct += hit;
        if let Some(d) = &p.device_id {
            let e = devices.entry(d.clone()).or_default();
            e.0 += hit;
            e.1 += 1;
        }
    }
    let per_class = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let n: usize = row.iter().sum();
            (n > 0).then(|| row[c] as f64 / n as f64)
        })
        .collect();
    Ok(EvaluationReport {
        classes,
        segments: predictions.len(),
        overall: if predictions.is_empty() {
            0.0
        } else {
            correct as f64 / predictions.len() as f64
        },
        per_class,
        per_device: devices.into_iter().map(|(d, (h, n))| (d, h as f64 / n as f64)).collect(),
        confusion,
        crops: Vec::new(),
        fold: None,
    })
}

/// Plain accuracy of a list of segment predictions.
pub fn accuracy(predictions: &[SegmentPrediction]) -> Option<f64> {
    let labelled: Vec<_> = predictions.iter().filter_map(|p| p.label.map(|l| l == p.predicted)).collect();
    (!labelled.is_empty()).then(|| labelled.iter().filter(|&&h| h).count() as f64 / labelled.len() as f64)
}

/// Unweighted mean over folds. Per-class, per-device and crop entries are
/// averaged over the folds where they are defined; confusion matrices add.
pub fn kfold_average(reports: &[EvaluationReport]) -> Result<EvaluationReport> {
    let first = reports.first().ok_or_else(|| Error::Empty("no fold reports".into()))?;
    let c = first.classes;
    if let Some(r) = reports.iter().find(|r| r.classes != c || r.per_class.len() != c) {
        return Err(Error::Invalid(format!(
            "fold class sets differ ({} vs {} classes)",
            c, r.classes
        )));
    }
    let mean_defined = |vals: Vec<Option<f64>>| -> Option<f64> {
        let d: Vec<f64> = vals.into_iter().flatten().collect();
        (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64)
    };
    let n = reports.len() as f64;
    let mut confusion = vec![vec![0usize; c]; c];
    for r in reports {
        for (row, src) in confusion.iter_mut().zip(&r.confusion) {
            for (v, s) in row.iter_mut().zip(src) {
                *v += s;
            }
        }
    }
    let mut devices: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in reports {
        for (d, a) in &r.per_device {
            devices.entry(d.clone()).or_default().push(*a);
        }
    }
    let mut crop_lengths: Vec<f64> = reports.iter().flat_map(|r| r.crops.iter().map(|c| c.0)).collect();
    crop_lengths.sort_by(f64::total_cmp);
    crop_lengths.dedup();
    let crops = crop_lengths
        .iter()
        .map(|&len| {
            let vals = reports
                .iter()
                .map(|r| r.crops.iter().find(|c| c.0 == len).and_then(|c| c.1))
                .collect();
            (len, mean_defined(vals))
        })
        .collect();
    Ok(EvaluationReport {
        classes: c,
        segments: reports.iter().map(|r| r.segments).sum(),
        overall: reports.iter().map(|r| r.overall).sum::<f64>() / n,
        per_class: (0..c)
            .map(|k| mean_defined(reports.iter().map(|r| r.per_class[k]).collect()))
            .collect(),
        per_device: devices
            .into_iter()
            .map(|(d, v)| {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                (d, m)
            })
            .collect(),
        confusion,
        crops,
        fold: if reports.len() == 1 { first.fold } else { None },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(id: &str, predicted: usize, label: usize, device: Option<&str>) -> SegmentPrediction {
        SegmentPrediction {
            segment_id: id.into(),
            scores: vec![],
            predicted,
            label: Some(label),
            device_id: device.map(Into::into),
        }
    }

    #[test]
    fn aggregation_examples() {
        let one = vec![vec![0.3f32, 0.7]];
        assert_eq!(aggregate_segment(&one, Aggregation::Mean).unwrap(), (vec![0.3, 0.7], 1));
        let tie = vec![vec![0.8f32, 0.2], vec![0.2, 0.8]];
        assert_eq!(aggregate_segment(&tie, Aggregation::Mean).unwrap(), (vec![0.5, 0.5], 0));
        assert!(aggregate_segment(&[], Aggregation::Mean).is_err());
        let votes = vec![vec![0.6f32, 0.4], vec![0.1, 0.9], vec![0.2, 0.8]];
        let (s, c) = aggregate_segment(&votes, Aggregation::Vote).unwrap();
        assert_eq!(c, 1);
        assert!((s[1] - 2.0 / 3.0).abs() < 1e-6);
        let (s, c) = aggregate_segment(&votes, Aggregation::Max).unwrap();
        assert_eq!(c, 1);
        assert!((s.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn report_examples() {
        let all = [pred("a", 0, 0, None), pred("b", 1, 1, None)];
        let r = evaluate(&all, 2).unwrap();
        assert_eq!(r.overall, 1.0);
        assert_eq!(r.confusion, vec![vec![1, 0], vec![0, 1]]);

        let half = [pred("a", 0, 0, None), pred("b", 0, 1, None)];
        let r = evaluate(&half, 2).unwrap();
        assert_eq!(r.overall, 0.5);
        assert_eq!(r.per_class, vec![Some(1.0), Some(0.0)]);

        let dev = [pred("a", 1, 0, Some("A")), pred("b", 1, 1, Some("B")), pred("c", 0, 0, Some("B"))];
        let r = evaluate(&dev, 2).unwrap();
        assert_eq!(r.per_device["B"], 1.0);
        assert_eq!(r.per_device["A"], 0.0);

        let mut missing = pred("x", 0, 0, None);
        missing.label = None;
        assert!(evaluate(&[missing], 2).is_err());
    }

    #[test]
    fn fold_average() {
        let mut a = evaluate(&vec![pred("a", 0, 0, None); 10], 2).unwrap();
        a.overall = 0.9;
        let mut b = a.clone();
        b.overall = 0.7;
        assert!((kfold_average(&[a.clone(), b]).unwrap().overall - 0.8).abs() < 1e-12);
        assert_eq!(kfold_average(&[a.clone()]).unwrap(), a);
        let twenty = vec![a.clone(); 20];
        let avg = kfold_average(&twenty).unwrap();
        assert_eq!(avg.overall, a.overall);
        assert_eq!(avg.per_class, a.per_class);
        let other = evaluate(&[pred("a", 0, 0, None)], 3).unwrap();
        assert!(kfold_average(&[a, other]).is_err());
    }
}
