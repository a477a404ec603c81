use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generator::{gen_record_sequence, GeneratorParams};
use super::scenario::{assign_treatment, scenario_outcome, scenario_propensity, ScenarioSpec};
use super::sequence::RecordSequence;
use crate::error::{contract, Error, Result};
use crate::rng;

pub const DATASET_SCHEMA_VERSION: u32 = 1;

/// One line of the dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledSample {
    pub id: u64,
    pub records: RecordSequence,
    pub treatment: u8,
    pub outcome: f64,
    pub true_ps: f64,
    pub y0: f64,
    pub y1: f64,
}

impl LabeledSample {
    pub fn seq(&self) -> &RecordSequence {
        &self.records
    }

    pub fn treated(&self) -> bool {
        self.treatment == 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub schema_version: u32,
    pub dx: usize,
    pub scenario: ScenarioSpec,
    pub seed: u64,
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorParams>,
    /// Code strings for ingested corpora, indexed by dense code.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patient_ids: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClaimsDataset {
    pub header: DatasetHeader,
    pub samples: Vec<LabeledSample>,
}

/// The `.header.json` file that sits next to `path`.
pub fn header_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    path.with_file_name(format!("{stem}.header.json"))
}

impl ClaimsDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dx(&self) -> usize {
        self.header.dx
    }

    pub fn validate(&self) -> Result<()> {
        if self.header.n_samples != self.samples.len() {
            return Err(contract(format!(
                "header says {} samples, found {}",
                self.header.n_samples,
                self.samples.len()
            )));
        }
        for s in &self.samples {
            s.records.validate(self.header.dx)?;
            if s.treatment > 1 {
                return Err(contract(format!("sample {}: treatment {}", s.id, s.treatment)));
            }
            let expected = if s.treated() { s.y1 } else { s.y0 };
            if s.outcome != expected {
                return Err(contract(format!("sample {}: outcome does not match arm", s.id)));
            }
            if !(s.true_ps > 0.0 && s.true_ps < 1.0) {
                return Err(contract(format!("sample {}: true_ps {}", s.id, s.true_ps)));
            }
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        for s in &self.samples {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the JSONL samples to `path` and the header next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_jsonl(std::fs::File::create(path)?)?;
        let header = serde_json::to_string_pretty(&self.header)?;
        std::fs::write(header_path(path), header + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let header: DatasetHeader =
            serde_json::from_str(&std::fs::read_to_string(header_path(path))?)?;
        if header.schema_version != DATASET_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "dataset schema version {} (expected {DATASET_SCHEMA_VERSION})",
                header.schema_version
            )));
        }
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut samples = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let sample: LabeledSample = serde_json::from_str(&line).map_err(|e| Error::Ingestion {
                line: i + 1,
                message: e.to_string(),
            })?;
            samples.push(sample);
        }
        let ds = ClaimsDataset { header, samples };
        ds.validate()?;
        Ok(ds)
    }

    pub fn stats(&self) -> DatasetStats {
        let n = self.samples.len().max(1) as f64;
        let records: usize = self.samples.iter().map(|s| s.records.len()).sum();
        let codes: usize = self.samples.iter().map(|s| s.records.total_codes()).sum();
        let treated = self.samples.iter().filter(|s| s.treated()).count();
        DatasetStats {
            name: self.header.scenario.kind.short_name().to_string(),
            size: self.samples.len(),
            avg_record_length: records as f64 / n,
            avg_codes_per_sample: codes as f64 / n,
            avg_codes_per_record: codes as f64 / records.max(1) as f64,
            prevalence_treated: treated as f64 / n,
        }
    }
}

/// Summary statistics in the layout of the usual dataset table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub name: String,
    pub size: usize,
    pub avg_record_length: f64,
    pub avg_codes_per_sample: f64,
    pub avg_codes_per_record: f64,
    pub prevalence_treated: f64,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:>7} {:>18} {:>21} {:>21} {:>13}",
            "Dataset",
            "size",
            "avg. record length",
            "avg. codes per sample",
            "avg. codes per record",
            "prev. treated"
        )?;
        write!(
            f,
            "{:<16} {:>7} {:>18.2} {:>21.2} {:>21.2} {:>13.2}",
            self.name,
            self.size,
            self.avg_record_length,
            self.avg_codes_per_sample,
            self.avg_codes_per_record,
            self.prevalence_treated
        )
    }
}

/// Labels one sequence under a scenario, drawing noise and treatment from `rng`.
pub fn label_sample<R: rand::Rng + ?Sized>(
    id: u64,
    records: RecordSequence,
    spec: &ScenarioSpec,
    rng: &mut R,
) -> Result<LabeledSample> {
    let true_ps = scenario_propensity(&records, spec, rng)?;
    let (y0, y1) = scenario_outcome(&records, spec, rng)?;
    let treatment = assign_treatment(true_ps, rng)?;
    let outcome = if treatment == 1 { y1 } else { y0 };
    Ok(LabeledSample {
        id,
        records,
        treatment,
        outcome,
        true_ps,
        y0,
        y1,
    })
}

/// Generates `params.n_samples` labeled samples. Sample `i` draws from its
/// own stream keyed by `(seed, i)`, so output does not depend on scheduling.
pub fn generate_synthetic(
    params: &GeneratorParams,
    spec: &ScenarioSpec,
    seed: u64,
) -> Result<ClaimsDataset> {
    params.validate()?;
    spec.validate()?;
    if spec.kind == super::ScenarioKind::SemiSyntheticDistance {
        return Err(Error::Config(
            "the semi-synthetic scenario applies to ingested corpora only".into(),
        ));
    }
    for code in spec.confounding_codes() {
        if !params.is_boosted(code) {
            return Err(Error::Config(format!(
                "confounding code {code} is not among the boosted codes {:?}",
                params.boosted_codes
            )));
        }
    }
    let samples = (0..params.n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, "sample", i);
            let seq = gen_record_sequence(params, &mut rng)?;
            label_sample(i, seq, spec, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClaimsDataset {
        header: DatasetHeader {
            schema_version: DATASET_SCHEMA_VERSION,
            dx: params.dx,
            scenario: spec.clone(),
            seed,
            n_samples: samples.len(),
            generator: Some(GeneratorParams {
                seed,
                ..params.clone()
            }),
            vocabulary: None,
            patient_ids: None,
        },
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claimsgen::ScenarioSpec;

    fn small() -> GeneratorParams {
        GeneratorParams {
            n_samples: 300,
            ..GeneratorParams::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = ScenarioSpec::distance(7, 23);
        let a = generate_synthetic(&small(), &spec, 5).unwrap();
        let b = generate_synthetic(&small(), &spec, 5).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.write_jsonl(&mut x).unwrap();
        b.write_jsonl(&mut y).unwrap();
        assert_eq!(x, y);
        let c = generate_synthetic(&small(), &spec, 6).unwrap();
        let mut z = Vec::new();
        c.write_jsonl(&mut z).unwrap();
        assert_ne!(x, z);
    }

    #[test]
    fn config_errors() {
        let spec = ScenarioSpec::distance(7, 23);
        let mut p = small();
        p.n_samples = 0;
        assert!(matches!(generate_synthetic(&p, &spec, 1), Err(Error::Config(_))));
        let unboosted = ScenarioSpec::distance(7, 8);
        assert!(matches!(generate_synthetic(&small(), &unboosted, 1), Err(Error::Config(_))));
    }

    #[test]
    fn samples_satisfy_invariants() {
        let spec = ScenarioSpec::window(41);
        let ds = generate_synthetic(&small(), &spec, 3).unwrap();
        ds.validate().unwrap();
        for s in &ds.samples {
            assert_eq!(s.y1 - s.y0, -5.0);
            assert!(spec.ps_clamp.contains(s.true_ps));
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.jsonl");
        let ds = generate_synthetic(&small(), &ScenarioSpec::consecutive(66), 9).unwrap();
        ds.save(&path).unwrap();
        assert!(dir.path().join("ds.header.json").exists());
        let back = ClaimsDataset::load(&path).unwrap();
        assert_eq!(back, ds);
        let first = std::fs::read_to_string(&path).unwrap();
        let line = first.lines().next().unwrap();
        assert!(line.starts_with("{\"id\":0,\"records\":[["), "{line}");
    }
}
