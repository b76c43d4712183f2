//! Seeded scenarios: generate a map, run every certificate, and report.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraShape, BlockMatrix};
use crate::derivation::{check_all, check_jordan, check_leibniz, inner_derivation, LinearMapProbeReport, RandomProbes};
use crate::error::{Error, Result};
use crate::oracle::{equal_mod_center, solve_from_matrix_units};
use crate::reconstruct::{
    all_index_pairs, lemma3_certificate, reconstruct, Certificate, CertificateKind, Gauge, ReconstructOptions,
};
use crate::twolocal::Generator;

/// Random probes drawn for verification on top of the matrix units.
pub const VERIFY_RANDOM_PROBES: usize = 8;
/// Relative tolerance of the pair-difference certificate.
pub const LEMMA3_TOL: f64 = 1e-8;
/// Relative tolerance of the comparison against the global least-squares oracle.
pub const ORACLE_TOL: f64 = 1e-8;
/// Tolerances of the Jordan-implies-Leibniz check.
pub const JORDAN_PREMISE_TOL: f64 = 1e-10;
pub const LEIBNIZ_CONCLUSION_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub reconstruct: f64,
    pub verify: f64,
    pub rank: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { reconstruct: 1e-9, verify: 1e-9, rank: crate::linalg::RANK_TOL }
    }
}

fn default_probe_count() -> usize {
    crate::derivation::DEFAULT_PROBES
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub shape: AlgebraShape,
    pub generator: Generator,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_probe_count")]
    pub probe_count: usize,
}

impl ScenarioConfig {
    pub fn new(shape: AlgebraShape, generator: Generator, seed: u64) -> Self {
        Self { shape, generator, seed, tolerances: Tolerances::default(), probe_count: default_probe_count() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.probe_count == 0 {
            return Err(Error::Config("probe_count must be at least 1".into()));
        }
        let t = &self.tolerances;
        for (name, v) in [("reconstruct", t.reconstruct), ("verify", t.verify), ("rank", t.rank)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        if let Generator::Broken(kind) = self.generator {
            if !kind.supports(&self.shape) {
                return Err(Error::Config(format!("generator {} cannot be built on {}", self.generator, self.shape)));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    /// Every certificate passed.
    Pass,
    /// At least one certificate flagged the map.
    Detected,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReconstructionReport {
    pub abar: Option<BlockMatrix>,
    pub certificates: Vec<Certificate>,
    pub residual: Option<f64>,
    pub gauge: Gauge,
    pub probes_used: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub pass: bool,
    pub distance: Option<f64>,
    pub relative_residual: Option<f64>,
    pub rank_deficiency: Option<usize>,
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct JordanReport {
    /// Additive and Jordan checks pass at the premise tolerance.
    pub premise: bool,
    /// Leibniz check passes at the conclusion tolerance.
    pub conclusion: bool,
}

impl JordanReport {
    pub fn holds(&self) -> bool {
        !self.premise || self.conclusion
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioReport {
    pub config: ScenarioConfig,
    pub expected: Outcome,
    pub outcome: Outcome,
    pub as_expected: bool,
    pub reconstruction: ReconstructionReport,
    pub verify: Option<Certificate>,
    pub lemma3: Certificate,
    /// Identity checks on the map itself.
    pub checks: Vec<LinearMapProbeReport>,
    /// Identity checks on the inner derivation by the reconstructed element.
    pub abar_checks: Vec<LinearMapProbeReport>,
    pub oracle: OracleReport,
    pub jordan_leibniz: JordanReport,
    /// Hidden element of the generator, for fixtures.
    pub hidden: BlockMatrix,
}

/// Builds the configured map, runs reconstruction, the pair-difference certificate, the
/// identity checks and the oracle comparison.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioReport> {
    config.validate()?;
    let tol = &config.tolerances;
    let map = config.generator.build(&config.shape, config.seed)?;

    let options = ReconstructOptions {
        tol: tol.reconstruct,
        verify_tol: tol.verify,
        random_probes: VERIFY_RANDOM_PROBES,
        seed: config.seed ^ 0x5eed,
    };
    let rec = reconstruct(&map, &options)?;
    let lemma3 = lemma3_certificate(&map, &all_index_pairs(&config.shape), LEMMA3_TOL)?;

    let probes = RandomProbes::generate(&config.shape, config.probe_count, config.seed.wrapping_add(1));
    let checks = check_all(&map, &probes, tol.verify)?;
    let abar_checks = match &rec.element {
        Some(el) => check_all(&inner_derivation(&el.abar), &probes, tol.verify)?,
        None => Vec::new(),
    };

    let additive = crate::derivation::check_additive(&map, &probes.pairs, JORDAN_PREMISE_TOL)?;
    let jordan = check_jordan(&map, &probes.singles, JORDAN_PREMISE_TOL)?;
    let leibniz = check_leibniz(&map, &probes.pairs, LEIBNIZ_CONCLUSION_TOL)?;
    let jordan_leibniz = JordanReport { premise: additive.pass && jordan.pass, conclusion: leibniz.pass };

    let oracle = match (solve_from_matrix_units(&map, tol.verify, tol.rank), &rec.element) {
        (Ok(global), Some(el)) => {
            let cmp = equal_mod_center(&el.abar, &global.element, ORACLE_TOL)?;
            OracleReport {
                pass: cmp.pass,
                distance: Some(cmp.distance),
                relative_residual: Some(global.relative_residual),
                rank_deficiency: Some(global.rank_deficiency),
                error: None,
            }
        }
        (Ok(global), None) => OracleReport {
            pass: false,
            distance: None,
            relative_residual: Some(global.relative_residual),
            rank_deficiency: Some(global.rank_deficiency),
            error: Some("reconstruction produced no element".into()),
        },
        (Err(err @ Error::NoGlobalImplementingElement { relative, .. }), _) => OracleReport {
            pass: false,
            distance: None,
            relative_residual: Some(relative),
            rank_deficiency: None,
            error: Some(err.to_string()),
        },
        (Err(err), _) => return Err(err),
    };

    let all_pass = rec.certified()
        && lemma3.pass
        && checks.iter().all(|c| c.pass)
        && abar_checks.iter().all(|c| c.pass)
        && oracle.pass;
    let outcome = if all_pass { Outcome::Pass } else { Outcome::Detected };
    let expected = if config.generator.is_broken() { Outcome::Detected } else { Outcome::Pass };

    let element = rec.element.as_ref();
    Ok(ScenarioReport {
        config: config.clone(),
        expected,
        outcome,
        as_expected: outcome == expected,
        verify: rec.certificate(CertificateKind::Verify).cloned(),
        reconstruction: ReconstructionReport {
            abar: element.map(|e| e.abar.clone()),
            residual: element.and_then(|e| e.residual),
            gauge: Gauge::E00Zero,
            probes_used: element.map_or(0, |e| e.probes_used),
            certificates: rec.certificates,
        },
        lemma3,
        checks,
        abar_checks,
        oracle,
        jordan_leibniz,
        hidden: map.hidden_element().clone(),
    })
}

/// A fuzz grid document: templates whose seeds are replaced per trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuzzGrid {
    pub templates: Vec<ScenarioConfig>,
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
}

impl FuzzGrid {
    pub fn parse(text: &str) -> Result<Self> {
        let grid: Self = serde_json::from_str(text)?;
        for t in &grid.templates {
            t.validate()?;
        }
        Ok(grid)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialRecord {
    pub template: usize,
    pub trial: usize,
    pub seed: u64,
    pub generator: Generator,
    pub outcome: Outcome,
    pub as_expected: bool,
    pub jordan_implies_leibniz: bool,
    /// Kinds of the certificates that failed.
    pub failed: Vec<String>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct TemplateSummary {
    pub template: usize,
    pub generator: String,
    pub shape: String,
    pub trials: usize,
    pub passes: usize,
    pub detections: usize,
    pub unexpected: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct FuzzSummary {
    pub base_seed: u64,
    pub trials_per_template: usize,
    pub templates: Vec<TemplateSummary>,
    pub all_as_expected: bool,
    pub jordan_violations: usize,
    pub records: Vec<TrialRecord>,
}

fn failed_kinds(report: &ScenarioReport) -> Vec<String> {
    let mut out: Vec<String> = report
        .reconstruction
        .certificates
        .iter()
        .filter(|c| !c.pass)
        .map(|c| serde_json::to_value(c.kind).expect("kinds serialize").as_str().unwrap_or("?").to_string())
        .collect();
    if !report.lemma3.pass {
        out.push("lemma3".into());
    }
    out.extend(report.checks.iter().filter(|c| !c.pass).map(|c| c.check.clone()));
    if !report.oracle.pass {
        out.push("oracle".into());
    }
    out
}

/// Runs `trials` scenarios per template with seeds `base_seed + trial`.
pub fn fuzz(grid: &[ScenarioConfig], trials: usize, base_seed: u64) -> Result<FuzzSummary> {
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|t| (0..trials).map(move |k| (t, k))).collect();
    let mut records = jobs
        .par_iter()
        .map(|&(t, k)| {
            let seed = base_seed.wrapping_add(k as u64);
            let report = run_scenario(&grid[t].with_seed(seed))?;
            Ok(TrialRecord {
                template: t,
                trial: k,
                seed,
                generator: grid[t].generator,
                outcome: report.outcome,
                as_expected: report.as_expected,
                jordan_implies_leibniz: report.jordan_leibniz.holds(),
                failed: failed_kinds(&report),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by_key(|r| (r.template, r.trial));

    let templates = grid
        .iter()
        .enumerate()
        .map(|(t, config)| {
            let mine = records.iter().filter(|r| r.template == t);
            let mut s = TemplateSummary {
                template: t,
                generator: config.generator.name(),
                shape: config.shape.to_string(),
                ..Default::default()
            };
            for r in mine {
                s.trials += 1;
                match r.outcome {
                    Outcome::Pass => s.passes += 1,
                    Outcome::Detected => s.detections += 1,
                }
                if !r.as_expected {
                    s.unexpected += 1;
                }
            }
            s
        })
        .collect();

    Ok(FuzzSummary {
        base_seed,
        trials_per_template: trials,
        templates,
        all_as_expected: records.iter().all(|r| r.as_expected),
        jordan_violations: records.iter().filter(|r| !r.jordan_implies_leibniz).count(),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twolocal::BrokenKind;

    fn shape(points: usize, dims: &[usize]) -> AlgebraShape {
        AlgebraShape::new(points, dims.to_vec()).unwrap()
    }

    #[test]
    fn honest_scenario_passes() {
        let report = run_scenario(&ScenarioConfig::new(shape(2, &[3]), Generator::Honest, 7)).unwrap();
        assert!(report.verify.as_ref().unwrap().pass);
        assert!(report.oracle.pass);
        assert_eq!(report.outcome, Outcome::Pass);
        assert!(report.as_expected);
    }

    #[test]
    fn offset_scenario_is_detected() {
        let report =
            run_scenario(&ScenarioConfig::new(shape(1, &[2]), Generator::Broken(BrokenKind::Offset), 1)).unwrap();
        assert_eq!(report.outcome, Outcome::Detected);
        assert!(report.as_expected);
    }

    #[test]
    fn config_errors() {
        assert!(ScenarioConfig::parse(r#"{"shape":{"points":1,"dims":[]},"generator":"honest"}"#).is_err());
        assert!(ScenarioConfig::parse(r#"{"shape":{"points":1,"dims":[2]},"generator":"honest","probe_count":0}"#).is_err());
        assert!(ScenarioConfig::parse(
            r#"{"shape":{"points":1,"dims":[2]},"generator":"honest","tolerances":{"verify":-1}}"#
        )
        .is_err());
        assert!(ScenarioConfig::parse(r#"{"shape":{"points":1,"dims":[2]},"generator":"broken:blockmix"}"#).is_err());
        let ok = ScenarioConfig::parse(r#"{"shape":{"points":2,"dims":[2,3]},"generator":"broken:blockmix","seed":3}"#)
            .unwrap();
        assert_eq!(ok.probe_count, 100);
        assert_eq!(ok.tolerances, Tolerances::default());
    }

    #[test]
    fn zero_trials_is_empty() {
        let grid = [ScenarioConfig::new(shape(1, &[2]), Generator::Honest, 0)];
        let summary = fuzz(&grid, 0, 11).unwrap();
        assert!(summary.records.is_empty());
        assert!(summary.all_as_expected);
        assert_eq!(summary.templates[0].trials, 0);
    }

    #[test]
    fn fuzz_is_deterministic() {
        let grid = [
            ScenarioConfig::new(shape(1, &[2, 2]), Generator::Noisy, 0),
            ScenarioConfig::new(shape(1, &[2, 2]), Generator::Broken(BrokenKind::Blockmix), 0),
        ];
        let a = serde_json::to_string(&fuzz(&grid, 3, 40).unwrap()).unwrap();
        let b = serde_json::to_string(&fuzz(&grid, 3, 40).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
