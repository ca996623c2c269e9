//! Experiment configuration: a single TOML document describing the graph,
//! the cost ensemble, the adversary, the algorithm/step-size grid, and the
//! run schedule. Resolution validates everything up front (robustness
//! requirements, F-local placement, step-size admissibility) so runs cannot
//! fail on preconditions midway.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::adversary::{AdversaryPlacement, StrategyKind};
use crate::engine::AlgorithmKind;
use crate::error::{Error, Result};
use crate::filters::SafePointLimits;
use crate::functions::{global_minimizer, sample_ensemble, CostEnsemble, MinimizerGeometry};
use crate::graph::{self, Digraph, RobustnessCertificate, EXHAUSTIVE_LIMIT};
use crate::theory::{classify_reduction, ReductionType};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub graph: GraphSection,
    pub adversary: AdversarySection,
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub bounds: BoundsSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub dimension: usize,
    pub agents: usize,
    /// The F of the F-local adversary model.
    pub fault_tolerance: usize,
    pub algorithms: Vec<AlgorithmKind>,
    pub step_sizes: Vec<f64>,
    pub rounds: usize,
    pub runs: usize,
    pub master_seed: u64,
    /// Per-dimension `[lo, hi]` init intervals.
    pub init_box: Vec<[f64; 2]>,
    /// Skip the reduction-property step-size admissibility gate.
    #[serde(default)]
    pub allow_any_step: bool,
    /// Candidate-pool cap for the safe-point solve.
    #[serde(default = "default_rvo_max_candidates")]
    pub rvo_max_candidates: usize,
    pub output_dir: String,
}

fn default_rvo_max_candidates() -> usize {
    SafePointLimits::default().max_candidates
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct GraphSection {
    pub source: GraphSource,
    /// Robustness to construct (generate) or require (file).
    pub robustness: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub certificate: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    Generate,
    File,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySection {
    pub byzantine: Vec<usize>,
    pub strategy: StrategySection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    pub kind: String,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub target: Option<Vec<f64>>,
    #[serde(default)]
    pub offset: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct EnsembleSection {
    pub source: EnsembleSource,
    #[serde(default)]
    pub spread: f64,
    #[serde(default)]
    pub mu_range: Option<[f64; 2]>,
    #[serde(default)]
    pub l_range: Option<[f64; 2]>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub path: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleSource {
    Sample,
    File,
}

/// Optional consensus constants unlocking the absolute diameter bound.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("config parse error: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Small default experiment: quick to run, all four algorithms.
    pub fn default_config() -> Self {
        ExperimentConfig {
            experiment: ExperimentSection {
                dimension: 2,
                agents: 15,
                fault_tolerance: 1,
                algorithms: AlgorithmKind::ALL.to_vec(),
                step_sizes: vec![0.04],
                rounds: 150,
                runs: 2,
                master_seed: 42,
                init_box: vec![[-6.0, 6.0], [-6.0, 6.0]],
                allow_any_step: false,
                rvo_max_candidates: default_rvo_max_candidates(),
                output_dir: "out".into(),
            },
            graph: GraphSection {
                source: GraphSource::Generate,
                robustness: 6,
                seed: 7,
                path: None,
                certificate: None,
            },
            adversary: AdversarySection {
                byzantine: vec![3],
                strategy: StrategySection {
                    kind: "blend".into(),
                    eta: Some(1.2),
                    target: None,
                    offset: None,
                },
            },
            ensemble: EnsembleSection {
                source: EnsembleSource::Sample,
                spread: 3.0,
                mu_range: Some([15.0, 18.0]),
                l_range: Some([20.0, 24.0]),
                seed: 11,
                path: None,
            },
            bounds: BoundsSection::default(),
        }
    }

    /// The reference benchmark: 40 agents on a certified 11-robust graph,
    /// two Byzantine agents under the blend attack, both step sizes, four
    /// seeded runs per cell.
    pub fn reference() -> Self {
        let mut cfg = Self::default_config();
        cfg.experiment.agents = 40;
        cfg.experiment.fault_tolerance = 2;
        cfg.experiment.step_sizes = vec![0.02, 0.04];
        cfg.experiment.rounds = 500;
        cfg.experiment.runs = 4;
        cfg.experiment.allow_any_step = true;
        cfg.experiment.rvo_max_candidates = 40;
        cfg.graph.robustness = 11;
        cfg.adversary.byzantine = vec![7, 23];
        cfg
    }

    /// FNV-1a over the canonical serialization; identifies a configuration
    /// in summaries and traces.
    pub fn fingerprint(&self) -> u64 {
        let canonical = self.to_toml();
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in canonical.as_bytes() {
            hash ^= u64::from(*byte);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        hash
    }

    fn strategy_kind(&self, dimension: usize) -> Result<StrategyKind> {
        let s = &self.adversary.strategy;
        match s.kind.as_str() {
            "blend" => Ok(StrategyKind::Blend {
                eta: s.eta.unwrap_or(1.2),
            }),
            "fixed_target" => {
                let target = s.target.as_ref().ok_or_else(|| {
                    Error::config("fixed_target strategy requires strategy.target")
                })?;
                if target.len() != dimension {
                    return Err(Error::Dimension {
                        expected: dimension,
                        actual: target.len(),
                    });
                }
                Ok(StrategyKind::FixedTarget {
                    target: DVector::from_vec(target.clone()),
                })
            }
            "coordinate_spoof" => Ok(StrategyKind::CoordinateSpoof {
                offset: s.offset.ok_or_else(|| {
                    Error::config("coordinate_spoof strategy requires strategy.offset")
                })?,
            }),
            other => Err(Error::config(format!("unknown strategy kind '{other}'"))),
        }
    }

    /// Loads/generates the graph and ensemble, validates every precondition,
    /// and produces the ready-to-run experiment.
    pub fn resolve(&self, base_dir: &Path) -> Result<ResolvedExperiment> {
        let exp = &self.experiment;
        let d = exp.dimension;
        if d == 0 {
            return Err(Error::config("dimension must be positive"));
        }
        if exp.algorithms.is_empty() {
            return Err(Error::config("no algorithms configured"));
        }
        if exp.step_sizes.is_empty() {
            return Err(Error::config("no step sizes configured"));
        }
        if exp.runs == 0 {
            return Err(Error::config("runs must be positive"));
        }
        if exp.init_box.len() != d {
            return Err(Error::Dimension {
                expected: d,
                actual: exp.init_box.len(),
            });
        }

        // Graph.
        let (graph, certificate) = match self.graph.source {
            GraphSource::Generate => {
                let (g, cert) =
                    graph::generate_robust(exp.agents, self.graph.robustness, self.graph.seed)?;
                (g, Some(cert))
            }
            GraphSource::File => {
                let path = self
                    .graph
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::config("graph.source = file requires graph.path"))?;
                let g = graph::parse_graph(&std::fs::read_to_string(base_dir.join(path))?)?;
                let cert = match &self.graph.certificate {
                    Some(cpath) => Some(graph::parse_certificate(&std::fs::read_to_string(
                        base_dir.join(cpath),
                    )?)?),
                    None => None,
                };
                (g, cert)
            }
        };
        if graph.n() != exp.agents {
            return Err(Error::config(format!(
                "graph has {} nodes, config declares {}",
                graph.n(),
                exp.agents
            )));
        }

        // Verified or certified robustness.
        let claimed_robustness = if graph.n() <= EXHAUSTIVE_LIMIT {
            if graph::is_r_robust(&graph, self.graph.robustness)? {
                self.graph.robustness
            } else {
                return Err(Error::config(format!(
                    "graph fails the exhaustive {}-robustness check",
                    self.graph.robustness
                )));
            }
        } else {
            let cert = certificate.as_ref().ok_or_else(|| {
                Error::config(format!(
                    "graph exceeds the exhaustive limit ({} nodes); a construction certificate is required",
                    graph.n()
                ))
            })?;
            if !graph::verify_certificate(&graph, cert) {
                return Err(Error::config(
                    "robustness certificate does not describe the graph".to_string(),
                ));
            }
            if cert.r < self.graph.robustness {
                return Err(Error::config(format!(
                    "certificate claims {}-robustness, config requires {}",
                    cert.r, self.graph.robustness
                )));
            }
            cert.r
        };

        // Placement.
        let byzantine: BTreeSet<usize> = self.adversary.byzantine.iter().copied().collect();
        if byzantine.len() != self.adversary.byzantine.len() {
            return Err(Error::config("duplicate Byzantine ids"));
        }
        if let Some(&max) = byzantine.iter().next_back() {
            if max >= exp.agents {
                return Err(Error::config(format!("Byzantine id {max} out of range")));
            }
        }
        let placement = AdversaryPlacement::new(byzantine, exp.fault_tolerance);
        if !crate::adversary::validate_f_local(&graph, &placement) {
            return Err(Error::config(
                "Byzantine placement violates the F-local model".to_string(),
            ));
        }

        // Ensemble over the regular agents.
        let regular_ids = placement.regular_ids(exp.agents);
        let ensemble = match self.ensemble.source {
            EnsembleSource::Sample => {
                let mu = self
                    .ensemble
                    .mu_range
                    .ok_or_else(|| Error::config("ensemble.mu_range required for sampling"))?;
                let l = self
                    .ensemble
                    .l_range
                    .ok_or_else(|| Error::config("ensemble.l_range required for sampling"))?;
                sample_ensemble(
                    d,
                    &regular_ids,
                    self.ensemble.spread,
                    (mu[0], mu[1]),
                    (l[0], l[1]),
                    self.ensemble.seed,
                )?
            }
            EnsembleSource::File => {
                let path = self
                    .ensemble
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::config("ensemble.source = file requires ensemble.path"))?;
                let ens =
                    crate::functions::parse_ensemble(&std::fs::read_to_string(base_dir.join(path))?)?;
                let ids: Vec<usize> = ens.agent_ids().collect();
                if ids != regular_ids {
                    return Err(Error::config(
                        "ensemble file ids do not match the regular agents".to_string(),
                    ));
                }
                if ens.dim() != d {
                    return Err(Error::Dimension {
                        expected: d,
                        actual: ens.dim(),
                    });
                }
                ens
            }
        };

        // Algorithm-level requirements.
        for kind in &exp.algorithms {
            let required = kind.required_robustness(d, exp.fault_tolerance);
            if claimed_robustness < required {
                return Err(Error::config(format!(
                    "{kind} requires a {required}-robust graph; available robustness is {claimed_robustness}"
                )));
            }
        }

        // Step-size admissibility per (algorithm, alpha), worst-case gamma.
        let mut step_validity = Vec::new();
        for &kind in &exp.algorithms {
            let gamma = match kind {
                AlgorithmKind::Cwtm => d as f64,
                _ => 1.0,
            };
            for &alpha in &exp.step_sizes {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::config(format!("invalid step size {alpha}")));
                }
                let reduction =
                    classify_reduction(gamma, alpha, ensemble.mu_tilde(), ensemble.l_tilde());
                if reduction == ReductionType::Invalid && !exp.allow_any_step {
                    return Err(Error::config(format!(
                        "step size {alpha} is outside the admissible range for {kind} \
                         (gamma = {gamma}, mu_tilde = {:.6}, l_tilde = {:.6}); \
                         set allow_any_step to run anyway",
                        ensemble.mu_tilde(),
                        ensemble.l_tilde()
                    )));
                }
                step_validity.push(StepValidity {
                    kind,
                    alpha,
                    reduction,
                });
            }
        }

        let geometry = global_minimizer(&ensemble)?;
        let strategy = self.strategy_kind(d)?;
        let init_box: Vec<(f64, f64)> = exp.init_box.iter().map(|b| (b[0], b[1])).collect();
        let rho_lambda = match (self.bounds.rho, self.bounds.lambda) {
            (Some(r), Some(l)) => Some((r, l)),
            _ => None,
        };

        Ok(ResolvedExperiment {
            config: self.clone(),
            graph,
            certificate,
            claimed_robustness,
            placement,
            strategy,
            ensemble,
            geometry,
            init_box,
            step_validity,
            rho_lambda,
            safe_limits: SafePointLimits {
                max_candidates: exp.rvo_max_candidates,
                ..SafePointLimits::default()
            },
        })
    }
}

/// Admissibility of one `(algorithm, alpha)` cell under the worst-case
/// contraction factor.
#[derive(Debug, Clone, Copy)]
pub struct StepValidity {
    pub kind: AlgorithmKind,
    pub alpha: f64,
    pub reduction: ReductionType,
}

/// A fully validated experiment, ready for the harness.
#[derive(Debug)]
pub struct ResolvedExperiment {
    pub config: ExperimentConfig,
    pub graph: Digraph,
    pub certificate: Option<RobustnessCertificate>,
    pub claimed_robustness: usize,
    pub placement: AdversaryPlacement,
    pub strategy: StrategyKind,
    pub ensemble: CostEnsemble,
    pub geometry: MinimizerGeometry,
    pub init_box: Vec<(f64, f64)>,
    pub step_validity: Vec<StepValidity>,
    pub rho_lambda: Option<(f64, f64)>,
    pub safe_limits: SafePointLimits,
}

impl ResolvedExperiment {
    pub fn reduction_for(&self, kind: AlgorithmKind, alpha: f64) -> ReductionType {
        self.step_validity
            .iter()
            .find(|s| s.kind == kind && s.alpha == alpha)
            .map(|s| s.reduction)
            .unwrap_or(ReductionType::Invalid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_and_resolves() {
        let cfg = ExperimentConfig::default_config();
        let text = cfg.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.fingerprint(), back.fingerprint());

        let resolved = cfg.resolve(Path::new(".")).unwrap();
        assert_eq!(resolved.graph.n(), 15);
        assert_eq!(resolved.ensemble.len(), 14);
        assert!(resolved.claimed_robustness >= 6);
    }

    #[test]
    fn reference_config_resolves_with_certificate() {
        let cfg = ExperimentConfig::reference();
        let resolved = cfg.resolve(Path::new(".")).unwrap();
        assert_eq!(resolved.graph.n(), 40);
        assert_eq!(resolved.claimed_robustness, 11);
        assert!(resolved.certificate.is_some());
        assert_eq!(resolved.ensemble.len(), 38);
        // SDMMFD needs (2d+1)F+1 = 11 exactly.
        assert_eq!(
            AlgorithmKind::Sdmmfd.required_robustness(2, 2),
            11
        );
    }

    #[test]
    fn step_size_gate_rejects_inadmissible_alpha() {
        let mut cfg = ExperimentConfig::default_config();
        cfg.experiment.algorithms = vec![AlgorithmKind::Cwtm];
        cfg.experiment.step_sizes = vec![0.02];
        // CWTM with gamma = 2 needs alpha > 1/(2 mu): force a violation.
        cfg.ensemble.mu_range = Some([1.0, 1.0]);
        cfg.ensemble.l_range = Some([1.5, 1.5]);
        cfg.experiment.allow_any_step = false;
        let err = cfg.resolve(Path::new(".")).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "got {err:?}");

        cfg.experiment.allow_any_step = true;
        let resolved = cfg.resolve(Path::new(".")).unwrap();
        assert_eq!(
            resolved.reduction_for(AlgorithmKind::Cwtm, 0.02),
            ReductionType::Invalid
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = ExperimentConfig::default_config().to_toml();
        text.push_str("\n[surprise]\nkey = 1\n");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }
}
