"""Cyber-physical risk assessment of false data injection attacks under moving target defence."""

__version__ = "0.1.0"

from .attack import (CapacityOverhead, OverloadAttack, StatePerturbation, all_overload_attacks,
                     apply_attack, attack_targets, capacity_overhead, craft_attack, min_overload_attack)
from .cyber import (STRATEGIES, AttackSubgraph, CyberAssessment, CapturePlan, CyberGraph, attacking_subgraph, capture_cost,
                    assess_cyber, default_cyber_graph, min_cost_capture, rank_cyber_targets)
from .errors import AttackError, CaptureError, CaseError, GridRiskError, ObservabilityError, ScenarioError
from .estimation import (DetectorConfig, EstimationResult, bdd_check, chi2_quantile, detection_threshold,
                         wls_estimate)
from .grid import (LoadScenarioSet, MeasurementModel, PowerNetwork, build_measurement_model, dc_power_flow,
                   default_scenarios, ieee14, three_bus, synthetic_chain, read_scenario_csv, load_case, parse_case, serialize_case, statistical_peak)
from .mtd import (MtdLimits, MtdOutcome, ProtectionProfile, divergence, max_residual_over_mtd,
                  mtd_protection_sweep, post_mtd_residual)
from .report import PipelineConfig, RiskReport, combined_risk_index, run_pipeline
