from .config import DEFAULTS, ExperimentConfig
from .geo_study import PilotArtifact, run_geo_pilot, run_geo_study, synth_dataset
from .records import (ReplicationResult, SummaryTable, emit_histogram, fraction_within,
                      read_replications_csv, summarize, write_replications_csv,
                      write_summary_csv)
from .toy_study import run_toy_cbm, run_toy_grd, toy_start_set, toy_truth

__all__ = ["DEFAULTS", "ExperimentConfig", "PilotArtifact", "ReplicationResult", "SummaryTable",
           "emit_histogram", "fraction_within", "read_replications_csv", "run_geo_pilot",
           "run_geo_study", "run_toy_cbm", "run_toy_grd", "summarize", "synth_dataset",
           "toy_start_set", "toy_truth", "write_replications_csv", "write_summary_csv"]
