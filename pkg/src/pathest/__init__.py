"""Joint multi-dimensional wireless multipath parameter estimation.

Core pipeline: synthesize or ingest a frequency-domain channel tensor,
peel paths off strongest-first (successive cancellation), then refine all
paths jointly by iterated per-path re-estimation until the parameter
vector stabilizes. Calibration utilities handle hardware phase errors,
and the localization layer turns calibrated paths into positions.
"""

from .signal_model import (SPEED_OF_LIGHT, ArrayGeometry, ChannelTensor,
                           NoiseSpec, PathParams, SamplingGrid, TrainingField,
                           apply_cyclic_delay, apply_htltf_mapping,
                           estimate_channel_htltf, remove_cyclic_delay,
                           steering_rx, steering_tx, superpose,
                           synthesize_path)
from .estimator import (SearchGrid, ZValue, coherent_gain, estimate_alpha,
                        estimate_cd, estimate_cd_traced, estimate_grid,
                        estimate_sequential, sweep_z, z_function)
from .resolver import (EstimateReport, ResolverConfig, reconstruct, refine,
                       resolve, sic_initialize)
from .calibration import (CalibrationProfile, CfoEstimate, PhaseOffsets,
                          align_sfo_sto, anchor_relative_tof,
                          apply_phase_offsets, direct_path_index,
                          fit_snapshot_slopes, inject_cfo, inject_sfo_sto,
                          remove_cfo, subtract_direct_doppler)
from .localization import (Deployment, GeometryError, LocateResult, TargetFix,
                           classify_mobility, forward_path, locate_all,
                           locate_reflector)
from .baselines import MusicResult, baseline_joint_2d, baseline_music_1d
from .experiments import (BASIC_RES, BenchSpec, BenchResult,
                          ResolvabilitySpec, ResolvabilityResult, Scenario,
                          case_study_scenario, cable_pair_scenario,
                          diagonal_threshold, doppler_scenario,
                          measure_cd_grid_speedup, random_ensemble,
                          reflector_scenario, run_bench, run_resolvability,
                          two_path_scenario)
from .traceio import (TraceFormatError, read_report, read_trace, read_truth,
                      write_report, write_trace, write_truth)

__version__ = "0.1.0"
