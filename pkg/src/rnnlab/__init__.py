"""Desk-scale laboratory for training and analyzing small recurrent
networks on bracket-matching and counting languages."""

from .languages import (Family, Grammar, grammar_by_name, is_member,
                        CounterMachine, run_counter_machine, built_in_cm,
                        enumerate_members, verify_cm_equivalence)
from .sampling import (DatasetSpec, LabeledString, build_dataset,
                       read_dataset, write_dataset, sample_positive,
                       edit_distance)
from .nn_core import (CELLS, STRATEGIES, initialize, forward_sequence,
                      forward_batch, bptt_gradients, sgd_step,
                      save_checkpoint, load_checkpoint)
from .fixed_points import (Kind, ActivationParams, find_fixed_points,
                           count_fixed_points, critical_weight)
from .precision import PrecisionParams, estimate_nmax, collapse_count
from .trace import TrajectoryTrace, record_trace, counting_statistic
from .harness import (ExperimentConfig, desk_preset, run_training,
                      evaluate, run_experiment, run_sweep)

__version__ = "0.1.0"
