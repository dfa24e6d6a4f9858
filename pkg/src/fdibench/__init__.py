"""fdibench: false data injection attacks on DC state estimation, and the
machine-learned detectors that catch them.

The package builds linearized grid measurement models from bundled network
files, generates observable and unobservable injection attacks, trains a
family of batch / semi-supervised / ensemble / online classifiers on the
resulting labeled measurement clusters, and sweeps attack sparsity to compare
every detector against the classical chi-square residual test.
"""

from .attacks import (AttackSpec, LabeledDataset, Trial, assemble_dataset,
                      generate_trial, make_unobservable_attack, separation_stats)
from .batch import (KernelDescriptor, KnnModel, PerceptronModel, S3vmModel,
                    SlrModel, SvmModel, grid_search_svm, lambda_max,
                    train_knn, train_perceptron, train_s3vm, train_slr,
                    train_svm)
from .dc_grid import (DcModel, EstimationResult, build_dc_model,
                      chi2_inverse_cdf, residual_detect, wls_estimate)
from .errors import (CaseParseError, CaseStructureError, CaseValidationError,
                     ConfigError, ContractError, DiagnosticError, FdiBenchError,
                     GenerationError, InfeasibleAttackError, ModelError,
                     TrainingError)
from .fusion import (AdaboostModel, MklModel, StumpModel, train_adaboost,
                     train_mkl)
from .matpower import (BUILTIN_NAMES, BranchRecord, BusRecord, CaseSystem,
                       load_builtin, parse_case, serialize_case)
from .metrics import METRIC_NAMES, Confusion, MetricsReport, score
from .online import (ONLINE_ALGORITHMS, LearningCurve, OnlineSlrState,
                     OnlineSvmState, OpState, OpwmState, make_state, run_stream)
from .serialization import dump_model, load_model
from .sweep import (DETECTOR_NAMES, SweepConfig, SweepResult, export_results,
                    run_sweep, sve_as_classifier)

__version__ = "1.0.0"

__all__ = [name for name in dir() if not name.startswith("_")]
