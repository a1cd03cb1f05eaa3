"""Latent linear (Koopman) tracking control with conformal error bounds."""

from .conformal import (BoundInputs, BoundProfile, CalibrationResult,
                        conformal_quantile, delta_r, empirical_coverage,
                        estimate_lipschitz, forward_score_crdr,
                        forward_score_nfc, latent_bound_profile, state_bound,
                        trajectory_bound, union_bound_delta)
from .contraction import ContractionReport, metric_at, verify_contraction
from .controller import (ControllerSpec, CrdrSolution, crdr_reduce, crdr_step,
                         nfc_input, synthesize_metric, verify_lmi)
from .dubins import (CRDR, NFC, DubinsState, ReferenceTrajectory,
                     TrajectoryLog, circle_reference, collect_episodes,
                     dubins_step, observe, rollout, saturate_omega)
from .errors import ConfigError, NumericalError, SolverError, SynthesisError
from .lifting import (Decoder, Dictionary, LiftedModel, decode,
                      fit_linear_decoder, identity_augmented, lift,
                      lift_jacobian, projection_decoder, radial_basis,
                      round_trip_residual, train_encoder_decoder)
from .sysid import (IdentificationConfig, TransitionDataset,
                    controllability_loss, controllability_matrix, fit_edmd,
                    fit_regularized, prediction_loss, residual,
                    spectral_radius)

__version__ = "0.1.0"
