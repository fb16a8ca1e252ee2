"""Quasi-large random sequence CDMA with likelihood ascent search detection."""

from .asymptotics import (LimitPoint, decorr_limit_ber, limit_curves, mf_limit_ber,
                          mmse_limit_ber, q_function, single_user_ber, tanaka_gml_limit_ber)
from .channel import (ChannelInstance, SystemConfig, build_qlrs, gen_spreading, gram,
                      make_instance, transmit)
from .geometry import (ALPHA_STAR, ErrorVector, ame_report, d_gml, d_lml, is_indecomposable,
                       thm1_experiment, thm2_experiment, thm4_experiment)
from .harness import McSummary, TrialPlan, fig1_driver, fig2_driver, fig3_driver, run_trials
from .las import (DetectionResult, LikelihoodState, Schedule, SLASDetector, WSLASDetector,
                  apply_flip, delta_likelihood, gplas_stage, is_lml_point, run_wslas)
from .refdet import (MMSE, MMSEDF, SIC, Decorrelator, ExhaustiveGML, MatchedFilter,
                     decorrelator_detect, gml_exhaustive, make_detector, mf_detect,
                     mmse_detect, mmse_df_detect, sic_detect)

__version__ = "0.1.0"
