"""Estimators: per-experience IV/OLS profiles and the learning fits built on them."""
from .correlate import (MarginWeights, OlsPaths, WolsResult, iv_margin_weights,
                        ols_correlate_profile, weighted_ols_profile)
from .iv import (CovariateSpec, ExperienceEstimates, FirstStageResult, FlatnessTest,
                 experience_profile, first_stage, flatness_test, reduced_form, wald_at)
from .late import LateFit, late_learning_fit, late_profile
from .nlls import MixingFit, SpeedFit, fit_mixing, joint_fit, ols_speed_fit, sequential_fit
from .partial import (PartialIdResult, partial_bounds, partial_point_id,
                      partial_point_id_transparent)

__all__ = [
    "CovariateSpec", "ExperienceEstimates", "FirstStageResult", "FlatnessTest", "LateFit",
    "MarginWeights", "MixingFit", "OlsPaths", "PartialIdResult", "SpeedFit", "WolsResult",
    "experience_profile", "first_stage", "fit_mixing", "flatness_test", "iv_margin_weights",
    "joint_fit", "late_learning_fit", "late_profile", "ols_correlate_profile", "ols_speed_fit",
    "partial_bounds", "partial_point_id", "partial_point_id_transparent", "reduced_form",
    "sequential_fit", "wald_at", "weighted_ols_profile",
]
