"""Conservative counterfactual curves and the effects built from them."""
from .conservative import (ConservativeCurve, conditional_conservative_curve, conservative_curve,
                           conservative_curves, impute_binary)
from .counterfactual import (CdfField, dr_learner_cdf, eif_barycenter_cdf, eif_cdf, eif_transport,
                             one_step_cdf_discrete, one_step_cdf_field, plugin_cdf_field)
from .data import DataFormatError, Dataset, read_csv
from .dist1d import Dist1D, cdf_at, from_samples, quantile_at
from .effects import (EffectEstimate, contrast_effect, differential_effect_plugin, eif_quadratic,
                      infinitesimal_effect, quadratic_effect_onestep, quadratic_effect_plugin,
                      velocity_field)
from .inference import Band, HulcInterval, PipelineConfig, bootstrap_band, hulc_groups, hulc_interval
from .nuisance import KernelNuisance, fit_kernel_cond_cdf, fit_propensity
from .transport import (Coupling, MonotoneMaxLaw, antitone_map, barycenter,
                        conservative_psi_lower_binary, covariance_bounds, fh_cdf_bounds,
                        fh_difference_cdf_bounds, markov_chain_coupling, nutz_max_monotone,
                        ot_map_1d, w2_distance)

__version__ = "0.1.0"
