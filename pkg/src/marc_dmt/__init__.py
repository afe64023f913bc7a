"""Diversity-multiplexing tradeoff of dynamic decode-and-forward and hybrid
DDF/amplify-and-forward on the two-user multiple-access relay channel."""

from .channel_mc import McConfig, estimate_pout, fit_diversity
from .codeword_sim import ProtocolMode, error_rate, generate_codebooks, run_trial
from .dmt_formulas import (
    d_ddf_infinite,
    d_dest_outage,
    d_hdaf,
    d_hdaf_modified,
    d_maf,
    d_out,
    d_relay_decision,
)
from .piecewise import INF, DmtCurve, pointwise_min, sample_to_table

__version__ = "0.1.0"


def __getattr__(name):
    # keep scikit-learn out of the import path until a fit needs it
    if name == "DiversityRegressor":
        from .estimators import DiversityRegressor

        return DiversityRegressor
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
