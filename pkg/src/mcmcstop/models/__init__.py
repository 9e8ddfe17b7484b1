from .geo import (PARAMS as GEO_PARAMS, GeoData, GeoSampler, GeoState, geo_correlation,
                  geo_log_posterior, geo_mh_step, synth_geo_data)
from .toy import (REFERENCE_TOY, ToyData, ToyGibbsChain, ToyState, toy_exact_draw, toy_gibbs_chain,
                  toy_gibbs_step, toy_true_means)

__all__ = ["GEO_PARAMS", "GeoData", "GeoSampler", "GeoState", "REFERENCE_TOY", "ToyData",
           "ToyGibbsChain", "ToyState", "geo_correlation", "geo_log_posterior", "geo_mh_step",
           "synth_geo_data", "toy_exact_draw", "toy_gibbs_chain", "toy_gibbs_step",
           "toy_true_means"]
