from analysis.campaign import campaign_summary, composition_trend, film_summary
from analysis.photoconductance import IVRecord, MeasurementRecord, measure, photoconductance
from analysis.spatial_map import SpatialMap, spatial_map
from analysis.synthetic import conductance_model, synth_iv

__all__ = [
    "campaign_summary",
    "composition_trend",
    "film_summary",
    "IVRecord",
    "MeasurementRecord",
    "measure",
    "photoconductance",
    "SpatialMap",
    "spatial_map",
    "conductance_model",
    "synth_iv",
]
