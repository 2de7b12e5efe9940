"""Traffic classification and long-range dependence analysis for packet captures."""
from ._backend import BACKEND
from .classify import RuleSet, TrafficClass, classify, classify_stream, default_ruleset, load_ruleset
from .estimators import (
    HurstEstimate,
    bucket_h,
    periodogram_estimate,
    rs_estimate,
    sample_acf,
    theoretical_acov,
    variance_time_estimate,
    whittle_estimate,
)
from .ingest import ActivityPeriod, label_activity, parse_packet_log, parse_pcap
from .records import IngestStats, PacketBatch, PacketRecord
from .series import BinnedSeries, aggregate_level, bin_series, sample_mean_var
from .synth import SynthSpec, gen_fgn, gen_iid_gaussian

__version__ = "0.1.0"
