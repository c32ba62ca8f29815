"""Mobility analytics for call-detail-record traces."""

from .config import StudyConfig
from .errors import CdrError
from .frame import IntrinsicFrame, inertia_tensor, principal_angle, to_intrinsic
from .ingest import (
    ActivityType,
    CdrRecord,
    SubscriberIndex,
    Tower,
    TowerMap,
    build_subscriber_index,
    classify_day,
    load_index,
    parse_cdr_file,
    read_towers,
)
from .spatial import VoronoiPartition, build_sectors, density_table
from .stats import (
    displacements,
    empirical_distribution,
    fit_exponential,
    fit_truncated_power_law,
    gyration_radii,
    inter_event_times,
    radius_of_gyration,
)
from .synth import GeneratorConfig, generate_population, sample_truncated_power_law
from .trajectory import Trajectory

__version__ = "0.1.0"
