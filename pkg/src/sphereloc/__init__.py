"""Spherical place recognition and hierarchical aerial localization.

The pipeline: render altitude-parameterized spherical views from an
overhead raster, summarize them with yaw-invariant descriptors, recover
relative yaw by spherical correlation, and localize globally with a
coarse-to-fine particle filter (brute-force lattice search as the
baseline). Losses for external descriptor training and a retrieval /
benchmark harness round out the library; the `sphereloc` console script
exposes the same operations as subcommands.
"""

from .descriptor import (
    DescriptorConfig,
    PlaceDescriptor,
    SconvWeights,
    canonical_longitude_shift,
    extract_descriptor,
    generate_weights,
    load_weights,
    save_weights,
    sconv_layers,
    similarity,
)
from .errors import (
    ConfigError,
    ContractError,
    DegenerateInputError,
    FormatError,
    InvalidInputError,
    OutOfBoundsError,
    ShapeMismatchError,
    SphereLocError,
)
from .evaluation import (
    QuerySet,
    build_reference_index,
    export_query_dump,
    ingest_trajectory,
    recall_at_n,
    roc_curve,
    run_benchmark,
    write_report,
)
from .localizer import (
    DescriptorCache,
    HierarchyConfig,
    LocalizationResult,
    Particle,
    ParticleSet,
    PipelineConfig,
    TraceRecord,
    effective_sample_size,
    export_trace_jsonl,
    init_particles,
    localize_bruteforce,
    localize_hierarchical,
    predicted_speedup,
    resample_and_descend,
    weigh_particles,
)
from .losses import (
    FeaturePair,
    GanBatch,
    LossParams,
    TripletTuple,
    cdtm_loss,
    cross_domain_loss,
    euclidean,
    gan_loss,
    individual_loss,
    orth_loss,
    pem_loss,
    recon_loss,
)
from .orientation import YawEstimate, estimate_yaw
from .projection import (
    MATCHING_CAP_DEG,
    OverheadMap,
    Pose,
    RenderSpec,
    load_map,
    read_ppm,
    render_view,
    save_map,
    write_ppm,
)
from .sphere import (
    CorrelationProfile,
    RotationZ,
    SHSpectrum,
    SphericalImage,
    coeff_index,
    degree_energies,
    refine_peak,
    rotate_z,
    sh_forward,
    sh_inverse,
    shift_longitude,
    wrap_angle,
    yaw_convolve,
)
from .world import SyntheticWorldSpec, generate_world

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractError",
    "CorrelationProfile",
    "DegenerateInputError",
    "DescriptorCache",
    "DescriptorConfig",
    "FeaturePair",
    "FormatError",
    "GanBatch",
    "HierarchyConfig",
    "InvalidInputError",
    "LocalizationResult",
    "LossParams",
    "MATCHING_CAP_DEG",
    "OutOfBoundsError",
    "OverheadMap",
    "Particle",
    "ParticleSet",
    "PipelineConfig",
    "PlaceDescriptor",
    "Pose",
    "QuerySet",
    "RenderSpec",
    "RotationZ",
    "SHSpectrum",
    "SconvWeights",
    "ShapeMismatchError",
    "SphereLocError",
    "SphericalImage",
    "SyntheticWorldSpec",
    "TraceRecord",
    "TripletTuple",
    "YawEstimate",
    "build_reference_index",
    "canonical_longitude_shift",
    "cdtm_loss",
    "coeff_index",
    "cross_domain_loss",
    "degree_energies",
    "effective_sample_size",
    "estimate_yaw",
    "euclidean",
    "export_query_dump",
    "export_trace_jsonl",
    "extract_descriptor",
    "gan_loss",
    "generate_weights",
    "generate_world",
    "individual_loss",
    "ingest_trajectory",
    "init_particles",
    "load_map",
    "load_weights",
    "localize_bruteforce",
    "localize_hierarchical",
    "orth_loss",
    "pem_loss",
    "predicted_speedup",
    "read_ppm",
    "recall_at_n",
    "recon_loss",
    "refine_peak",
    "render_view",
    "resample_and_descend",
    "roc_curve",
    "rotate_z",
    "run_benchmark",
    "save_map",
    "save_weights",
    "sconv_layers",
    "sh_forward",
    "sh_inverse",
    "shift_longitude",
    "similarity",
    "weigh_particles",
    "wrap_angle",
    "write_ppm",
    "write_report",
    "yaw_convolve",
]
