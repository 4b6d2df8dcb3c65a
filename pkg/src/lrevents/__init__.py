"""Low-rank models of normal behaviour with randomized l-inf event detection."""

from .obsmatrix import (
    EntryKind,
    ObservationMatrix,
    TimeSeriesRecord,
    flatten,
    read_records_csv,
    write_records_csv,
)
from .completion import (
    CompletionNumericalError,
    Factorization,
    FitConfig,
    FitTrace,
    coordinate_delta_L,
    coordinate_delta_R,
    fit,
    objective,
    rmse,
)
from .query import (
    QueryConfig,
    QueryResult,
    exact_membership,
    linf_distance,
    membership,
    sample_coordinates,
    sample_size,
)
from .detect import (
    DetectorModel,
    EvalReport,
    EvalRow,
    calibrate_delta,
    classify,
    evaluate,
)
from .synth import (
    SynthConfig,
    make_events,
    make_ground_truth,
    make_nonevents,
    read_labels_csv,
    row_slice,
    vstack,
    write_labels_csv,
)

__version__ = "0.1.0"
