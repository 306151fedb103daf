from ._kernels import BACKENDS, HAVE_NUMBA, default_backend
from .gain import (
    balanced_qbers,
    delta_qber_sp_wcp,
    gain_qber_sp,
    gain_qber_wcp,
    invert_wcp_gain,
    p_states_from_records,
)
from .models import (
    DEFAULT_DARK_YIELD,
    DEFAULT_E_DET,
    DEFAULT_ETA_BOB,
    DEFAULT_MU,
    CountRecord,
    DetectorParams,
    SourceKind,
    SourceModel,
)
from .simulation import (
    calibrate_transmittance,
    cell_stream,
    click_probabilities,
    expected_table,
    make_generator,
    records_by_basis,
    run_experiment,
    run_honest,
    simulate_counts,
)
