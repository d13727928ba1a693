"""Event-driven models of address-event arbitration fabrics and asynchronous
CAM routing memories.

The package splits into five layers:

* :mod:`aercore.kernel`      -- deterministic discrete-event kernel, subtick
  time base, four-phase handshake channels, trace export.
* :mod:`aercore.workloads`   -- seeded spike-event generators.
* :mod:`aercore.arbitration` -- the five arbitration architectures: exact
  closed-form latency/area models plus event-driven simulation.
* :mod:`aercore.pipeline`    -- the hierarchical encoding pipeline and its
  timing-rule checkers.
* :mod:`aercore.cam`         -- the asynchronous CAM: match semantics,
  completion detection (delay line vs current sensing), feedback control,
  speculative sense, energy accounting, and timing checkers.

:mod:`aercore.bench` assembles reproducible comparison tables and reports;
:mod:`aercore.cli` exposes everything on the command line.
"""

from .arbitration import (
    ALL_KINDS,
    AddressEvent,
    ArbiterConfig,
    ArbiterInstance,
    ArchitectureKind,
    InvalidN,
    TwoInputArbiter,
    analytic_burst_latency,
    analytic_sparse_latency,
    arbiter_count,
    build,
    measure_burst,
    measure_sparse,
    simulate,
    two_input_arbitrate,
)
from .cam import (
    CamArray,
    CloseCause,
    CompletionMode,
    Cscd,
    DelayLine,
    EnergyLedger,
    EnergyParams,
    SearchResult,
    calibrate_delay_line,
    check_cam_timing,
    energy_of_search,
    speculative_close_probability,
    worst_case_current_margin,
)
from .kernel import (
    SUBTICKS_PER_UNIT,
    Event,
    HandshakeChannel,
    HsAction,
    Kernel,
    Phase,
    ProtocolViolation,
    SchedulingInPast,
    TimingViolation,
    TraceRecord,
    advance_handshake,
    export_trace_csv,
    to_units,
    units,
)
from .pipeline import (
    AckGeneratorInputs,
    AckGeneratorState,
    CDBlock,
    CdKind,
    DualRailValue,
    HatPipeline,
    MaskingStage,
    NotOneHot,
    PipelinePacket,
    ack_generator_step,
    c_element,
    check_timing,
    completion_detect,
    mask_requests,
    qdi_encode,
    run_pipeline,
)
from .workloads import Burst, LocalizedBurst, Poisson, Sparse, SplitMix64, Workload, generate

__version__ = "0.1.0"
