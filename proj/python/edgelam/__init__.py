"""Simulation toolkit for large models served and tuned across edge devices."""

from ._core import (
    ConfigError,
    ConstraintError,
    CotInstance,
    CotStep,
    DeviceProfile,
    DomainError,
    Error,
    InfeasibleError,
    InputError,
    RankError,
    ShapeError,
    SizeError,
    TokenBudgetModel,
    add_dp_noise,
    aggregate_hetero,
    bounded_cross_entropy,
    calibrate_casestudy,
    casestudy_sweep,
    comm_latency,
    comp_latency,
    gate_select,
    gram_schmidt,
    orthogonal_project,
    queue_update,
    run_scenario,
    select_devices_and_bandwidth,
    shannon_rate,
    softmax,
    truncate,
    validate_scenario,
    zero_pad,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
