from ._rbmchoice import (
    ConfigError,
    DataError,
    Dataset,
    RunConfig,
    cli,
    crbm_free_energy,
    estimate_mnl,
    fit_statistics,
    generate,
    load_config,
    load_dataset,
    parse_config,
    two_stage,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Dataset",
    "RunConfig",
    "cli",
    "crbm_free_energy",
    "estimate_mnl",
    "fit_statistics",
    "generate",
    "load_config",
    "load_dataset",
    "parse_config",
    "two_stage",
]
