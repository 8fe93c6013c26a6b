"""Flat ``section.key = value`` experiment configs.

Lines are ``key = value``; ``#`` starts a comment. Every key is validated
before any computation runs and unknown keys are rejected. Keys left out
take the per-experiment defaults listed by ``gpvi list-experiments``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    """A config file that cannot be run; the message names the offending key."""


KINDS = ("density", "blr", "classify4", "regress1d", "solver-compare", "hmc-baseline")
METHODS = ("gpvi", "gpvi-exact", "gpvi-bicgstab", "svgd", "amortized-svgd", "ensemble", "hmc")

KIND_METHODS = {
    "density": ("gpvi", "gpvi-exact", "gpvi-bicgstab", "amortized-svgd"),
    "blr": METHODS,
    "classify4": ("gpvi", "gpvi-exact", "svgd", "amortized-svgd", "ensemble", "hmc"),
    "regress1d": ("gpvi", "gpvi-exact", "svgd", "amortized-svgd", "ensemble", "hmc"),
    "solver-compare": ("gpvi",),
    "hmc-baseline": ("hmc",),
}


def _tuple_of_ints(text: str) -> tuple[int, ...]:
    text = text.strip()
    if text in ("", "none", "()"):
        return ()
    return tuple(int(p) for p in text.replace(",", " ").split())


@dataclass
class ExperimentConfig:
    kind: str = "blr"
    method: str = "gpvi"
    seed: int = 0
    output_dir: str = ""
    # data
    d: int = 3
    n_data: int = 100
    data_batch: int = 0          # 0 = full batch
    # generator
    k: int = 0                   # 0 = kind default
    gen_hidden: tuple[int, ...] = ()
    lam: float = 1.0
    init_scale: float = 1.0      # multiplies the Glorot bound of g's weights
    # training
    steps: int = 50_000
    batch_size: int = 10
    lr: float = 1e-3
    checkpoint_every: int = 500
    eval_samples: int = 100
    # helper
    helper_width: int = 10
    helper_lr: float = 1e-4
    helper_residual: str = "jvp"
    # BNN
    bnn_hidden: tuple[int, ...] = (10, 10)
    prior_std: float = 1.0
    noise_std: float = 0.2
    grid_step: float = 0.5
    # HMC
    hmc_leapfrog: int = 25
    hmc_step_size: float = 5e-4
    hmc_total: int = 25_000
    hmc_burn_in: int = 20_000
    hmc_thinning: int = 1
    hmc_chains: int = 1
    threads: int = 1
    explicit: set = field(default_factory=set, repr=False, compare=False)


# config key -> (field, parser)
KEYS = {
    "experiment.kind": ("kind", str),
    "experiment.method": ("method", str),
    "experiment.seed": ("seed", int),
    "experiment.output_dir": ("output_dir", str),
    "data.d": ("d", int),
    "data.n": ("n_data", int),
    "data.batch": ("data_batch", int),
    "generator.k": ("k", int),
    "generator.hidden": ("gen_hidden", _tuple_of_ints),
    "generator.lambda": ("lam", float),
    "generator.init_scale": ("init_scale", float),
    "train.steps": ("steps", int),
    "train.batch_size": ("batch_size", int),
    "train.lr": ("lr", float),
    "train.checkpoint_every": ("checkpoint_every", int),
    "eval.samples": ("eval_samples", int),
    "helper.width": ("helper_width", int),
    "helper.lr": ("helper_lr", float),
    "helper.residual": ("helper_residual", str),
    "bnn.hidden": ("bnn_hidden", _tuple_of_ints),
    "bnn.prior_std": ("prior_std", float),
    "bnn.noise_std": ("noise_std", float),
    "eval.grid_step": ("grid_step", float),
    "hmc.leapfrog_steps": ("hmc_leapfrog", int),
    "hmc.step_size": ("hmc_step_size", float),
    "hmc.total": ("hmc_total", int),
    "hmc.burn_in": ("hmc_burn_in", int),
    "hmc.thinning": ("hmc_thinning", int),
    "hmc.chains": ("hmc_chains", int),
    "run.threads": ("threads", int),
}
FIELD_TO_KEY = {f: k for k, (f, _) in KEYS.items()}

# Per-kind defaults that differ from the dataclass defaults.
KIND_DEFAULTS = {
    "blr": {"n_data": 300, "helper_width": 32},
    "solver-compare": {"n_data": 300, "helper_width": 32},
    "density": {"d": 2, "steps": 50_000, "batch_size": 20, "helper_width": 32,
                "init_scale": 0.1},
    "classify4": {"steps": 50_000, "batch_size": 20, "eval_samples": 20, "k": 32,
                  "gen_hidden": (64, 64), "helper_width": 128, "data_batch": 0},
    "regress1d": {"steps": 50_000, "batch_size": 20, "eval_samples": 100, "k": 32,
                  "gen_hidden": (32, 32), "helper_width": 128, "bnn_hidden": (50,),
                  "n_data": 80},
    "hmc-baseline": {"d": 2, "hmc_step_size": 0.1},
}

REQUIRED = ("experiment.kind",)


def parse_text(text: str) -> dict[str, str]:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r} (line {lineno})")
        if key in raw:
            raise ConfigError(f"duplicate key {key!r} (line {lineno})")
        raw[key] = value
    return raw


def build_config(raw: dict[str, str]) -> ExperimentConfig:
    for key in REQUIRED:
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
    values = {}
    for key, text in raw.items():
        name, parse = KEYS[key]
        try:
            values[name] = parse(text)
        except ValueError as exc:
            raise ConfigError(f"{key}: cannot parse {text!r} ({exc})") from None
    kind = values["kind"]
    if kind not in KINDS:
        raise ConfigError(f"experiment.kind: unknown kind {kind!r}; expected one of {KINDS}")
    merged = {**KIND_DEFAULTS[kind], **values}
    if kind == "hmc-baseline":
        merged.setdefault("method", "hmc")
    cfg = ExperimentConfig(**merged)
    cfg.explicit = set(values)
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return build_config(parse_text(text))


def _require(cond: bool, name: str, msg: str):
    if not cond:
        raise ConfigError(f"{FIELD_TO_KEY[name]}: {msg}")


def validate(cfg: ExperimentConfig) -> None:
    _require(cfg.method in METHODS, "method", f"unknown method {cfg.method!r}")
    _require(cfg.method in KIND_METHODS[cfg.kind], "method",
             f"method {cfg.method!r} not available for kind {cfg.kind!r}")
    _require(cfg.seed >= 0, "seed", "must be >= 0")
    _require(cfg.d >= 1, "d", "must be >= 1")
    _require(cfg.n_data >= 1, "n_data", "must be >= 1")
    _require(cfg.data_batch >= 0, "data_batch", "must be >= 0 (0 = full batch)")
    _require(cfg.k >= 0, "k", "must be >= 0 (0 = kind default)")
    _require(all(w > 0 for w in cfg.gen_hidden), "gen_hidden", "widths must be positive")
    _require(cfg.lam > 0, "lam", "must be positive")
    _require(cfg.init_scale >= 0, "init_scale", "must be >= 0")
    _require(cfg.steps >= 1, "steps", "must be >= 1")
    _require(cfg.batch_size >= 2, "batch_size", "must be >= 2")
    _require(cfg.lr >= 0, "lr", "must be >= 0")
    _require(cfg.checkpoint_every >= 1, "checkpoint_every", "must be >= 1")
    _require(cfg.eval_samples >= 2, "eval_samples", "must be >= 2")
    _require(cfg.helper_width >= 1, "helper_width", "must be >= 1")
    _require(cfg.helper_lr >= 0, "helper_lr", "must be >= 0")
    _require(cfg.helper_residual in ("jvp", "vjp"), "helper_residual", "must be jvp or vjp")
    _require(len(cfg.bnn_hidden) >= 1 and all(w > 0 for w in cfg.bnn_hidden),
             "bnn_hidden", "need at least one positive hidden width")
    _require(cfg.prior_std > 0, "prior_std", "must be positive")
    _require(cfg.noise_std > 0, "noise_std", "must be positive")
    _require(cfg.grid_step > 0, "grid_step", "must be positive")
    _require(cfg.hmc_leapfrog >= 1, "hmc_leapfrog", "must be >= 1")
    _require(cfg.hmc_step_size > 0, "hmc_step_size", "must be positive")
    _require(cfg.hmc_total >= 1, "hmc_total", "must be >= 1")
    _require(0 <= cfg.hmc_burn_in < cfg.hmc_total, "hmc_burn_in", "need 0 <= burn_in < total")
    _require(cfg.hmc_thinning >= 1, "hmc_thinning", "must be >= 1")
    _require(cfg.hmc_chains >= 1, "hmc_chains", "must be >= 1")
    _require(cfg.threads >= 1, "threads", "must be >= 1")
    if cfg.kind in ("density", "blr", "solver-compare"):
        _require(cfg.k <= cfg.d, "k", f"must be <= data.d ({cfg.d})")


def _show(value) -> str:
    if isinstance(value, tuple):
        return " ".join(str(v) for v in value) or "none"
    return str(value)


def echo(cfg: ExperimentConfig) -> str:
    """The fully resolved config in the input format."""
    lines = [f"{key} = {_show(getattr(cfg, name))}" for key, (name, _) in KEYS.items()]
    return "\n".join(lines) + "\n"


def describe_kinds() -> str:
    base = ExperimentConfig()
    out = ["Experiment kinds (config keys are 'section.key = value'):", ""]
    for kind in KINDS:
        out.append(f"{kind}")
        out.append(f"  methods: {', '.join(KIND_METHODS[kind])}")
        out.append(f"  required: {', '.join(REQUIRED)}")
        shown = ", ".join(f"{FIELD_TO_KEY[k]}={_show(v)}" for k, v in sorted(KIND_DEFAULTS[kind].items()))
        out.append(f"  defaults differing from the global ones: {shown or '(none)'}")
        out.append("")
    out.append("Global defaults:")
    for key, (name, _) in KEYS.items():
        out.append(f"  {key} = {_show(getattr(base, name))}")
    return "\n".join(out) + "\n"
