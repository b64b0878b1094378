"""Experiment orchestration: instances, runs, and CSV emission.

An experiment is a grid of (bandit instance) x (algorithm) cells.  Every
cell draws its randomness from a stream split by (instance id, algorithm
label), so adding or dropping algorithms never perturbs the other cells.
The runner emits one row per checkpoint per cell; aggregation across
instances is deliberately left to downstream tooling so raw per-instance
results stay auditable.

The config file is flat ``key = value`` text with repeated ``[algorithm]``
blocks; see docs/config-format.md for the grammar.  Unknown keys are hard
errors.
"""

from __future__ import annotations

import concurrent.futures
import csv
import io
from dataclasses import dataclass, replace

from .bandit import (
    BanditInstance,
    BernoulliExact,
    RegretTrace,
    TruncatedGaussian,
    default_checkpoints,
    run_batched_se,
    run_dp_se_baseline,
)
from .errors import ConfigError, InvalidParams, SchemaError
from .protocol import Mechanism, TrustModel
from .rng import RngStream

__all__ = [
    "SCHEMA_TAG",
    "AlgorithmSpec",
    "ExperimentConfig",
    "ResultRow",
    "generate_instance",
    "run_experiment",
    "rows_to_csv",
    "write_csv",
    "read_csv",
    "parse_config",
    "load_config",
    "paper_grid_config",
]

SCHEMA_TAG = "dpbandit.v1"

EASY_RANGE = (0.25, 0.75)
HARD_RANGE = (0.45, 0.55)

DEFAULT_REWARD_STD = 0.1


@dataclass(frozen=True)
class AlgorithmSpec:
    """One algorithm column of the experiment grid."""

    label: str
    trust: TrustModel
    mechanism: Mechanism
    epsilon: float
    s: float = 1.0

    def __post_init__(self):
        if not self.label or any(c in self.label for c in ",\n\r"):
            raise InvalidParams(f"label must be nonempty and comma/newline free: {self.label!r}")
        if not (self.epsilon > 0):
            raise InvalidParams(f"epsilon must be positive, got {self.epsilon}")
        if not (self.s >= 1):
            raise InvalidParams(f"scaling factor must be >= 1, got {self.s}")


@dataclass(frozen=True)
class ExperimentConfig:
    K: int
    T: int
    instance_kind: str  # "easy" | "hard" | "explicit"
    algorithms: tuple[AlgorithmSpec, ...]
    p: float = 0.1
    num_instances: int = 1
    seed: int = 0
    checkpoints: tuple[int, ...] | None = None
    explicit_means: tuple[float, ...] | None = None
    reward_kind: str = "gaussian"  # "gaussian" | "bernoulli"
    reward_std: float = DEFAULT_REWARD_STD
    output_path: str | None = None

    def __post_init__(self):
        if self.K < 2:
            raise InvalidParams(f"need K >= 2 arms, got {self.K}")
        if self.T < 2 * self.K:
            raise InvalidParams(f"horizon {self.T} too small for K = {self.K}")
        if self.instance_kind not in ("easy", "hard", "explicit"):
            raise InvalidParams(f"unknown instance kind {self.instance_kind!r}")
        if self.instance_kind == "explicit":
            if self.explicit_means is None or len(self.explicit_means) != self.K:
                raise InvalidParams("explicit instances need exactly K means")
        if self.reward_kind not in ("gaussian", "bernoulli"):
            raise InvalidParams(f"unknown reward kind {self.reward_kind!r}")
        if self.num_instances < 1:
            raise InvalidParams("num_instances must be >= 1")
        if not self.algorithms:
            raise InvalidParams("at least one algorithm block is required")
        keys = {(a.label, a.epsilon, a.s) for a in self.algorithms}
        if len(keys) != len(self.algorithms):
            raise InvalidParams("algorithm (label, epsilon, s) triples must be unique")
        if not (0 < self.p <= 1):
            raise InvalidParams(f"confidence level p must lie in (0, 1], got {self.p}")
        if self.checkpoints is not None:
            cps = tuple(int(t) for t in self.checkpoints)
            if any(t < 1 for t in cps) or any(y <= x for x, y in zip(cps, cps[1:])):
                raise InvalidParams("checkpoints must be strictly increasing and >= 1")
            if cps[-1] > self.T:
                raise InvalidParams("last checkpoint exceeds the horizon")
            object.__setattr__(self, "checkpoints", cps)

    def resolved_checkpoints(self) -> tuple[int, ...]:
        if self.checkpoints is not None:
            return self.checkpoints
        return default_checkpoints(self.T)


@dataclass(frozen=True)
class ResultRow:
    instance_id: int
    seed: int
    label: str
    epsilon: float
    s: float
    t: int
    cumulative_regret: float
    time_avg_regret: float
    eliminated_optimal: bool


_COLUMNS = (
    "instance_id",
    "seed",
    "label",
    "epsilon",
    "s",
    "t",
    "cumulative_regret",
    "time_avg_regret",
    "eliminated_optimal",
)


def generate_instance(
    kind: str, K: int, rng: RngStream, reward_std: float = DEFAULT_REWARD_STD
) -> BanditInstance:
    """Draw K arm means uniformly from the kind's interval.

    Easy instances use [0.25, 0.75]; hard instances use [0.45, 0.55].
    Rewards are Gaussians with those means, clipped to [0, 1].
    """
    if K < 2:
        raise InvalidParams(f"need K >= 2 arms, got {K}")
    if kind == "easy":
        lo, hi = EASY_RANGE
    elif kind == "hard":
        lo, hi = HARD_RANGE
    else:
        raise InvalidParams(f"unknown instance kind {kind!r}")
    means = rng.generator.uniform(lo, hi, size=K)
    return BanditInstance(tuple(float(m) for m in means), TruncatedGaussian(reward_std))


def _build_instance(config: ExperimentConfig, instance_id: int, root: RngStream) -> BanditInstance:
    if config.instance_kind == "explicit":
        kind: BernoulliExact | TruncatedGaussian
        if config.reward_kind == "bernoulli":
            kind = BernoulliExact()
        else:
            kind = TruncatedGaussian(config.reward_std)
        return BanditInstance(config.explicit_means, kind)
    instance = generate_instance(
        config.instance_kind, config.K, root.split("instance", instance_id), config.reward_std
    )
    if config.reward_kind == "bernoulli":
        instance = BanditInstance(instance.means, BernoulliExact())
    return instance


def _run_cell(
    config: ExperimentConfig, instance: BanditInstance, instance_id: int, alg: AlgorithmSpec
) -> list[ResultRow]:
    root = RngStream(config.seed)
    # keyed by the whole algorithm identity so same-label cells at different
    # privacy levels stay independent, and adding algorithms never perturbs
    # existing cells
    cell_stream = root.split(
        "cell", instance_id, alg.label, f"eps={alg.epsilon!r}", f"s={alg.s!r}"
    )
    cps = config.resolved_checkpoints()
    try:
        if alg.mechanism is Mechanism.CONTINUOUS_LAPLACE_CENTRAL:
            trace: RegretTrace = run_dp_se_baseline(
                instance, alg.epsilon, config.T, config.p, cell_stream, checkpoints=cps
            )
        else:
            trace = run_batched_se(
                instance,
                alg.trust,
                alg.mechanism,
                alg.epsilon,
                alg.s,
                config.T,
                config.p,
                cell_stream,
                checkpoints=cps,
            )
    except Exception as exc:
        raise type(exc)(
            f"cell (instance={instance_id}, label={alg.label!r}): {exc}"
        ) from exc
    rows = []
    for t, reg in trace.checkpoints:
        rows.append(
            ResultRow(
                instance_id=instance_id,
                seed=config.seed,
                label=alg.label,
                epsilon=alg.epsilon,
                s=alg.s,
                t=t,
                cumulative_regret=reg,
                time_avg_regret=reg / t,
                eliminated_optimal=trace.eliminated_optimal,
            )
        )
    return rows


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> list[ResultRow]:
    """Run every (instance, algorithm) cell and return sorted result rows.

    Rows are sorted by (instance_id, label, t), so the output is independent
    of scheduling; ``jobs > 1`` fans the cells out over processes.
    """
    root = RngStream(config.seed)
    instances = {
        i: _build_instance(config, i, root) for i in range(config.num_instances)
    }
    cells = [
        (i, alg) for i in range((config.num_instances)) for alg in config.algorithms
    ]
    rows: list[ResultRow] = []
    if jobs <= 1:
        for i, alg in cells:
            rows.extend(_run_cell(config, instances[i], i, alg))
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_run_cell, config, instances[i], i, alg) for i, alg in cells
            ]
            for fut in futures:
                rows.extend(fut.result())
    rows.sort(key=lambda r: (r.instance_id, r.label, r.epsilon, r.s, r.t))
    return rows


def _format_float(x: float) -> str:
    return f"{x:.9g}"


def rows_to_csv(rows) -> str:
    """Render rows as the versioned CSV (schema tag line, header, data)."""
    buf = io.StringIO()
    buf.write(f"schema={SCHEMA_TAG}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_COLUMNS)
    for r in rows:
        writer.writerow(
            [
                r.instance_id,
                r.seed,
                r.label,
                _format_float(r.epsilon),
                _format_float(r.s),
                r.t,
                _format_float(r.cumulative_regret),
                _format_float(r.time_avg_regret),
                "true" if r.eliminated_optimal else "false",
            ]
        )
    return buf.getvalue()


def write_csv(path: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(rows))


def read_csv(path_or_text: str, from_text: bool = False) -> list[ResultRow]:
    """Parse a results CSV back into rows, validating the schema tag."""
    text = path_or_text
    if not from_text:
        with open(path_or_text, "r", encoding="utf-8") as fh:
            text = fh.read()
    lines = text.splitlines()
    if not lines or lines[0].strip() != f"schema={SCHEMA_TAG}":
        raise SchemaError(f"missing or unexpected schema tag (want schema={SCHEMA_TAG})")
    reader = csv.reader(io.StringIO("\n".join(lines[1:])))
    try:
        header = tuple(next(reader))
    except StopIteration:
        raise SchemaError("schema tag present but no header row") from None
    if header != _COLUMNS:
        raise SchemaError(f"unexpected columns: {header}")
    rows = []
    for record in reader:
        if not record:
            continue
        if len(record) != len(_COLUMNS):
            raise SchemaError(f"row has {len(record)} fields, want {len(_COLUMNS)}")
        if record[8] not in ("true", "false"):
            raise SchemaError(f"eliminated_optimal must be true/false, got {record[8]!r}")
        rows.append(
            ResultRow(
                instance_id=int(record[0]),
                seed=int(record[1]),
                label=record[2],
                epsilon=float(record[3]),
                s=float(record[4]),
                t=int(record[5]),
                cumulative_regret=float(record[6]),
                time_avg_regret=float(record[7]),
                eliminated_optimal=record[8] == "true",
            )
        )
    return rows


# --- config-file parsing -----------------------------------------------------

_TOP_KEYS = {
    "k",
    "t",
    "instance",
    "means",
    "reward",
    "reward_std",
    "p",
    "instances",
    "seed",
    "checkpoints",
    "out",
}
_ALG_KEYS = {"label", "trust", "mechanism", "epsilon", "s"}

_MECHANISM_NAMES = {m.value: m for m in Mechanism}
_TRUST_NAMES = {t.value: t for t in TrustModel}


def _parse_kv_line(line: str, lineno: int) -> tuple[str, str]:
    if "=" not in line:
        raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
    key, value = line.split("=", 1)
    key, value = key.strip().lower(), value.strip()
    if not key or not value:
        raise ConfigError(f"line {lineno}: empty key or value")
    return key, value


def _to_int(value: str, key: str, lineno: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"line {lineno}: {key} must be an integer, got {value!r}") from None


def _to_float(value: str, key: str, lineno: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"line {lineno}: {key} must be a number, got {value!r}") from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse the flat key=value + [algorithm] block format."""
    top: dict[str, tuple[str, int]] = {}
    algorithms: list[dict[str, tuple[str, int]]] = []
    current: dict[str, tuple[str, int]] | None = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "[algorithm]":
            current = {}
            algorithms.append(current)
            continue
        if line.startswith("["):
            raise ConfigError(f"line {lineno}: unknown section {line!r}")
        key, value = _parse_kv_line(line, lineno)
        scope = current if current is not None else top
        allowed = _ALG_KEYS if current is not None else _TOP_KEYS
        if key not in allowed:
            where = "algorithm block" if current is not None else "top level"
            raise ConfigError(f"line {lineno}: unknown {where} key {key!r}")
        if key in scope:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        scope[key] = (value, lineno)

    def need(scope, key, where):
        if key not in scope:
            raise ConfigError(f"missing required key {key!r} in {where}")
        return scope[key]

    k_val, k_line = need(top, "k", "top level")
    t_val, t_line = need(top, "t", "top level")
    kind_val, kind_line = need(top, "instance", "top level")
    kind = kind_val.lower()
    if kind not in ("easy", "hard", "explicit"):
        raise ConfigError(f"line {kind_line}: instance must be easy, hard, or explicit")

    explicit_means = None
    if "means" in top:
        means_val, means_line = top["means"]
        try:
            explicit_means = tuple(float(v) for v in means_val.split(","))
        except ValueError:
            raise ConfigError(f"line {means_line}: means must be comma-separated numbers") from None
        if kind != "explicit":
            raise ConfigError(f"line {means_line}: means only valid with instance = explicit")

    checkpoints = None
    if "checkpoints" in top:
        cp_val, cp_line = top["checkpoints"]
        try:
            checkpoints = tuple(int(v) for v in cp_val.split(","))
        except ValueError:
            raise ConfigError(
                f"line {cp_line}: checkpoints must be comma-separated integers"
            ) from None

    if not algorithms:
        raise ConfigError("config declares no [algorithm] blocks")

    specs = []
    for idx, block in enumerate(algorithms):
        where = f"algorithm block {idx + 1}"
        label_val, _ = need(block, "label", where)
        trust_val, trust_line = need(block, "trust", where)
        mech_val, mech_line = need(block, "mechanism", where)
        eps_val, eps_line = need(block, "epsilon", where)
        if trust_val.lower() not in _TRUST_NAMES:
            raise ConfigError(f"line {trust_line}: unknown trust model {trust_val!r}")
        if mech_val.lower() not in _MECHANISM_NAMES:
            raise ConfigError(f"line {mech_line}: unknown mechanism {mech_val!r}")
        s_val = block.get("s", ("1", 0))
        try:
            specs.append(
                AlgorithmSpec(
                    label=label_val,
                    trust=_TRUST_NAMES[trust_val.lower()],
                    mechanism=_MECHANISM_NAMES[mech_val.lower()],
                    epsilon=_to_float(eps_val, "epsilon", eps_line),
                    s=_to_float(s_val[0], "s", s_val[1]),
                )
            )
        except InvalidParams as exc:
            raise ConfigError(f"{where}: {exc}") from exc

    def opt_int(key: str, default: int) -> int:
        if key not in top:
            return default
        value, lineno = top[key]
        return _to_int(value, key, lineno)

    def opt_float(key: str, default: float) -> float:
        if key not in top:
            return default
        value, lineno = top[key]
        return _to_float(value, key, lineno)

    reward = top.get("reward", ("gaussian", 0))[0].lower()
    try:
        return ExperimentConfig(
            K=_to_int(k_val, "k", k_line),
            T=_to_int(t_val, "t", t_line),
            instance_kind=kind,
            algorithms=tuple(specs),
            p=opt_float("p", 0.1),
            num_instances=opt_int("instances", 1),
            seed=opt_int("seed", 0),
            checkpoints=checkpoints,
            explicit_means=explicit_means,
            reward_kind=reward,
            reward_std=opt_float("reward_std", DEFAULT_REWARD_STD),
            output_path=top.get("out", (None, 0))[0],
        )
    except InvalidParams as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def paper_grid_config(
    T: int = 200_000,
    num_instances: int = 20,
    seed: int = 0,
    instance_kind: str = "easy",
    epsilons: tuple[float, ...] = (0.1, 0.5, 1.0),
    rdp_scale: float = 10.0,
) -> ExperimentConfig:
    """The reference comparison grid: Dist-DP-SE, Dist-RDP-SE(s), DP-SE at K=10.

    Ten arms, confidence level 0.1, twenty Gaussian instances per epsilon.
    """
    algorithms = []
    for eps in epsilons:
        algorithms.append(
            AlgorithmSpec(
                label="Dist-DP-SE",
                trust=TrustModel.DISTRIBUTED,
                mechanism=Mechanism.DISCRETE_LAPLACE_POLYA,
                epsilon=eps,
            )
        )
        algorithms.append(
            AlgorithmSpec(
                label=f"Dist-RDP-SE(s={rdp_scale:g})",
                trust=TrustModel.DISTRIBUTED,
                mechanism=Mechanism.SKELLAM,
                epsilon=eps,
                s=rdp_scale,
            )
        )
        algorithms.append(
            AlgorithmSpec(
                label="DP-SE",
                trust=TrustModel.CENTRAL,
                mechanism=Mechanism.CONTINUOUS_LAPLACE_CENTRAL,
                epsilon=eps,
            )
        )
    return ExperimentConfig(
        K=10,
        T=T,
        instance_kind=instance_kind,
        algorithms=tuple(algorithms),
        p=0.1,
        num_instances=num_instances,
        seed=seed,
    )
