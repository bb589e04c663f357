"""Scenario configuration: presets, validation and the INI-style scenario file.

A scenario file is plain ``configparser`` text. Every section is optional; a
file overrides the built-in preset named by ``[world] scenario_kind``::

    [world]
    scenario_kind = rural
    n_drones = 2

    [targets.A]
    throughput_mbps = 600.0

    [agents.madqn]
    batch_size = 64

Unknown sections or keys are rejected so that a typo can never silently fall
back to a default.
"""
import configparser
import dataclasses
import enum
import io
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Tuple, Union


class ConfigError(ValueError):
    """Malformed or inconsistent scenario configuration."""


class UserClass(enum.IntEnum):
    """Slice membership. The integer value doubles as an array index; lower
    value means higher priority (A outranks B outranks C)."""

    A = 0
    B = 1
    C = 2

    @property
    def priority(self) -> int:
        return 3 - int(self)

    def outranks(self, other: "UserClass") -> bool:
        return self.priority > UserClass(other).priority


CLASSES = (UserClass.A, UserClass.B, UserClass.C)


@dataclass(frozen=True)
class SliceTargets:
    latency_ms: float
    throughput_mbps: float
    sinr_db: float


@dataclass(frozen=True)
class ChannelParams:
    tx_power: float = 1.0
    gain_tx: float = 1.0
    gain_rx: float = 1.0
    noise_power: float = 1e-3
    pathloss_exp_los: float = 2.2
    pathloss_exp_nlos: float = 3.5
    shadowing_sigma_los_db: float = 4.0
    shadowing_sigma_nlos_db: float = 6.0
    rician_k_db: float = 9.0
    los_prob_d0: float = 4.0
    los_prob_slope: float = 1.0
    ref_distance: float = 1.0
    min_distance: float = 1e-3


@dataclass(frozen=True)
class EnergyParams:
    hover_cost: float = 0.1
    velocity_cost_coeff: float = 0.5
    per_user_cost: float = 0.02
    recharge_rate: float = 2.0
    full_charge_level: float = 90.0


@dataclass(frozen=True)
class MetricParams:
    bandwidth_mhz: float = 36.0
    latency_eps: float = 1e-3
    latency_kappa: float = 0.05
    light_speed: float = 3e8
    # best-case SINR used to pin the lower end of the latency rescaling
    sinr_cap_db: float = 60.0
    latency_min_ms: float = 1.0
    latency_max_ms: float = 40.0


@dataclass(frozen=True)
class MAPPOParams:
    gamma: float = 0.99
    tau: float = 0.005
    clip: float = 0.2
    lr: float = 1e-3
    hidden: Tuple[int, ...] = (128, 128)
    batch_size: int = 128
    horizon: int = 1024
    epochs: int = 10
    gae_lambda: float = 0.95
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    init_log_std: float = -0.5
    max_grad_norm: float = 0.5
    value_norm: bool = True
    state_std: bool = True
    reward_transform: str = "none"


@dataclass(frozen=True)
class MADDPGParams:
    gamma: float = 1.0
    tau: float = 0.01
    epsilon: float = 0.1
    lr: float = 1e-3
    hidden: Tuple[int, ...] = (128, 128)
    batch_size: int = 128
    buffer_size: int = 50000
    alpha: float = 0.6
    beta_start: float = 0.4
    beta_end: float = 1.0
    priority_eps: float = 1e-6
    learn_every: int = 1
    max_grad_norm: float = 10.0
    reward_transform: str = "none"


@dataclass(frozen=True)
class MADQNParams:
    gamma: float = 0.01
    tau: float = 0.01
    eps_start: float = 1.0
    eps_min: float = 0.5
    eps_decay: float = 0.9
    lr: float = 1e-3
    hidden: Tuple[int, ...] = (128, 128)
    batch_size: int = 128
    buffer_size: int = 50000
    alpha: float = 0.6
    beta_start: float = 0.4
    beta_end: float = 1.0
    priority_eps: float = 1e-6
    n_points: int = 3
    learn_every: int = 1
    max_grad_norm: float = 10.0
    reward_transform: str = "none"


@dataclass(frozen=True)
class AgentParams:
    mappo: MAPPOParams = field(default_factory=MAPPOParams)
    maddpg: MADDPGParams = field(default_factory=MADDPGParams)
    madqn: MADQNParams = field(default_factory=MADQNParams)


TABLE_TARGETS = (
    SliceTargets(latency_ms=1.0, throughput_mbps=500.0, sinr_db=25.0),
    SliceTargets(latency_ms=10.0, throughput_mbps=350.0, sinr_db=15.0),
    SliceTargets(latency_ms=40.0, throughput_mbps=200.0, sinr_db=10.0),
)


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_kind: str = "rural"
    grid_extent: Tuple[float, float] = (10.0, 10.0)
    n_drones: int = 4
    comm_range: float = 5.0
    coverage_range: float = 3.0
    h_min: float = 1.0
    h_max: float = 10.0
    v_max: float = 1.0
    dt: float = 1.0
    d_min: float = 0.5
    delta_station: float = 1.0
    b_min: float = 10.0
    e_max: float = 100.0
    station_init: Tuple[float, float, float] = (2.5, 1.0, 1.0)
    user_count_ranges: Tuple[Tuple[int, int], ...] = ((1, 90), (1, 50), (1, 40))
    user_speed_range: Tuple[float, float] = (1.0, 3.0)
    unit_length_m: float = 100.0
    move_prob: float = 0.5
    drone_capacity: int = 30
    targets: Tuple[SliceTargets, ...] = TABLE_TARGETS
    weights: Tuple[float, float, float] = (4.5, 2.5, 1.5)
    reward_weights: Tuple[float, float] = (4.0, 1.0)
    lambda_tradeoff: float = 1.0
    max_steps: int = 1000
    seed: int = 0
    channel: ChannelParams = field(default_factory=ChannelParams)
    energy: EnergyParams = field(default_factory=EnergyParams)
    metrics: MetricParams = field(default_factory=MetricParams)
    agents: AgentParams = field(default_factory=AgentParams)

    def __post_init__(self):
        validate(self)

    @property
    def obs_dim(self) -> int:
        return 6 * self.n_drones + 12

    @property
    def step_limit(self) -> float:
        """Largest displacement a drone may make in one step."""
        return self.v_max * self.dt

    def with_overrides(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)


def validate(cfg: ScenarioConfig) -> None:
    def need(ok, msg):
        if not ok:
            raise ConfigError(msg)

    need(cfg.scenario_kind in ("urban", "rural"), f"scenario_kind must be urban or rural, got {cfg.scenario_kind!r}")
    need(len(cfg.grid_extent) == 2 and all(g > 0 for g in cfg.grid_extent), "grid_extent must be two positive reals")
    need(cfg.n_drones >= 1, "n_drones must be a positive integer")
    need(cfg.comm_range > 0, "comm_range must be positive")
    need(cfg.coverage_range > 0, "coverage_range must be positive")
    need(cfg.h_min < cfg.h_max, f"h_min ({cfg.h_min}) must be below h_max ({cfg.h_max})")
    need(cfg.v_max > 0 and cfg.dt > 0, "v_max and dt must be positive")
    need(cfg.d_min > 0, "d_min must be positive")
    need(cfg.delta_station > 0, "delta_station must be positive")
    need(0 < cfg.b_min < 100, "b_min must lie in (0, 100)")
    need(cfg.e_max == 100.0, "e_max is fixed at 100 (battery is a percentage)")
    need(len(cfg.station_init) == 3, "station_init must be a 3D position")
    need(len(cfg.user_count_ranges) == 3, "user_count_ranges needs one interval per class")
    for cls, (lo, hi) in zip(CLASSES, cfg.user_count_ranges):
        need(0 <= lo <= hi, f"user count range for class {cls.name} is not a valid interval")
    lo, hi = cfg.user_speed_range
    need(0 <= lo <= hi, "user_speed_range is not a valid interval")
    need(cfg.unit_length_m > 0, "unit_length_m must be positive")
    need(0.0 <= cfg.move_prob <= 1.0, "move_prob must be a probability")
    need(cfg.drone_capacity >= 0, "drone_capacity must be non-negative (0 = unlimited)")
    need(len(cfg.targets) == 3, "targets needs one entry per class")
    for cls, t in zip(CLASSES, cfg.targets):
        need(t.latency_ms > 0 and t.throughput_mbps > 0 and t.sinr_db > 0,
             f"targets for class {cls.name} must be strictly positive")
    wa, wb, wc = cfg.weights
    need(wa > wb > wc > 0, f"class weights must satisfy w_A > w_B > w_C > 0, got {cfg.weights}")
    need(all(w > 0 for w in cfg.reward_weights), "reward weights R_w, E_w must be positive")
    need(cfg.lambda_tradeoff >= 0, "lambda_tradeoff must be non-negative")
    need(cfg.max_steps >= 1, "max_steps must be positive")
    need(cfg.seed >= 0, "seed must be unsigned")
    ch = cfg.channel
    need(ch.pathloss_exp_nlos >= ch.pathloss_exp_los > 0, "path-loss exponents must satisfy nlos >= los > 0")
    need(ch.shadowing_sigma_los_db >= 0 and ch.shadowing_sigma_nlos_db >= 0, "shadowing sigmas must be non-negative")
    need(ch.tx_power > 0 and ch.gain_tx > 0 and ch.gain_rx > 0 and ch.noise_power > 0,
         "tx_power, gains and noise_power must be positive")
    need(ch.ref_distance > 0 and ch.min_distance > 0, "ref_distance and min_distance must be positive")
    need(all(getattr(cfg.energy, f.name) >= 0 for f in dataclasses.fields(EnergyParams)),
         "energy parameters must be non-negative")
    need(cfg.b_min < cfg.energy.full_charge_level <= 100.0, "full_charge_level must lie in (b_min, 100]")
    m = cfg.metrics
    need(m.bandwidth_mhz > 0 and m.latency_eps > 0 and m.latency_kappa >= 0 and m.light_speed > 0,
         "metric constants must be positive")
    need(m.latency_min_ms < m.latency_max_ms, "latency band is empty")


URBAN_CHANNEL = ChannelParams(
    shadowing_sigma_los_db=6.0, shadowing_sigma_nlos_db=8.0, rician_k_db=5.0,
    los_prob_d0=1.0, los_prob_slope=3.0,
)
RURAL_CHANNEL = ChannelParams(
    shadowing_sigma_los_db=4.0, shadowing_sigma_nlos_db=6.0, rician_k_db=9.0,
    los_prob_d0=4.0, los_prob_slope=1.0,
)

PRESETS: Dict[str, ScenarioConfig] = {
    "rural": ScenarioConfig(
        scenario_kind="rural", grid_extent=(10.0, 10.0), comm_range=5.0, coverage_range=3.0,
        move_prob=0.5, channel=RURAL_CHANNEL,
    ),
    "urban": ScenarioConfig(
        scenario_kind="urban", grid_extent=(3.0, 3.0), comm_range=2.0, coverage_range=1.5,
        move_prob=0.9, channel=URBAN_CHANNEL,
    ),
}


def reduced_rural(n_drones=2, users=(7, 7, 6), max_steps=200, drone_capacity=8, seed=0) -> ScenarioConfig:
    """Small rural world used for desk-scale learning checks."""
    return replace(
        PRESETS["rural"], n_drones=n_drones, max_steps=max_steps, seed=seed,
        user_count_ranges=tuple((n, n) for n in users), drone_capacity=drone_capacity,
    )


# ---------------------------------------------------------------------------
# file format

def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return value
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    raise TypeError(f"cannot serialise {type(value).__name__}")


def _parse_like(default, text: str, where: str):
    text = text.strip()
    try:
        if isinstance(default, str):
            return text
        if isinstance(default, bool):
            if text.lower() not in ("true", "false"):
                raise ValueError("expected true or false")
            return text.lower() == "true"
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            parts = [p for p in text.split(",") if p.strip()]
            if default and isinstance(default[0], tuple):
                raise TypeError
            proto = default[0] if default else 0.0
            if len(default) and len(parts) != len(default) and not isinstance(proto, int):
                raise ValueError(f"expected {len(default)} values")
            return tuple(_parse_like(proto, p, where) for p in parts)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: cannot parse {text!r} ({exc or 'bad literal'})") from None
    raise ConfigError(f"{where}: unsupported field type")


# flat [world] keys that map onto structured ScenarioConfig fields
_WORLD_SPECIAL = {
    "grid_x", "grid_y", "station_x", "station_y", "station_z",
    "users_A_min", "users_A_max", "users_B_min", "users_B_max", "users_C_min", "users_C_max",
    "user_speed_min", "user_speed_max", "weight_A", "weight_B", "weight_C",
    "reward_weight_qos", "reward_weight_energy",
}
_STRUCTURED = {"grid_extent", "station_init", "user_count_ranges", "user_speed_range",
               "targets", "weights", "reward_weights", "channel", "energy", "metrics", "agents"}
_WORLD_PLAIN = [f.name for f in dataclasses.fields(ScenarioConfig) if f.name not in _STRUCTURED]


def _world_items(cfg: ScenarioConfig) -> Dict[str, object]:
    out = {name: getattr(cfg, name) for name in _WORLD_PLAIN}
    out["grid_x"], out["grid_y"] = cfg.grid_extent
    out["station_x"], out["station_y"], out["station_z"] = cfg.station_init
    for cls, (lo, hi) in zip(CLASSES, cfg.user_count_ranges):
        out[f"users_{cls.name}_min"], out[f"users_{cls.name}_max"] = lo, hi
    out["user_speed_min"], out["user_speed_max"] = cfg.user_speed_range
    for cls, w in zip(CLASSES, cfg.weights):
        out[f"weight_{cls.name}"] = w
    out["reward_weight_qos"], out["reward_weight_energy"] = cfg.reward_weights
    return out


def dumps(cfg: ScenarioConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser["world"] = {k: _format(v) for k, v in _world_items(cfg).items()}
    for cls, t in zip(CLASSES, cfg.targets):
        parser[f"targets.{cls.name}"] = {f.name: _format(getattr(t, f.name)) for f in dataclasses.fields(t)}
    for name in ("energy", "channel", "metrics"):
        sub = getattr(cfg, name)
        parser[name] = {f.name: _format(getattr(sub, f.name)) for f in dataclasses.fields(sub)}
    for f in dataclasses.fields(AgentParams):
        sub = getattr(cfg.agents, f.name)
        parser[f"agents.{f.name}"] = {g.name: _format(getattr(sub, g.name)) for g in dataclasses.fields(sub)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def save(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(dumps(cfg))


def _override_dataclass(obj, items, section: str):
    known = {f.name for f in dataclasses.fields(obj)}
    changes = {}
    for key, text in items:
        if key not in known:
            raise ConfigError(f"[{section}] {key}: unknown key")
        changes[key] = _parse_like(getattr(obj, key), text, f"[{section}] {key}")
    return changes


def loads(text: str) -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed scenario file: {exc}") from None

    kind = parser.get("world", "scenario_kind", fallback="rural").strip()
    if kind not in PRESETS:
        raise ConfigError(f"[world] scenario_kind: unknown scenario {kind!r}")
    base = PRESETS[kind]
    changes: Dict[str, object] = {}
    sub_changes: Dict[str, Dict[str, object]] = {"channel": {}, "energy": {}, "metrics": {}}
    target_changes: Dict[int, Dict[str, object]] = {0: {}, 1: {}, 2: {}}
    agent_changes: Dict[str, Dict[str, object]] = {"mappo": {}, "maddpg": {}, "madqn": {}}

    for section in parser.sections():
        items = list(parser.items(section))
        if section == "world":
            world = _world_items(base)
            for key, text in items:
                if key not in world:
                    raise ConfigError(f"[world] {key}: unknown key")
                changes[key] = _parse_like(world[key], text, f"[world] {key}")
        elif section.startswith("targets."):
            name = section.split(".", 1)[1]
            if name not in UserClass.__members__:
                raise ConfigError(f"[{section}]: unknown user class {name!r}")
            idx = int(UserClass[name])
            target_changes[idx] = _override_dataclass(base.targets[idx], items, section)
        elif section in sub_changes:
            sub_changes[section] = _override_dataclass(getattr(base, section), items, section)
        elif section.startswith("agents."):
            name = section.split(".", 1)[1]
            if name not in agent_changes:
                raise ConfigError(f"[{section}]: unknown algorithm {name!r}")
            agent_changes[name] = _override_dataclass(getattr(base.agents, name), items, section)
        else:
            raise ConfigError(f"[{section}]: unknown section")

    def pop(key, default):
        return changes.pop(key, default)

    gx, gy = base.grid_extent
    sx, sy, sz = base.station_init
    ranges = [list(r) for r in base.user_count_ranges]
    for cls in CLASSES:
        ranges[cls][0] = pop(f"users_{cls.name}_min", ranges[cls][0])
        ranges[cls][1] = pop(f"users_{cls.name}_max", ranges[cls][1])
    speed = base.user_speed_range
    weights = list(base.weights)
    for cls in CLASSES:
        weights[cls] = pop(f"weight_{cls.name}", weights[cls])
    rw, ew = base.reward_weights
    structured = dict(
        grid_extent=(pop("grid_x", gx), pop("grid_y", gy)),
        station_init=(pop("station_x", sx), pop("station_y", sy), pop("station_z", sz)),
        user_count_ranges=tuple(tuple(r) for r in ranges),
        user_speed_range=(pop("user_speed_min", speed[0]), pop("user_speed_max", speed[1])),
        weights=tuple(weights),
        reward_weights=(pop("reward_weight_qos", rw), pop("reward_weight_energy", ew)),
        targets=tuple(replace(t, **target_changes[i]) for i, t in enumerate(base.targets)),
        channel=replace(base.channel, **sub_changes["channel"]),
        energy=replace(base.energy, **sub_changes["energy"]),
        metrics=replace(base.metrics, **sub_changes["metrics"]),
        agents=AgentParams(**{k: replace(getattr(base.agents, k), **v) for k, v in agent_changes.items()}),
    )
    return replace(base, **changes, **structured)


def load_scenario(source: Union[str, Path, ScenarioConfig]) -> ScenarioConfig:
    """Resolve a preset name (``urban``/``rural``) or a scenario file path."""
    if isinstance(source, ScenarioConfig):
        return source
    if isinstance(source, str) and source in PRESETS:
        return PRESETS[source]
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from None
    return loads(text)
