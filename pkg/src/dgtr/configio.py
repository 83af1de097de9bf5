"""Plain-text configuration files.

Format: one ``key = value`` assignment per line; ``#`` starts a comment
(full-line or trailing); blank lines are ignored.  Keys are namespaced
(``train.base_lr``) and every key has a typed default below.  Unknown keys
and malformed values are rejected rather than ignored, so typos fail fast.

``render_config`` produces the canonical echo (schema order, all values
materialized) that is embedded in checkpoints and report headers.
"""

from __future__ import annotations

from .data_synth import SyntheticDataSpec
from .errors import ConfigError
from .model import ModelConfig
from .objectives import LossWeights
from .trainer import TrainConfig

# key -> (type, default); insertion order defines the canonical echo order.
SCHEMA: dict[str, tuple[str, object]] = {
    "data.sequences": ("int", 4),
    "data.frames": ("int", 16),
    "data.seed": ("int", 7),
    "data.noise_sigma": ("float", 0.01),
    "data.freq_min": ("float", 0.5),
    "data.freq_max": ("float", 2.0),
    "data.amplitude": ("float", 0.3),
    "model.feature_dim": ("int", 2048),
    "model.seq_len": ("int", 16),
    "model.use_gma": ("bool", True),
    "model.use_ldr": ("bool", True),
    "gma.layers": ("int", 2),
    "gma.heads": ("int", 8),
    "gma.dim": ("int", 512),
    "gma.ffn_dim": ("int", 1024),
    "ldr.window": ("int", 3),
    "ldr.kernel": ("int", 3),
    "ldr.hidden": ("int", 512),
    "ldr.ffn_dim": ("int", 1024),
    "ldr.blocks": ("int", 1),
    "ldr.residual": ("bool", False),
    "reg.hidden": ("int", 1024),
    "reg.iters": ("int", 3),
    "train.seed": ("int", 0),
    "train.batch": ("int", 8),
    "train.base_lr": ("float", 1e-4),
    "train.warmup_steps": ("int", 10),
    "train.epochs": ("int", 5),
    "train.steps": ("int", 0),
    "loss.w_shape": ("float", 0.06),
    "loss.w_pose": ("float", 60.0),
    "loss.w_3d": ("float", 300.0),
    "loss.w_2d": ("float", 300.0),
    "loss.w_vel3d": ("float", 300.0),
    "loss.w_vel2d": ("float", 300.0),
}


def default_config() -> dict:
    return {key: default for key, (_, default) in SCHEMA.items()}


def _parse_value(key: str, text: str):
    kind = SCHEMA[key][0]
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            if text == "true":
                return True
            if text == "false":
                return False
            raise ValueError(text)
    except ValueError:
        pass
    raise ConfigError(f"config: cannot parse '{text}' as {kind} for key '{key}'")


def parse_config_text(text: str) -> dict:
    """Parse config text into a fully materialized key -> value dict.

    Raises:
        ConfigError: On unknown keys, duplicate keys, or malformed lines.
    """
    values = default_config()
    seen: set[str] = set()
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got '{raw_line.strip()}'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in SCHEMA:
            raise ConfigError(f"config line {lineno}: unknown key '{key}'")
        if key in seen:
            raise ConfigError(f"config line {lineno}: duplicate key '{key}'")
        seen.add(key)
        values[key] = _parse_value(key, value)
    return values


def parse_config_file(path: str) -> dict:
    try:
        with open(path) as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc


def _render_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def render_config(values: dict) -> str:
    """Canonical echo: every key in schema order, one per line."""
    return "\n".join(f"{key} = {_render_value(values[key])}" for key in SCHEMA) + "\n"


def build_train_config(values: dict) -> TrainConfig:
    """Assemble a TrainConfig (with canonical echo) from a parsed dict."""
    extra = set(values) - set(SCHEMA)
    if extra:
        raise ConfigError(f"config: unknown keys {sorted(extra)}")
    full = default_config()
    full.update(values)
    if full["train.batch"] < 1:
        raise ConfigError(f"config: train.batch must be >= 1, got {full['train.batch']}")
    if full["train.base_lr"] <= 0:
        raise ConfigError(f"config: train.base_lr must be > 0, got {full['train.base_lr']}")
    data = SyntheticDataSpec(
        num_sequences=full["data.sequences"],
        seq_len=full["data.frames"],
        seed=full["data.seed"],
        noise_sigma=full["data.noise_sigma"],
        freq_min=full["data.freq_min"],
        freq_max=full["data.freq_max"],
        amplitude=full["data.amplitude"],
        feature_dim=full["model.feature_dim"],
    )
    model = ModelConfig.create(
        feature_dim=full["model.feature_dim"],
        seq_len=full["model.seq_len"],
        use_gma=full["model.use_gma"],
        use_ldr=full["model.use_ldr"],
        gma_layers=full["gma.layers"],
        gma_heads=full["gma.heads"],
        gma_dim=full["gma.dim"],
        gma_ffn_dim=full["gma.ffn_dim"],
        ldr_window=full["ldr.window"],
        ldr_kernel=full["ldr.kernel"],
        ldr_hidden=full["ldr.hidden"],
        ldr_ffn_dim=full["ldr.ffn_dim"],
        ldr_blocks=full["ldr.blocks"],
        ldr_residual=full["ldr.residual"],
        reg_hidden=full["reg.hidden"],
        reg_iters=full["reg.iters"],
    )
    weights = LossWeights(
        shape=full["loss.w_shape"],
        pose=full["loss.w_pose"],
        joints3d=full["loss.w_3d"],
        joints2d=full["loss.w_2d"],
        vel3d=full["loss.w_vel3d"],
        vel2d=full["loss.w_vel2d"],
    )
    return TrainConfig(
        data=data,
        model=model,
        weights=weights,
        seed=full["train.seed"],
        batch=full["train.batch"],
        base_lr=full["train.base_lr"],
        warmup_steps=full["train.warmup_steps"],
        epochs=full["train.epochs"],
        steps=full["train.steps"],
        echo=render_config(full),
    )
