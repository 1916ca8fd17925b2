"""Run configuration: one nested YAML (or JSON) file plus CLI overrides."""

import copy
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .experiments import HeadlineConfig, SearchSpec
from .gbm import DEFAULT_SPACE, GbmConfig, Range
from .series import Grid, to_datetime64
from .volindex import IndexParams

LABEL_MODES = ("leak-safe", "strict-paper")


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path
    seed: int
    output_dir: Path
    inputs: dict
    grid: Grid
    index: IndexParams
    ewma_span: int = 12
    lexicon_alpha: float = 15.0
    label_mode: str = "leak-safe"
    window: int = 24
    horizon: int = 1
    train_fraction: float = 0.9
    model: GbmConfig = field(default_factory=GbmConfig)
    search: SearchSpec = None
    importance_repeats: int = 10
    top_k: int = 20
    sweep_windows: list = field(default_factory=lambda: list(range(1, 49)))
    sweep_folds: int = 5

    def input_path(self, key):
        value = self.inputs.get(key)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def headline(self):
        return HeadlineConfig(self.window, self.horizon, self.train_fraction, self.model, self.search,
                              self.importance_repeats, self.seed)

    def hash(self):
        """Digest of everything that can change results (output location excluded)."""
        body = {k: v for k, v in self.raw.items() if k != "output_dir"}
        blob = json.dumps(body, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def _section(raw, name, problems):
    sec = raw.get(name, {})
    if sec is None:
        return {}
    if not isinstance(sec, dict):
        problems.append(f"{name}: expected a mapping")
        return {}
    return sec


def _build(problems, label, factory, **kwargs):
    try:
        return factory(**kwargs)
    except (TypeError, ValueError) as exc:
        problems.append(f"{label}: {exc}")
        return None


def _space(spec, problems):
    if spec is None:
        return None
    space = {}
    for name, v in spec.items():
        if name not in {f.name for f in fields(GbmConfig)}:
            problems.append(f"search.space: unknown hyperparameter {name!r}")
            continue
        integer = name in ("n_stages", "max_depth", "min_samples_leaf", "max_bins")
        if isinstance(v, dict):
            try:
                space[name] = Range(float(v["low"]), float(v["high"]), bool(v.get("log", False)), integer)
                if space[name].low > space[name].high:
                    problems.append(f"search.space.{name}: low exceeds high")
            except (KeyError, TypeError, ValueError):
                problems.append(f"search.space.{name}: expected {{low, high[, log]}}")
        elif isinstance(v, list) and v:
            space[name] = list(v)
        else:
            problems.append(f"search.space.{name}: expected a range mapping or a non-empty list")
    return space


def _windows(spec, problems):
    if isinstance(spec, dict):
        try:
            return list(range(int(spec["start"]), int(spec["stop"]) + 1, int(spec.get("step", 1))))
        except (KeyError, TypeError, ValueError):
            problems.append("sweep.windows: expected {start, stop[, step]} or a list")
            return []
    if isinstance(spec, list) and spec and all(isinstance(w, int) and w >= 1 for w in spec):
        return sorted(set(spec))
    problems.append("sweep.windows: expected a non-empty list of positive integers")
    return []


def apply_overrides(raw, seed=None, paper_compat=False, paper_eq2_minus=False, out=None):
    raw = copy.deepcopy(raw)
    if seed is not None:
        raw["seed"] = seed
    if paper_compat:
        raw.setdefault("labeling", {})["mode"] = "strict-paper"
    if paper_eq2_minus:
        raw.setdefault("index", {})["eq2_minus"] = True
    if out is not None:
        raw["output_dir"] = str(Path(out).resolve())
    return raw


def parse_config(raw, base_dir="."):
    """Validate a config mapping; every problem is collected before raising."""
    problems = []
    base_dir = Path(base_dir)
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a mapping"])

    seed = raw.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool):
        problems.append("seed: required integer (no wall-clock default)")
        seed = 0

    inputs = _section(raw, "inputs", problems)
    for key in ("quotes", "tweets", "trends"):
        if not inputs.get(key):
            problems.append(f"inputs.{key}: required")
    unknown = set(inputs) - {"quotes", "tweets", "trends", "index_price", "lexicon"}
    for key in sorted(unknown):
        problems.append(f"inputs.{key}: unknown input")

    g = _section(raw, "grid", problems)
    grid = None
    try:
        start, end = to_datetime64(g["start"]), to_datetime64(g["end"])
        interval = np.timedelta64(int(round(float(g.get("interval_minutes", 5)) * 60)), "s")
        if not start < end:
            problems.append("grid: start must precede end")
        elif interval <= np.timedelta64(0, "s"):
            problems.append("grid.interval_minutes: must be positive")
        elif (end - start).astype(np.int64) % interval.astype(np.int64):
            problems.append("grid: interval does not divide the span")
        else:
            grid = Grid(start, end, interval)
    except (KeyError, TypeError, ValueError) as exc:
        problems.append(f"grid: needs start, end (ISO-8601) and interval_minutes ({exc})")

    idx = _section(raw, "index", problems)
    index = _build(problems, "index", IndexParams, **idx)

    sig = _section(raw, "signals", problems)
    span = sig.get("ewma_span", 12)
    if not isinstance(span, int) or span < 1:
        problems.append("signals.ewma_span: integer >= 1")
    alpha = sig.get("lexicon_alpha", 15.0)
    if not isinstance(alpha, (int, float)) or alpha <= 0:
        problems.append("signals.lexicon_alpha: must be > 0")

    lab = _section(raw, "labeling", problems)
    mode = lab.get("mode", "leak-safe")
    if mode not in LABEL_MODES:
        problems.append(f"labeling.mode: one of {LABEL_MODES}")

    ds = _section(raw, "dataset", problems)
    window, horizon = ds.get("window", 24), ds.get("horizon", 1)
    frac = ds.get("train_fraction", 0.9)
    if not isinstance(window, int) or window < 1:
        problems.append("dataset.window: integer >= 1")
    if not isinstance(horizon, int) or horizon < 1:
        problems.append("dataset.horizon: integer >= 1")
    if not isinstance(frac, (int, float)) or not 0 < frac < 1:
        problems.append("dataset.train_fraction: must lie in (0, 1)")

    model = _build(problems, "model", GbmConfig, **{**_section(raw, "model", problems), "seed": seed})

    search = None
    if raw.get("search") is not None:
        s = _section(raw, "search", problems)
        space = _space(s.get("space"), problems)
        trials, folds = s.get("trials", 20), s.get("folds", 5)
        if not isinstance(trials, int) or trials < 1:
            problems.append("search.trials: integer >= 1")
        if not isinstance(folds, int) or folds < 2:
            problems.append("search.folds: integer >= 2")
        search = SearchSpec(trials, space if space else dict(DEFAULT_SPACE), folds)

    imp = _section(raw, "importance", problems)
    repeats, top_k = imp.get("repeats", 10), imp.get("top_k", 20)
    if not isinstance(repeats, int) or repeats < 1:
        problems.append("importance.repeats: integer >= 1")

    sw = _section(raw, "sweep", problems)
    windows = _windows(sw.get("windows", {"start": 1, "stop": 48}), problems)
    sweep_folds = sw.get("folds", 5)
    if not isinstance(sweep_folds, int) or sweep_folds < 2:
        problems.append("sweep.folds: integer >= 2")

    out = raw.get("output_dir")
    if not out:
        problems.append("output_dir: required (or pass --out)")

    if problems:
        raise ConfigError(problems)
    out = Path(out)
    return RunConfig(
        raw=raw, base_dir=base_dir, seed=seed,
        output_dir=out if out.is_absolute() else base_dir / out,
        inputs=dict(inputs), grid=grid, index=index, ewma_span=span, lexicon_alpha=float(alpha),
        label_mode=mode, window=window, horizon=horizon, train_fraction=float(frac), model=model,
        search=search, importance_repeats=repeats, top_k=top_k, sweep_windows=windows,
        sweep_folds=sweep_folds,
    )


def load_config(path, **overrides):
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from exc
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: not valid YAML/JSON: {exc}"]) from exc
    return parse_config(apply_overrides(raw or {}, **overrides), path.parent)
