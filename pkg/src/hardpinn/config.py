"""Run configuration: a strict JSON schema with line-anchored error messages.

Example::

    {
      "problem": {"name": "poisson1d", "params": {"a": 2.0}},
      "mode": "hard",
      "network": {"main_hidden": [50, 50, 50], "sub_hidden": [20, 20, 20]},
      "points": {"n_f": 128},
      "adam": {"iters": 10000, "lr": 0.001},
      "seed": 0,
      "output_dir": "runs/poisson1d"
    }

Unknown keys are rejected at every level. ``hard`` mode forbids boundary and
initial point counts (those conditions are built into the ansatz); the soft
modes require them.
"""

from __future__ import annotations

import json
import os
import re
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError, model_validator

OUTPUT_ENV = "HARDPINN_OUTPUT_DIR"


class ConfigError(ValueError):
    """Invalid configuration; the message names the file and line where possible."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ProblemConfig(_Strict):
    name: Optional[str] = None
    factory: Optional[str] = Field(None, description="'module:function' returning a ProblemSpec")
    params: dict = Field(default_factory=dict)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.name is None) == (self.factory is None):
            raise ValueError("give exactly one of 'name' or 'factory'")
        return self


class NetworkConfig(_Strict):
    main_hidden: Optional[tuple[PositiveInt, ...]] = None
    sub_hidden: Optional[tuple[PositiveInt, ...]] = None


class PointsConfig(_Strict):
    n_f: PositiveInt
    n_b: Optional[PositiveInt] = None
    n_i: Optional[PositiveInt] = None


class HardnessConfig(_Strict):
    beta_s: PositiveFloat = 5.0
    beta_t: PositiveFloat = 10.0
    n_probe: PositiveInt = 4096


class DistanceConfig(_Strict):
    mode: Literal["exact", "anchored", "softmin"] = "anchored"
    beta: PositiveFloat = 4.0


class AdamConfig(_Strict):
    iters: int = Field(5000, ge=0)
    lr: PositiveFloat = 1e-3
    scheduler: bool = True
    factor: float = Field(0.5, gt=0, lt=1)
    patience: PositiveInt = 100
    threshold: float = Field(1e-4, ge=0)
    min_lr: float = Field(1e-6, ge=0)


class LbfgsConfig(_Strict):
    max_iters: int = Field(0, ge=0)
    memory: PositiveInt = 50


class TestConfig(_Strict):
    n_points: PositiveInt = 2048
    seed: int = 12345
    reference: Optional[str] = None


class AblationConfig(_Strict):
    plain_mode: Literal["soft", "soft_extra_fields"] = "soft"
    extra_mode: Literal["soft", "soft_extra_fields"] = "soft_extra_fields"
    constant_lr: bool = True
    window: PositiveInt = 500


class RunConfig(_Strict):
    problem: ProblemConfig
    mode: Literal["hard", "soft", "soft_extra_fields"] = "hard"
    network: NetworkConfig = NetworkConfig()
    points: PointsConfig
    hardness: HardnessConfig = HardnessConfig()
    distance: DistanceConfig = DistanceConfig()
    adam: AdamConfig = AdamConfig()
    lbfgs: LbfgsConfig = LbfgsConfig()
    test: TestConfig = TestConfig()
    ablation: AblationConfig = AblationConfig()
    seed: int = 0
    output_dir: str = "runs/default"
    checkpoint_every: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _points_match_mode(self):
        p = self.points
        if self.mode == "hard":
            bad = [k for k in ("n_b", "n_i") if getattr(p, k) is not None]
            if bad:
                raise ValueError(
                    f"mode 'hard' builds boundary and initial conditions into the ansatz; remove points.{bad[0]}"
                )
        elif p.n_b is None:
            raise ValueError(f"mode {self.mode!r} needs points.n_b")
        return self

    def with_overrides(self, **changes) -> "RunConfig":
        """Copy with nested fields replaced, e.g. ``hardness={"beta_s": 2.0}``."""
        data = self.model_dump(mode="json")
        for key, val in changes.items():
            if isinstance(val, dict):
                data[key] = {**data[key], **val}
            else:
                data[key] = val
        return RunConfig.model_validate(data)

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"

    def resolved_output_dir(self, env=None) -> Path:
        env = os.environ if env is None else env
        return Path(env.get(OUTPUT_ENV) or self.output_dir)


# ---------------------------------------------------------------------------
# parsing with line numbers


def _key_lines(text: str) -> dict:
    """Map each JSON path (tuple of keys / indices) to the line where it starts."""
    lines = {(): 1}
    stack = []  # entries: [kind, path, pending key or index]
    i, line, n = 0, 1, len(text)

    def current_path():
        if not stack:
            return ()
        kind, path, key = stack[-1]
        return path + (key,)

    expect_key = False
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
        elif c == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 2 if text[j] == "\\" else 1
            s = json.loads(text[i : j + 1]) if j < n else text[i + 1 : j]
            if expect_key and stack and stack[-1][0] == "obj":
                stack[-1][2] = s
                lines[current_path()] = line
                expect_key = False
            i = j
        elif c in "{[":
            path = current_path()
            lines.setdefault(path, line)
            if c == "{":
                stack.append(["obj", path, None])
                expect_key = True
            else:
                stack.append(["arr", path, 0])
                lines[current_path()] = line
        elif c in "}]":
            if stack:
                stack.pop()
            expect_key = False
        elif c == ",":
            if stack and stack[-1][0] == "obj":
                expect_key = True
            elif stack:
                stack[-1][2] += 1
                lines[current_path()] = line
        elif not c.isspace() and stack and stack[-1][0] == "arr":
            lines.setdefault(current_path(), line)
        i += 1
    return lines


def _line_for(loc, lines):
    loc = tuple(loc)
    while loc and loc not in lines:
        loc = loc[:-1]
    return lines.get(loc, 1)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}:1: the configuration must be a JSON object")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        lines = _key_lines(text)
        msgs = []
        for err in exc.errors():
            loc = tuple(p for p in err["loc"] if not (isinstance(p, str) and p.startswith("function-after")))
            msg = err["msg"].removeprefix("Value error, ")
            if not loc:
                # cross-field checks name the offending key in the message
                m = re.search(r"points\.\w+", msg)
                loc = tuple(m.group(0).split(".")) if m else loc
            where = ".".join(str(p) for p in loc) or "<root>"
            msgs.append(f"{source}:{_line_for(loc, lines)}: {where}: {msg}")
        raise ConfigError("\n".join(msgs)) from None


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read configuration ({exc.strerror})") from None
    return parse_config(text, str(path))
