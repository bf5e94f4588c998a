"""Layer specifications: the serializable architecture vocabulary."""

from __future__ import annotations

from dataclasses import dataclass, fields


@dataclass(frozen=True)
class Conv2DSpec:
    filters: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    padding: str = "valid"

    def __post_init__(self):
        if self.filters < 1:
            raise ValueError("filters must be >= 1")
        if self.kernel_h < 1 or self.kernel_w < 1:
            raise ValueError("kernel dims must be >= 1")
        if self.stride != 1:
            raise ValueError("only stride 1 is supported")
        if self.padding != "valid":
            raise ValueError("only 'valid' padding is supported")


@dataclass(frozen=True)
class BatchNormSpec:
    momentum: float = 0.1
    epsilon: float = 1e-5

    def __post_init__(self):
        if not 0.0 < self.momentum <= 1.0:
            raise ValueError("momentum must be in (0, 1]")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class LstmSpec:
    hidden: int
    return_sequences: bool = False

    def __post_init__(self):
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")


@dataclass(frozen=True)
class DenseSpec:
    units: int

    def __post_init__(self):
        if self.units < 1:
            raise ValueError("units must be >= 1")


@dataclass(frozen=True)
class DropoutSpec:
    rate: float

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError("rate must be in [0, 1)")


@dataclass(frozen=True)
class ReluSpec:
    pass


@dataclass(frozen=True)
class SoftmaxSpec:
    pass


@dataclass(frozen=True)
class TimeReshapeSpec:
    """Turn conv maps (C, H, W) into an H-step sequence of C*W features."""


_TAGS = {
    "conv2d": Conv2DSpec,
    "batchnorm": BatchNormSpec,
    "lstm": LstmSpec,
    "dense": DenseSpec,
    "dropout": DropoutSpec,
    "relu": ReluSpec,
    "softmax": SoftmaxSpec,
    "time_reshape": TimeReshapeSpec,
}
_TAG_OF = {cls: tag for tag, cls in _TAGS.items()}


def spec_tag(spec) -> str:
    return _TAG_OF[type(spec)]


def spec_to_obj(spec) -> dict:
    obj = {"type": spec_tag(spec)}
    for f in fields(spec):
        obj[f.name] = getattr(spec, f.name)
    return obj


def spec_from_obj(obj: dict):
    if not isinstance(obj, dict) or "type" not in obj:
        raise ValueError(f"layer spec must be an object with a 'type' key, got {obj!r}")
    tag = obj["type"]
    if tag not in _TAGS:
        raise ValueError(f"unknown layer type {tag!r}")
    kwargs = {k: v for k, v in obj.items() if k != "type"}
    return _TAGS[tag](**kwargs)
