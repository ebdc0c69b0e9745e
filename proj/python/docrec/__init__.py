"""Python bindings for the docrec C++ core.

Records are plain dicts in the same shape as the newline-delimited JSON files the
command line tool writes; images are ``(height, width)`` uint8 arrays with 255 as
background.
"""

import json

from . import _core
from ._core import InvalidInput, NonFiniteLoss, ParseError, default_eps, domains, patchify

__all__ = [
    "InvalidInput",
    "Model",
    "NonFiniteLoss",
    "ParseError",
    "Trainer",
    "default_eps",
    "domains",
    "generate",
    "patchify",
    "record_equal",
    "render",
    "sample",
    "setup",
]


def _dump(record):
    return record if isinstance(record, str) else json.dumps(record)


def generate(domain, seed, config=None):
    """Record drawn by the domain's synthetic engine for ``seed``."""
    return json.loads(_core.generate(domain, seed, _dump(config) if config else ""))


def render(domain, record, style_seed=None):
    """Rasterizes a record; ``style_seed`` samples a rendering style (default: plain strokes)."""
    return _core.render(domain, _dump(record), style_seed)


def sample(domain, seed):
    """(record, image) exactly as training sees sample ``seed``."""
    text, image = _core.sample(domain, seed)
    return json.loads(text), image


def record_equal(domain, a, b, eps=None, ordered=None):
    """Property-graph equality up to ``eps`` (default: 4 pixels on the domain canvas)."""
    return _core.record_equal(domain, _dump(a), _dump(b), -1.0 if eps is None else eps, ordered)


def setup(**overrides):
    """Run setup dict: the defaults with nested ``overrides`` merged in."""
    base = _core.default_setup()
    return json.loads(_core.merge_setup(base, json.dumps(overrides)) if overrides else base)


class Model:
    """A trained network loaded from a checkpoint file."""

    def __init__(self, checkpoint=None, _core_model=None):
        self._m = _core_model if _core_model is not None else _core.Model(checkpoint)

    def transcribe(self, image, max_nodes=-1):
        return json.loads(self._m.transcribe(image, max_nodes))

    def accuracy(self, seed=1_000_000_000, count=100, eps=-1.0):
        return self._m.accuracy(seed, count, eps)

    @property
    def setup(self):
        return json.loads(self._m.setup)

    @property
    def parameters(self):
        return self._m.parameters


class Trainer:
    def __init__(self, setup_dict=None, _core_trainer=None):
        self._t = _core_trainer if _core_trainer is not None else _core.Trainer(json.dumps(setup_dict or {}))

    @classmethod
    def resume(cls, checkpoint):
        return cls(_core_trainer=_core.Trainer.resume(checkpoint))

    def step(self):
        return self._t.step()

    def save(self, path):
        self._t.save(str(path))

    def model(self):
        return Model(_core_model=self._t.model())

    @property
    def steps_done(self):
        return self._t.steps_done

    @property
    def setup(self):
        return json.loads(self._t.setup)
