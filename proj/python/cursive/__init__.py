"""Python access to the cursive handwriting toolkit.

JSON documents cross the native boundary as strings; the wrappers here turn
them into plain Python objects.
"""

import json

from . import _cursive
from ._cursive import ArtifactError, ConfigError, GrammarError, SchemaError, decode, encode, validate_grammar, word_bank

__all__ = [
    "ArtifactError",
    "ConfigError",
    "GrammarError",
    "Model",
    "SchemaError",
    "decode",
    "encode",
    "ingest",
    "project_config",
    "render_svg",
    "synth_words",
    "validate_grammar",
    "word_bank",
]


def ingest(records):
    """Validates records (a JSON string or a list of dicts) and returns them in canonical orientation."""
    text = records if isinstance(records, str) else json.dumps(records)
    return json.loads(_cursive.ingest_json(text))


def synth_words(words, seed):
    return json.loads(_cursive.synth_words(list(words), seed))


def project_config(path=None, overrides=()):
    return json.loads(_cursive.project_config(path, list(overrides)))


def render_svg(page, line_width=40):
    return _cursive.render_svg(json.dumps(page), line_width)


class Model:
    """A trained checkpoint ready for generation."""

    def __init__(self, checkpoint):
        self._model = _cursive.Model(str(checkpoint))

    @property
    def config_hash(self):
        return self._model.config_hash

    def generate(self, text, temperature=1.0, seed=0, max_tokens=None, line_width=40):
        return json.loads(self._model.generate(text, temperature, seed, max_tokens, line_width))

    def regenerate(self, page, word_indices, temperature=1.0, seed=0, max_tokens=None, line_width=40):
        out = self._model.regenerate(json.dumps(page), list(word_indices), temperature, seed, max_tokens, line_width)
        return json.loads(out)
