"""Python access to the autoloop data-collection core."""

import json as _json
import os as _os

from . import _autoloop
from ._autoloop import (
    AutoloopError,
    InvariantError,
    IoError,
    ParseError,
    UnknownTemplate,
    fsm_step,
    record_seed_demos,
    templates,
)

__all__ = [
    "AutoloopError", "InvariantError", "IoError", "ParseError", "UnknownTemplate",
    "fsm_step", "record_seed_demos", "templates", "spawn_scene", "describe_scene",
    "plan", "validate_plan", "run_campaign", "read_episodes", "replay",
]


def spawn_scene(template, seed):
    return _json.loads(_autoloop.spawn_scene(template, seed))


def describe_scene(template, seed):
    return _json.loads(_autoloop.describe_scene(template, seed))


def plan(template, seed, library):
    return _json.loads(_autoloop.plan(template, seed, _os.fspath(library)))


def validate_plan(plan):
    """LIFO violations of a plan (dict or JSON text) as (reverse index, reason) pairs."""
    text = plan if isinstance(plan, str) else _json.dumps(plan)
    return _autoloop.validate_plan(text)


def run_campaign(config):
    """Runs a campaign from a config file path or a config dict.

    Relative paths in a dict are taken from the current directory.
    """
    if isinstance(config, dict):
        out = _autoloop.run_campaign_json(_json.dumps(config))
    else:
        out = _autoloop.run_campaign_file(_os.fspath(config))
    return _json.loads(out)


def read_episodes(path):
    """Returns (episodes, corruptions); corruptions are (line, message) pairs."""
    lines, bad = _autoloop.read_episodes(_os.fspath(path))
    return [_json.loads(l) for l in lines], bad


def replay(episode, seed=None):
    text = episode if isinstance(episode, str) else _json.dumps(episode)
    return _json.loads(_autoloop.replay(text, seed))
