"""Shared fixtures: an on-disk cache for the expensive acceptance artifacts.

Acceptance experiments (rate curves at J=2000, a 200k-step training run)
are deterministic functions of their parameter dictionaries, so their
outputs are cached under tests/_cache keyed by a hash of the parameters.
Delete the directory to force a full recomputation.
"""

import hashlib
import json
import os
import pathlib

import numpy as np
import pytest

CACHE_DIR = pathlib.Path(__file__).parent / "_cache"


def param_key(params: dict) -> str:
    return hashlib.sha256(
        json.dumps(params, sort_keys=True).encode()).hexdigest()[:20]


@pytest.fixture(scope="session")
def artifact_cache():
    CACHE_DIR.mkdir(exist_ok=True)

    class Cache:
        def npz(self, name: str, params: dict, builder):
            """dict of arrays, built once per parameter set."""
            path = CACHE_DIR / f"{name}-{param_key(params)}.npz"
            if path.exists():
                with np.load(path, allow_pickle=False) as data:
                    return dict(data)
            out = builder()
            np.savez_compressed(path, **out)
            return out

        def json(self, name: str, params: dict, builder):
            path = CACHE_DIR / f"{name}-{param_key(params)}.json"
            if path.exists():
                with open(path) as fh:
                    return json.load(fh)
            out = builder()
            with open(path, "w") as fh:
                json.dump(out, fh)
            return out

        def file(self, name: str, params: dict, builder):
            """builder(path_prefix) writes files; returns the prefix."""
            prefix = CACHE_DIR / f"{name}-{param_key(params)}"
            marker = pathlib.Path(str(prefix) + ".done")
            if not marker.exists():
                builder(str(prefix))
                marker.write_text("ok")
            return str(prefix)

    return Cache()
