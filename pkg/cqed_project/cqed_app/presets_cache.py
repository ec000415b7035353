import json

presets_cache = {}


def load_presets(path):
    with open(path) as handle:
        set_presets(json.load(handle))


def set_presets(presets):
    global presets_cache
    presets_cache["presets"] = dict(presets)


def get_presets():
    return presets_cache.get("presets", {})


def get_preset(name):
    # A copy, so callers can layer overrides on top
    preset = get_presets().get(name)
    return None if preset is None else dict(preset)
