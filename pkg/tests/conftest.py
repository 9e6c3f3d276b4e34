import json

import pytest

GOLDEN_SENTENCE = "4 women and 1 man, at 1.36 meters away, are headed towards you."
GOLDEN_SPOKEN = "four women and one man, at one point three six meters away, are headed towards you."

# Five pedestrians grow across the batch (approaching) and end at bbox
# heights that put the nearest woman at exactly 1.7 * 800 / 1000 = 1.36 m.
_FINAL_HEIGHTS = {"woman": (1000, 990, 980, 970), "man": (1000,)}
_GROWTH = (0.83, 0.91, 1.0)
_X_SLOTS = (680, 790, 900, 1010, 1120)
_GROUND_Y = 1040


def golden_scene_script() -> dict:
    """Detection script (JSON-ready) for the approaching-group scene."""
    people = [("woman", h) for h in _FINAL_HEIGHTS["woman"]]
    people += [("man", h) for h in _FINAL_HEIGHTS["man"]]
    script: dict[str, list] = {}
    for frame_id, growth in enumerate(_GROWTH):
        entries = []
        for slot, (label, final_height) in enumerate(people):
            height = round(final_height * growth)
            x1 = _X_SLOTS[slot]
            entries.append(
                {
                    "label": label,
                    "confidence": 0.9,
                    "bbox": [x1, _GROUND_Y - height, x1 + 80, _GROUND_Y],
                }
            )
        script[str(frame_id)] = entries
    return script


def write_golden_fixtures(directory, *, script=None, config_extra=None) -> str:
    """Write script, registry, and config files; returns the config path."""
    script_path = directory / "script.json"
    script_path.write_text(json.dumps(script if script is not None else golden_scene_script()))
    registry_path = directory / "heights.json"
    registry_path.write_text(json.dumps({"woman": 1.7, "man": 1.75}))
    config = {
        "perception": {"mock_script_path": str(script_path)},
        "distance": {
            "height_registry_path": str(registry_path),
            "focal_length_px": 800,
            "image_width_px": 1920,
            "image_height_px": 1080,
        },
        "tts": {"dry_run": True},
    }
    for section, entries in (config_extra or {}).items():
        config.setdefault(section, {}).update(entries)
    config_path = directory / "config.json"
    config_path.write_text(json.dumps(config))
    return str(config_path)


@pytest.fixture
def golden_config_path(tmp_path):
    return write_golden_fixtures(tmp_path)
