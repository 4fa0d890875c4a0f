"""Built-in study scenarios and scenario file handling.

Four fixed patterns (A-D) over 4 workspaces x 5 spots, five spots per color
each. Spots listed in ``partial`` show two candidate colors on the human's
reference sheet; the mapped value is the decoy. Pattern difficulty follows
the partially-known counts 9/12/6/9.
"""
from __future__ import annotations

import json
from pathlib import Path

from .model import Agent, Color, Distance, ScenarioConfig

# Near/far block tables per agent. Green sits near both agents, pink near the
# robot only, orange near the human only, blue far from both.
COLOR_DISTANCE: dict[tuple[Agent, Color], Distance] = {
    (Agent.HUMAN, Color.GREEN): Distance.NEAR,
    (Agent.HUMAN, Color.ORANGE): Distance.NEAR,
    (Agent.HUMAN, Color.PINK): Distance.FAR,
    (Agent.HUMAN, Color.BLUE): Distance.FAR,
    (Agent.ROBOT, Color.GREEN): Distance.NEAR,
    (Agent.ROBOT, Color.PINK): Distance.NEAR,
    (Agent.ROBOT, Color.ORANGE): Distance.FAR,
    (Agent.ROBOT, Color.BLUE): Distance.FAR,
}

DEFAULT_NOMINAL_TIMES: dict[tuple[Agent, Distance], float] = {
    (Agent.HUMAN, Distance.NEAR): 12.0,
    (Agent.HUMAN, Distance.FAR): 20.0,
    (Agent.ROBOT, Distance.NEAR): 35.0,
    (Agent.ROBOT, Distance.FAR): 60.0,
}

DEFAULT_INVENTORY: dict[tuple[Agent, Color], int] = {
    **{(Agent.HUMAN, color): 10 for color in Color},
    **{(Agent.ROBOT, color): 8 for color in Color},
}

_G, _P, _O, _B = Color.GREEN, Color.PINK, Color.ORANGE, Color.BLUE

_PATTERNS: dict[str, tuple[dict[int, Color], dict[int, Color]]] = {
    "A": (
        {1: _P, 2: _G, 3: _G, 4: _G, 5: _O, 6: _G, 7: _O, 8: _P, 9: _B, 10: _P,
         11: _P, 12: _O, 13: _P, 14: _B, 15: _O, 16: _B, 17: _B, 18: _B, 19: _O, 20: _G},
        {1: _O, 4: _P, 8: _O, 10: _O, 11: _O, 14: _P, 15: _P, 17: _O, 20: _B},
    ),
    "B": (
        {1: _O, 2: _P, 3: _G, 4: _P, 5: _O, 6: _G, 7: _O, 8: _P, 9: _G, 10: _G,
         11: _B, 12: _O, 13: _B, 14: _B, 15: _P, 16: _B, 17: _P, 18: _B, 19: _O, 20: _G},
        {4: _B, 5: _G, 7: _B, 8: _G, 9: _P, 10: _P, 13: _O, 14: _O, 15: _B,
         16: _G, 17: _B, 19: _B},
    ),
    "C": (
        {1: _G, 2: _P, 3: _O, 4: _P, 5: _G, 6: _G, 7: _P, 8: _B, 9: _P, 10: _O,
         11: _B, 12: _O, 13: _O, 14: _G, 15: _B, 16: _P, 17: _B, 18: _G, 19: _B, 20: _O},
        {1: _B, 2: _B, 3: _P, 7: _B, 9: _O, 10: _P},
    ),
    "D": (
        {1: _P, 2: _B, 3: _G, 4: _G, 5: _G, 6: _O, 7: _O, 8: _P, 9: _P, 10: _G,
         11: _G, 12: _O, 13: _B, 14: _B, 15: _O, 16: _B, 17: _O, 18: _B, 19: _P, 20: _P},
        {2: _P, 3: _P, 4: _O, 6: _G, 9: _G, 12: _G, 14: _P, 16: _O, 19: _B},
    ),
}

STUDY_PATTERN_NAMES = tuple(sorted(_PATTERNS))


def study_scenario(pattern: str = "A") -> ScenarioConfig:
    """Return the built-in 20-spot scenario for pattern A, B, C or D."""
    key = pattern.upper()
    if key not in _PATTERNS:
        raise ValueError(f"unknown study pattern {pattern!r}; use one of A, B, C, D")
    colors, partial = _PATTERNS[key]
    return ScenarioConfig(
        name=f"study-{key}",
        workspaces=4,
        spots_per_workspace=5,
        pattern=dict(colors),
        partially_known=dict(partial),
        block_inventory=dict(DEFAULT_INVENTORY),
        color_distance=dict(COLOR_DISTANCE),
        nominal_times=dict(DEFAULT_NOMINAL_TIMES),
    )


def load_scenario(source: str | Path) -> ScenarioConfig:
    """Load a scenario from a JSON file, or by built-in name (``study-A``)."""
    text = str(source)
    if text.lower().startswith("study-") and len(text) == 7:
        return study_scenario(text[-1])
    path = Path(source)
    if not path.is_file():
        raise FileNotFoundError(f"scenario file not found: {path}")
    with path.open() as fh:
        return ScenarioConfig.from_dict(json.load(fh))


def save_scenario(config: ScenarioConfig, path: str | Path) -> None:
    with Path(path).open("w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
