from __future__ import annotations

import pytest

from tandem.model import Agent, Color, Distance, ScenarioConfig, build_study_graph
from tandem.scenarios import study_scenario


@pytest.fixture
def study_config():
    return study_scenario("A")


@pytest.fixture(scope="session")
def archetype_sweep():
    """(log, summary) per archetype over 20 seeds; shared across test files.

    Built once per session: the behavior ordering, the paired preference
    comparison, and the batch replay checks all read from the same runs.
    """
    from tandem.simulator import HumanScript, SimConfig, run_sim, run_summary

    cfg = SimConfig(scenario=study_scenario("A"))
    factories = {
        "leader": HumanScript.leader,
        "collaborative_leader": HumanScript.collaborative_leader,
        "collaborative_follower": HumanScript.collaborative_follower,
        "follower": HumanScript.follower,
    }
    sweep = {}
    for name, fab in factories.items():
        runs = []
        for seed in range(1, 21):
            log = run_sim(cfg, fab(seed))
            runs.append((log, run_summary(log)))
        sweep[name] = runs
    return sweep


@pytest.fixture(scope="session")
def error_sweep():
    """20-seed error-prone runs used by fix-pairing and replay checks."""
    from tandem.simulator import HumanScript, SimConfig, run_sim, run_summary

    cfg = SimConfig(scenario=study_scenario("A"))
    runs = []
    for seed in range(1, 21):
        log = run_sim(cfg, HumanScript.error_prone(0.3, seed))
        runs.append((log, run_summary(log)))
    return runs


@pytest.fixture(scope="session")
def confused_sweep():
    """20-seed runs of the persistently wrong-on-one-row script, pattern B."""
    from tandem.simulator import HumanScript, SimConfig, run_sim, run_summary

    cfg = SimConfig(scenario=study_scenario("B"))
    runs = []
    for seed in range(1, 21):
        log = run_sim(cfg, HumanScript.confused_tail(4, seed))
        runs.append((log, run_summary(log)))
    return runs


@pytest.fixture
def study_graph(study_config):
    return build_study_graph(study_config)


def tiny_config(spots: int = 2, color: Color = Color.GREEN) -> ScenarioConfig:
    """One-workspace scenario with uniform colors, for state-machine work."""
    return ScenarioConfig(
        name="tiny",
        workspaces=1,
        spots_per_workspace=spots,
        pattern={i: color for i in range(1, spots + 1)},
        block_inventory={
            **{(Agent.HUMAN, c): 10 for c in Color},
            **{(Agent.ROBOT, c): 10 for c in Color},
        },
        color_distance={
            (agent, c): Distance.NEAR for agent in Agent for c in Color
        },
        nominal_times={
            (Agent.HUMAN, Distance.NEAR): 10.0,
            (Agent.HUMAN, Distance.FAR): 18.0,
            (Agent.ROBOT, Distance.NEAR): 30.0,
            (Agent.ROBOT, Distance.FAR): 50.0,
        },
    )
