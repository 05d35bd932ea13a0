"""Shared fixtures: bootstrapped scenario worlds driven step by step."""

import hashlib

import pytest

from idplane import crypto, harness
from idplane.actors import Actor
from idplane.bus import BoxKeyPair


def scenario_config(name: str) -> harness.ScenarioConfig:
    return harness.load_scenario(harness.bundled_scenarios()[name])


def bootstrapped_runner(name: str = "two-network", seed=None, through_step_a=True):
    """A runner with bootstrap (and optionally step A) already executed; tests
    drive agents and anchors directly from there."""
    runner = harness.ScenarioRunner(scenario_config(name), seed=seed)
    runner._execute(0, {"step": "bootstrap"})
    if through_step_a:
        runner._execute(1, {"step": "step_a", "orgs": "all"})
    assert not runner.report.errors, runner.report.errors
    return runner


@pytest.fixture
def runner():
    return bootstrapped_runner()


@pytest.fixture
def world(runner):
    return runner.world


class Probe(Actor):
    """Outside observer actor for poking services directly."""


def add_probe(world, address="probe") -> Probe:
    probe = Probe(address)
    import random

    probe.bind(world.bus, random.Random(4711))
    seed = hashlib.sha256(address.encode()).digest()
    world.bus.register(probe, crypto.KeyPair.from_seed(seed), BoxKeyPair.from_seed(seed))
    return probe
