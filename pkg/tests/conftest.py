import numpy as np
import pytest

from stochseir import epimodel as em
from stochseir import simulate as sim
from stochseir.inference.model import ModelData


def small_scenario(T=60, **kw):
    t = np.arange(T)
    R = 2.5 - 1.5 / (1 + np.exp(-(t - T / 2) / 3.0))
    base = dict(name="small", T=T, R_profile=R.tolist(), population=1_000_000, seed_size=200.0)
    base.update(kw)
    return sim.Scenario(**base).validate()


def model_data_from(syn, **kw):
    sc = syn.scenario
    return ModelData(
        deaths=syn.dataset.deaths.values[:sc.T],
        population=float(sc.population),
        kernel=em.discretize_gamma(6.29, 0.26),
        **kw,
    )


@pytest.fixture(scope="session")
def small_data():
    syn = sim.generate(small_scenario(), seed=11)
    return syn, model_data_from(syn)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
