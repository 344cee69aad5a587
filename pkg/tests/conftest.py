import numpy as np
import pytest


def central_difference(fn, array: np.ndarray, index, h: float = 1e-5) -> float:
    """Two-sided finite difference of scalar-valued fn at one coordinate."""
    original = array[index]
    array[index] = original + h
    plus = fn()
    array[index] = original - h
    minus = fn()
    array[index] = original
    return (plus - minus) / (2.0 * h)


def assert_close(actual, expected, rtol=1e-4, atol=1e-6, label=""):
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    err = np.abs(actual - expected)
    bound = atol + rtol * np.abs(expected)
    if not np.all(err <= bound):
        worst = np.unravel_index(np.argmax(err - bound), err.shape)
        raise AssertionError(
            f"{label or 'values'} differ at {worst}: "
            f"{actual[worst]} vs {expected[worst]} (|err|={err[worst]:.3e})"
        )


@pytest.fixture(scope="session")
def crossing_events():
    """Ten deterministic safety-critical crossing scenarios with events."""
    from nearmiss.curvttc import find_critical_event
    from nearmiss.synth import CROSSING, ScenarioTemplate, generate

    pairs = generate(ScenarioTemplate(kind=CROSSING, critical_fraction=1.0, seed=11), 10)
    events = [find_critical_event(pair) for pair in pairs]
    assert all(event is not None for event in events)
    return events
