import numpy as np
import pytest

from invskill.core import Demonstration, Role, Trajectory
from invskill.model import JointModel, ModelDims

SMALL_DIMS = ModelDims(d_r=8, d_e=4, enc_hidden=(6,), embed_hidden=(5,), dec_hidden=(7,))


def sine_demo(psi, role="forward", n_points=40, d_y=1):
    psi = np.atleast_1d(np.asarray(psi, dtype=np.float64))
    t = np.linspace(0.0, 1.0, n_points)
    y = psi[0] * np.sin(1.5 * np.pi * t) + t
    if role == "inverse":
        y = y[::-1]
    values = np.column_stack([y * (k + 1) for k in range(d_y)])
    return Demonstration(Trajectory(t, values), psi, values[0], values[-1], Role(role))


@pytest.fixture
def small_model():
    return JointModel.create(SMALL_DIMS, np.random.default_rng(7))


@pytest.fixture
def toy_pairs():
    amps = [0.1, 0.14, 0.18, 0.22, 0.25]
    return [(sine_demo(a, "forward"), sine_demo(a, "inverse")) for a in amps]


# One line per acceptance criterion, printed at the end of the session.
ACCEPTANCE_LINES: dict[str, str] = {}


def record_acceptance(tag: str, ok: bool, detail: str) -> None:
    line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES[tag] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for tag in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[tag])
