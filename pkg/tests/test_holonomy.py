import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from holonome.evolution import exact_adiabatic_transport, single_segment, theta_axis
from holonome.holonomy import (
    EigenFramePath, OrthogonalSubspaceError, appendix_b_linear_frames, berry_phase_segment,
    most_parallel_frame, segment_transport, transport, z_gate_holonomy,
)
from holonome.pauli_algebra import PauliOperator
from holonome.schedules import Schedule

S2 = 1 / np.sqrt(2)
WANT = np.diag([np.exp(0.5j * np.pi), np.exp(1.5j * np.pi)])


@pytest.fixture(scope="module")
def linear_loop():
    return z_gate_holonomy("linear", 8193)


def test_constant_path_is_identity():
    frames = np.tile(np.eye(3)[:, :2], (10, 1, 1))
    np.testing.assert_allclose(transport(EigenFramePath(np.arange(10.0), frames)).matrix, np.eye(2))


def test_unclosed_path_rejected():
    frames = np.stack([np.eye(2)[:, :1], np.eye(2)[:, 1:]])
    with pytest.raises(ValueError):
        EigenFramePath([0.0, 1.0], frames, single_valued=True)


@pytest.mark.parametrize("interp", ["linear", "trig"])
def test_z_loop_holonomy(interp):
    r = z_gate_holonomy(interp, 8193)
    assert np.max(np.abs(r.holonomy.matrix - WANT)) < 1e-6
    np.testing.assert_allclose(r.holonomy.phases(), [np.pi / 2, 3 * np.pi / 2], atol=1e-6)


def test_berry_table(linear_loop):
    want = np.array([[0, 1j * np.pi], [0, 0], [0.5j * np.pi, 0], [0, 0.5j * np.pi]])
    np.testing.assert_allclose(linear_loop.berry_phases, want, atol=1e-6)


def test_boundary_states():
    f = appendix_b_linear_frames([0.0, 1.0], 1)
    np.testing.assert_allclose(f[0, :, 0], [1, 0], atol=1e-14)
    np.testing.assert_allclose(f[1, :, 0], [S2, S2], atol=1e-14)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=100), st.integers(1, 4),
       st.sampled_from(["linear", "trig"]))
def test_frames_normalized(s, seg, interp):
    f = appendix_b_linear_frames(np.array(s), seg, interp)
    np.testing.assert_allclose(np.linalg.norm(f, axis=1), 1.0, atol=1e-12)


def test_berry_phase_single_state():
    s = np.linspace(0, 1, 2001)
    chi = appendix_b_linear_frames(s, 1)[:, :, 1]
    assert berry_phase_segment(chi) == pytest.approx(1j * np.pi, abs=1e-6)


def test_most_parallel_identical():
    q = np.linalg.qr(np.random.default_rng(3).normal(size=(4, 2)))[0]
    np.testing.assert_allclose(most_parallel_frame(q, q), q, atol=1e-12)


def test_hadamard_flips_half_the_phases():
    ini = np.eye(2)
    fin = np.array([[1, 1], [1, -1]]) * S2
    w = [np.vdot(fin[:, j], most_parallel_frame(ini[:, j], fin[:, j])[:, 0]) for j in range(2)]
    np.testing.assert_allclose(np.abs(w), 1)
    # aligned basis vectors versus the canonical |+>, |->: one of them is flipped
    signs = [np.sign(np.vdot(fin[:, j], ini[:, j]).real) for j in range(2)]
    assert sorted(signs) == [-1, 1]


def test_x_gate_endpoints_raise():
    with pytest.raises(OrthogonalSubspaceError):
        most_parallel_frame(np.array([1.0, 0.0]), np.array([0.0, 1.0]))


def _smooth_rotations(K, d, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    m = m + m.conj().T
    return np.stack([expm(1j * np.sin(np.pi * k / (K - 1)) ** 2 * m) for k in range(K)])


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gauge_invariance(linear_loop, seed):
    r = z_gate_holonomy("linear", 2049)
    # rebuild the same closed path with extra per-sample rotations
    frames = []
    s = np.linspace(0, 1, 2049)
    for seg in range(1, 5):
        chi = appendix_b_linear_frames(s, seg)
        fr = np.zeros((len(s), 4, 2), complex)
        fr[:, 0::2, 0] = chi[:, :, 0]
        fr[:, 1::2, 1] = chi[:, :, 1]
        frames.append(fr if seg == 1 else fr[1:])
    frames = np.concatenate(frames)
    u = _smooth_rotations(len(frames), 2, seed)
    rotated = np.matmul(frames, u)
    path = EigenFramePath(np.arange(len(frames), dtype=float), rotated, single_valued=True)
    assert np.max(np.abs(transport(path).matrix - r.holonomy.matrix)) < 1e-8


def test_second_order_convergence():
    rng = np.random.default_rng(7)
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    m = m + m.conj().T
    base = np.eye(4)[:, :2]

    def frames(k):
        return np.stack([expm(1j * s * m) @ base for s in np.linspace(0, 1, k)])

    chains = [transport(EigenFramePath(np.arange(k, dtype=float), frames(k)), richardson=False).matrix
              for k in (65, 129, 257, 4097)]
    d1, d2 = (np.abs(c - chains[-1]).max() for c in chains[:2])
    assert 3.0 < d1 / d2 < 5.0
    fine = transport(EigenFramePath(np.arange(257.0), frames(257))).matrix
    assert np.abs(fine - chains[-1]).max() < np.abs(chains[2] - chains[-1]).max()


def test_loop_matches_exact_transport(linear_loop):
    axes = [(0, 0, 1), (1, 0, 0), (0, 0, -1), (0, -1, 0), (0, 0, 1)]
    g = PauliOperator.from_string("IZ")
    u = np.eye(4, dtype=complex)
    for a, b in zip(axes, axes[1:]):
        u = exact_adiabatic_transport(single_segment(2, 0, a, b, g)) @ u
    block = u[np.ix_([0, 3], [0, 3])]
    assert np.max(np.abs(block - linear_loop.holonomy.matrix)) < 1e-8


@pytest.mark.parametrize("kind", ["linear", "trig", "bump"])
def test_segment_transport_matches_exact(kind):
    seg = single_segment(2, 0, (0, 0, 1), theta_axis(np.pi / 8), PauliOperator.from_string("IZ"),
                         Schedule(kind, 1.0))
    assert np.max(np.abs(segment_transport(seg) - exact_adiabatic_transport(seg))) < 1e-8


def test_geometry_independent_of_speed():
    segs = [single_segment(2, 0, (0, 0, 1), (0.6, 0.8, 0.0), PauliOperator.from_string("IZ"), Schedule(k, 1.0))
            for k in ("trig", "bump")]
    a, b = (segment_transport(s) for s in segs)
    assert np.max(np.abs(a - b)) < 1e-9
