"""Operator algebra, network products, and beam splitter construction."""
import numpy as np
import pytest

from photonfilters.qcore import (
    SystemModel, adjoint, beam_splitter, build_extended_system, comm,
    concatenation_product, dissipator, dissipator_adjoint, identity,
    is_hermitian, ket_e, ket_g, lindbladian, liouvillian, series_product,
    sigma_minus, sigma_plus, slh, tensor_embed,
)


def _rng(seed=11):
    return np.random.Generator(np.random.Philox(key=np.array([seed, 0], dtype=np.uint64)))


def _random_hermitian(rng, d=2):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return 0.5 * (a + adjoint(a))


def _random_unitary2(rng):
    n = rng.normal(size=3)
    n /= np.linalg.norm(n)
    a = rng.uniform(0.0, np.pi)
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    u = np.cos(a) * identity() + 1j * np.sin(a) * (n[0] * sx + n[1] * sy + n[2] * sz)
    return np.exp(1j * rng.uniform(0.0, 2 * np.pi)) * u


def test_basic_operators():
    sm = sigma_minus()
    sp = sigma_plus()
    assert np.allclose(sm @ ket_e(), ket_g())
    assert np.allclose(sp @ ket_g(), ket_e())
    assert np.allclose(sm @ ket_g(), 0.0)
    assert np.allclose(adjoint(sm), sp)
    assert np.allclose(sp @ sm, np.diag([0.0, 1.0]))          # |e><e|
    assert np.allclose(comm(sp @ sm, sm), -sm)
    assert is_hermitian(sp @ sm, 1e-15)
    assert not is_hermitian(sm, 1e-15)


def test_system_model_defaults_and_validation():
    m = SystemModel()
    assert m.kappa == 1.0
    assert np.allclose(m.L, sigma_minus())
    assert m.s_is_identity
    m2 = SystemModel(kappa=2.0)
    assert np.allclose(m2.L, 2.0 * sigma_minus())
    with pytest.raises(ValueError):
        SystemModel(kappa=-0.5)
    with pytest.raises(ValueError):
        SystemModel(S=np.array([[1, 1], [0, 1]], dtype=complex))
    with pytest.raises(ValueError):
        SystemModel(H=np.array([[0, 1j], [1j, 0]]))


def test_slh_shape_promotions():
    L = sigma_minus()
    H = np.zeros((2, 2))
    g = slh(1.0, L, H)                      # scalar S, one channel
    assert g.S.shape == (1, 1, 2, 2)
    assert np.allclose(g.S[0, 0], identity())
    g2 = slh(_random_unitary2(_rng()), L, H)  # operator S, one channel
    assert g2.S.shape == (1, 1, 2, 2)
    sb = beam_splitter(spec=0.3)
    g3 = slh(sb.matrix, np.stack([L, 0.5 * L]), H)  # scalar channel matrix
    assert g3.S.shape == (2, 2, 2, 2)
    assert np.allclose(g3.S[0, 1], sb.s12 * identity())
    with pytest.raises(ValueError):
        slh(1.0, L, np.array([[0, 1j], [1j, 0]]))  # non-Hermitian H


def test_series_product_formula():
    rng = _rng(5)
    for _ in range(25):
        s1 = np.exp(1j * rng.uniform(0, 2 * np.pi))
        s2 = np.exp(1j * rng.uniform(0, 2 * np.pi))
        L1 = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        L2 = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        H1 = _random_hermitian(rng)
        H2 = _random_hermitian(rng)
        g = series_product(slh(s2, L2, H2), slh(s1, L1, H1))
        assert np.allclose(g.S[0, 0], s2 * s1 * identity(), atol=1e-12)
        assert np.allclose(g.L[0], L2 + s2 * L1, atol=1e-12)
        cross = adjoint(L2) @ (s2 * L1)
        him = (cross - adjoint(cross)) / 2j
        assert np.allclose(g.H, H1 + H2 + him, atol=1e-12)
        assert is_hermitian(g.H, 1e-12)


def test_concatenation_product_blocks():
    L = sigma_minus()
    g1 = slh(1.0, L, np.diag([0.0, 1.0]))
    g2 = slh(-1.0, 2.0 * L, np.diag([1.0, 0.0]))
    g = concatenation_product(g1, g2)
    assert g.nch == 2
    assert np.allclose(g.S[0, 0], identity())
    assert np.allclose(g.S[1, 1], -identity())
    assert np.allclose(g.S[0, 1], 0.0)
    assert np.allclose(g.L[0], L)
    assert np.allclose(g.L[1], 2.0 * L)
    assert np.allclose(g.H, identity())


def test_liouvillian_lindbladian_trace_duality():
    rng = _rng(7)
    for _ in range(50):
        g = slh(_random_unitary2(rng),
                rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)),
                _random_hermitian(rng))
        rho = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        X = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        lhs = np.trace(liouvillian(g, rho) @ X)
        rhs = np.trace(rho @ lindbladian(g, X))
        assert abs(lhs - rhs) < 1e-12


def test_dissipator_trace_free():
    rng = _rng(9)
    for _ in range(20):
        A = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        rho = _random_hermitian(rng)
        assert abs(np.trace(dissipator_adjoint(A, rho))) < 1e-12
        # Heisenberg side preserves the identity instead
        assert np.max(np.abs(dissipator(A, identity()))) < 1e-12


def test_liouvillian_warns_on_non_hermitian_when_checked():
    g = slh(1.0, sigma_minus(), np.zeros((2, 2)))
    bad = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
    with pytest.warns(UserWarning):
        liouvillian(g, bad, check=True)
    liouvillian(g, bad)  # silent by default


def test_beam_splitter_entries_form():
    m = np.array([[np.sqrt(0.75), 0.5j], [0.5j, np.sqrt(0.75)]])
    sb = beam_splitter(entries=m)
    assert np.allclose(sb.matrix, m)
    assert sb.unitarity_residual() <= 1e-12
    with pytest.raises(ValueError):
        beam_splitter(entries=np.array([[1.0, 0.1], [0.0, 1.0]]))


def test_beam_splitter_angle_form_structure_and_unitarity():
    rng = _rng(13)
    for _ in range(100):
        th, psi, phi, lam = rng.uniform(0, 2 * np.pi, size=4)
        sb = beam_splitter(angles=(th, psi, phi, lam))
        assert sb.unitarity_residual() <= 1e-12
        pre = np.exp(1j * lam / 2)
        assert abs(sb.s11 - pre * np.cos(th / 2) * np.exp(1j * (psi + phi) / 2)) < 1e-12
        assert abs(sb.s21 + pre * np.sin(th / 2) * np.exp(-1j * (psi - phi) / 2)) < 1e-12
        assert abs(sb.s11 * sb.s11.conjugate() + sb.s21 * sb.s21.conjugate() - 1.0) < 1e-12


def test_beam_splitter_reduction_and_simulation_forms():
    r, th = 0.6, 0.7
    red = beam_splitter(spec=(r, th))
    assert abs(red.s11 - np.sqrt(1 - r * r) * np.exp(1j * th)) < 1e-15
    assert abs(red.s12 - r * np.exp(1j * th)) < 1e-15
    assert abs(red.s21 + r * np.exp(1j * th)) < 1e-15
    assert red.unitarity_residual() <= 1e-12
    sim = beam_splitter(spec=r)
    assert abs(sim.s11 - np.sqrt(1 - r * r)) < 1e-15
    assert abs(sim.s21 - 1j * r) < 1e-15
    assert sim.unitarity_residual() <= 1e-12
    # dict spec routes to the same forms
    assert np.allclose(beam_splitter({"r": r, "theta": th}).matrix, red.matrix)
    with pytest.raises(ValueError):
        beam_splitter(spec=1.5)
    with pytest.raises(ValueError):
        beam_splitter()


def test_tensor_embed_ordering():
    emb = tensor_embed(sigma_minus(), identity())
    assert emb.shape == (4, 4)
    # ancilla-first ordering: |up,g> = index 2 maps to |down,g> = index 0
    v = np.zeros(4)
    v[2] = 1.0
    assert np.allclose(emb @ v, np.eye(4)[0])
    with pytest.raises(ValueError):
        tensor_embed(np.eye(4), identity())


def test_extended_system_closed_form():
    rng = _rng(17)
    I2 = identity()
    for _ in range(25):
        model = SystemModel(kappa=rng.uniform(0.5, 1.5), S=_random_unitary2(rng),
                            H=_random_hermitian(rng))
        sb = beam_splitter(angles=tuple(rng.uniform(0, 2 * np.pi, size=4)))
        lam = complex(rng.normal(), rng.normal())
        g = build_extended_system(model, lam, sb)
        S_emb = tensor_embed(I2, model.S)
        L_tot = tensor_embed(I2, model.L) + lam * tensor_embed(sigma_minus(), model.S)
        cross = lam * tensor_embed(sigma_minus(), adjoint(model.L) @ model.S)
        H_tot = tensor_embed(I2, model.H) + (cross - adjoint(cross)) / 2j
        assert g.S.shape == (2, 2, 4, 4)
        assert np.max(np.abs(g.S[0, 0] - sb.s11 * S_emb)) < 1e-12
        assert np.max(np.abs(g.S[0, 1] - sb.s12 * np.eye(4))) < 1e-12
        assert np.max(np.abs(g.S[1, 0] - sb.s21 * S_emb)) < 1e-12
        assert np.max(np.abs(g.S[1, 1] - sb.s22 * np.eye(4))) < 1e-12
        assert np.max(np.abs(g.L[0] - sb.s11 * L_tot)) < 1e-12
        assert np.max(np.abs(g.L[1] - sb.s21 * L_tot)) < 1e-12
        assert np.max(np.abs(g.H - H_tot)) < 1e-12
        assert g.s_unitarity_residual() <= 1e-12
