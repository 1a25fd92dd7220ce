import numpy as np
import pytest

from scbeam.model import db_to_linear
from scbeam.presets import TAU_KNOWN, load_paper_preset, preset_tables, strongest_links

# the bundled benchmark tables, typed in independently of the data files
H_HAT = np.array([
    [-2.2377 + 0.9643j, -1.0311 + 2.0312j, 3.6613 + 11.3275j],
    [-0.5723 - 0.1608j, 8.4672 + 19.4963j, -0.0046 - 1.3821j],
    [28.8976 - 13.2169j, 4.3453 - 10.1453j, 1.6451 - 4.8108j],
    [-1.6776 + 1.2600j, -2.6659 - 2.0050j, 42.9821 - 5.6807j],
    [3.4623 - 2.0804j, 4.1266 + 1.8647j, -2.3121 + 1.3415j],
])
D = np.array([
    [2.7963, 4.4546, 26.8928],
    [2.4794, 9.5564, 1.9145],
    [29.9654, 24.3376, 13.8270],
    [2.1076, 4.0912, 38.7970],
    [2.8683, 3.9187, 3.5856],
])


def test_tables_match_reference_values():
    H_hat, D_lk = preset_tables()
    np.testing.assert_array_equal(H_hat, H_HAT)
    np.testing.assert_array_equal(D_lk, D)
    assert D_lk[2, 0] == 29.9654  # third RAU, first user


def test_network_shape_and_targets():
    cfg, model = load_paper_preset()
    assert cfg.L == 5 and cfg.K == 3 and cfg.antennas == (1,) * 5
    np.testing.assert_allclose(cfg.gamma, db_to_linear(3.0))
    np.testing.assert_array_equal(cfg.sigma_sq, 1.0)
    np.testing.assert_array_equal(cfg.P, 1e3)


def test_known_links_are_two_strongest():
    _, model = load_paper_preset()
    assert model.omega[2] == (3, 0)  # 38.7970 and 26.8928
    assert set(model.omega[0]) == {2, 4} and set(model.omega[1]) == {2, 1}
    for k, links in enumerate(model.omega):
        expected = np.full(5, 1.0)
        expected[list(links)] = TAU_KNOWN
        np.testing.assert_array_equal(model.tau[k], expected)


def test_strongest_links_ties_are_stable():
    assert strongest_links(np.array([[1.0, 3.0, 3.0, 2.0]])) == ((1, 2),)


def test_small_scale_roundtrip():
    _, model = load_paper_preset()
    recon = (model.c_hat * model.D).T
    np.testing.assert_allclose(recon, H_HAT, rtol=1e-12, atol=0)


@pytest.mark.parametrize("sigma_sq,P", [(0.5, 10.0), (2.0, 1e4)])
def test_overridable_defaults(sigma_sq, P):
    cfg, _ = load_paper_preset(sigma_sq=sigma_sq, P=P)
    np.testing.assert_array_equal(cfg.sigma_sq, sigma_sq)
    np.testing.assert_array_equal(cfg.P, P)
