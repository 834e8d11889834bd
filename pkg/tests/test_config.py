import numpy as np
import pytest

from oscmix.config import ConfigError, parse_config

CHAIN = """
[chain]
L = 3
k = 0.5
[potential]
variant = coulomb_nearest_neighbor
sigma = 0.5
[simulate]
seed = 11
"""


def test_chain_config_builds():
    cfg = parse_config(CHAIN)
    spec = cfg.build_spec()
    assert cfg.network == "chain" and spec.d == 6 and not spec.force.is_zero
    assert cfg.seed == 11


def test_hash_ignores_layout_but_not_values():
    a = parse_config(CHAIN)
    b = parse_config(CHAIN.replace("k = 0.5", "k=0.5").replace("[simulate]\nseed = 11", "[simulate]\nseed = 11\n"))
    c = parse_config(CHAIN.replace("k = 0.5", "k = 0.6"))
    assert a.sha256 == b.sha256 != c.sha256


def test_linear_section_and_vectors():
    cfg = parse_config("[linear]\nA = -1,0;0,-2\nB = 1;1\n[hypotheses]\nx0 = 0,0;1,1\n")
    spec = cfg.build_spec()
    assert np.array_equal(spec.A, np.diag([-1.0, -2.0])) and spec.B.shape == (2, 1)
    assert len(cfg.get("hypotheses", "x0", None, "points")) == 2


@pytest.mark.parametrize("text", [
    "[chain]\nL = 2\n[linear]\nA = -1\nB = 1\n",
    "[potential]\nvariant = none\n",
    "[chain]\nL = 2\n[bogus]\nx = 1\n",
    "[chain]\nL = 2\n[simulate]\nh = 0.01\n",
    "[chain]\nL = 2\n[simulate]\nseed = 1\nh = -0.1\n",
    "[chain]\nL = 1\n",
    "[chain\nL = 2\n",
    "[linear]\nA = -1\nB = 1\n[potential]\nvariant = coulomb_all_pairs\n",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text).build_spec()
