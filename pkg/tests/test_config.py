import pytest

from qys.config import build_config, load_yaml, merge
from qys.errors import ConfigError
from qys.integrator import EventKind


def test_merge_overrides_nested_keys():
    base = {"params": {"n": 3, "c": 1.0}, "seed": 1}
    out = merge(base, {"params": {"c": 2.0}, "seed": 4})
    assert out == {"params": {"n": 3, "c": 2.0}, "seed": 4}
    assert base["params"]["c"] == 1.0


def test_line_config(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(
        "mode: line\nformulation: flow\n"
        "params: {n: 4, lambda: -1, c: 0.5, rbar: 1}\n"
        "init: {psi: 1.0, dpsi: 0.2, F: 0.0}\n"
        "span: {back: 2, fwd: 3}\n"
        "integrator: {rtol: 1.0e-8}\n"
        "events: [PsiZero, DPsiZero]\n"
        "output: {dir: res, stride: 5}\n"
    )
    cfg = build_config(load_yaml(path))
    assert cfg.params.n == 4 and cfg.params.lam == -1.0
    assert cfg.formulation.value == "flow"
    assert (cfg.back, cfg.fwd) == (2.0, 3.0)
    assert cfg.integrator.rtol == 1e-8
    assert cfg.events == {EventKind.PSI_ZERO, EventKind.DPSI_ZERO}
    assert cfg.stride == 5 and str(cfg.out_dir) == "res"


@pytest.mark.parametrize(
    "data, field",
    [
        ({"mode": "line", "params": {"n": 2, "lambda": 0, "c": 1}, "init": {"psi": 1, "dpsi": 0, "F": 0}}, "params.n"),
        ({"mode": "line", "params": {"n": 3, "lambda": 0, "c": 1}, "init": {"psi": -1, "dpsi": 0, "F": 0}}, "init.psi"),
        ({"mode": "line", "params": {"n": 3, "lambda": "x", "c": 1}}, "params.lambda"),
        ({"mode": "tip", "params": {"n": 3, "lambda": 0, "c": 1, "rbar": 2}, "tip": {"r_start": 0.5}}, "tip.r_start"),
        ({"mode": "oracle", "oracle": {"family": "exponential", "c": 0}}, "oracle.c"),
        ({"mode": "line", "integrator": {"rtol": -1}}, "integrator"),
        ({"mode": "walk"}, "mode"),
        ({"mode": "line", "extra": 1}, "extra"),
    ],
)
def test_errors_name_the_field(data, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        build_config(data)


def test_tip_F0_list():
    cfg = build_config({"mode": "tip", "params": {"n": 3, "lambda": 1, "c": 1, "rbar": 2}, "tip": {"F0": [0, -1.5]}})
    assert cfg.tip_F0 == (0.0, -1.5)


def test_sweep_runs():
    cfg = build_config({
        "mode": "sweep",
        "seed": 3,
        "sweep": {"runs": [{"n": 3, "lambda": 1, "c": 1, "rbar": 0, "init": [1.0, 0.5, 0.0], "back": 5, "fwd": 5}]},
    })
    (spec,) = cfg.sweep_runs
    assert spec.init == (1.0, 0.5, 0.0) and spec.seed == 3 and spec.back == 5.0
    with pytest.raises(ConfigError, match=r"sweep\.runs\[0\]\.init"):
        build_config({"mode": "sweep", "sweep": {"runs": [{"n": 3, "lambda": 1, "c": 1, "init": [1.0]}]}})
