"""Render every figure kind from CSVs produced by an actual khm-lab run."""

import numpy as np
import pytest

khm_cli = pytest.importorskip("khm_lab.cli",
                              reason="khm-lab not installed alongside figkit")

from figkit.cli import main as plot_main

CONFIG = """\
format = 1

[run]
nu = {nu}
n = 16
dt = 0.02
burn_in = 1.0
averaging = 6.0
stride = 15
seed = 11

[forcing]
default = shell2
epsilon = 1.0

[stats]
ell_count = 10
small_ell_count = 2
quad_order = 8
flatness_p = 2
shells = 1,2
"""


@pytest.fixture(scope="module")
def pipeline_outputs(tmp_path_factory):
    base = tmp_path_factory.mktemp("pipeline")
    outs = {}
    for nu in (0.3, 0.6):
        cfg = base / f"run_{nu}.cfg"
        cfg.write_text(CONFIG.format(nu=nu))
        out = base / f"out_{nu}"
        assert khm_cli.main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
        assert khm_cli.main(["stats", "--config", str(cfg), "--out", str(out)]) == 0
        assert khm_cli.main(["budget", "--config", str(cfg), "--out", str(out)]) == 0
        outs[nu] = out
    return outs


def test_all_four_kinds_render(pipeline_outputs, tmp_path):
    out = pipeline_outputs[0.3]
    assert plot_main(["--kind", "structure",
                      "--in", str(out / "structure_functions.csv"),
                      "--out", str(tmp_path / "structure.png"),
                      "--epsilon", "1.0", "--ell-d", "0.5", "--ell-i", "1.5"]) == 0
    assert plot_main(["--kind", "budget",
                      "--in", str(out / "khm_budget.csv"),
                      "--out", str(tmp_path / "budget.png"),
                      "--epsilon", "1.0"]) == 0
    assert plot_main(["--kind", "sweep",
                      "--in", str(pipeline_outputs[0.3] / "energy.csv"),
                      str(pipeline_outputs[0.6] / "energy.csv"),
                      "--nus", "0.3,0.6", "--epsilon", "1.0",
                      "--out", str(tmp_path / "sweep.png")]) == 0
    assert plot_main(["--kind", "flatness",
                      "--in", str(out / "flatness.csv"),
                      "--out", str(tmp_path / "flatness.png")]) == 0
    for name in ("structure.png", "budget.png", "sweep.png", "flatness.png"):
        assert (tmp_path / name).stat().st_size > 4000


def test_structure_reference_lines_from_run(pipeline_outputs, tmp_path):
    from figkit.figures import FigureSpec, plot_structure

    out = pipeline_outputs[0.3]
    fig = plot_structure(FigureSpec(
        "structure", [str(out / "structure_functions.csv")],
        str(tmp_path / "s.png"), epsilon=1.0))
    ys = [line.get_ydata()[0] for line in fig.axes[0].get_lines()
          if len(line.get_ydata()) and len(set(np.round(line.get_ydata(), 12))) == 1]
    assert any(np.isclose(y, -4.0 / 3.0) for y in ys)
    assert any(np.isclose(y, -4.0 / 5.0) for y in ys)
