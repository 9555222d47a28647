import os

import numpy as np
import pytest

from overfit_codec.imageio import write_image

CORPUS_NAMES = ("astronaut", "coffee", "chelsea", "rocket", "immunohistochemistry")


def numerical_grad(f, x, h=1e-4):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``x`` (modified in place)."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def natural_crop(name: str, size: int = 256) -> np.ndarray:
    """Centre crop of a scikit-image sample picture, as a (3, H, W) 8-bit-grid image."""
    from skimage import data

    img = getattr(data, name)()
    if img.ndim == 2:
        img = np.stack([img] * 3, axis=-1)
    img = img[..., :3]
    h, w = img.shape[:2]
    top, left = (h - size) // 2, (w - size) // 2
    crop = img[top:top + size, left:left + size]
    return crop.transpose(2, 0, 1).astype(np.float64) / 255.0


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """The five 256x256 crops written as PPM files."""
    pytest.importorskip("skimage")
    d = tmp_path_factory.mktemp("corpus")
    for name in CORPUS_NAMES:
        write_image(os.path.join(d, f"{name}.ppm"), natural_crop(name))
    return d


@pytest.fixture
def small_image(rng):
    """Smooth synthetic 16x16 picture on the 8-bit grid."""
    y, x = np.mgrid[0:16, 0:16] / 15.0
    img = np.stack([0.2 + 0.6 * x, 0.5 + 0.3 * np.sin(3 * y), 0.3 + 0.4 * x * y])
    return np.rint(img * 255) / 255


def kink_margin(trainer, levels):
    """Smallest distance of any ReLU input or Laplace breakpoint from its kink.

    Central differences are only meaningful when no perturbation crosses one.
    """
    from overfit_codec.arm import gather_contexts

    net = trainer.model.arm
    h = np.concatenate([gather_contexts(lv, net.context_size) for lv in levels])
    margins = []
    for layer in net.layers:
        h = layer.forward(h)
        if type(layer).__name__ == "Linear" and h.shape[-1] != 2:
            margins.append(np.abs(h).min())
    mu = h[:, 0]
    a = np.abs(np.concatenate([lv.ravel() for lv in levels]) - mu)
    margins += [a.min(), np.abs(a - 0.5).min()]
    synth = trainer.model.synthesis
    synth.forward(trainer.model.upsampler.forward(levels))
    for spec, pre in zip(synth.specs, synth._cache):
        if spec.activation == "relu":
            margins.append(np.abs(pre).min())
    synth._cache = None
    return float(min(margins))


# -- long training runs shared by the acceptance and encoder tests -------------

RD_NAMES = CORPUS_NAMES[:3]
RD_LAMBDAS = (1e-4, 5e-4, 1e-3, 5e-3, 2e-2)
RD_ITERS = (4000, 1000)
ABLATION_ITERS = (2000, 500)


@pytest.fixture(scope="session")
def rd_report(tmp_path_factory):
    """Rows of the ``report`` CSV over the lambda grid on three 256x256 crops."""
    import csv

    from overfit_codec.cli import main

    pytest.importorskip("skimage")
    d = tmp_path_factory.mktemp("rd")
    corpus = d / "corpus"
    corpus.mkdir()
    for name in RD_NAMES:
        write_image(os.path.join(corpus, f"{name}.ppm"), natural_crop(name))
    out = d / "report.csv"
    argv = ["report", "--corpus", str(corpus), "--out", str(out),
            "--lambdas", ",".join(str(v) for v in RD_LAMBDAS),
            "--iters1", str(RD_ITERS[0]), "--iters2", str(RD_ITERS[1])]
    assert main(argv) == 0
    with open(out) as f:
        rows = list(csv.DictReader(f))
    for row in rows:
        for key in row:
            if key != "file":
                row[key] = float(row[key])
    return rows


@pytest.fixture(scope="session")
def ablation_runs():
    """Per corpus crop: phase-1 hard loss, then the end-of-phase-2 hard loss
    with epsilon = 1e-2 and with epsilon = 1, both branched from the same
    phase-1 state."""
    from overfit_codec.encoder import TrainConfig, Trainer, branch

    pytest.importorskip("skimage")
    runs = {}
    for name in CORPUS_NAMES:
        cfg = TrainConfig(lam=1e-3, phase1_iters=ABLATION_ITERS[0], phase2_iters=ABLATION_ITERS[1])
        eps = Trainer(natural_crop(name), cfg)
        eps.run_phase1()
        ste = branch(eps)
        eps.run_phase2(epsilon=1e-2)
        ste.run_phase2(epsilon=1.0)
        runs[name] = {
            "phase1": eps.phase_losses["phase1"],
            "eps": eps.phase_losses["phase2_final"],
            "ste": ste.phase_losses["phase2_final"],
        }
    return runs


# -- acceptance summary ----------------------------------------------------------

_CRITERIA: dict[int, list[tuple[str, bool, str]]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    # an expected failure is reported as skipped, an unexpected pass as passed
    passed = rep.passed
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _CRITERIA.setdefault(mark.args[0], []).append((item.name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        results = _CRITERIA[n]
        ok = all(p for _, p, _ in results)
        details = " | ".join(d for _, _, d in results if d)
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {details}")
