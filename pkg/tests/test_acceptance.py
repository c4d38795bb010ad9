"""End-to-end acceptance gate.

Nine numbered criteria, each printing one PASS/FAIL line to the real
terminal (bypassing capture) with the measured value next to the bound.
Criterion 7 performs a complete training run on the synthetic task and
is slow (tens of minutes on one CPU core); criteria 8 and 9 reuse its
artifacts.  Everything else finishes in seconds.
"""

import os
import time

import numpy as np
import pytest

from retouch.agent import (
    AgentNet,
    agent_forward,
    decode_action,
    greedy_action,
    policy_loss_graph,
    sample_action,
    value_loss_graph,
)
from retouch.cli import main as cli_main
from retouch.critic import (
    CriticNet,
    critic_loss,
    gradient_penalty,
    interpolate,
    penalty_from_scores,
    perturbation_pairs,
)
from retouch.filters import FILTERS, FILTER_NAMES, apply_pipeline, neutral_action
from retouch.image import Image, load_image, psnr, resize_bicubic, ssim
from retouch.nn import (
    Tensor,
    conv1d_valid,
    conv2d,
    dense,
    gather_lk,
    leaky_relu,
    log_softmax_columns,
    softmax_columns,
    take_rows,
    tmean,
    tsum,
)
from retouch.toydata import coarse_field, render, write_toy_dataset
from retouch.training import Dataset, TrainConfig, run_training, load_agent

from oracles import gradcheck

EXP = FILTER_NAMES.index("Exposure")
SAT = FILTER_NAMES.index("Saturation")
VIB = FILTER_NAMES.index("Vibrance")

# constants of the synthetic experiment (criteria 7-9); the learning rate
# and reward regularizer were tuned on a pilot run of the same task
TOY_DATA_SEED = 100
TOY_TRAIN = dict(lr=1e-3, mse_weight=30.0, gp_samples=1, generator_steps=2000, seed=42)


def report(capsys, num, name, ok, detail):
    with capsys.disabled():
        print(f"[criterion {num}] {name}: {'PASS' if ok else 'FAIL'} ({detail})",
              flush=True)
    assert ok, f"criterion {num} ({name}): {detail}"


# -- shared slow artifacts -----------------------------------------------------


@pytest.fixture(scope="session")
def toy_dirs(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    return write_toy_dataset(root, seed=TOY_DATA_SEED)


@pytest.fixture(scope="session")
def toy_run(toy_dirs, tmp_path_factory):
    """The full criterion-7 training run; returns (ckpt path, minutes)."""
    out = tmp_path_factory.mktemp("run") / "toy.rtch"
    dataset = Dataset.from_dirs(toy_dirs["source"], toy_dirs["target"])
    start = time.monotonic()
    run_training(TrainConfig(**TOY_TRAIN), dataset, out)
    minutes = (time.monotonic() - start) / 60.0
    return out, minutes


# -- criterion 1: filter identity ----------------------------------------------


def test_criterion_1_filter_identity(capsys):
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(100):
        h, w = rng.integers(12, 48, size=2)
        x = Image(rng.random((h, w, 3)).astype(np.float32))
        y = apply_pipeline(x, neutral_action())
        worst = max(worst, float(np.abs(y.pixels - x.pixels).max()))
    report(capsys, 1, "filter identity", worst < 1e-6,
           f"max|S(x,0)-x| = {worst:.3e} over 100 images, bound 1e-6")


# -- criterion 2: applying filters twice is not additive ------------------------


def test_criterion_2_sequential_vs_summed_witness(capsys):
    x = Image(np.full((8, 8, 3), 0.25, np.float32))
    a1 = neutral_action()
    a1[FILTER_NAMES.index("Contrast")] = 0.5
    a2 = a1.copy()
    summed = apply_pipeline(x, a1 + a2)
    chained = apply_pipeline(apply_pipeline(x, a1), a2)
    diff = float(np.abs(summed.pixels - chained.pixels).max())
    report(capsys, 2, "non-additivity witness", diff > 1.0 / 255.0,
           f"Contrast +0.5 twice vs +1.0 once on x=0.25: max diff {diff:.4f} > 1/255")


# -- criterion 3: gradient fidelity ----------------------------------------------


def _layer_cases(rng):
    """(name, make_loss, tensors) triples covering every layer/op family."""
    f64 = np.float64

    def t(shape, scale=1.0):
        return Tensor(rng.standard_normal(shape).astype(f64) * scale,
                      requires_grad=True)

    cases = []

    x = t((3, 5, 5, 2))
    w = t((4, 2, 3, 3), 0.5)
    b = t((4,), 0.1)
    cases.append(("conv2d k3 s1", lambda: tsum(conv2d(x, w, b, 1)), [x, w, b]))

    x2 = t((2, 8, 8, 3))
    w2 = t((4, 3, 5, 5), 0.3)
    b2 = t((4,), 0.1)
    cases.append(("conv2d k5 s2", lambda: tsum(conv2d(x2, w2, b2, 2)), [x2, w2, b2]))

    xs = t((2, 9, 4))
    ws = t((5, 4, 3), 0.5)
    bs = t((5,), 0.1)
    cases.append(("conv1d valid", lambda: tsum(conv1d_valid(xs, ws, bs)), [xs, ws, bs]))

    xd = t((6, 7))
    wd = t((7, 3), 0.5)
    bd = t((3,), 0.1)
    cases.append(("dense", lambda: tsum(dense(xd, wd, bd)), [xd, wd, bd]))

    xl = t((5, 6))
    cases.append(("leaky_relu", lambda: tsum(leaky_relu(xl, 0.2) * xl), [xl]))

    ql = t((2, 6, 4))
    cases.append((
        "softmax/log_softmax columns",
        lambda: tsum(softmax_columns(ql) * log_softmax_columns(ql) * 0.5),
        [ql],
    ))

    xg = t((3, 5, 4))
    idx = np.random.default_rng(0).integers(0, 5, size=(3, 4))
    cases.append((
        "gather/take/reshape/mean",
        lambda: tmean(gather_lk(xg, idx)) + tsum(take_rows(xg, slice(1, 3))) * 0.25,
        [xg],
    ))
    return cases


def test_criterion_3_gradient_fidelity(capsys):
    rng = np.random.default_rng(11)
    worst, n_cases = 0.0, 0

    for name, make_loss, tensors in _layer_cases(rng):
        err = gradcheck(make_loss, tensors, rng, n_probes=20)
        worst, n_cases = max(worst, err), n_cases + 1

    # composed critic loss: scores + fused finite-difference penalty
    critic = CriticNet(rng, dtype=np.float64, input_size=16, channels=(4, 8))
    reals = rng.random((2, 16, 16, 3))
    fakes = rng.random((2, 16, 16, 3))
    interp = np.stack([interpolate(reals[0], fakes[0], 0.3)])
    plus, minus = perturbation_pairs(interp, np.random.default_rng(3), 2, 1e-3)
    stack = np.concatenate([reals, fakes, plus, minus], axis=0)

    def critic_composed():
        s = critic.scores(stack)
        term, _ = penalty_from_scores(
            take_rows(s, slice(4, 6)), take_rows(s, slice(6, 8)), 2, 1, 1e-3
        )
        return critic_loss(take_rows(s, slice(0, 2)), take_rows(s, slice(2, 4)),
                           term, 10.0)

    err = gradcheck(critic_composed, critic.params(), rng, n_probes=30)
    worst, n_cases = max(worst, err), n_cases + 1

    # composed agent loss: value + policy objective with sampled actions
    agent = AgentNet(rng, dtype=np.float64, input_size=16, action_steps=7,
                     trunk_channels=(4, 8), head_width=8)
    states = rng.random((2, 16, 16, 3))
    q0, _, v0 = agent.forward_graph(states)
    indices0 = np.stack([
        sample_action(q0.data[i], np.random.default_rng(20 + i))[0] - 1
        for i in range(2)
    ])
    rewards = np.array([1.5, -0.5])
    # the trainer detaches the advantage, so the probed function must hold
    # it fixed at its unperturbed value or the finite differences would
    # pick up gradient paths the analytic backward deliberately omits
    adv = rewards - v0.data[:, 0]

    def agent_composed():
        q, logq, v = agent.forward_graph(states)
        return value_loss_graph(v, rewards) + policy_loss_graph(
            q, logq, indices0, adv, 0.001
        )

    err = gradcheck(agent_composed, agent.params(), rng, n_probes=30)
    worst, n_cases = max(worst, err), n_cases + 1

    report(capsys, 3, "gradient fidelity", worst < 1e-4,
           f"worst rel err {worst:.3e} over {n_cases} layer/composed cases, bound 1e-4")


# -- criterion 4: policy normalization and decode endpoints ----------------------


def test_criterion_4_policy_normalization(capsys):
    worst = 0.0
    for draw in range(100):
        rng = np.random.default_rng(1000 + draw)
        net = AgentNet(rng, input_size=16, trunk_channels=(4, 8), head_width=8)
        q, _ = agent_forward(net, rng.random((16, 16, 3)).astype(np.float32))
        worst = max(worst, float(np.abs(q.sum(axis=0) - 1.0).max()))
    ends = [decode_action(l, FILTERS[0], 33) for l in (1, 17, 33)]
    exact = ends == [-1.0, 0.0, 1.0]
    report(capsys, 4, "policy normalization", worst < 1e-6 and exact,
           f"worst |col sum - 1| = {worst:.2e} over 100 draws; "
           f"decode(1,17,33) = {ends}")


# -- criterion 5: gradient-penalty calibration -----------------------------------


class _LinearCritic:
    """D(y) = w . y with the weight vector scaled to a chosen length."""

    def __init__(self, norm, shape, seed=0):
        rng = np.random.default_rng(seed)
        w = rng.standard_normal((int(np.prod(shape)), 1))
        self.w = Tensor(w / np.linalg.norm(w) * norm, requires_grad=True)

    def scores(self, batch):
        x = batch.data if isinstance(batch, Tensor) else np.asarray(batch)
        flat = Tensor(x.reshape(x.shape[0], -1))
        return dense(flat, self.w, Tensor(np.zeros(1)))

    def params(self):
        return [self.w]


def test_criterion_5_gp_calibration(capsys):
    rng = np.random.default_rng(12)
    batch = rng.random((8, 12, 12, 3))
    z3 = gradient_penalty(_LinearCritic(3.0, (12, 12, 3)), batch,
                          np.random.default_rng(5), n_directions=1000).value
    z1 = gradient_penalty(_LinearCritic(1.0, (12, 12, 3)), batch,
                          np.random.default_rng(6), n_directions=1000).value
    ok = abs(z3 - 4.0) <= 0.2 and z1 < 1e-3
    report(capsys, 5, "GP calibration", ok,
           f"|w|=3 -> Z={z3:.4f} (4 +- 5%); |w|=1 -> Z={z1:.2e} (< 1e-3)")


# -- criterion 6: metric sanity ---------------------------------------------------


def test_criterion_6_metric_sanity(capsys):
    rng = np.random.default_rng(13)
    a = Image(rng.uniform(0.0, 0.8, (48, 48, 3)).astype(np.float32))
    b = Image((a.pixels + np.float32(0.1)).astype(np.float32))
    p = psnr(a, b)
    s_self = ssim(a, a)

    from skimage.metrics import structural_similarity as sk_ssim

    worst = 0.0
    for i in range(20):
        r = np.random.default_rng(200 + i)
        base = r.random((32 + int(r.integers(0, 32)), 40, 3)).astype(np.float32)
        x = Image(base)
        noisy = np.clip(base + r.normal(0, 0.08, base.shape), 0, 1).astype(np.float32)
        y = Image(noisy)
        ours = ssim(x, y)
        ref = sk_ssim(
            x.luminance(), y.luminance(), data_range=1.0,
            gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
        )
        worst = max(worst, abs(ours - ref))
    ok = abs(p - 20.0) <= 0.01 and s_self == 1.0 and worst < 1e-4
    report(capsys, 6, "metric sanity", ok,
           f"PSNR(0.1 offset) = {p:.6f} (20 +- 0.01); SSIM(a,a) = {s_self}; "
           f"max |SSIM - reference| = {worst:.2e} over 20 pairs (< 1e-4)")


# -- criterion 7: the synthetic unpaired experiment -------------------------------


def test_criterion_7_toy_training(capsys, toy_dirs, toy_run):
    ckpt, minutes = toy_run
    net, _ = load_agent(ckpt)
    hits, gains = [], []
    names = sorted(os.listdir(toy_dirs["holdout_src"]))
    for name in names:
        src = load_image(os.path.join(toy_dirs["holdout_src"], name))
        ref = load_image(os.path.join(toy_dirs["holdout_ref"], name))
        action = greedy_action(agent_forward(net, src)[0])
        hits.append(bool(action[EXP] > 0 and (action[SAT] > 0 or action[VIB] > 0)))
        gains.append(psnr(apply_pipeline(src, action), ref) - psnr(src, ref))
    hit_rate = float(np.mean(hits))
    mean_gain = float(np.mean(gains))
    ok = minutes < 30.0 and hit_rate >= 0.9 and mean_gain >= 2.0 and len(names) == 50
    report(capsys, 7, "toy unpaired training", ok,
           f"{minutes:.1f} min (< 30); exposure+chroma positive on "
           f"{hit_rate:.0%} of 50 held-out (>= 90%); mean PSNR gain "
           f"{mean_gain:+.2f} dB (>= +2)")


# -- criterion 8: scale invariance end-to-end -------------------------------------


def test_criterion_8_scale_invariance(capsys, toy_run):
    ckpt, _ = toy_run
    net, _ = load_agent(ckpt)
    rng = np.random.default_rng(14)
    diffs = []
    for _ in range(8):
        field = coarse_field(rng)
        big, small = render(field, 512), render(field, 128)
        out_big = apply_pipeline(big, greedy_action(agent_forward(
            net, resize_bicubic(big, 64, 64))[0]))
        out_small = apply_pipeline(small, greedy_action(agent_forward(
            net, resize_bicubic(small, 64, 64))[0]))
        shrunk = resize_bicubic(out_big, 128, 128)
        diffs.append(float(np.mean(np.abs(shrunk.pixels - out_small.pixels))))
    worst = max(diffs)
    report(capsys, 8, "scale invariance", worst < 2.0 / 255.0,
           f"512px->128px vs native 128px: worst mean abs diff {worst:.5f} "
           f"(< {2.0 / 255.0:.5f}) over 8 scenes")


# -- criterion 9: determinism ------------------------------------------------------


def test_criterion_9_determinism(capsys, toy_dirs, toy_run, tmp_path):
    # two complete (short) training runs, small capacity so the replay
    # ring wraps and eviction order matters
    cfg = dict(TOY_TRAIN, generator_steps=30, replay_capacity=128, seed=7)
    blobs = []
    for name in ("a", "b"):
        out = tmp_path / f"{name}.rtch"
        dataset = Dataset.from_dirs(toy_dirs["source"], toy_dirs["target"])
        run_training(TrainConfig(**cfg), dataset, out)
        blobs.append(out.read_bytes())
    runs_identical = blobs[0] == blobs[1]

    # cmd_enhance twice from the trained checkpoint
    ckpt, _ = toy_run
    src = os.path.join(toy_dirs["holdout_src"], "0000.ppm")
    outputs, reports = [], []
    for name in ("x", "y"):
        out = tmp_path / f"{name}.png"
        rep = tmp_path / f"{name}.json"
        rc = cli_main(["enhance", "--ckpt", str(ckpt), "--in", src,
                       "--out", str(out), "--report", str(rep)])
        assert rc == 0
        outputs.append(out.read_bytes())
        reports.append(rep.read_bytes())
    enhance_identical = outputs[0] == outputs[1] and reports[0] == reports[1]
    report(capsys, 9, "determinism", runs_identical and enhance_identical,
           f"two {cfg['generator_steps']}-step runs byte-identical: {runs_identical}; "
           f"enhance outputs+reports byte-identical: {enhance_identical}")
