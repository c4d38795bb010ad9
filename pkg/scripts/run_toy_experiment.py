#!/usr/bin/env python3
"""Train on the synthetic task and score the held-out sources.

Reports how often the greedy policy picks a positive Exposure together
with a positive Saturation or Vibrance, and the PSNR gain over leaving
the distorted images untouched.
"""

import argparse
import os
import time

import numpy as np

from retouch.agent import agent_forward, greedy_action
from retouch.filters import FILTER_NAMES, apply_pipeline
from retouch.image import load_image, psnr
from retouch.toydata import write_toy_dataset
from retouch.training import Dataset, TrainConfig, run_training, load_agent


def evaluate_holdout(net, data_root):
    src_dir = os.path.join(data_root, "holdout_src")
    ref_dir = os.path.join(data_root, "holdout_ref")
    exp = FILTER_NAMES.index("Exposure")
    sat = FILTER_NAMES.index("Saturation")
    vib = FILTER_NAMES.index("Vibrance")
    hits, base_psnr, out_psnr = [], [], []
    for name in sorted(os.listdir(src_dir)):
        if not name.endswith(".ppm"):
            continue
        src = load_image(os.path.join(src_dir, name))
        ref = load_image(os.path.join(ref_dir, name))
        action = greedy_action(agent_forward(net, src)[0])
        hits.append(action[exp] > 0 and (action[sat] > 0 or action[vib] > 0))
        base_psnr.append(psnr(src, ref))
        out_psnr.append(psnr(apply_pipeline(src, action), ref))
    return float(np.mean(hits)), float(np.mean(base_psnr)), float(np.mean(out_psnr))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", required=True,
                    help="dataset root; generated here if missing")
    ap.add_argument("--out", required=True, help="checkpoint path")
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--lr", type=float, default=TrainConfig.lr)
    ap.add_argument("--gp-samples", type=int, default=1)
    args = ap.parse_args()

    if not os.path.isdir(os.path.join(args.data, "source")):
        print("generating dataset ...")
        write_toy_dataset(args.data, seed=100)
    dataset = Dataset.from_dirs(
        os.path.join(args.data, "source"), os.path.join(args.data, "target")
    )
    cfg = TrainConfig(
        generator_steps=args.steps, seed=args.seed, lr=args.lr,
        gp_samples=args.gp_samples,
    )

    t0 = time.time()

    def on_step(row):
        if row["step"] % 100 == 0:
            print(
                "step {step}: reward={reward:.3f} critic={critic_loss:.3f} "
                "({elapsed:.0f}s)".format(elapsed=time.time() - t0, **row),
                flush=True,
            )

    run_training(cfg, dataset, args.out, on_step=on_step)
    print(f"trained in {(time.time() - t0) / 60:.1f} min -> {args.out}")

    net, _ = load_agent(args.out)
    hit_rate, base, enhanced = evaluate_holdout(net, args.data)
    print(f"holdout: exposure+chroma positive on {hit_rate:.0%}")
    print(f"identity PSNR {base:.2f} dB -> enhanced {enhanced:.2f} dB "
          f"(gain {enhanced - base:+.2f} dB)")


if __name__ == "__main__":
    main()
