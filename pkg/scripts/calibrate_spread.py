"""Print CE-only accuracy (mean over seeds) for a range of blob spreads.

Used to pick a synthetic task whose cross-entropy baseline lands in a target
accuracy band before running the loss-weight ablation on it.
"""

import argparse
import sys

import numpy as np

from addloss.data import SynthConfig, generate_synthetic
from addloss.model import ModelConfig
from addloss.trainer import TrainConfig, train


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--separation", type=float, default=4.0)
    p.add_argument("--spreads", default="2.0,2.3,2.6,3.0")
    p.add_argument("--seeds", type=int, default=5)
    args = p.parse_args(argv)

    for spread in (float(s) for s in args.spreads.split(",")):
        ds = generate_synthetic(SynthConfig(classes=5, dim=args.dim, per_class=args.per_class,
                                            spread=spread, separation=args.separation))
        accs = [train(ds, ModelConfig(), TrainConfig(loss_mode="none", seed=s))[1].final_accuracy
                for s in range(args.seeds)]
        print(f"spread {spread:<6} CE accuracy {np.mean(accs):.3f} (min {min(accs):.3f})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
