"""Compare analytic and central-difference gradients for both loss variants and the full model."""

import argparse
import sys

from addloss import gradients as gr
from addloss.model import model_gradcheck


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1e-5)
    args = p.parse_args(argv)

    loss = gr.gradcheck(trials=args.trials, seed=args.seed, h=args.h)
    print(f"losses: norm-wise {loss.max_rel_error:.3e}, elementwise {loss.max_elementwise_error:.3e}")
    print(f"model:  norm-wise {model_gradcheck(args.trials, args.seed, args.h):.3e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
