"""Sweep the six single/paired loss-weight settings over several seeds and print a table.

Usage: python scripts/run_ablation.py [--config configs/blobs.json] [--seeds 0-4] [--parallel 4]
"""

import argparse
import json
import sys
from pathlib import Path

from addloss import geometry as geo
from addloss.cli import _int_list, load_config
from addloss.metrics import SCORE_NAMES
from addloss.trainer import ablation_sweep

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default=str(ROOT / "configs" / "blobs.json"))
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2, 3, 4])
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--out", help="optional directory for ablation.csv and summary.json")
    args = p.parse_args(argv)

    cfg = load_config(args.config)
    dataset = cfg.load_dataset()
    table = ablation_sweep(dataset, cfg.model, cfg.train, geo.DEFAULT_ABLATION, args.seeds,
                           workers=args.parallel)
    summary = table.summary()
    header = f"{'lambda':<10}{'accuracy':>18}" + "".join(f"{k:>22}" for k in SCORE_NAMES)
    print(header)
    for tag, entry in summary.items():
        cells = [f"{entry[k]['mean']:.4f} ± {entry[k]['std']:.4f}" for k in ("accuracy", *SCORE_NAMES)]
        print(f"{tag:<10}{cells[0]:>18}" + "".join(f"{c:>22}" for c in cells[1:]))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        table.write_csv(out / "ablation.csv")
        (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
