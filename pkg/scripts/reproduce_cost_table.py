from __future__ import annotations

import argparse
from pathlib import Path

import pandas as pd

from pixlab.costmodel import CBAM, FBS, SE, PiX, module_flops, module_memory


DEFAULT_SIZES = ((512, 112, 112), (512, 56, 56), (512, 28, 28))


def cost_table(sizes=DEFAULT_SIZES, fbs_topk: int = 1, pix_zeta: int = 1) -> pd.DataFrame:
    """Per-instance MFLOPs and MB of SE, CBAM, FBS and PiX for each CxHxW size."""
    modules = {"SE": SE(), "CBAM": CBAM(), "FBS": FBS(k=fbs_topk), "PiX": PiX(zeta=pix_zeta)}
    rows = []
    for channels, height, width in sizes:
        for name, module in modules.items():
            flops = module_flops(module, channels, height, width)
            memory = module_memory(module, channels, height, width)
            rows.append({
                "size": f"{channels}x{height}x{width}",
                "module": name,
                "flops": flops.total_flops,
                "mflops": flops.total_flops / 1e6,
                "memory_mb": memory.memory_mb,
            })
    return pd.DataFrame(rows)


def main() -> None:
    parser = argparse.ArgumentParser(
        description="Print the per-instance FLOP/memory comparison of SE, CBAM, FBS and PiX."
    )
    parser.add_argument("--fbs-topk", type=int, default=1, help="Top-k used in the FBS FLOP count.")
    parser.add_argument("--pix-zeta", type=int, default=1, help="Sampling factor of the PiX column.")
    parser.add_argument("--output", type=Path, default=None, help="Optional CSV destination.")
    args = parser.parse_args()

    table = cost_table(fbs_topk=args.fbs_topk, pix_zeta=args.pix_zeta)
    if args.output:
        table.to_csv(args.output, index=False, float_format="%.6f")
        print(f"{args.output}: {len(table)} rows")
    else:
        print(table.to_string(index=False, float_format=lambda v: f"{v:.6f}"))


if __name__ == "__main__":
    main()
