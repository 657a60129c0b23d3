"""Compare motion fidelity of routed turn experts against a single shared expert."""
import argparse
import json

from planarnav.harness import acmoe_ablation


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--plans", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--acmoe-flip", type=float, default=0.05)
    ap.add_argument("--single-flip", type=float, default=0.3)
    args = ap.parse_args(argv)
    res = acmoe_ablation(args.plans, args.seed, args.acmoe_flip, args.single_flip)
    print(json.dumps({"n_plans": len(res.acmoe), "skipped": res.skipped,
                      "mf_acmoe": float(res.acmoe.mean()), "mf_single": float(res.single.mean()),
                      "difference": res.difference, "p_ttest": res.p_value,
                      "p_wilcoxon": res.p_wilcoxon}, indent=1))


if __name__ == "__main__":
    main()
