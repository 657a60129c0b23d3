"""Write simulated ego-motion frame logs as JSON files for `planarnav datapipe run`."""
import argparse
import json
from pathlib import Path

from planarnav.datapipe import simulate_logs
from planarnav.worldsim import log_to_dict


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="logs")
    ap.add_argument("--logs", type=int, default=4)
    ap.add_argument("--clips", type=int, default=12, help="scripted clips per log")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    logs = simulate_logs(args.logs, args.clips, seed=args.seed)
    for lg in logs:
        (out / f"{lg.source_id}.json").write_text(json.dumps(log_to_dict(lg)))
    print(f"wrote {len(logs)} logs to {out}")


if __name__ == "__main__":
    main()
