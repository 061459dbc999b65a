"""Run every verification suite at desk scale and write CSV/JSON per suite.

Usage: python scripts/run_suites.py [OUT_DIR] [--workers W]
"""
import argparse
import json

from hssm.experiments import ExperimentConfig, run_suite

SEED = 20261015

RUNS = [
    ("oracle", ExperimentConfig(replicates=100_000, seed=SEED)),
    ("poisson", ExperimentConfig(case="HDP", alpha=0.0, beta=0.0, grid=(100_000,),
                                 replicates=10_000, seed=SEED)),
    ("lln", ExperimentConfig(case="HPYP", alpha=0.6, beta=0.5, grid=(10_000, 100_000, 1_000_000),
                             replicates=100, seed=SEED)),
    ("xi", ExperimentConfig(case="HPYP", alpha=0.5, beta=0.5, grid=(10_000, 100_000), c=10,
                            replicates=200, seed=SEED)),
    ("ldp", ExperimentConfig(case="single", alpha=0.5, theta=1.0,
                             grid=(200, 400, 800, 1600, 3200), x_list=(0.5,))),
    ("ldp", ExperimentConfig(case="HPYP", alpha=0.5, beta=0.5, grid=(100, 200, 300, 400),
                             x_list=(0.3,))),
    ("clt_single", ExperimentConfig(case="single", alpha=0.5, theta=1.0, grid=(100_000,), c=100,
                                    replicates=2000, seed=SEED)),
    ("clt_ewens", ExperimentConfig(case="single", alpha=0.0, theta=1.0, grid=(100_000,),
                                   replicates=2000, seed=SEED)),
    ("clt", ExperimentConfig(case="HPYP", alpha=0.7, beta=0.7, grid=(1_000_000,), c=100,
                             replicates=1000, seed=SEED)),
    ("hdp_inner", ExperimentConfig(case="HDP", alpha=0.0, beta=0.0, grid=(100_000,),
                                   replicates=1000, seed=SEED)),
]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out_dir", nargs="?", default="suite_out")
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--only", nargs="*", default=None, help="suite names to run")
    args = ap.parse_args()
    for i, (name, cfg) in enumerate(RUNS):
        if args.only and name not in args.only:
            continue
        if args.workers is not None:
            cfg = ExperimentConfig(**{**cfg.to_json(), "workers": args.workers})
        res = run_suite(name, cfg, f"{args.out_dir}/{i:02d}_{name}_{cfg.case}")
        status = "n/a" if res.passed is None else ("PASS" if res.passed else "FAIL")
        print(f"{name} [{cfg.case}]: {status}")
        print("  " + json.dumps(res.summary, default=str)[:300])


if __name__ == "__main__":
    main()
