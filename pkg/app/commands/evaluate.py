import logging

from app.imaging import load_manifest
from app.models import PipelineConfig, Scenario
from evaluation.codebook import CodeBook
from evaluation.report import write_report
from evaluation.scenario import SESSIONS, run_scenario, run_table

logger = logging.getLogger(__name__)


def register(subparsers, parents):
    p = subparsers.add_parser("evaluate", parents=parents, help="Run train/test scenarios and write reports")
    p.add_argument("manifest", help="JSON manifest of images")
    p.add_argument("--session", action="append", choices=SESSIONS, default=None,
                   help="VL, NIR or FUSED; repeat for several (default VL)")
    p.add_argument("--k-train", type=int, default=4, help="Gallery images per class")
    p.add_argument("--n-per-class", type=int, default=5, help="Images drawn per class")
    p.add_argument("--reps", type=int, default=20, help="Random splits to average")
    p.add_argument("--bins", type=int, default=50, help="Histogram bins for HD distributions")
    p.add_argument("--exclude-degraded", action="store_true", help="Drop codes with placeholder objects")
    p.add_argument("--all-scenarios", action="store_true",
                   help="Run k = 1..n-1 for every session and write comparison.csv")
    p.set_defaults(func=run)
    return p


def run(args, config: PipelineConfig) -> int:
    manifest = load_manifest(args.manifest)
    sessions = args.session or ["VL"]
    codebook = CodeBook(config)

    if args.all_scenarios:
        run_table(manifest, sessions, config, n_per_class=args.n_per_class, repetitions=args.reps,
                  seed=config.seed, out_dir=args.out, codebook=codebook,
                  exclude_degraded=args.exclude_degraded, bins=args.bins)
        return 0

    scenario = Scenario(k_train=args.k_train, n_per_class=args.n_per_class,
                        repetitions=args.reps, seed=config.seed)
    for session in sessions:
        report = run_scenario(manifest, session, scenario, config, codebook=codebook,
                              exclude_degraded=args.exclude_degraded, bins=args.bins)
        write_report(report, args.out)
    return 0
