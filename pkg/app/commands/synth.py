import logging

from app.models import PipelineConfig
from evaluation.synth import synth_dataset

logger = logging.getLogger(__name__)


def register(subparsers, parents):
    p = subparsers.add_parser("synth", parents=parents, help="Render a synthetic iris dataset with manifest")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--images", type=int, default=5, help="Images per class and session")
    p.add_argument("--noise", type=float, default=0.01, help="Pixel noise sigma")
    p.add_argument("--sessions", nargs="+", choices=("VL", "NIR"), default=["VL"])
    p.set_defaults(func=run)
    return p


def run(args, config: PipelineConfig) -> int:
    if args.classes < 2:
        raise ValueError(f"--classes must be at least 2, got {args.classes}")
    manifest = synth_dataset(args.out, classes=args.classes, images_per_class=args.images,
                             noise_sigma=args.noise, seed=config.seed, sessions=args.sessions)
    logger.info("Manifest with %d entries written to %s (seed=%d)", len(manifest.entries), args.out, config.seed)
    return 0
