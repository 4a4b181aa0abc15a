from pathlib import Path
from ..common import Namespace
from ..storage import write_wav
from ..training import synth_corpus
from ..utils.errprint import pinfo
from . import check_output, handler, load_config, record_run


@handler("generate the corpus")
def make_corpus_main(args: Namespace):
    cfg = load_config(args)
    out_dir = Path(args.output)
    sample_rate = args.sample_rate if args.sample_rate is not None else cfg.transforms.sample_rate
    seed = args.seed if args.seed is not None else 0
    items = synth_corpus(args.items, args.duration, sample_rate, seed, args.channels)
    paths = [check_output(out_dir / f"item_{i:04d}.wav", args.force) for i in range(len(items))]
    for path, item in zip(paths, items):
        write_wav(path, item, force=args.force)
    pinfo(f"{len(items)} items of {args.duration}s written to '{out_dir}'")
    record_run(args, "make-corpus", cfg, paths, seed, items=args.items, duration=args.duration)
    return None
