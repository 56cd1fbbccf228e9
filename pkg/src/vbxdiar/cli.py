"""Command-line interface: ``vbxdiar {score,cluster,simulate,stats}``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import metrics, simcon
from .pipeline import PipelineError, diarize_recording, load_config
from .plda import PldaError, diagonalize, load_plda, read_segments, read_xvector_archive
from .timeline import Annotation, RttmParseError, dataset_stats, parse_rttm, write_rttm

logger = logging.getLogger("vbxdiar")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_rttm(path) -> dict[str, Annotation]:
    try:
        return {a.recording_id: a for a in parse_rttm(Path(path).read_bytes())}
    except RttmParseError as exc:
        raise DataError(f"{path}: {exc}") from None
    except OSError as exc:
        raise DataError(str(exc)) from None


def _pct(x: float) -> str:
    return f"{100.0 * x:.2f}"


# ---------------------------------------------------------------- score


def cmd_score(args, out) -> int:
    refs = _read_rttm(args.ref)
    hyps = _read_rttm(args.hyp)
    common = sorted(set(refs) & set(hyps))
    if not common:
        raise DataError("reference and hypothesis share no recording ids")
    for rec in sorted(set(refs) - set(hyps)):
        logger.warning("%s: missing from hypothesis, skipped", rec)

    header = ["recording", "DER", "miss", "fa", "confusion", "total_speech"]
    if args.jer:
        header.append("JER")
    out.write("\t".join(header) + "\n")
    total = metrics.DerBreakdown(0.0, 0.0, 0.0, 0.0)
    jer_values = []
    ref_counts, hyp_counts = [], []
    for rec in common:
        ref, hyp = refs[rec], hyps[rec]
        mapping = metrics.optimal_mapping(ref, hyp)
        try:
            d = metrics.der(ref, hyp, collar=args.collar, score_overlap=not args.skip_overlap, mapping=mapping)
        except metrics.ScoringError as exc:
            raise DataError(str(exc)) from None
        total = total + d
        row = [rec, _pct(d.der), f"{d.miss:.3f}", f"{d.fa:.3f}", f"{d.confusion:.3f}", f"{d.total_speech:.3f}"]
        if args.jer:
            j = metrics.jer(ref, hyp, mapping=mapping)
            jer_values.extend(j.per_speaker.values())
            row.append(_pct(j.jer))
        ref_counts.append(len(ref.speakers))
        hyp_counts.append(len(hyp.speakers))
        out.write("\t".join(row) + "\n")

    row = ["*ALL*", _pct(total.der), f"{total.miss:.3f}", f"{total.fa:.3f}", f"{total.confusion:.3f}",
           f"{total.total_speech:.3f}"]
    if args.jer:
        row.append(_pct(float(np.mean(jer_values))))
    out.write("\t".join(row) + "\n")
    msce = metrics.msce(ref_counts, hyp_counts)
    out.write(f"# MSCE\t{msce:.2f}\n")
    summary = (f"# DER {_pct(total.der)}% (miss {_pct(total.miss / total.total_speech)}%, "
               f"fa {_pct(total.fa / total.total_speech)}%, "
               f"confusion {_pct(total.confusion / total.total_speech)}%) over {len(common)} recording(s), "
               f"collar {args.collar:g} s")
    if args.jer:
        summary += f", JER {_pct(float(np.mean(jer_values)))}%"
    out.write(summary + "\n")
    return EXIT_OK


# -------------------------------------------------------------- cluster


def _cluster_one(job):
    rec, X, segs, diag, config, overlap = job
    ann = diarize_recording(rec, X, segs, diag, config, overlap_regions=overlap)
    return write_rttm([ann])


def cmd_cluster(args, out) -> int:
    try:
        X = read_xvector_archive(args.xvecs)
        segs = read_segments(args.segments)
        model = load_plda(args.plda)
    except (PldaError, OSError) as exc:
        raise DataError(str(exc)) from None
    if len(segs) != X.shape[0]:
        raise DataError(f"{args.segments}: {len(segs)} segments for {X.shape[0]} x-vectors")
    overrides = {k: getattr(args, k) for k in ("lda_dim", "ahc_threshold", "fa", "fb", "loop_p", "max_iters",
                                                 "elbo_tol", "init_smoothing", "max_speakers", "merge_gap")}
    if args.overlap:
        overrides["overlap"] = "true"
    try:
        config = load_config(args.config, overrides)
        diag = diagonalize(model, config.lda_dim)
    except (ValueError, OSError) as exc:
        raise DataError(str(exc)) from None

    overlap_regions = {}
    if args.overlap:
        for rec, ann in _read_rttm(args.overlap).items():
            overlap_regions[rec] = [(s.onset, s.offset) for s in ann.segments]

    rows: dict[str, list[int]] = {}
    for i, (rec, _, _) in enumerate(segs):
        rows.setdefault(rec, []).append(i)
    jobs = []
    for rec in sorted(rows):
        idx = rows[rec]
        seg_arr = np.array([[segs[i][1], segs[i][2]] for i in idx])
        jobs.append((rec, X[idx], seg_arr, diag, config, overlap_regions.get(rec)))

    try:
        if args.jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as ex:
                chunks = list(ex.map(_cluster_one, jobs))
        else:
            chunks = [_cluster_one(j) for j in jobs]
    except PipelineError as exc:
        raise DataError(str(exc)) from None
    data = b"".join(chunks)
    if args.out == "-":
        out.write(data.decode("utf-8"))
    else:
        Path(args.out).write_bytes(data)
    return EXIT_OK


# ------------------------------------------------------------- simulate


def _load_audio_dir(path) -> list[tuple[int, np.ndarray]]:
    if not path:
        return []
    files = sorted(Path(path).glob("*.wav"))
    if not files:
        raise DataError(f"{path}: no .wav files")
    return [simcon.read_wav(f) for f in files]


def _render_job(job):
    tl, source_paths, rate, noise, snr, rirs, rir_prob, seed, out_dir = job
    cache = {p: simcon.read_wav(p) for p in source_paths}
    wav = simcon.render_audio(tl, cache, rate, noise=noise, snr_db=snr, rirs=rirs, rir_prob=rir_prob, seed=seed)
    simcon.write_wav(Path(out_dir) / f"{tl.recording_id}.wav", rate, wav)
    (Path(out_dir) / f"{tl.recording_id}.rttm").write_bytes(write_rttm([tl.annotation]))
    return tl.recording_id


def cmd_simulate(args, out) -> int:
    try:
        pool = simcon.load_pool_manifest(args.pool)
    except (ValueError, OSError) as exc:
        raise DataError(str(exc)) from None
    if args.mode == "sc":
        if not args.stats:
            raise _UsageError("--mode sc needs --stats")
        try:
            stats = simcon.load_stats(args.stats)
        except (ValueError, OSError) as exc:
            raise DataError(str(exc)) from None
    elif args.beta is None:
        raise _UsageError("--mode sm needs --beta")
    snrs = [float(v) for v in args.snr.split(",")] if args.snr else [5.0, 10.0, 15.0, 20.0]
    noises = _load_audio_dir(args.noise)
    rirs = []
    for rate, data in _load_audio_dir(args.rirs):
        peak = np.max(np.abs(data.astype(float))) if data.size else 0.0
        if peak == 0:
            raise DataError(f"{args.rirs}: silent RIR file")
        # int16 RIRs are stored at arbitrary gain; scale to a unit peak tap
        rirs.append((rate, data.astype(float) / peak))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    # timelines are planned sequentially: SC consumes utterances without
    # replacement across the whole pass
    timelines = []
    used: set = set()
    for i in range(args.n_out):
        rec = f"{args.mode}_{i:06d}"
        seed_i = args.seed ^ i
        try:
            if args.mode == "sc":
                try:
                    tl = simcon.simulate_conversation(pool, args.n_spk, stats, seed_i, used=used, recording_id=rec)
                except simcon.PoolExhausted:
                    used.clear()
                    tl = simcon.simulate_conversation(pool, args.n_spk, stats, seed_i, used=used, recording_id=rec)
            else:
                tl = simcon.simulate_mixture(pool, args.n_spk, args.beta, args.n_umin, args.n_umax, seed_i,
                                             recording_id=rec)
        except (simcon.PoolExhausted, ValueError) as exc:
            raise DataError(str(exc)) from None
        timelines.append(tl)

    jobs = []
    for i, tl in enumerate(timelines):
        rng = np.random.default_rng([args.seed ^ i, 1])
        noise = snr = None
        if noises:
            noise = noises[int(rng.integers(len(noises)))]
            snr = snrs[int(rng.integers(len(snrs)))]
        paths = sorted({p.source for p in tl.placements})
        jobs.append((tl, paths, args.sample_rate, noise, snr, rirs, args.rir_prob, int(rng.integers(2**63)), out_dir))
    try:
        if args.jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as ex:
                names = list(ex.map(_render_job, jobs))
        else:
            names = [_render_job(j) for j in jobs]
    except (ValueError, KeyError, OSError) as exc:
        raise DataError(str(exc)) from None

    lines = [f"{n}\t{n}.wav\t{n}.rttm\n" for n in names]
    (out_dir / "manifest.tsv").write_text("".join(lines))
    out.write(f"wrote {len(names)} recording(s) to {out_dir}\n")
    return EXIT_OK


# ---------------------------------------------------------------- stats


def _read_durations(path) -> dict[str, float]:
    durs = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(str(exc)) from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 2:
            raise DataError(f"{path}:{lineno}: expected '<recording_id> <seconds>'")
        try:
            durs[fields[0]] = float(fields[1])
        except ValueError:
            raise DataError(f"{path}:{lineno}: duration is not a number") from None
    return durs


def cmd_stats(args, out) -> int:
    anns = _read_rttm(args.rttm)
    durs = _read_durations(args.durations)
    missing = sorted(set(anns) - set(durs))
    if missing:
        raise DataError(f"no duration for recording(s): {', '.join(missing)}")
    out.write("recording\tsilence\t1-speaker\toverlap\n")
    rows = []
    for rec in sorted(anns):
        try:
            st = dataset_stats(anns[rec], durs[rec])
        except ValueError as exc:
            raise DataError(str(exc)) from None
        vals = (st["silence_pct"], st["single_speaker_pct"], st["overlap_pct"])
        rows.append(vals)
        out.write(f"{rec}\t" + "\t".join(f"{v:.2f}" for v in vals) + "\n")
    if rows:
        avg = np.mean(rows, axis=0)
        out.write("*AVG*\t" + "\t".join(f"{v:.2f}" for v in avg) + "\n")
    if args.estimate_sim_stats:
        try:
            stats = simcon.estimate_stats([anns[r] for r in sorted(anns)], args.bin_width)
        except ValueError as exc:
            raise DataError(str(exc)) from None
        simcon.save_stats(stats, args.estimate_sim_stats)
    return EXIT_OK


# ----------------------------------------------------------------- main


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vbxdiar", description="VBx diarization, scoring and conversation simulation")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("score", help="DER/JER/MSCE of a hypothesis RTTM")
    s.add_argument("--ref", required=True)
    s.add_argument("--hyp", required=True)
    s.add_argument("--collar", type=float, default=0.0)
    s.add_argument("--skip-overlap", action="store_true")
    s.add_argument("--jer", action="store_true")
    s.set_defaults(func=cmd_score)

    c = sub.add_parser("cluster", help="diarize x-vector archives with AHC + VBx")
    c.add_argument("--xvecs", required=True)
    c.add_argument("--segments", required=True)
    c.add_argument("--plda", required=True)
    c.add_argument("--config")
    c.add_argument("--out", required=True)
    c.add_argument("--overlap", help="RTTM of detected overlap regions (speaker field ignored)")
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--lda-dim", dest="lda_dim", type=int)
    c.add_argument("--ahc-threshold", dest="ahc_threshold", type=float)
    c.add_argument("--fa", type=float)
    c.add_argument("--fb", type=float)
    c.add_argument("--loop-p", dest="loop_p", type=float)
    c.add_argument("--max-iters", dest="max_iters", type=int)
    c.add_argument("--elbo-tol", dest="elbo_tol", type=float)
    c.add_argument("--init-smoothing", dest="init_smoothing", type=float)
    c.add_argument("--max-speakers", dest="max_speakers", type=int)
    c.add_argument("--merge-gap", dest="merge_gap", type=float)
    c.set_defaults(func=cmd_cluster)

    m = sub.add_parser("simulate", help="generate simulated conversations or mixtures")
    m.add_argument("--mode", choices=("sc", "sm"), required=True)
    m.add_argument("--pool", required=True)
    m.add_argument("--stats")
    m.add_argument("--beta", type=float)
    m.add_argument("--n-spk", dest="n_spk", type=int, default=2)
    m.add_argument("--n-out", dest="n_out", type=int, default=1)
    m.add_argument("--n-umin", dest="n_umin", type=int, default=10)
    m.add_argument("--n-umax", dest="n_umax", type=int, default=20)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--noise", help="directory of noise WAVs")
    m.add_argument("--snr", help="comma-separated SNRs in dB (default 5,10,15,20)")
    m.add_argument("--rirs", help="directory of RIR WAVs")
    m.add_argument("--rir-prob", dest="rir_prob", type=float, default=0.5)
    m.add_argument("--sample-rate", dest="sample_rate", type=int, default=8000)
    m.add_argument("--jobs", type=int, default=1)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_simulate)

    t = sub.add_parser("stats", help="silence/1-speaker/overlap percentages")
    t.add_argument("--rttm", required=True)
    t.add_argument("--durations", required=True)
    t.add_argument("--estimate-sim-stats", dest="estimate_sim_stats")
    t.add_argument("--bin-width", dest="bin_width", type=float, default=simcon.DEFAULT_BIN_WIDTH)
    t.set_defaults(func=cmd_stats)
    return p


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args, out)
    except _UsageError as exc:
        print(f"vbxdiar {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"vbxdiar {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
