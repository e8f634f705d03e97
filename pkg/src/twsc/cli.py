"""Command line front end: ``twsc denoise`` and ``twsc bench``.

Exit codes: 0 success, 1 bad arguments, 2 I/O failure, 3 solver failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .images import ImageFormatError, quantize, read_image, write_image
from .metrics import psnr, ssim
from .noise import (
    ChannelSigmas,
    add_awgn,
    add_heterogeneous_noise,
    estimate_sigmas,
    gradient_std_map,
)
from .pipeline import DenoiseError, denoise, resolve_config

log = logging.getLogger("twsc")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_SOLVER = 0, 1, 2, 3
DEFAULT_BENCH_SIGMAS = (15.0, 25.0, 35.0, 50.0, 75.0)
# relative channel scales of the heterogeneous bench variant
HETERO_CHANNEL_SCALES = (5.8, 4.4, 5.5)
IMAGE_SUFFIXES = {".png", ".ppm", ".pgm", ".pnm"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunManifest:
    """Everything needed to reproduce a denoise run, stored as ``key=value`` lines.

    Values are JSON encoded, so floats and ``None`` survive a round trip.
    Nested dicts are flattened with dotted keys.
    """

    input: str
    output: str
    seed: int | None = None
    flags: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)

    _SECTIONS = ("flags", "config", "timings", "metrics")

    def to_text(self) -> str:
        lines = [
            f"input={json.dumps(self.input)}",
            f"output={json.dumps(self.output)}",
            f"seed={json.dumps(self.seed)}",
        ]
        for sec in self._SECTIONS:
            for k, v in getattr(self, sec).items():
                lines.append(f"{sec}.{k}={json.dumps(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunManifest":
        top: dict = {}
        sections: dict = {s: {} for s in cls._SECTIONS}
        for n, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.startswith("#"):
                continue
            key, sep, raw = line.partition("=")
            if not sep:
                raise ValueError(f"manifest line {n}: missing '='")
            value = json.loads(raw)
            sec, dot, sub = key.partition(".")
            if dot and sec in sections:
                sections[sec][sub] = value
            elif key in ("input", "output", "seed"):
                top[key] = value
            else:
                raise ValueError(f"manifest line {n}: unknown key {key!r}")
        if "input" not in top or "output" not in top:
            raise ValueError("manifest lacks input or output")
        return cls(**top, **sections)

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls.from_text(Path(path).read_text())


def _add_solver_overrides(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver overrides (default: chosen from the noise level)")
    g.add_argument("--patch-size", type=int, dest="p", metavar="P")
    g.add_argument("--group-size", type=int, dest="M", metavar="M")
    g.add_argument("--k1", type=int, dest="K1", help="ADMM iteration cap (default 10)")
    g.add_argument("--k2", type=int, dest="K2", help="outer iterations")
    g.add_argument("--window", type=int, help="block matching window (default 60)")
    g.add_argument("--stride", type=int, help="reference patch stride (default 3)")
    g.add_argument("--workers", type=int, default=1, help="threads for per-group solves")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="twsc", description="Trilateral weighted sparse coding denoiser.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("denoise", help="denoise one image")
    d.add_argument("input", help="8-bit PNG or binary PPM/PGM")
    d.add_argument("output")
    d.add_argument("--sigma", type=float, help="noise std for every channel")
    d.add_argument("--sigma-r", type=float)
    d.add_argument("--sigma-g", type=float)
    d.add_argument("--sigma-b", type=float)
    d.add_argument("--estimate-noise", action="store_true",
                   help="estimate channel stds from the input (the default without --sigma*)")
    d.add_argument("--grayscale", action="store_true", help="process channels independently")
    d.add_argument("--wsc-baseline", action="store_true",
                   help="drop the channel and patch noise weights")
    d.add_argument("--seed", type=int, default=0, help="seed for --add-noise")
    d.add_argument("--add-noise", type=float, metavar="SIGMA",
                   help="add seeded Gaussian noise to the input first (for experiments)")
    d.add_argument("--reference", help="clean image; PSNR/SSIM go into the manifest")
    d.add_argument("--report", metavar="CSV", help="per-outer-iteration report")
    d.add_argument("--dump-weights", metavar="CSV", help="w1/w2 of every group, last outer iteration")
    d.add_argument("--manifest", help="manifest path (default: OUTPUT.manifest)")
    _add_solver_overrides(d)

    b = sub.add_parser("bench", help="TWSC vs WSC on a corpus of clean images")
    b.add_argument("corpus", help="directory of clean 8-bit images")
    b.add_argument("--sigmas", default=",".join(f"{s:g}" for s in DEFAULT_BENCH_SIGMAS))
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", metavar="CSV", help="table path (default: stdout)")
    b.add_argument("--heterogeneous", action="store_true",
                   help="unequal channel stds and a 2:1 left-right std gradient instead of AWGN")
    b.add_argument("--no-timing", action="store_true",
                   help="leave wall_seconds empty so repeated runs are byte-identical")
    _add_solver_overrides(b)
    return parser


def _overrides(args) -> dict:
    out = {k: getattr(args, k) for k in ("p", "M", "K1", "K2", "window", "stride")
           if getattr(args, k) is not None}
    out["workers"] = args.workers
    return out


def _nonnegative(name, v):
    if v is not None and not v >= 0:
        raise UsageError(f"{name} must be nonnegative, got {v}")


def _requested_sigmas(args, n_channels: int) -> ChannelSigmas | None:
    rgb = (args.sigma_r, args.sigma_g, args.sigma_b)
    for name, v in zip(("--sigma", "--sigma-r", "--sigma-g", "--sigma-b"), (args.sigma, *rgb)):
        _nonnegative(name, v)
    given_rgb = [v is not None for v in rgb]
    if args.sigma is not None and any(given_rgb):
        raise UsageError("--sigma cannot be combined with --sigma-r/-g/-b")
    if args.estimate_noise and (args.sigma is not None or any(given_rgb)):
        raise UsageError("--estimate-noise cannot be combined with explicit stds")
    if any(given_rgb):
        if not all(given_rgb):
            raise UsageError("--sigma-r, --sigma-g and --sigma-b must be given together")
        if n_channels != 3:
            raise UsageError("per-channel stds need a color input")
        return ChannelSigmas(rgb, "user_supplied")
    if args.sigma is not None:
        return ChannelSigmas((args.sigma,) * n_channels, "user_supplied")
    return None


def _write_weights(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["outer_iteration", "ref_row", "ref_col", "weight", "index", "value"])
        w.writerows(rows)


def cmd_denoise(args) -> int:
    if args.add_noise is not None:
        _nonnegative("--add-noise", args.add_noise)
    try:
        clean_in = read_image(args.input)
        reference = None if args.reference is None else read_image(args.reference)
    except (OSError, ImageFormatError) as exc:
        log.error("cannot read input: %s", exc)
        return EXIT_IO
    out_dir = Path(args.output).resolve().parent
    if not out_dir.is_dir():
        log.error("output directory %s does not exist", out_dir)
        return EXIT_IO
    if reference is not None and reference.shape != clean_in.shape:
        raise UsageError(f"reference shape {reference.shape} != input shape {clean_in.shape}")

    noisy = clean_in.astype(float)
    if args.add_noise:
        noisy = add_awgn(noisy, args.add_noise, args.seed)
    n_ch = 1 if noisy.ndim == 2 else noisy.shape[2]
    sigmas = _requested_sigmas(args, n_ch) or estimate_sigmas(noisy)
    log.info("channel stds %s (%s)", sigmas.values, sigmas.source)
    try:
        cfg = resolve_config(
            noisy, sigmas,
            mode="grayscale" if args.grayscale else "color",
            wsc=args.wsc_baseline,
            **_overrides(args),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    weight_rows: list = []

    def sink(k, loc, weights):
        for name, vec in (("w1", weights.w1), ("w2", weights.w2)):
            weight_rows.extend((k, loc[0], loc[1], name, i, f"{v:.10g}") for i, v in enumerate(vec))

    t0 = time.perf_counter()
    try:
        out, report = denoise(noisy, cfg, reference=reference,
                              weight_sink=sink if args.dump_weights else None)
    except (DenoiseError, ArithmeticError) as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    elapsed = time.perf_counter() - t0

    manifest = RunManifest(
        input=str(args.input),
        output=str(args.output),
        seed=args.seed,
        flags={
            "mode": cfg.mode,
            "wsc_baseline": bool(args.wsc_baseline),
            "sigma_source": sigmas.source,
            "sigmas": list(sigmas.values),
            "add_noise": args.add_noise,
            "reference": args.reference,
        },
        config=cfg.as_dict(),
        timings={"denoise_seconds": round(elapsed, 3),
                 "outer_seconds": [round(it.wall_seconds, 3) for it in report.iterations]},
    )
    if reference is not None:
        est = np.clip(out, 0, 255)
        manifest.metrics = {"psnr_db": psnr(est, reference), "ssim": ssim(est, reference)}
    try:
        write_image(args.output, quantize(out))
        manifest.write(args.manifest or f"{args.output}.manifest")
        if args.report:
            report.write_csv(args.report)
        if args.dump_weights:
            _write_weights(args.dump_weights, weight_rows)
    except (OSError, ImageFormatError) as exc:
        log.error("cannot write output: %s", exc)
        return EXIT_IO
    return EXIT_OK


def _parse_sigmas(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --sigmas list {text!r}") from exc
    if not vals or any(not v > 0 for v in vals):
        raise UsageError("--sigmas needs one or more positive values")
    return vals


def _corrupt(clean, sigma: float, seed: int, heterogeneous: bool):
    """Noisy image and the per-channel stds handed to the denoiser."""
    n_ch = 1 if clean.ndim == 2 else clean.shape[2]
    if not heterogeneous:
        return add_awgn(clean, sigma, seed), ChannelSigmas((sigma,) * n_ch)
    scales = np.array(HETERO_CHANNEL_SCALES[:n_ch] if n_ch == 3 else HETERO_CHANNEL_SCALES[:1])
    # rescale so the pooled std equals the nominal sigma
    scales = scales * sigma / np.sqrt(np.mean(scales**2))
    noisy = add_heterogeneous_noise(clean, scales, gradient_std_map(clean.shape), seed)
    return noisy, ChannelSigmas(tuple(scales))


def cmd_bench(args) -> int:
    sigmas = _parse_sigmas(args.sigmas)
    corpus = Path(args.corpus)
    if not corpus.is_dir():
        log.error("corpus directory %s does not exist", corpus)
        return EXIT_IO
    files = sorted(f for f in corpus.iterdir() if f.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise UsageError(f"no images in {corpus}")
    try:
        images = [read_image(f).astype(float) for f in files]
    except (OSError, ImageFormatError) as exc:
        log.error("cannot read corpus: %s", exc)
        return EXIT_IO

    rows = []
    for sigma in sigmas:
        acc = {"TWSC": [], "WSC": []}
        secs = {"TWSC": 0.0, "WSC": 0.0}
        for i, clean in enumerate(images):
            noisy, ch = _corrupt(clean, sigma, args.seed + i, args.heterogeneous)
            for method in ("TWSC", "WSC"):
                try:
                    cfg = resolve_config(noisy, ch, wsc=(method == "WSC"), **_overrides(args))
                except ValueError as exc:
                    raise UsageError(str(exc)) from exc
                t0 = time.perf_counter()
                try:
                    out, _ = denoise(noisy, cfg)
                except (DenoiseError, ArithmeticError) as exc:
                    log.error("%s, sigma %g, %s: %s", files[i].name, sigma, method, exc)
                    return EXIT_SOLVER
                secs[method] += time.perf_counter() - t0
                est = np.clip(out, 0, 255)
                acc[method].append((psnr(est, clean), ssim(est, clean)))
                log.info("%s sigma=%g %s: %.3f dB", files[i].name, sigma, method, acc[method][-1][0])
        for method in ("TWSC", "WSC"):
            ps, ss = zip(*acc[method])
            rows.append([
                f"{sigma:g}", method, f"{np.mean(ps):.4f}", f"{np.mean(ss):.6f}", len(images),
                "" if args.no_timing else f"{secs[method]:.3f}",
            ])

    header = ["sigma", "method", "mean_psnr_db", "mean_ssim", "images", "wall_seconds"]
    try:
        fh = open(args.out, "w", newline="") if args.out else sys.stdout
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        finally:
            if fh is not sys.stdout:
                fh.close()
    except OSError as exc:
        log.error("cannot write table: %s", exc)
        return EXIT_IO
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s: %(message)s",
        stream=sys.stderr,
    )
    handler = cmd_denoise if args.command == "denoise" else cmd_bench
    try:
        return handler(args)
    except UsageError as exc:
        print(f"twsc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
