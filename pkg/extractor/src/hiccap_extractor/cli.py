"""Command line: cut media into clips and emit HCMF features + manifest."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .encoders import EncoderUnavailable, StubCaptioner, load_pretrained_captioner
from .extract import DimDrift, ExtractionJob, build_manifest, entry_dims, extract_all
from .media import DecodeError


def parse_clips(text: str, n_windows: int):
    if text == "auto":
        return None
    try:
        indices = [int(x) for x in text.split(",") if x.strip() != ""]
    except ValueError:
        raise SystemExit(f"--clips must be 'auto' or a comma list of indices, got {text!r}")
    bad = [i for i in indices if not 0 <= i < n_windows]
    if bad:
        raise SystemExit(f"clip indices {bad} out of range; source has {n_windows} windows")
    return indices


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="hiccap-extract", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("extract", help="extract one video into clip features")
    p.add_argument("--in", dest="media", required=True, help="video file")
    p.add_argument("--audio", help="WAV audio track for the same video")
    p.add_argument("--subs", help="SRT subtitle file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--clips", default="auto", help="'auto' or comma list of clip indices")
    p.add_argument("--clip-seconds", type=float, default=60.0)
    p.add_argument("--captioner", default="stub",
                   help="'stub', 'off', or the name of an installed pretrained captioner")
    args = parser.parse_args(argv)

    if args.captioner == "stub":
        captioner = StubCaptioner()
    elif args.captioner == "off":
        captioner = None
    else:
        try:
            captioner = load_pretrained_captioner(args.captioner)
        except EncoderUnavailable as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2

    job = ExtractionJob(
        media_path=Path(args.media),
        out_dir=Path(args.out),
        audio_path=Path(args.audio) if args.audio else None,
        subtitle_path=Path(args.subs) if args.subs else None,
        clip_seconds=args.clip_seconds,
        captioner=captioner,
    )
    try:
        windows = job.clip_windows()
        indices = parse_clips(args.clips, len(windows))
        entries = extract_all(job, indices)
        pairs = [(entry, entry_dims(job, entry)) for entry in entries]
        manifest = build_manifest(pairs, job.out_dir / "manifest.json")
    except (DecodeError, DimDrift) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sources = {e["text_source"] for e in entries}
    print(f"wrote {len(entries)} clips to {manifest} (text sources: {', '.join(sorted(sources))})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
