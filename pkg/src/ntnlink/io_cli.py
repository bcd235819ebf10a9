"""File formats, capture ingestion, plot-data emitters and the CLI.

IQ on disk is interleaved little-endian float32 I,Q with a JSON sidecar
describing the capture; datasets and models are a one-line JSON header
followed by a little-endian float64 blob. Reports are CSV with fixed
column names so figures can be regenerated from them directly.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import equalizer_models as em
from . import nn_core, nr_rx, ntn_channel
from . import nr_pbch_tx as tx
from .frame import IqFrame

__all__ = [
    "CaptureMeta", "read_iq", "write_iq", "ingest_capture",
    "save_dataset", "load_dataset",
    "write_eval_csv", "write_constellation_csv", "write_curve_csv",
    "main",
]


@dataclass
class CaptureMeta:
    """Sidecar metadata for one IQ recording."""

    sample_rate_hz: float
    center_freq_hz: float = 0.0
    tuned_freq_hz: float = 0.0
    gain_db: float = 0.0
    timestamp: str = ""

    def __post_init__(self) -> None:
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if not math.isfinite(self.center_freq_hz - self.tuned_freq_hz):
            raise ValueError("carrier/tuned frequency offset must be finite")

    @property
    def freq_offset_hz(self) -> float:
        """Known offset between the true carrier and the tuned frequency."""
        return self.center_freq_hz - self.tuned_freq_hz


def _meta_path(path: str | Path, meta_path: str | Path | None) -> Path:
    return Path(meta_path) if meta_path is not None else Path(str(path) + ".json")


def write_iq(frame: IqFrame, path: str | Path, meta: CaptureMeta | None = None,
             meta_path: str | Path | None = None) -> None:
    """Interleaved float32 I,Q plus a JSON sidecar."""
    inter = np.empty(2 * len(frame), dtype="<f4")
    inter[0::2] = frame.samples.real
    inter[1::2] = frame.samples.imag
    Path(path).write_bytes(inter.tobytes())
    if meta is None:
        meta = CaptureMeta(
            sample_rate_hz=frame.sample_rate_hz,
            center_freq_hz=frame.center_freq_hz,
            tuned_freq_hz=frame.center_freq_hz,
            gain_db=frame.gain_db or 0.0,
        )
    _meta_path(path, meta_path).write_text(json.dumps(asdict(meta), sort_keys=True) + "\n")


def read_iq(path: str | Path, meta_path: str | Path | None = None
            ) -> tuple[IqFrame, CaptureMeta]:
    """Read an IQ file and its sidecar; raises on truncation or bad sidecar."""
    raw = Path(path).read_bytes()
    if len(raw) % 8:
        raise ValueError(
            f"{path}: {len(raw)} bytes is not a whole number of float32 I,Q pairs")
    mp = _meta_path(path, meta_path)
    if not mp.exists():
        raise FileNotFoundError(f"missing sidecar {mp}")
    try:
        meta = CaptureMeta(**json.loads(mp.read_text()))
    except (json.JSONDecodeError, TypeError) as exc:
        raise ValueError(f"invalid sidecar {mp}: {exc}") from exc
    inter = np.frombuffer(raw, dtype="<f4")
    samples = inter[0::2].astype(np.float64) + 1j * inter[1::2].astype(np.float64)
    frame = IqFrame(samples=samples, sample_rate_hz=meta.sample_rate_hz,
                    center_freq_hz=meta.center_freq_hz, gain_db=meta.gain_db)
    return frame, meta


def ingest_capture(path: str | Path, meta_path: str | Path | None = None
                   ) -> tuple[IqFrame, CaptureMeta]:
    """Read a capture and pre-derotate the known carrier/tuning offset.

    The recording holds the signal at (center - tuned) Hz off baseband
    center; compensating here keeps synchronization generic.
    """
    frame, meta = read_iq(path, meta_path)
    if meta.freq_offset_hz:
        frame = ntn_channel.apply_cfo(frame, -meta.freq_offset_hz)
    return frame, meta


# -- dataset files -----------------------------------------------------------

def save_dataset(ds: em.SymbolDataset, path: str | Path) -> None:
    header = {
        "stage": ds.stage,
        "d_in": int(ds.d_in),
        "d_out": int(ds.targets.shape[1]),
        "count": len(ds),
        "snr_tags": [float(s) for s in ds.snr_tags],
        "origin": ds.origin,
        "seed": ds.seed,
        "redraw_count": ds.redraw_count,
        "metadata": ds.metadata,
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        f.write(np.ascontiguousarray(ds.inputs, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(ds.targets, dtype="<f8").tobytes())


def load_dataset(path: str | Path) -> em.SymbolDataset:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode())
        blob = f.read()
    n, d_in, d_out = header["count"], header["d_in"], header["d_out"]
    expect = (n * d_in + n * d_out) * 8
    if len(blob) != expect:
        raise ValueError(f"{path}: blob is {len(blob)} bytes, expected {expect}")
    inputs = np.frombuffer(blob, dtype="<f8", count=n * d_in).reshape(n, d_in)
    targets = np.frombuffer(blob, dtype="<f8", count=n * d_out,
                            offset=n * d_in * 8).reshape(n, d_out)
    return em.SymbolDataset(
        inputs=inputs.copy(), targets=targets.copy(), stage=header["stage"],
        snr_tags=np.array(header["snr_tags"]), origin=header["origin"],
        seed=header["seed"], redraw_count=header["redraw_count"],
        metadata=header.get("metadata", {}),
    )


# -- report emitters -----------------------------------------------------------

def write_eval_csv(report: em.EvalReport, path: str | Path) -> None:
    """One row per test SNR: snr_db, mse, ber_pre_nn, ber_post_nn."""
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["snr_db", "mse", "ber_pre_nn", "ber_post_nn"])
        w.writeheader()
        for row in report.rows:
            w.writerow({k: repr(row[k]) for k in w.fieldnames})


def write_constellation_csv(report: em.EvalReport, out_dir: str | Path,
                            prefix: str = "constellation") -> list[Path]:
    """Per test SNR, a CSV of re, im, stage covering every dumped stage."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for snr, stages in report.constellations.items():
        name = f"{prefix}_snr{int(snr) if float(snr).is_integer() else snr}db.csv"
        p = out_dir / name
        with open(p, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["re", "im", "stage"])
            for stage, points in stages.items():
                for c in points:
                    w.writerow([repr(float(c.real)), repr(float(c.imag)), stage])
        written.append(p)
    return written


def write_curve_csv(curve: nn_core.LearningCurve, path: str | Path) -> None:
    """epoch, train_mse, val_mse."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "train_mse", "val_mse"])
        for i, (t, v) in enumerate(zip(curve.train_mse, curve.val_mse)):
            w.writerow([i, repr(float(t)), repr(float(v))])


# -- decode reports ----------------------------------------------------------------

def decode_report(result: nr_rx.DecodeResult, model: nn_core.MlpModel | None = None,
                  sim: em.SimConfig | None = None) -> dict:
    """JSON-ready record for one decoded burst.

    With a model supplied and the parity check passing, bit error rates
    before/after the network are measured against regenerated labels (the
    only truth available for a capture).
    """
    sim = sim or em.SimConfig()
    record = {
        "n_cell_id": int(result.n_cell_id),
        "sfn": int(result.mib.sfn),
        "crc_pass": bool(result.crc_pass),
        "ber_pre_nn": None,
        "ber_post_nn": None,
        "snr_db": None,
    }
    target = em.regenerate_labels(result, sim)
    if target is None:
        return record
    coded_truth = nr_rx.qpsk_demod_hard(em.complexify(target))
    record["ber_pre_nn"] = nr_rx.compute_ber(
        coded_truth, nr_rx.qpsk_demod_hard(result.equalized.symbols))
    if model is not None:
        stage = model.metadata.get("stage", em.STAGE_ENHANCEMENT)
        if stage == em.STAGE_ENHANCEMENT:
            vec = em.realify(result.equalized.symbols)
        else:
            parts = [result.grid.extract_data()]
            if sim.equalization_input_includes_dmrs:
                parts.append(result.grid.extract_dmrs())
            vec = em.realify(np.concatenate(parts))
        out = em.complexify(nn_core.forward(model, vec))
        record["ber_post_nn"] = nr_rx.compute_ber(
            coded_truth, nr_rx.qpsk_demod_hard(out))
    return record


# -- CLI -------------------------------------------------------------------------

def _add_sim_args(p: argparse.ArgumentParser, burst_default: float, offset_default: float) -> None:
    p.add_argument("--burst-len-s", type=float, default=burst_default)
    p.add_argument("--ssb-offset-s", type=float, default=offset_default)
    p.add_argument("--no-dmrs-input", action="store_true",
                   help="equalization-stage inputs carry only the 432 data REs")


def _sim_from_args(args) -> em.SimConfig:
    return em.SimConfig(
        burst_len_s=args.burst_len_s,
        ssb_offset_s=args.ssb_offset_s,
        equalization_input_includes_dmrs=not args.no_dmrs_input,
    )


def _cmd_gen(args) -> int:
    if args.stage is not None:
        sim = replace(_sim_from_args(args), clean_channel=args.clean)
        snr = args.snr_grid if args.snr_grid else args.snr
        ds = em.build_synthetic_dataset(args.stage, snr, args.count, args.seed, sim)
        save_dataset(ds, args.out)
        print(f"wrote {len(ds)} examples ({ds.redraw_count} redraws) to {args.out}")
        return 0
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    sim = _sim_from_args(args)
    for i in range(args.count):
        rng = np.random.default_rng([args.seed, i, 0])
        cell = tx.CellIdentity(int(rng.integers(1008)))
        mib = tx.MibPayload(sfn=int(rng.integers(1024)))
        grid = tx.build_ssb_grid(mib, cell)
        burst = tx.build_ssb_burst(grid, sim.ofdm, sim.burst_len_s, sim.ssb_offset_s)
        if not args.clean:
            profile = ntn_channel.draw_profile(
                [args.seed, i, 1], sim.ofdm.scs_hz, sim.ofdm.sample_rate_hz,
                args.snr, sim.geo_delay_range_s)
            burst = ntn_channel.simulate(burst, profile)
        write_iq(burst, out_dir / f"burst_{i:04d}.iq")
    print(f"wrote {args.count} bursts to {out_dir}")
    return 0


def _cmd_decode(args) -> int:
    frame, _meta = ingest_capture(args.iq_file, args.meta)
    model = nn_core.load_model(args.model) if args.model else None
    sim = em.SimConfig(equalization_input_includes_dmrs=not args.no_dmrs_input)
    try:
        result = nr_rx.decode_burst(frame, sim.rx_config())
    except (nr_rx.PssNotFoundError, nr_rx.SssAmbiguousError) as exc:
        print(f"sync failed: {exc}", file=sys.stderr)
        return 1
    record = decode_report(result, model, sim)
    text = json.dumps(record, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0 if record["crc_pass"] else 1


def _cmd_dataset(args) -> int:
    sim = _sim_from_args(args)
    if args.iq_dir is not None:
        records, rejected = [], 0
        for path in sorted(Path(args.iq_dir).glob("*.iq")):
            frame, _ = ingest_capture(path)
            try:
                result = nr_rx.decode_burst(frame, sim.rx_config())
            except (nr_rx.PssNotFoundError, nr_rx.SssAmbiguousError, ValueError):
                rejected += 1
                continue
            target = em.regenerate_labels(result, sim)
            if target is None:
                rejected += 1
                continue
            if args.stage == em.STAGE_ENHANCEMENT:
                vec = em.realify(result.equalized.symbols)
            else:
                parts = [result.grid.extract_data()]
                if sim.equalization_input_includes_dmrs:
                    parts.append(result.grid.extract_dmrs())
                vec = em.realify(np.concatenate(parts))
            records.append((vec, target))
        if not records:
            print("no decodable bursts found", file=sys.stderr)
            return 1
        ds = em.SymbolDataset(
            inputs=np.array([r[0] for r in records]),
            targets=np.array([r[1] for r in records]),
            stage=args.stage,
            snr_tags=np.full(len(records), args.snr if args.snr is not None else np.nan),
            origin="captured", seed=args.seed,
            metadata={"rejected": rejected, "source": str(args.iq_dir)},
        )
        save_dataset(ds, args.out)
        print(f"wrote {len(ds)} captured examples ({rejected} rejected) to {args.out}")
        return 0
    snr = args.snr_grid if args.snr_grid else args.snr
    if snr is None:
        print("--snr or --snr-grid required for synthetic datasets", file=sys.stderr)
        return 2
    ds = em.build_synthetic_dataset(args.stage, snr, args.count, args.seed, sim)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} examples ({ds.redraw_count} redraws) to {args.out}")
    return 0


def _cmd_train(args) -> int:
    datasets = {}
    for spec in args.data:
        snr_str, _, path = spec.partition("=")
        if not path:
            print(f"--data expects SNR=PATH, got {spec!r}", file=sys.stderr)
            return 2
        datasets[float(snr_str)] = load_dataset(path)
    stages = {ds.stage for ds in datasets.values()}
    if len(stages) != 1:
        print(f"datasets disagree on stage: {stages}", file=sys.stderr)
        return 2
    stage = stages.pop()
    scheme = em.TrainScheme(args.scheme, tuple(sorted(datasets)) if args.scheme
                            != "fixed_20db" else em.DEFAULT_SNR_GRID)
    cfg = nn_core.TrainConfig(
        learning_rate=args.learning_rate, batch_size=args.batch_size,
        epochs=args.epochs, seed=args.seed,
        validation_fraction=args.validation_fraction)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = em.train_scheme(stage, scheme, datasets, cfg, args.hidden_width)
    for label, (model, curve) in results.items():
        model_path = out_dir / f"{stage}_{label}.model"
        nn_core.save_model(model, model_path)
        write_curve_csv(curve, out_dir / f"{stage}_{label}_curve.csv")
        print(f"wrote {model_path} (final val MSE {curve.val_mse[-1]:.6f})")
    return 0


def _cmd_eval(args) -> int:
    model = nn_core.load_model(args.model)
    stage = model.metadata.get("stage")
    if stage is None:
        stage = (em.STAGE_ENHANCEMENT if model.d_in == em.TARGET_DIM
                 else em.STAGE_EQUALIZATION)
    sim = em.SimConfig(equalization_input_includes_dmrs=not args.no_dmrs_input)
    report = em.evaluate(model, stage, args.snr_grid, args.bursts, args.seed, sim)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_eval_csv(report, out_dir / "report.csv")
    write_constellation_csv(report, out_dir)
    for row in report.rows:
        print(f"snr {row['snr_db']:5.1f} dB | mse {row['mse']:.6f} | "
              f"ber pre {row['ber_pre_nn']:.3e} post {row['ber_post_nn']:.3e}")
    print(f"wrote {out_dir}/report.csv")
    return 0


def _cmd_selftest(args) -> int:
    failures = 0

    def check(name: str, ok: bool) -> None:
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        failures += 0 if ok else 1

    rng = np.random.default_rng(args.seed)
    # codec round trip
    ok = True
    for _ in range(50):
        cell = tx.CellIdentity(int(rng.integers(1008)))
        mib = tx.MibPayload(sfn=int(rng.integers(1024)))
        coded = tx.encode_pbch(mib, cell)
        llrs = nr_rx.descramble_llrs(10.0 * (1.0 - 2.0 * coded.astype(float)),
                                     cell.n_cell_id, 0)
        payload, crc = nr_rx.pbch_decode(llrs, cell)
        ok &= crc and tx.unpack_mib_payload(payload) == mib
    check("codec round trip (50 payloads)", ok)

    # hard-decision BER against the closed-form error rate at 5 dB
    n_bits = 200_000
    bits = rng.integers(0, 2, n_bits).astype(np.uint8)
    syms = tx.qpsk_modulate(bits)
    noisy = ntn_channel.apply_awgn(
        IqFrame(syms, 1.0), 5.0, seed=int(rng.integers(2**32)))
    ber = nr_rx.compute_ber(bits, nr_rx.qpsk_demod_hard(noisy.samples))
    expect = 0.5 * math.erfc(math.sqrt(10 ** 0.5) / math.sqrt(2))
    check(f"QPSK BER at 5 dB ({ber:.5f} vs {expect:.5f})",
          abs(ber - expect) / expect < 0.15)

    # gradient check
    worst = 0.0
    for trial in range(3):
        dims = rng.integers(2, 8, size=3)
        model = nn_core.init_mlp(int(dims[0]), int(dims[1]), int(dims[2]), seed=trial)
        x = rng.standard_normal((2, model.d_in))
        y = rng.standard_normal((2, model.d_out))
        grads = nn_core.backward(model, x, y)
        h = 1e-5
        for li in (0, len(model.weights) - 1):
            w = model.weights[li]
            i, j = int(rng.integers(w.shape[0])), int(rng.integers(w.shape[1]))
            orig = w[i, j]
            w[i, j] = orig + h
            up = 0.5 * np.mean((nn_core.forward(model, x) - y) ** 2)
            w[i, j] = orig - h
            dn = 0.5 * np.mean((nn_core.forward(model, x) - y) ** 2)
            w[i, j] = orig
            fd = (up - dn) / (2 * h)
            an = grads.weights[li][i, j]
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-12))
    check(f"gradient vs finite differences (max rel {worst:.2e})", worst < 1e-4)

    print("selftest:", "ok" if failures == 0 else f"{failures} failure(s)")
    return 0 if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ntnlink",
        description="Broadcast-channel link simulator and NN equalization toolkit",
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="synthesize bursts as IQ files or a dataset")
    g.add_argument("--count", type=int, default=10)
    g.add_argument("--snr", type=float, default=20.0)
    g.add_argument("--snr-grid", type=float, nargs="+", default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--clean", action="store_true", help="skip channel impairments")
    g.add_argument("--stage", choices=list(em._STAGES), default=None,
                   help="emit a paired dataset instead of IQ files")
    g.add_argument("--out", required=True, help="output directory (IQ) or file (dataset)")
    _add_sim_args(g, burst_default=0.02, offset_default=0.005)
    g.set_defaults(func=_cmd_gen)

    d = sub.add_parser("decode", help="run the classical receiver on an IQ file")
    d.add_argument("iq_file")
    d.add_argument("--meta", default=None)
    d.add_argument("--model", default=None, help="optionally run a trained model too")
    d.add_argument("--no-dmrs-input", action="store_true")
    d.add_argument("--out", default=None, help="write the JSON report here")
    d.set_defaults(func=_cmd_decode)

    ds = sub.add_parser("dataset", help="build a training dataset")
    ds.add_argument("--stage", choices=list(em._STAGES), required=True)
    ds.add_argument("--count", type=int, default=3024)
    ds.add_argument("--snr", type=float, default=None)
    ds.add_argument("--snr-grid", type=float, nargs="+", default=None)
    ds.add_argument("--seed", type=int, default=0)
    ds.add_argument("--iq-dir", default=None,
                    help="label captured bursts from this directory instead")
    ds.add_argument("--out", required=True)
    _add_sim_args(ds, burst_default=0.002, offset_default=0.0005)
    ds.set_defaults(func=_cmd_dataset)

    t = sub.add_parser("train", help="train one of the three schemes")
    t.add_argument("--scheme", choices=["per_snr", "snr_range", "fixed_20db"],
                   required=True)
    t.add_argument("--data", action="append", default=[], metavar="SNR=PATH",
                   help="dataset file for one SNR (repeatable)")
    t.add_argument("--out-dir", required=True)
    t.add_argument("--hidden-width", type=int, default=864)
    t.add_argument("--epochs", type=int, default=40)
    t.add_argument("--batch-size", type=int, default=50)
    t.add_argument("--learning-rate", type=float, default=0.001)
    t.add_argument("--validation-fraction", type=float, default=0.1)
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="MSE/BER sweep over a test SNR grid")
    e.add_argument("--model", required=True)
    e.add_argument("--snr-grid", type=float, nargs="+",
                   default=list(em.DEFAULT_SNR_GRID))
    e.add_argument("--bursts", type=int, default=200)
    e.add_argument("--seed", type=int, default=1)
    e.add_argument("--no-dmrs-input", action="store_true")
    e.add_argument("--out-dir", required=True)
    e.set_defaults(func=_cmd_eval)

    s = sub.add_parser("selftest", help="run the built-in oracle checks")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=_cmd_selftest)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
