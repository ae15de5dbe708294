"""Regenerates the bundled CSV fixtures. Output is deterministic."""
import datetime as dt
import math
import pathlib
import random

HERE = pathlib.Path(__file__).resolve().parent


def weekdays(start, count):
    d = start
    out = []
    while len(out) < count:
        if d.weekday() < 5:
            out.append(d)
        d += dt.timedelta(days=1)
    return out


def series(rng, rows, start_price, drift, vol, weekly, start):
    dates = weekdays(start, rows)
    lines = ["date,open,high,low,close,volume"]
    level = start_price
    prev_close = start_price
    for t, d in enumerate(dates):
        level *= math.exp(drift + vol * rng.gauss(0.0, 1.0))
        close = level + weekly * math.sin(2 * math.pi * t / 5)
        opening = prev_close * (1 + 0.004 * rng.gauss(0.0, 1.0))
        high = max(opening, close) * (1 + abs(0.006 * rng.gauss(0.0, 1.0)))
        low = min(opening, close) * (1 - abs(0.006 * rng.gauss(0.0, 1.0)))
        volume = int(1_000_000 * math.exp(0.3 * rng.gauss(0.0, 1.0)))
        o, h, l, c = (round(x, 2) for x in (opening, high, low, close))
        h = max(h, o, c)
        l = min(l, o, c)
        lines.append(f"{d.isoformat()},{o:.2f},{h:.2f},{l:.2f},{c:.2f},{volume}")
        prev_close = close
    return "\n".join(lines) + "\n"


def main():
    rng = random.Random(20240101)
    (HERE / "sample.csv").write_text(series(rng, 500, 250.0, 0.0004, 0.012, 1.5, dt.date(2022, 1, 3)))
    specs = [("BANKA", 420.0, 0.0005, 0.013, 2.0), ("BANKB", 95.0, 0.0002, 0.016, 0.6),
             ("BANKC", 610.0, 0.0003, 0.011, 3.0), ("BANKD", 48.0, 0.0006, 0.018, 0.3)]
    for name, price, drift, vol, weekly in specs:
        (HERE / "synth" / f"{name}.csv").write_text(series(rng, 260, price, drift, vol, weekly, dt.date(2023, 1, 2)))


if __name__ == "__main__":
    main()
