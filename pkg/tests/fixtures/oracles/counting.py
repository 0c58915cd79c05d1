"""Counting and arithmetic oracles for measurement analytics, forecasting,
weighted buckets and capacity splits. Plain Python, no package imports."""

from __future__ import annotations

import math
from collections import defaultdict


def median(values):
    v = sorted(values)
    n = len(v)
    return v[n // 2] if n % 2 else (v[n // 2 - 1] + v[n // 2]) / 2


def hour_of(ts: str) -> str:
    # ISO timestamps in UTC: the hour is the first 13 characters
    return ts[:13]


def paired_hour_diffs(rows, client_fields=("country",)):
    """{(client tuple, dc): [internet - wan hourly median diffs]}"""
    samples = defaultdict(list)
    for r in rows:
        client = tuple(r[f] for f in client_fields)
        samples[(client, r["dc"], r["routing"], hour_of(r["timestamp"]))].append(float(r["rtt_ms"]))
    diffs = defaultdict(list)
    for (client, dc, routing, hour), v in samples.items():
        if routing != "Internet":
            continue
        wan = samples.get((client, dc, "WAN", hour))
        if wan:
            diffs[(client, dc)].append(median(v) - median(wan))
    return diffs


def bucket_fractions(rows):
    counts = [0, 0, 0, 0]
    for diffs in paired_hour_diffs(rows).values():
        for d in diffs:
            counts[0 if d < 0 else 1 if d <= 10 else 2 if d <= 25 else 3] += 1
    total = sum(counts)
    return [c / total for c in counts]


def fractions_f(rows, threshold=10.0, client_fields=("country",)):
    return {
        key: sum(1 for d in diffs if d <= threshold) / len(diffs)
        for key, diffs in paired_hour_diffs(rows, client_fields).items()
    }


def weighted_difference(fine, coarse):
    return sum(abs(f - coarse) * w for f, w in fine) / coarse


def granularity_d(rows, fine_fields, threshold=10.0):
    """{(country, dc): D} with weights = measurement shares among clusters
    that have paired hours."""
    coarse = fractions_f(rows, threshold)
    fine = fractions_f(rows, threshold, ("country",) + tuple(fine_fields))
    counts = defaultdict(int)
    for r in rows:
        counts[((r["country"],) + tuple(r[f] for f in fine_fields), r["dc"])] += 1
    out = {}
    for (client, dc), fc in coarse.items():
        members = [(k, f) for k, f in fine.items() if k[0][0] == client[0] and k[1] == dc]
        total = sum(counts[k] for k, _ in members)
        if fc > 0 and total:
            out[(client[0], dc)] = weighted_difference([(f, counts[k] / total) for k, f in members], fc)
    return out


def normalised_errors(pred, actual):
    peak = max(actual)
    n = len(actual)
    mae = sum(abs(p - a) for p, a in zip(pred, actual)) / n / peak
    rmse = math.sqrt(sum((p - a) ** 2 for p, a in zip(pred, actual)) / n) / peak
    return mae, rmse


def wrr_weights(cores, fractions, countries):
    out = []
    for dc in sorted(cores):
        f = min(fractions.get(f"{c}|{dc}", 0.0) for c in countries)
        out += [cores[dc] * (1 - f), cores[dc] * f]
    return out


def proportional_split(cap, priorities):
    total = sum(priorities.values())
    return {k: cap * p / total for k, p in priorities.items()}


def additive_series(level, trend, season, n):
    """Noise-free additive seasonal series and its exact continuation."""
    L = len(season)
    return [level + trend * t + season[t % L] for t in range(n)]
