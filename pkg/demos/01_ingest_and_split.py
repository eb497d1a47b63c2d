#!/usr/bin/env python3
"""Walk through record ingestion: headers, the 27->24 label merge,
and stratified splitting."""

import tempfile
from collections import Counter
from pathlib import Path

from cardi.ingest import (
    LabelSpace,
    apply_merge,
    build_manifest,
    load_record,
    parse_header,
    stratified_kfold,
    stratified_split,
)
from cardi.synth import write_synthetic_records

workdir = Path(tempfile.mkdtemp(prefix="cardi-demo-"))

# generate a handful of records in the on-disk format: a text header plus a
# 12 x L signal matrix next to it
headers = write_synthetic_records(workdir, n_records=12, seed=0, seconds=8.0)
print(f"wrote {len(headers)} records under {workdir}")
print("--- first header ---")
print(headers[0].read_text())

info = parse_header(headers[0].read_text())
print(f"parsed: id={info.record_id} rate={info.sampling_rate} Hz "
      f"samples={info.duration_samples} age={info.age} sex={info.sex}")
print(f"diagnosis codes: {sorted(info.dx_codes)}")

record = load_record(headers[0])
print(f"signal matrix: {record.signal.shape}, {record.duration_samples} samples/lead")

# the scored space holds 24 canonical classes; three alias codes merge into
# their canonical partners
space = LabelSpace.default()
print(f"\nlabel space: {len(space)} classes, merge map: {space.merge_map}")
alias, canonical = next(iter(space.merge_map.items()))
vec_alias = apply_merge({alias}, space)
vec_canon = apply_merge({canonical}, space)
print(f"alias {alias} and canonical {canonical} land on the same index: "
      f"{(vec_alias == vec_canon).all()}")

# unknown codes are dropped, not errors; the tally goes to diagnostics
unknown = Counter()
apply_merge({"not-a-code", canonical}, space, unknown)
print(f"unknown codes dropped and tallied: {dict(unknown)}")

# manifest + stratified split: every class's positives stay within one
# record of their proportional share
meta = [(parse_header(h.read_text()).record_id, str(h),
         parse_header(h.read_text()).dx_codes) for h in headers]
manifest, diagnostics = build_manifest(meta, space)
split = stratified_split(manifest, (0.72, 0.18, 0.10), seed=42)
sizes = Counter(split.split.values())
print(f"\nsplit sizes for {len(manifest)} records: {dict(sizes)}")

folds = stratified_kfold(manifest, k=3, seed=42)
print(f"3-fold partition sizes: {[len(f) for f in folds]}")

out_csv = workdir / "manifest.csv"
split.save_csv(out_csv)
print(f"\nmanifest exported to {out_csv}:")
print("\n".join(out_csv.read_text().splitlines()[:4]))
