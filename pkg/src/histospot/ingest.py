"""Loading of raw sections and the processed per-spot archive.

Raw inputs are plain TSV: a count matrix per section (either orientation,
declared explicitly), a spot coordinate table per section, and a
two-column Ensembl-to-symbol map. The assembled dataset is persisted as a
zip container holding the per-spot count, pixel, patient, and index
arrays plus the gene and spot id lists needed downstream.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .container import read_container, write_container
from .errors import ParseError, SchemaError, ValidationError

log = logging.getLogger(__name__)

ARCHIVE_ARRAYS = ("count", "pixel", "patient", "index", "genes", "spot_ids")

SPOT_COLUMNS = ("spot_id", "array_row", "array_col", "pixel_x", "pixel_y")


@dataclass(frozen=True)
class SectionRecord:
    """One tissue section: identity plus the three files describing it."""

    patient_id: str
    section_id: str
    image_path: Path
    counts_path: Path
    spots_path: Path


@dataclass
class CountMatrix:
    """Dense genes x spots expression counts for one section."""

    gene_ids: list
    spot_ids: list
    counts: np.ndarray  # (genes, spots) int64, all >= 0

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (len(self.gene_ids), len(self.spot_ids)):
            raise ValidationError(
                f"count matrix shape {self.counts.shape} does not match "
                f"{len(self.gene_ids)} genes x {len(self.spot_ids)} spots"
            )
        for label, ids in (("gene", self.gene_ids), ("spot", self.spot_ids)):
            dupes = _duplicates(ids)
            if dupes:
                raise ValidationError(f"duplicate {label} ids: {sorted(dupes)}")
        if (self.counts < 0).any():
            raise ValidationError("negative counts in matrix")


@dataclass(frozen=True)
class SpotRecord:
    """One ST spot with array and pixel coordinates and its identity."""

    spot_id: str
    array_row: int
    array_col: int
    pixel_x: int
    pixel_y: int
    patient_id: str
    section_id: str


@dataclass
class GeneIdMap:
    """Ensembl id -> HGNC symbol translation table."""

    entries: dict

    def __post_init__(self):
        for ens, sym in self.entries.items():
            if not sym:
                raise ValidationError(f"empty symbol for Ensembl id {ens!r}")


@dataclass
class SpotArchive:
    """Assembled per-spot dataset; the unit every later stage consumes.

    The four per-spot arrays (count, pixel, patient, index) are parallel;
    ``genes`` names the columns of ``count`` and ``spot_ids`` carries the
    per-section spot identifier. ``index`` rows are
    (section_id, array_row, array_col) as strings.
    """

    genes: np.ndarray      # (G,) unicode
    spot_ids: np.ndarray   # (S,) unicode
    count: np.ndarray      # (S, G) int64
    pixel: np.ndarray      # (S, 2) int64, (x, y)
    patient: np.ndarray    # (S,) unicode
    index: np.ndarray      # (S, 3) unicode

    def __post_init__(self):
        n = len(self.spot_ids)
        for name in ("count", "pixel", "patient", "index"):
            if len(getattr(self, name)) != n:
                raise ValidationError(f"archive array {name!r} length != spot count {n}")
        if self.count.shape[1] != len(self.genes):
            raise ValidationError("count columns do not match gene list")
        keys = self.spot_keys()
        if len(set(keys)) != n:
            raise ValidationError("duplicate spots in archive")

    @property
    def n_spots(self) -> int:
        return len(self.spot_ids)

    @property
    def n_genes(self) -> int:
        return len(self.genes)

    @property
    def section_ids(self) -> np.ndarray:
        return self.index[:, 0]

    def spot_keys(self) -> list:
        """Globally unique spot identifiers, '<section>:<spot_id>'."""
        return [f"{sec}:{sid}" for sec, sid in zip(self.index[:, 0], self.spot_ids)]

    def take_spots(self, mask_or_idx) -> "SpotArchive":
        return SpotArchive(
            genes=self.genes.copy(),
            spot_ids=self.spot_ids[mask_or_idx],
            count=self.count[mask_or_idx],
            pixel=self.pixel[mask_or_idx],
            patient=self.patient[mask_or_idx],
            index=self.index[mask_or_idx],
        )

    def take_genes(self, mask_or_idx) -> "SpotArchive":
        return SpotArchive(
            genes=self.genes[mask_or_idx],
            spot_ids=self.spot_ids.copy(),
            count=self.count[:, mask_or_idx],
            pixel=self.pixel.copy(),
            patient=self.patient.copy(),
            index=self.index.copy(),
        )


def _duplicates(items):
    seen, dupes = set(), set()
    for x in items:
        if x in seen:
            dupes.add(x)
        seen.add(x)
    return dupes


def _read_tsv_rows(path):
    text = Path(path).read_text(encoding="utf-8")
    rows = [line.split("\t") for line in text.split("\n") if line != ""]
    if not rows:
        raise ParseError(f"{path}: empty file")
    return rows


def load_count_matrix(path, genes_as: str = "rows") -> CountMatrix:
    """Parse a TSV count table; orientation normalized to genes x spots.

    ``genes_as='rows'``: header names the spots, each body row is one gene.
    ``genes_as='cols'``: header names the genes, each body row is one spot.
    The top-left header cell is a corner label and is ignored.
    """
    if genes_as not in ("rows", "cols"):
        raise ValueError(f"genes_as must be 'rows' or 'cols', got {genes_as!r}")
    rows = _read_tsv_rows(path)
    if len(rows) < 2:
        raise ParseError(f"{path}: no data rows")
    header = rows[0][1:]
    width = len(rows[0])
    row_ids = []
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise ParseError(
                f"{path}: line {lineno}: expected {width} fields, found {len(row)}"
            )
        row_ids.append(row[0])
        try:
            values.append([int(tok) for tok in row[1:]])
        except ValueError:
            raise ParseError(f"{path}: line {lineno}: non-integer count") from None
    counts = np.asarray(values, dtype=np.int64)
    if (counts < 0).any():
        raise ValidationError(f"{path}: negative counts")
    if genes_as == "rows":
        gene_ids, spot_ids = row_ids, header
    else:
        gene_ids, spot_ids = header, row_ids
        counts = counts.T.copy()
    return CountMatrix(gene_ids=gene_ids, spot_ids=spot_ids, counts=counts)


def save_count_matrix(m: CountMatrix, path, genes_as: str = "rows") -> None:
    """Inverse of load_count_matrix; round-trips values exactly."""
    if genes_as == "rows":
        header = ["gene"] + list(m.spot_ids)
        lines = ["\t".join(header)]
        for g, row in zip(m.gene_ids, m.counts):
            lines.append("\t".join([g] + [str(v) for v in row]))
    elif genes_as == "cols":
        header = ["spot"] + list(m.gene_ids)
        lines = ["\t".join(header)]
        for s, col in zip(m.spot_ids, m.counts.T):
            lines.append("\t".join([s] + [str(v) for v in col]))
    else:
        raise ValueError(f"genes_as must be 'rows' or 'cols', got {genes_as!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_spot_table(path, section: SectionRecord) -> list:
    """Parse a spot coordinate TSV, stamping section/patient identity."""
    rows = _read_tsv_rows(path)
    header = rows[0]
    missing = [c for c in SPOT_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    col = {name: header.index(name) for name in SPOT_COLUMNS}
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(
                f"{path}: line {lineno}: expected {len(header)} fields, found {len(row)}"
            )
        try:
            fields = {name: row[col[name]] for name in SPOT_COLUMNS}
            rec = SpotRecord(
                spot_id=fields["spot_id"],
                array_row=int(fields["array_row"]),
                array_col=int(fields["array_col"]),
                pixel_x=int(fields["pixel_x"]),
                pixel_y=int(fields["pixel_y"]),
                patient_id=section.patient_id,
                section_id=section.section_id,
            )
        except ValueError:
            raise ParseError(f"{path}: line {lineno}: non-integer coordinate") from None
        if rec.pixel_x < 0 or rec.pixel_y < 0:
            raise ValidationError(f"{path}: line {lineno}: negative pixel coordinate")
        records.append(rec)
    return records


def load_gene_map(path) -> GeneIdMap:
    """Two-column TSV (ensembl_id, symbol); header row optional."""
    rows = _read_tsv_rows(path)
    start = 1 if rows[0][:2] == ["ensembl_id", "symbol"] else 0
    entries = {}
    for lineno, row in enumerate(rows[start:], start=start + 1):
        if len(row) != 2:
            raise ParseError(f"{path}: line {lineno}: expected 2 fields, found {len(row)}")
        ens, sym = row
        if ens in entries:
            raise ValidationError(f"{path}: duplicate Ensembl id {ens!r}")
        entries[ens] = sym
    return GeneIdMap(entries=entries)


def map_gene_symbols(m: CountMatrix, gene_map: GeneIdMap, policy: str = "drop") -> CountMatrix:
    """Rename Ensembl-indexed rows to symbols.

    Unmapped ids are dropped (policy='drop') or kept under their Ensembl id
    (policy='keep'). When several ids map to one symbol their count rows
    are summed; counts are additive reads of the same symbol.
    """
    if policy not in ("drop", "keep"):
        raise ValueError(f"policy must be 'drop' or 'keep', got {policy!r}")
    order = []
    rows = {}
    for gid, row in zip(m.gene_ids, m.counts):
        sym = gene_map.entries.get(gid)
        if sym is None:
            if policy == "drop":
                continue
            sym = gid
        if sym not in rows:
            order.append(sym)
            rows[sym] = row.astype(np.int64, copy=True)
        else:
            rows[sym] += row
    counts = (
        np.stack([rows[s] for s in order])
        if order
        else np.zeros((0, len(m.spot_ids)), dtype=np.int64)
    )
    return CountMatrix(gene_ids=order, spot_ids=list(m.spot_ids), counts=counts)


def assemble_dataset(sections) -> SpotArchive:
    """Join per-section (SectionRecord, CountMatrix, spot records) triples.

    The gene universe is the union over sections in first-appearance order;
    genes absent from a section contribute zero counts. Spots present in
    only one of the two per-section files are dropped with a warning.
    """
    gene_order = []
    gene_pos = {}
    for _, matrix, _ in sections:
        for g in matrix.gene_ids:
            if g not in gene_pos:
                gene_pos[g] = len(gene_order)
                gene_order.append(g)
    n_genes = len(gene_order)

    spot_ids, counts, pixels, patients, index = [], [], [], [], []
    for section, matrix, spots in sections:
        col_of = {sid: j for j, sid in enumerate(matrix.spot_ids)}
        seen = set()
        for rec in spots:
            j = col_of.get(rec.spot_id)
            if j is None:
                log.warning(
                    "section %s: spot %s has coordinates but no counts; dropped",
                    section.section_id, rec.spot_id,
                )
                continue
            seen.add(rec.spot_id)
            vec = np.zeros(n_genes, dtype=np.int64)
            for g, c in zip(matrix.gene_ids, matrix.counts[:, j]):
                vec[gene_pos[g]] = c
            spot_ids.append(rec.spot_id)
            counts.append(vec)
            pixels.append((rec.pixel_x, rec.pixel_y))
            patients.append(rec.patient_id)
            index.append((rec.section_id, str(rec.array_row), str(rec.array_col)))
        orphans = set(matrix.spot_ids) - seen
        if orphans:
            log.warning(
                "section %s: %d count columns without coordinates; dropped",
                section.section_id, len(orphans),
            )
    if not spot_ids:
        raise ValidationError("no spots joined across sections")
    return SpotArchive(
        genes=np.asarray(gene_order, dtype=np.str_),
        spot_ids=np.asarray(spot_ids, dtype=np.str_),
        count=np.stack(counts),
        pixel=np.asarray(pixels, dtype=np.int64),
        patient=np.asarray(patients, dtype=np.str_),
        index=np.asarray(index, dtype=np.str_),
    )


def write_archive(archive: SpotArchive, path, meta: dict | None = None) -> None:
    arrays = {
        "count": archive.count,
        "pixel": archive.pixel,
        "patient": archive.patient,
        "index": archive.index,
        "genes": archive.genes,
        "spot_ids": archive.spot_ids,
    }
    write_container(path, arrays, meta={"kind": "spot-archive", **(meta or {})})


def read_archive(path) -> SpotArchive:
    arrays, _ = read_container(path, required=ARCHIVE_ARRAYS)
    return SpotArchive(
        genes=arrays["genes"],
        spot_ids=arrays["spot_ids"],
        count=arrays["count"],
        pixel=arrays["pixel"],
        patient=arrays["patient"],
        index=arrays["index"],
    )


@dataclass(frozen=True)
class DatasetManifest:
    """Parsed ingest manifest: the sections of one dataset."""

    sections: tuple = field(default_factory=tuple)


def load_manifest(path) -> list:
    """Read a dataset manifest JSON into SectionRecords.

    Schema: {"sections": [{"patient_id", "section_id", "image",
    "counts", "spots"}, ...]}; relative paths resolve against the
    manifest's directory.
    """
    import json

    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    if "sections" not in data:
        raise SchemaError(f"{path}: manifest missing 'sections'")
    base = path.parent
    records = []
    seen = set()
    for i, entry in enumerate(data["sections"]):
        missing = [k for k in ("patient_id", "section_id", "image", "counts", "spots") if k not in entry]
        if missing:
            raise SchemaError(f"{path}: section {i}: missing keys {missing}")
        key = (entry["patient_id"], entry["section_id"])
        if key in seen:
            raise ValidationError(f"{path}: duplicate section {key}")
        seen.add(key)
        rec = SectionRecord(
            patient_id=entry["patient_id"],
            section_id=entry["section_id"],
            image_path=base / entry["image"],
            counts_path=base / entry["counts"],
            spots_path=base / entry["spots"],
        )
        for p in (rec.image_path, rec.counts_path, rec.spots_path):
            if not Path(p).is_file():
                raise ValidationError(f"{path}: section {key}: missing file {p}")
        records.append(rec)
    return records
