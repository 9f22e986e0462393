"""DCASE-style event annotation files.

One event per line, tab separated. Three layouts are recognised::

    onset  offset  label
    filename  onset  offset  label
    filename  scene  onset  offset  label

Lines that only carry a file name (recordings without events) are skipped.
"""

import io
from pathlib import Path
from typing import List, NamedTuple, Sequence, Union

import pandas

from dcrnn_sed.common.exceptions import DataError

_COLUMNS = {
    3: ["onset", "offset", "label"],
    4: ["filename", "onset", "offset", "label"],
    5: ["filename", "scene", "onset", "offset", "label"],
}


class Event(NamedTuple):
    """One annotated sound event, times in seconds."""

    onset: float
    offset: float
    label: str


def parse_annotations(file_content: str, source: str = "<string>") -> List[Event]:
    """Parse the contents of an annotation file into events sorted by onset."""
    if not file_content.strip():
        return []
    # One spare column so that over-long lines are counted instead of folded into an index.
    n_fields = max(_COLUMNS) + 1
    try:
        table = pandas.read_csv(
            io.StringIO(file_content),
            sep="\t",
            header=None,
            names=list(range(n_fields)),
            index_col=False,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
        )
    except pandas.errors.ParserError as exception:
        raise DataError(f"{source}: too many tab-separated columns: {exception}") from exception

    widths = table.notna().sum(axis=1)
    event_widths = sorted(set(widths[widths > 1].tolist()))
    if not event_widths:
        return []
    if len(event_widths) > 1:
        raise DataError(f"{source}: inconsistent number of columns, found lines with {event_widths} fields")
    (width,) = event_widths
    columns = _COLUMNS.get(width)
    if columns is None:
        raise DataError(f"{source}: expected 3, 4 or 5 tab-separated columns, found {width}")
    table = table.loc[widths == width, list(range(width))]
    table.columns = columns
    table = table[table["label"].str.strip() != ""]

    events = []
    for line, row in table.iterrows():
        try:
            onset, offset = float(row["onset"]), float(row["offset"])
        except ValueError as exception:
            raise DataError(f"{source}, line {line + 1}: onset and offset must be numbers") from exception
        if not 0 <= onset < offset:
            raise DataError(f"{source}, line {line + 1}: invalid event interval [{onset}, {offset})")
        events.append(Event(onset, offset, row["label"].strip()))
    return sorted(events)


def read_annotations(path: Union[str, Path]) -> List[Event]:
    path = Path(path)
    try:
        content = path.read_text()
    except OSError as exception:
        raise DataError(f"cannot read the annotation file `{path}`: {exception}") from exception
    return parse_annotations(content, source=str(path))


def format_annotations(events: Sequence[Event]) -> str:
    """Format ``events`` in the three-column layout."""
    if not events:
        return ""
    table = pandas.DataFrame([tuple(event) for event in events], columns=_COLUMNS[3])
    return table.to_csv(sep="\t", header=False, index=False, lineterminator="\n")


def write_annotations(path: Union[str, Path], events: Sequence[Event]) -> None:
    Path(path).write_text(format_annotations(events))


def event_labels(events: Sequence[Event]) -> List[str]:
    return sorted({event.label for event in events})
