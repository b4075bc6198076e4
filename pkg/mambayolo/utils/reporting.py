"""Tab-separated, version-stamped text reports."""
import csv
import math

from mambayolo import __version__


def format_value(value) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        if math.isnan(value):
            return 'nan'
        return f"{value:.6e}"
    if isinstance(value, tuple):
        return 'x'.join(str(v) for v in value)
    return str(value)


def stamp(out, command: str) -> None:
    out.write(f"# mambayolo {__version__}\t{command}\n")


def write_table(out, header: list, rows) -> None:
    out.write('\t'.join(header) + '\n')
    for row in rows:
        out.write('\t'.join(format_value(v) for v in row) + '\n')


def write_pairs(out, pairs) -> None:
    """key<TAB>value lines."""
    for key, value in pairs:
        out.write(f"{key}\t{format_value(value)}\n")


def write_csv(path: str, header: list, rows) -> str:
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return path
