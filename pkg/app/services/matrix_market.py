"""
Matrix Market (coordinate and array, real/integer/pattern, general symmetry) and plain-text vectors.
Indices in files are 1-based; array-format values are listed column by column.
"""
import logging
from typing import Iterator, Optional, Tuple, Union

import aiofiles
import numpy as np
from scipy import sparse

from app import settings
from .errors import ParameterError, ParseError


logger = logging.getLogger(__name__)

BANNER = "%%matrixmarket"
SUPPORTED_FIELDS = ("real", "integer", "pattern")


def _content_lines(text: str, start: int = 1) -> Iterator[Tuple[int, str]]:
    # Skips blank lines and % comments, yields (1-based line number, stripped text)
    for number, line in enumerate(text.splitlines()[start - 1:], start=start):
        stripped = line.strip()
        if stripped and not stripped.startswith("%"):
            yield number, stripped


def _parse_header(first_line: str, path: Optional[str]) -> Tuple[str, str]:
    tokens = first_line.strip().lower().split()
    if len(tokens) != 5 or tokens[0] != BANNER or tokens[1] != "matrix":
        raise ParseError(1, f"Expected '%%MatrixMarket matrix <format> <field> <symmetry>', got {first_line.strip()!r}", path)
    layout, field, symmetry = tokens[2:]
    if layout not in ("coordinate", "array"):
        raise ParseError(1, f"Unknown format {layout!r}", path)
    if field not in SUPPORTED_FIELDS:
        raise ParseError(1, f"Unsupported field {field!r}", path)
    if symmetry != "general":
        raise ParseError(1, f"Only general symmetry is supported, got {symmetry!r}", path)
    if layout == "array" and field == "pattern":
        raise ParseError(1, "The pattern field needs the coordinate format", path)
    return layout, field


def _ints(number: int, tokens, count: int, path: Optional[str], what: str):
    if len(tokens) != count:
        raise ParseError(number, f"Expected {count} values in the {what}, got {len(tokens)}", path)
    try:
        values = [int(token) for token in tokens]
    except ValueError:
        raise ParseError(number, f"Non-integer value in the {what}", path)
    if any(value < 0 for value in values):
        raise ParseError(number, f"Negative value in the {what}", path)
    return values


def _float(number: int, token: str, path: Optional[str]) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(number, f"Cannot parse {token!r} as a number", path)


def parse_matrix_market(text: str, path: Optional[str] = None) -> Union[sparse.csr_matrix, np.ndarray]:
    lines = text.splitlines()
    if not lines:
        raise ParseError(1, "Empty file", path)
    layout, field = _parse_header(lines[0], path)
    content = _content_lines(text, start=2)
    try:
        number, size_line = next(content)
    except StopIteration:
        raise ParseError(len(lines), "Missing size line", path)

    if layout == "array":
        rows, cols = _ints(number, size_line.split(), 2, path, "size line")
        values = []
        for number, line in content:
            tokens = line.split()
            if len(tokens) != 1:
                raise ParseError(number, f"Expected one value per line, got {len(tokens)}", path)
            if len(values) == rows * cols:
                raise ParseError(number, f"More than {rows * cols} values", path)
            values.append(_float(number, tokens[0], path))
        if len(values) != rows * cols:
            raise ParseError(len(lines), f"Expected {rows * cols} values, found {len(values)}", path)
        # Column-major in the file
        return np.array(values, dtype=np.float64).reshape((cols, rows)).T.copy()

    rows, cols, nnz = _ints(number, size_line.split(), 3, path, "size line")
    width = 2 if field == "pattern" else 3
    row_index = np.empty(nnz, dtype=np.int64)
    col_index = np.empty(nnz, dtype=np.int64)
    data = np.ones(nnz, dtype=np.float64)
    count = 0
    for number, line in content:
        tokens = line.split()
        if count == nnz:
            raise ParseError(number, f"More than the declared {nnz} entries", path)
        if len(tokens) != width:
            raise ParseError(number, f"Expected {width} fields per entry, got {len(tokens)}", path)
        i, j = _ints(number, tokens[:2], 2, path, "entry indices")
        if not (1 <= i <= rows and 1 <= j <= cols):
            raise ParseError(number, f"Index ({i}, {j}) is outside the {rows} x {cols} matrix", path)
        row_index[count], col_index[count] = i - 1, j - 1
        if width == 3:
            data[count] = _float(number, tokens[2], path)
        count += 1
    if count != nnz:
        raise ParseError(len(lines), f"Expected {nnz} entries, found {count}", path)
    # Duplicate entries are summed by the COO -> CSR conversion
    matrix = sparse.coo_matrix((data, (row_index, col_index)), shape=(rows, cols)).tocsr()
    matrix.sum_duplicates()
    logger.debug(f"Parsed a {rows} x {cols} coordinate matrix with {matrix.nnz} stored entries")
    return matrix


async def read_text(path: str) -> str:
    try:
        async with aiofiles.open(path, "r", encoding="utf-8") as f:
            return await f.read()
    except OSError as e:
        raise ParameterError(f"Cannot read '{path}': {e}")
    except UnicodeDecodeError as e:
        raise ParameterError(f"'{path}' is not UTF-8 text: {e}")


async def read_matrix_market(path: str) -> Union[sparse.csr_matrix, np.ndarray]:
    return parse_matrix_market(await read_text(path), path=str(path))


def _format(value: float) -> str:
    return f"{value:.{settings.FLOAT_DIGITS}g}"


def write_matrix_market(matrix: Union[sparse.spmatrix, np.ndarray]) -> str:
    if sparse.issparse(matrix):
        coo = matrix.tocoo()
        order = np.lexsort((coo.row, coo.col))
        lines = [
            "%%MatrixMarket matrix coordinate real general",
            f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}",
        ]
        lines.extend(
            f"{coo.row[k] + 1} {coo.col[k] + 1} {_format(coo.data[k])}" for k in order
        )
    else:
        dense = np.asarray(matrix, dtype=np.float64)
        if dense.ndim == 1:
            dense = dense.reshape(-1, 1)
        lines = [
            "%%MatrixMarket matrix array real general",
            f"{dense.shape[0]} {dense.shape[1]}",
        ]
        lines.extend(_format(value) for value in dense.ravel(order="F"))
    return "\n".join(lines) + "\n"


def parse_vector(text: str, path: Optional[str] = None) -> np.ndarray:
    values = []
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped[0] in "%#":
            continue
        tokens = stripped.split()
        if len(tokens) != 1:
            raise ParseError(number, f"Expected one value per line, got {len(tokens)}", path)
        values.append(_float(number, tokens[0], path))
    if not values:
        raise ParseError(1, "The vector file has no values", path)
    return np.array(values, dtype=np.float64)


async def read_vector(path: str) -> np.ndarray:
    return parse_vector(await read_text(path), path=str(path))
