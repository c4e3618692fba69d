from __future__ import annotations

import os
import sys
import glob
import hashlib
import logging
from typing import Iterator

__version__ = "0.1.0"

PACKAGE = "cascade_titles"

EXIT_IO = 2
EXIT_DATA = 3
EXIT_INTEGRITY = 4

MULTIPLIERS = {
    "k": 1000,
    "m": 1000 * 1000,
    "g": 1000 * 1000 * 1000,
}

logger = logging.getLogger(PACKAGE)


class CascadeTitlesError(Exception):
    """Base error of the package, carrying the CLI exit code"""

    exit_code = EXIT_DATA


class ConfigError(CascadeTitlesError, ValueError):
    """Invalid configuration key or value"""

    exit_code = EXIT_IO


class ParameterError(CascadeTitlesError, ValueError):
    """An algorithm parameter is outside of its domain"""


class RecordParseError(CascadeTitlesError, ValueError):
    """A dataset record cannot be parsed"""


class SocFormatError(RecordParseError):
    """Text does not look like an O*NET/SOC code"""


class SocRangeError(SocFormatError):
    """SOC major group outside the two-digit range"""


class ValidationError(CascadeTitlesError, ValueError):
    """Records are well formed but violate a dataset invariant"""


class DegenerateInputError(CascadeTitlesError, ValueError):
    """Input has nothing left to learn from"""


class ConvergenceError(CascadeTitlesError, ArithmeticError):
    """An iterative method did not converge"""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3g})")
        self.residual = residual


class ModelIntegrityError(CascadeTitlesError):
    """A model directory is missing files or fails its checksums"""

    exit_code = EXIT_INTEGRITY


def setup_logging(verbose: bool = False) -> None:
    """Attach a stderr handler to the package logger (once)"""
    if not any(getattr(h, "_cascade_titles", False) for h in logger.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(
            logging.Formatter(f"{PACKAGE}: %(levelname)s: %(message)s")
        )
        handler._cascade_titles = True
        logger.addHandler(handler)
    logger.setLevel(logging.DEBUG if verbose else logging.WARNING)


def parse_number(value: str | int) -> int:
    """Parse a count with an optional decimal suffix.

    Args:
        value: String value with optional suffix

    Returns:
        int: The parsed number

    Examples:
        >>> parse_number("1234")
        1234
        >>> parse_number("150k")
        150000
        >>> parse_number("1.5M")
        1500000
    """
    if isinstance(value, int):
        return value

    value = str(value).strip()
    if not value:
        raise ValueError("Empty value")

    # Find where the number ends and suffix begins
    for i, char in enumerate(value):
        if not (char.isdigit() or char == "."):
            number = value[:i]
            suffix = value[i:].lower()
            break
    else:
        number = value
        suffix = ""

    if not number:
        raise ValueError(f"Invalid number format: {value}")

    base = float(number)
    if suffix:
        if suffix not in MULTIPLIERS:
            raise ValueError(f"Unknown multiplier suffix: {suffix}")
        base *= MULTIPLIERS[suffix]

    return int(base)


def format_score(score: float) -> str:
    """Scores are printed with 6 significant digits"""
    return f"{score:.6g}"


def numbered_lines(data: str | bytes) -> Iterator[tuple[int, str]]:
    """Lines of `data` numbered from 1; bytes are decoded per line as UTF-8"""
    for lineno, line in enumerate(data.splitlines(), start=1):
        if isinstance(line, bytes):
            try:
                line = line.decode("utf-8")
            except UnicodeDecodeError:
                raise RecordParseError(f"line {lineno}: invalid UTF-8") from None
        yield lineno, line


def checksum(text: str) -> str:
    """sha256 of the UTF-8 encoding of a file's text"""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def fail(command: str, error: BaseException | str, code: int | None = None):
    """Report an error the way every command does and exit"""
    if code is None:
        code = getattr(error, "exit_code", EXIT_IO)
    print(f"{PACKAGE} {command}: {error}", file=sys.stderr)
    sys.exit(code)


def path_completer(prefix: str, **kwargs) -> list[str]:
    """Complete local paths; cloud prefixes are offered as is"""
    if "://" in prefix:
        return [prefix]
    matches = [
        path + "/" if os.path.isdir(path) else path for path in glob.glob(prefix + "*")
    ]
    if not prefix:
        matches = ["gs://", "s3://", "az://", *matches]
    return matches
