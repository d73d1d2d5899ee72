"""
Argparse helpers for the tradeeq command line

A help formatter that reflows description and epilog text and a few value
types that reject bad numbers before any solving starts.

"""

from __future__ import annotations  # for forward references in type hints

import argparse
import math
import re
import textwrap


_SPACES = re.compile(r'[ \t]+')
_LINE_INDENT = re.compile(r'(?<=\n)[ \t]')
_SOFT_BREAK = re.compile(r'(?<![ \n])\n(?!\n)')


def reflow(text: str) -> list[str]:
    """
    Lines of help text after reflowing. Runs of spaces and tabs become one
    space, indentation is dropped, a lone newline joins its lines unless the
    line ends in a space, and blank lines stay as paragraph breaks.
    """
    text = _SPACES.sub(' ', text)
    text = _LINE_INDENT.sub('', text)
    text = _SOFT_BREAK.sub(' ', text)
    return [line.strip() for line in text.strip().splitlines()]


class RawDescriptionHelpFormatterWithLineWrap(argparse.HelpFormatter):
    """wraps description and epilog like HelpFormatter but keeps paragraphs and forced breaks"""

    def _fill_text(self, text, width, indent):
        return '\n'.join(textwrap.fill(line, width, initial_indent=indent, subsequent_indent=indent)
                         for line in reflow(text))


def nonnegative_float(value: str) -> float:
    try:
        x = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f'not a number: {value!r}')
    if not math.isfinite(x) or x < 0:
        raise argparse.ArgumentTypeError(f'expected a finite value >= 0, got {value!r}')
    return x


def positive_int(value: str) -> int:
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f'not an integer: {value!r}')
    if n < 1:
        raise argparse.ArgumentTypeError(f'expected an integer >= 1, got {value!r}')
    return n
