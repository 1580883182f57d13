#!/usr/bin/env python
# encoding: utf-8

"""Abstract reader for tract keyed input files"""

from abc import ABC, abstractmethod
from io import IOBase
import logging
from pathlib import Path
from typing import Any, BinaryIO

logger = logging.getLogger(__name__)
logger.setLevel("DEBUG")


TSource = Path|str|bytes|BinaryIO


class BaseReaderException(Exception):
    """BaseReaderException"""


class BaseTableReader(ABC):
    """Abstract reader base class.

    Readers load the raw content, map it onto canonical names and validate
    it. Problems that do not prevent loading are collected in 'warnings'.
    """

    def __init__(self, id_field: str):
        self.id_field = id_field
        self.warnings: list[str] = []


    def __enter__(self):
        return self


    def __exit__(self, exc_type, exc_value, traceback):
        pass


    def load(self, source: TSource) -> Any:
        """Main entry point: load and validate the data"""

        self.warnings = []
        raw = self.read_bytes(source)
        data = self.load_file(raw)
        return self.apply_schema(data)


    @abstractmethod
    def load_file(self, raw: bytes) -> Any:
        """Parse the raw bytes"""


    @abstractmethod
    def apply_schema(self, data) -> Any:
        """Map onto canonical names, validate and build the table object"""


    def warn(self, msg: str, *args):
        """Log and keep a warning"""
        msg = msg % args if args else msg
        logger.warning(msg)
        self.warnings.append(msg)


    @staticmethod
    def read_bytes(source: TSource) -> bytes:
        """Accept a file name, bytes or a binary stream"""

        if isinstance(source, bytes):
            return source

        if isinstance(source, (str, Path)):
            # OSError propagates unchanged; the cli maps it to exit code 2
            return Path(source).read_bytes()

        if isinstance(source, IOBase) or hasattr(source, "read"):
            data = source.read()
            if isinstance(data, str):
                raise BaseReaderException("Expected a binary stream, found a text stream")
            return data

        raise BaseReaderException(f"Unsupported source type: {type(source)}")
