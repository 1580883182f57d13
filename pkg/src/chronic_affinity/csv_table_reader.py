#!/usr/bin/env python
# encoding: utf-8

"""CSV File Reader for prevalence and indicator tables"""

import io
import logging

import numpy as np
import pandas as pd

from .base_reader import BaseTableReader, TSource
from .region import IndicatorTable, PrevalenceTable, TractTable
from .table_schema import IndicatorSchema, PrevalenceSchema, TableSchema

logger = logging.getLogger(__name__)
logger.setLevel("DEBUG")


class TableReaderException(Exception):
    """TableReaderException"""


class CsvTableReader(BaseTableReader):
    """RFC-4180 CSV with a header row, one row per census tract"""

    table_type: type[TractTable] = TractTable

    def __init__(self, schema: TableSchema):
        super().__init__(schema.ID_COLUMN)
        self.schema = schema


    @property
    def columns(self) -> list[str]:
        """The canonical names as configured in the schema"""
        return self.schema.names


    def load_file(self, raw: bytes) -> pd.DataFrame:
        """Load every cell as string. Numbers are converted in apply_schema(),
        where unparseable cells can be reported individually."""

        try:
            text = raw.decode(self.schema.ENCODING)
            return pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False)
        except (UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            raise TableReaderException(f"Unable to parse CSV: {exc}") from exc


    def apply_schema(self, data: pd.DataFrame) -> TractTable:
        data.columns = [str(x).strip() for x in data.columns]

        if self.id_field not in data.columns:
            raise TableReaderException(f"Tract id column not found: '{self.id_field}'")

        if not self.schema.FIELDSPECS:
            raise TableReaderException("The schema does not map any value column")

        missing = [x for x in self.schema.columns if x not in data.columns]
        if missing:
            raise TableReaderException(f"Columns not found: {missing}")

        ids = data[self.id_field].str.strip()
        if (ids == "").any():
            raise TableReaderException("Empty tract id found")

        duplicates = sorted(set(ids[ids.duplicated()]))
        if duplicates:
            raise TableReaderException(f"Duplicate tract ids: {duplicates}")

        rtn = pd.DataFrame(index=pd.Index(ids.to_list(), name="tract_id"))
        for name, column in zip(self.schema.names, self.schema.columns):
            raw = data[column].str.strip()
            values = pd.to_numeric(raw, errors="coerce").astype(float)
            values.index = rtn.index
            mask = values.isna().to_numpy()
            for tract_id, cell in zip(rtn.index[mask], raw[mask]):
                if cell in self.schema.MISSING_VALUES:
                    self.warn("tract %s: '%s' is missing ('%s')", tract_id, name, cell)
                else:
                    self.warn("tract %s: '%s' is not numeric ('%s')", tract_id, name, cell)

            rtn[name] = values

        flagged = self.check_ranges(rtn)
        return self.table_type(rtn, frozenset(flagged), tuple(self.warnings))


    def check_ranges(self, data: pd.DataFrame) -> set[tuple[str, str]]:
        """Range checks per field kind. Violations are kept and flagged,
        except for negative counts, which are invalid."""

        flagged = set()
        for name in self.schema.names:
            kind = self.schema.kind(name)
            values = data[name]

            if kind == "percent":
                bad = values[(values < 0) | (values > 100)]
            elif kind == "index":
                bad = values[values < 0]
            else:
                negative = values[values < 0]
                if len(negative):
                    raise TableReaderException(
                        f"Negative '{name}' for tracts: {list(negative.index)}")

                bad = values[values.notna() & (values != np.round(values))]

            for tract_id, value in bad.items():
                self.warn("tract %s: '%s' value %s out of range for a %s", tract_id, name, value, kind)
                flagged.add((tract_id, name))

        return flagged


class PrevalenceCsvReader(CsvTableReader):
    """Crude prevalences per condition"""

    table_type = PrevalenceTable


class IndicatorCsvReader(CsvTableReader):
    """Socio-economic indicators and controls"""

    table_type = IndicatorTable


def parse_prevalence_csv(source: TSource, schema: None|TableSchema = None) -> PrevalenceTable:
    """Parse a CDC 500 Cities like prevalence CSV"""

    with PrevalenceCsvReader(schema or PrevalenceSchema()) as reader:
        return reader.load(source)


def parse_indicator_csv(source: TSource, schema: None|TableSchema = None) -> IndicatorTable:
    """Parse an ACS like indicator CSV"""

    with IndicatorCsvReader(schema or IndicatorSchema()) as reader:
        return reader.load(source)
