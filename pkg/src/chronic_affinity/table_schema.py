#!/usr/bin/env python
# encoding: utf-8

""" Column mappings for the tract level input tables """

import logging
from typing import Any

from .settings import Settings

logger = logging.getLogger(__name__)
logger.setLevel("DEBUG")


FIELD_KINDS = ("percent", "index", "count")


class TableSchema(Settings):
    """Map the columns of a CSV file onto canonical variable names.

    FIELDSPECS is a list of dicts. "name" (canonical variable name) and
    "column" (CSV header) are mandatory. "kind" determines the range checks
    applied by the readers: "percent" in [0, 100], "index" >= 0 and
    "count" a non-negative integer. "label" is free text for reports.
    """

    # The header of the column holding the census tract identifier (GEOID)
    ID_COLUMN: str = "GEOID"

    # For decoding the byte stream
    ENCODING: str = "utf-8"

    # Cell values that denote a suppressed or missing value.
    MISSING_VALUES: tuple[str, ...] = ("", "n/a", "NA", "NaN", "null", "-")

    FIELDSPECS: list[dict[str, Any]] = []


    # pylint: disable=invalid-name
    def validate_ID_COLUMN(self, data) -> str:
        """The tract id column header"""
        if isinstance(data, str) and data:
            return data

        return self.validation_error(data)


    # pylint: disable=invalid-name
    def validate_ENCODING(self, data) -> str:
        """For decoding bytes into string"""
        if data is None:
            return "utf-8"

        if isinstance(data, str):
            return data

        return self.validation_error(data)


    # pylint: disable=invalid-name
    def validate_MISSING_VALUES(self, data) -> tuple[str, ...]:
        """Cell values treated as missing"""
        if isinstance(data, str):
            return (data,)

        if isinstance(data, (list, tuple)) and all(isinstance(x, str) for x in data):
            return tuple(data)

        return self.validation_error(data)


    # pylint: disable=invalid-name
    def validate_FIELDSPECS(self, data) -> list[dict[str, Any]]:
        """Field specification: one dict per canonical variable"""

        if not isinstance(data, list):
            return self.validation_error(data)

        names = set()
        for elem in data:
            if not isinstance(elem, dict):
                return self.validation_error(data)

            if not isinstance(elem.get("name"), str) or not isinstance(elem.get("column"), str):
                return self.validation_error(data)

            if elem.get("kind", "percent") not in FIELD_KINDS:
                return self.validation_error(data)

            if elem["name"] in names:
                return self.validation_error(data)

            names.add(elem["name"])

        return data


    @property
    def names(self) -> list[str]:
        """The canonical variable names, in FIELDSPECS order"""
        return [x["name"] for x in self.FIELDSPECS]


    @property
    def columns(self) -> list[str]:
        """The CSV column headers, in FIELDSPECS order"""
        return [x["column"] for x in self.FIELDSPECS]


    def field(self, name: str) -> dict[str, Any]:
        """The field spec for a canonical name"""
        for elem in self.FIELDSPECS:
            if elem["name"] == name:
                return elem

        raise KeyError(f"Field not found: '{name}'")


    def kind(self, name: str) -> str:
        """'percent', 'index' or 'count'"""
        return self.field(name).get("kind", "percent")


    def label(self, name: str) -> str:
        """Human readable description of the variable"""
        return self.field(name).get("label", name)


    def with_columns(self, mapping: dict[str, str]) -> "TableSchema":
        """Return a copy using only the canonical names in 'mapping', with the
        CSV headers provided. Unknown names get kind 'percent'."""

        known = {x["name"]: x for x in self.FIELDSPECS}
        fieldspecs = []
        for name, column in mapping.items():
            spec = dict(known.get(name, {"name": name}))
            spec["column"] = column
            fieldspecs.append(spec)

        rtn = type(self)()
        rtn.ID_COLUMN = self.ID_COLUMN
        rtn.ENCODING = self.ENCODING
        rtn.MISSING_VALUES = self.MISSING_VALUES
        rtn.FIELDSPECS = fieldspecs
        return rtn


class PrevalenceSchema(TableSchema):
    """CDC 500 Cities style crude prevalence columns"""

    FIELDSPECS = [
        {"name": "arthritis", "column": "ARTHRITIS_CrudePrev", "kind": "percent",
         "label": "Crude prevalence of arthritis among adults aged >= 18 years"},
        {"name": "asthma", "column": "CASTHMA_CrudePrev", "kind": "percent",
         "label": "Crude prevalence of current asthma among adults aged >= 18 years"},
        {"name": "diabetes", "column": "DIABETES_CrudePrev", "kind": "percent",
         "label": "Crude prevalence of diagnosed diabetes among adults aged >= 18 years"},
        {"name": "heart_disease", "column": "CHD_CrudePrev", "kind": "percent",
         "label": "Crude prevalence of coronary heart disease among adults aged >= 18 years"},
        {"name": "obesity", "column": "OBESITY_CrudePrev", "kind": "percent",
         "label": "Crude prevalence of obesity among adults aged >= 18 years"},
        {"name": "stroke", "column": "STROKE_CrudePrev", "kind": "percent",
         "label": "Crude prevalence of stroke among adults aged >= 18 years"},
    ]


class IndicatorSchema(TableSchema):
    """ACS socio-economic indicators, crime index and demographic controls"""

    FIELDSPECS = [
        {"name": "poverty", "column": "pct_poverty", "kind": "percent",
         "label": "Percentage of people living below the federal poverty line"},
        {"name": "unemployment", "column": "pct_unemployed", "kind": "percent",
         "label": "Percent of unemployed population"},
        {"name": "crime", "column": "crime_index", "kind": "index",
         "label": "Total crime index (100 = US average)"},
        {"name": "smoking", "column": "CSMOKING_CrudePrev", "kind": "percent",
         "label": "Current smoking among adults aged >= 18 years"},
        {"name": "male", "column": "pct_male", "kind": "percent",
         "label": "Percent male population"},
        {"name": "age67", "column": "pct_age67plus", "kind": "percent",
         "label": "Percent population 67 and over"},
        {"name": "population", "column": "total_population", "kind": "count",
         "label": "Total number of people living in the census tract"},
    ]
