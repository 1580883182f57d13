#!/usr/bin/env python
# encoding: utf-8

"""The run configuration, loaded from a TOML file.

Every 'key' in '[section]' maps onto the config 'SECTION_KEY', e.g.

    [inference]
    n_perm = 999
    seed = 42

sets INFERENCE_N_PERM and INFERENCE_SEED. Unknown keys are errors.
"""

import hashlib
import json
import logging
import math
import tomllib
from pathlib import Path
from typing import Any

from .region import JOIN_POLICIES
from .regression import METHODS, MODELS, IrlsConfig
from .settings import Settings, SettingsException, is_number
from .spatial_stats import DEFAULT_ALPHAS, MIN_PERMUTATIONS
from .synth import CONDITIONS, HotspotSpec, LatticeSpec, SarSpec, Scenario, SynthException
from .table_schema import IndicatorSchema, PrevalenceSchema
from .weights import STANDARDIZATIONS, WeightsBuilder

logger = logging.getLogger(__name__)
logger.setLevel("DEBUG")


# Not part of the config hash: they do not change any result
UNHASHED = ("OUTPUT_DIR", "INFERENCE_N_JOBS")

SECTIONS = ("inputs", "schema", "synth", "weights", "inference", "regression", "output")


def _optional_str(data) -> None|str:
    if data is None or (isinstance(data, str) and data):
        return data
    raise ValueError(data)


class RunConfig(Settings):
    """Inputs (or a synthetic scenario), weights, inference, regression and output"""

    # [inputs] File names, relative to the config file
    INPUTS_PREVALENCE: None|str = None
    INPUTS_INDICATORS: None|str = None
    INPUTS_GEOMETRY: None|str = None

    # [schema]
    SCHEMA_ID_COLUMN: str = "GEOID"
    SCHEMA_GEOMETRY_ID: str = "GEOID"
    SCHEMA_ENCODING: str = "utf-8"
    SCHEMA_MISSING_POLICY: str = "drop_incomplete"

    # canonical name -> CSV header. None: the default columns
    SCHEMA_PREVALENCE: None|dict[str, str] = None
    SCHEMA_INDICATORS: None|dict[str, str] = None

    # [synth] Active if rows and cols are provided
    SYNTH_ROWS: None|int = None
    SYNTH_COLS: None|int = None
    SYNTH_CELL_SIZE: float = 1.0
    SYNTH_RHO: float = 0.5
    SYNTH_SIGMA: float = 1.0
    SYNTH_CONDITIONS: tuple[str, ...] = tuple(CONDITIONS)
    SYNTH_LOADINGS: None|tuple[float, ...] = None
    SYNTH_NOISE_SD: float = 0.5
    SYNTH_WEIGHTS: str = "rook"

    # list of {row, col, radius, delta}
    SYNTH_HOTSPOTS: tuple[dict[str, Any], ...] = ()

    # [weights] Moran's I weights, and the Gi* weights (always incl. self)
    WEIGHTS_KIND: str = "queen"
    WEIGHTS_TRANSFORM: str = "row_standardized"
    WEIGHTS_K: int = 4
    WEIGHTS_DISTANCE: None|float = None
    WEIGHTS_SNAP_TOL: None|float = None
    WEIGHTS_GI_KIND: str = "distance_band"
    WEIGHTS_GI_DISTANCE: None|float = None

    # [inference] n_perm = 0 disables the permutation test
    INFERENCE_N_PERM: int = 999
    INFERENCE_SEED: None|int = None
    INFERENCE_ALPHAS: tuple[float, ...] = DEFAULT_ALPHAS
    INFERENCE_N_JOBS: int = 1

    # [regression]
    REGRESSION_MODELS: tuple[str, ...] = ("model1", "model2")
    REGRESSION_METHODS: tuple[str, ...] = METHODS
    REGRESSION_PRIMARY: str = "m_huber_bisquare"
    REGRESSION_HUBER_C: float = 1.345
    REGRESSION_BISQUARE_C: float = 4.685
    REGRESSION_TOL: float = 1e-6
    REGRESSION_MAX_ITER: int = 50

    # [output]
    OUTPUT_DIR: str = "out"
    OUTPUT_BINS: int = 5
    OUTPUT_WEIGHTS: bool = False
    OUTPUT_INDICATOR_MAPS: bool = True


    def __init__(self, base_dir: None|Path|str = None, **kvargs):
        self.base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
        super().__init__(**kvargs)


    @classmethod
    def from_toml(cls, file: Path|str, **overrides) -> "RunConfig":
        """Load a config file. OSError if it can not be read."""

        file = Path(file)
        raw = file.read_bytes()
        try:
            data = tomllib.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, tomllib.TOMLDecodeError) as exc:
            raise SettingsException(f"Invalid config file '{file}': {exc}") from exc

        return cls.from_dict(data, base_dir=file.parent, **overrides)


    @classmethod
    def from_dict(cls, data: dict[str, Any], base_dir: None|Path|str = None, **overrides) -> "RunConfig":
        """{section: {key: value}} as parsed from TOML"""

        kvargs = {}
        for section, values in data.items():
            if section not in SECTIONS or not isinstance(values, dict):
                raise SettingsException(f"Unknown config section: '{section}'")

            for key, value in values.items():
                kvargs[f"{section}_{key}".upper()] = value

        kvargs.update({k.upper(): v for k, v in overrides.items()})
        return cls(base_dir=base_dir, **kvargs)


    # pylint: disable=invalid-name
    def validate_INPUTS_PREVALENCE(self, data) -> None|str:
        """Prevalence CSV file"""
        return _optional_str(data)

    # pylint: disable=invalid-name
    def validate_INPUTS_INDICATORS(self, data) -> None|str:
        """Indicator CSV file"""
        return _optional_str(data)

    # pylint: disable=invalid-name
    def validate_INPUTS_GEOMETRY(self, data) -> None|str:
        """GeoJSON file"""
        return _optional_str(data)

    # pylint: disable=invalid-name
    def validate_SCHEMA_ID_COLUMN(self, data) -> str:
        if isinstance(data, str) and data:
            return data
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_SCHEMA_GEOMETRY_ID(self, data) -> str:
        if isinstance(data, str) and data:
            return data
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_SCHEMA_ENCODING(self, data) -> str:
        if isinstance(data, str) and data:
            return data
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_SCHEMA_MISSING_POLICY(self, data) -> str:
        if data in JOIN_POLICIES:
            return data
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_SCHEMA_PREVALENCE(self, data) -> None|dict[str, str]:
        """canonical name -> CSV header"""
        if data is None:
            return None

        if isinstance(data, dict) and data and all(
                isinstance(k, str) and isinstance(v, str) for k, v in data.items()):
            return dict(data)

        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_SCHEMA_INDICATORS(self, data) -> None|dict[str, str]:
        """canonical name -> CSV header"""
        if data is None:
            return None

        if isinstance(data, dict) and data and all(
                isinstance(k, str) and isinstance(v, str) for k, v in data.items()):
            return dict(data)

        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_SYNTH_ROWS(self, data) -> None|int:
        if data is None or (isinstance(data, int) and not isinstance(data, bool) and data > 0):
            return data
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_SYNTH_COLS(self, data) -> None|int:
        if data is None or (isinstance(data, int) and not isinstance(data, bool) and data > 0):
            return data
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_SYNTH_CELL_SIZE(self, data) -> float:
        if is_number(data) and data > 0:
            return float(data)
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_SYNTH_RHO(self, data) -> float:
        """Strictly inside (-1, 1)"""
        if is_number(data) and -1 < data < 1:
            return float(data)
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_SYNTH_SIGMA(self, data) -> float:
        if is_number(data) and data > 0:
            return float(data)
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_SYNTH_CONDITIONS(self, data) -> tuple[str, ...]:
        if isinstance(data, (list, tuple)) and data and all(isinstance(x, str) for x in data) \
                and len(set(data)) == len(data):
            return tuple(data)
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_SYNTH_LOADINGS(self, data) -> None|tuple[float, ...]:
        if data is None:
            return None
        if isinstance(data, (list, tuple)) and all(is_number(x) and x >= 0 for x in data):
            return tuple(float(x) for x in data)
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_SYNTH_NOISE_SD(self, data) -> float:
        if is_number(data) and data >= 0:
            return float(data)
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_SYNTH_WEIGHTS(self, data) -> str:
        if data in ("rook", "queen"):
            return data
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_SYNTH_HOTSPOTS(self, data) -> tuple[dict[str, Any], ...]:
        """Each a dict with 'row' and 'col', optional 'radius' and 'delta'"""
        if not isinstance(data, (list, tuple)):
            return self.validation_error(data)

        for elem in data:
            if not isinstance(elem, dict) or not {"row", "col"} <= set(elem) \
                    or not set(elem) <= {"row", "col", "radius", "delta"}:
                return self.validation_error(data)

            counts = [elem[x] for x in ("row", "col", "radius") if x in elem]
            if not all(isinstance(x, int) and not isinstance(x, bool) and x >= 0 for x in counts):
                return self.validation_error(data)

            if "delta" in elem and not (is_number(elem["delta"]) and math.isfinite(elem["delta"])):
                return self.validation_error(data)

        return tuple(dict(x) for x in data)

    # pylint: disable=invalid-name
    def validate_WEIGHTS_KIND(self, data) -> str:
        if data in WeightsBuilder.kinds():
            return data
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_WEIGHTS_TRANSFORM(self, data) -> str:
        if data in STANDARDIZATIONS:
            return data
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_WEIGHTS_K(self, data) -> int:
        if isinstance(data, int) and not isinstance(data, bool) and data >= 1:
            return data
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_WEIGHTS_DISTANCE(self, data) -> None|float:
        """None: the largest nearest neighbor distance"""
        if data is None:
            return None
        if is_number(data) and data > 0:
            return float(data)
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_WEIGHTS_SNAP_TOL(self, data) -> None|float:
        """None: 1e-9 of the bounding box diagonal"""
        if data is None:
            return None
        if is_number(data) and data >= 0:
            return float(data)
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_WEIGHTS_GI_KIND(self, data) -> str:
        if data in WeightsBuilder.kinds():
            return data
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_WEIGHTS_GI_DISTANCE(self, data) -> None|float:
        if data is None:
            return None
        if is_number(data) and data > 0:
            return float(data)
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_INFERENCE_N_PERM(self, data) -> int:
        if isinstance(data, int) and not isinstance(data, bool) and \
                (data == 0 or data >= MIN_PERMUTATIONS):
            return data
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_INFERENCE_SEED(self, data) -> None|int:
        if data is None or (isinstance(data, int) and not isinstance(data, bool) and data >= 0):
            return data
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_INFERENCE_ALPHAS(self, data) -> tuple[float, ...]:
        if isinstance(data, (list, tuple)) and data and all(is_number(x) and 0 < x < 1 for x in data):
            return tuple(sorted({float(x) for x in data}, reverse=True))
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_INFERENCE_N_JOBS(self, data) -> int:
        """joblib semantics: -1 all cores"""
        if isinstance(data, int) and not isinstance(data, bool) and data != 0:
            return data
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_REGRESSION_MODELS(self, data) -> tuple[str, ...]:
        if isinstance(data, (list, tuple)) and data and all(x in MODELS for x in data):
            return tuple(data)
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_REGRESSION_METHODS(self, data) -> tuple[str, ...]:
        if isinstance(data, (list, tuple)) and data and all(x in METHODS for x in data):
            return tuple(data)
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_REGRESSION_PRIMARY(self, data) -> str:
        if data in METHODS:
            return data
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_REGRESSION_HUBER_C(self, data) -> float:
        if is_number(data) and data > 0:
            return float(data)
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_REGRESSION_BISQUARE_C(self, data) -> float:
        if is_number(data) and data > 0:
            return float(data)
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_REGRESSION_TOL(self, data) -> float:
        if is_number(data) and data > 0:
            return float(data)
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_REGRESSION_MAX_ITER(self, data) -> int:
        if isinstance(data, int) and not isinstance(data, bool) and data >= 1:
            return data
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_OUTPUT_DIR(self, data) -> str:
        if isinstance(data, str) and data:
            return data
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_OUTPUT_BINS(self, data) -> int:
        if isinstance(data, int) and not isinstance(data, bool) and data >= 1:
            return data
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_OUTPUT_WEIGHTS(self, data) -> bool:
        if isinstance(data, bool):
            return data
        return self.validation_error(data)

    # pylint: disable=invalid-name
    def validate_OUTPUT_INDICATOR_MAPS(self, data) -> bool:
        if isinstance(data, bool):
            return data
        return self.validation_error(data)


    @property
    def is_synth(self) -> bool:
        """A synthetic scenario rather than input files"""
        return self.SYNTH_ROWS is not None or self.SYNTH_COLS is not None


    @property
    def has_inputs(self) -> bool:
        """Any input file configured"""
        return any(x is not None for x in (
            self.INPUTS_PREVALENCE, self.INPUTS_INDICATORS, self.INPUTS_GEOMETRY))


    def check(self):
        """Exactly one of inputs or synth; a seed where randomness is involved"""

        if self.is_synth == self.has_inputs:
            raise SettingsException(
                "Exactly one of [inputs] or [synth] (rows, cols) must be configured")

        if self.has_inputs and None in (
                self.INPUTS_PREVALENCE, self.INPUTS_INDICATORS, self.INPUTS_GEOMETRY):
            raise SettingsException("[inputs] requires prevalence, indicators and geometry")

        if self.is_synth and None in (self.SYNTH_ROWS, self.SYNTH_COLS):
            raise SettingsException("[synth] requires rows and cols")

        if self.INFERENCE_SEED is None and (self.is_synth or self.INFERENCE_N_PERM > 0):
            raise SettingsException(
                "[inference] seed is required for permutations and synthetic data")

        if self.REGRESSION_PRIMARY not in self.REGRESSION_METHODS:
            raise SettingsException(
                f"Primary method '{self.REGRESSION_PRIMARY}' is not in {self.REGRESSION_METHODS}")

        if self.SYNTH_LOADINGS is not None and len(self.SYNTH_LOADINGS) != len(self.SYNTH_CONDITIONS):
            raise SettingsException(
                f"Expected {len(self.SYNTH_CONDITIONS)} loadings: {self.SYNTH_LOADINGS}")


    def path(self, name: None|str) -> Path:
        """Resolve relative to the config file directory"""

        if name is None:
            raise SettingsException("Path not configured")

        rtn = Path(name)
        return rtn if rtn.is_absolute() else self.base_dir / rtn


    @property
    def output_dir(self) -> Path:
        """Resolved output directory"""
        return self.path(self.OUTPUT_DIR)


    def prevalence_schema(self) -> PrevalenceSchema:
        """The default CDC columns, or the configured mapping"""

        rtn = PrevalenceSchema()
        if self.SCHEMA_PREVALENCE is not None:
            rtn = rtn.with_columns(self.SCHEMA_PREVALENCE)

        rtn.ID_COLUMN = self.SCHEMA_ID_COLUMN
        rtn.ENCODING = self.SCHEMA_ENCODING
        return rtn


    def indicator_schema(self) -> IndicatorSchema:
        """The default ACS columns, or the configured mapping"""

        rtn = IndicatorSchema()
        if self.SCHEMA_INDICATORS is not None:
            rtn = rtn.with_columns(self.SCHEMA_INDICATORS)

        rtn.ID_COLUMN = self.SCHEMA_ID_COLUMN
        rtn.ENCODING = self.SCHEMA_ENCODING
        return rtn


    def scenario(self) -> Scenario:
        """The synthetic scenario. Invalid values raise SynthException."""

        if not self.is_synth:
            raise SynthException("No [synth] scenario configured")

        hotspots = tuple(HotspotSpec(**x) for x in self.SYNTH_HOTSPOTS)
        return Scenario(
            lattice=LatticeSpec(self.SYNTH_ROWS, self.SYNTH_COLS, self.SYNTH_CELL_SIZE),
            sar=SarSpec(self.SYNTH_RHO, self.SYNTH_SIGMA, self.INFERENCE_SEED),
            hotspots=hotspots,
            conditions=self.SYNTH_CONDITIONS,
            loadings=self.SYNTH_LOADINGS,
            noise_sd=self.SYNTH_NOISE_SD,
            weights=self.SYNTH_WEIGHTS,
        )


    def irls_config(self) -> IrlsConfig:
        """Tuning for the M-estimator"""
        return IrlsConfig(self.REGRESSION_HUBER_C, self.REGRESSION_BISQUARE_C,
            self.REGRESSION_TOL, self.REGRESSION_MAX_ITER)


    def weights_params(self, gi: bool = False) -> dict[str, Any]:
        """Keyword arguments for WeightsBuilder.build()"""

        if gi:
            return {"distance": self.WEIGHTS_GI_DISTANCE, "k": self.WEIGHTS_K,
                    "snap_tol": self.WEIGHTS_SNAP_TOL}

        return {"distance": self.WEIGHTS_DISTANCE, "k": self.WEIGHTS_K,
                "snap_tol": self.WEIGHTS_SNAP_TOL}


    def hashable(self) -> dict[str, Any]:
        """The settings that determine the results"""
        return {k: v for k, v in self.as_dict().items() if k not in UNHASHED}


    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of hashable()"""
        text = json.dumps(self.hashable(), sort_keys=True, separators=(",", ":"), default=list)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()
