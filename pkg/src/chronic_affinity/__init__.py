#!/usr/bin/env python
# encoding: utf-8

__version__ = "0.1.0"

from .affinity import AffinityResult, affinity_scores, correlation_matrix, descriptive_stats
from .csv_table_reader import parse_indicator_csv, parse_prevalence_csv
from .geojson_reader import parse_geometry
from .region import StudyRegion, ValidationReport, join_region
from .regression import fit_affinity_models, irls_m_fit, ols_fit
from .run_config import RunConfig
from .spatial_stats import fdr_classify, getis_ord_gi_star, morans_i, morans_i_permutation
from .table_schema import IndicatorSchema, PrevalenceSchema, TableSchema
from .weights import WeightsBuilder, WeightsMatrix, queen_contiguity, rook_contiguity
