#!/usr/bin/env python
# encoding: utf-8

""" Validated settings """

import inspect
import logging
from typing import Any

logger = logging.getLogger(__name__)
logger.setLevel("DEBUG")


class SettingsException(Exception):
    """SettingsException"""


class Settings:
    """Base class for everything that is configured by UPPER-CASE class variables.

    - Defaults are class variables. Assigning a value on an instance runs the
      matching 'validate_<NAME>()' and stores the refined value as an instance
      variable. The class default is never modified.
    - Every UPPER-CASE variable must have a 'validate_<NAME>()' and vice versa.
      This is checked when the instance is created.
    - Unknown UPPER-CASE names cannot be assigned. That is how typos in a
      config file are detected.
    """

    def __init__(self, **kvargs):
        self.validate()

        for key, value in kvargs.items():
            setattr(self, key.upper(), value)

        self.check()


    def validation_error(self, data):
        """Throw a SettingsException. Determine the config name from the
        calling validate_XYZ() function"""

        # for name of caller of current func, specify 1.
        func_name = inspect.stack()[1][3]
        varname = func_name[9:]

        raise SettingsException(f"Invalid value for '{varname}': '{data}'")


    def validate(self):
        """Validate all configs"""

        validate = "validate_"
        for varname in dir(type(self)):
            # validate_XYZ() -> Make sure XYZ exists
            if varname.startswith(validate):
                config = varname[len(validate):]
                if config.isupper() and not hasattr(self, config):
                    raise SettingsException(
                        f"Missing the '{config}' variable matching '{varname}'")

            # XYZ -> Make sure validate_XYZ() exists and the default validates
            if varname.isupper():
                func_name = validate + varname
                func = getattr(self, func_name, None)
                if not callable(func):
                    raise SettingsException(
                        f"Found a config with name '{varname}'. Corresponding "
                        f"function '{func_name}' is missing")

                setattr(self, varname, getattr(self, varname))


    def check(self):
        """Cross-field validation. Subclasses extend this."""


    def __setattr__(self, name: str, value) -> None:
        # If e.g. SEED, then do self.SEED = self.validate_SEED(value)
        if name.isupper():
            if not hasattr(type(self), name):
                raise SettingsException(f"Unknown config: '{name}'")

            func = getattr(self, f"validate_{name}", None)
            if not callable(func):
                raise SettingsException(f"Expected 'validate_{name}' to be a function")

            try:
                value = func(value)
            except SettingsException:
                raise
            except Exception as exc:
                raise SettingsException(f"Validation error for '{name}'={value}") from exc

            if value == getattr(self, name):
                return

        super().__setattr__(name, value)


    def configs(self) -> list[str]:
        """All config names, sorted"""
        return sorted(x for x in dir(type(self)) if x.isupper())


    def as_dict(self) -> dict[str, Any]:
        """The effective (validated) values of all configs"""
        return {name: getattr(self, name) for name in self.configs()}


    @classmethod
    def name(cls) -> str:
        """The name of the settings class"""
        return cls.__name__


    def __repr__(self) -> str:
        return f"{self.name()}({len(self.configs())} configs)"


    def __str__(self) -> str:
        return repr(self)


def is_number(data) -> bool:
    """True for int and float, but not bool"""
    return isinstance(data, (int, float)) and not isinstance(data, bool)
