"""Experiment settings shared by the management commands.

Each command declares its settings as :class:`Option` objects. Values are merged
from three layers: the command-line flag, then an env-style ``--config`` file read
with django-environ (keys are flag names upper-cased, dashes as underscores), then
the option default. The merged result is validated before any work starts.
"""
from __future__ import annotations

import argparse
import json
import logging
from collections.abc import Callable, Iterator, Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any, ClassVar

import environ
import shortuuid

logger = logging.getLogger(__name__)

NOT_GIVEN = object()


class ConfigError(ValueError):
    """Exception raised when an experiment setting is missing or out of range."""


def int_list(text: str) -> list[int]:
    """Parse a comma-separated list of integers."""
    return [int(part) for part in text.split(",") if part.strip()]


def str_list(text: str) -> list[str]:
    """Parse a comma-separated list of names."""
    return [part.strip() for part in text.split(",") if part.strip()]


# how a value read from a config file is cast by environ.Env.get_value
FILE_CASTS: dict[Callable, Any] = {int_list: [int], str_list: [str]}


@dataclass(frozen=True)
class Option:
    """One experiment setting exposed as ``--<flag>`` and as a config-file key."""

    flag: str
    cast: Callable[[str], Any]
    default: Any = None
    help: str = ""
    check: Callable[[Any], bool] | None = None
    requirement: str = ""
    choices: tuple[str, ...] | None = None
    required: bool = False

    @property
    def dest(self) -> str:
        """Attribute name used by argparse and in the merged config."""
        return self.flag.replace("-", "_")

    @property
    def key(self) -> str:
        """Key of this option in a config file."""
        return self.dest.upper()

    def add_to(self, parser: argparse.ArgumentParser) -> None:
        """Register the flag on a command parser, leaving it None when not given."""
        if self.cast is bool:
            parser.add_argument(f"--{self.flag}", action=argparse.BooleanOptionalAction, default=None, help=self.help)
        else:
            parser.add_argument(f"--{self.flag}", type=self.cast, default=None, help=self.help)

    def resolve_default(self) -> Any:  # noqa: ANN401
        """Return the default, calling it first when it is a callable."""
        return self.default() if callable(self.default) else self.default

    def validate(self, value: Any) -> None:  # noqa: ANN401
        """Raise ConfigError when the value breaks the choice or range constraint."""
        if value is None:
            if self.required:
                msg = f"--{self.flag} is required"
                raise ConfigError(msg)
            return
        values = value if isinstance(value, list) else [value]
        if isinstance(value, list) and not value:
            msg = f"--{self.flag} must not be empty"
            raise ConfigError(msg)
        for item in values:
            if self.choices is not None and item not in self.choices:
                msg = f"--{self.flag}: {item!r} is not one of {', '.join(self.choices)}"
                raise ConfigError(msg)
            if self.check is not None and not self.check(item):
                msg = f"--{self.flag} {self.requirement or 'is out of range'}, got {item!r}"
                raise ConfigError(msg)


def read_config_file(path: str | Path) -> tuple[environ.Env, set[str]]:
    """Parse an env-style ``KEY=value`` file without touching the process environment.

    Returns:
        tuple[environ.Env, set[str]]: An Env bound to the file's values and the set of keys it defines.

    Raises:
        ConfigError: If the file does not exist.

    """
    path = Path(path)
    if not path.is_file():
        msg = f"--config: {path} does not exist"
        raise ConfigError(msg)

    class ConfigFileEnv(environ.Env):
        ENVIRON: ClassVar[dict[str, str]] = {}

    ConfigFileEnv.read_env(path, overwrite=True)
    logger.debug("Read %d settings from %s", len(ConfigFileEnv.ENVIRON), path)
    return ConfigFileEnv(), set(ConfigFileEnv.ENVIRON)


class ExperimentConfig(Mapping[str, Any]):
    """Validated, merged settings of one command invocation."""

    def __init__(self, values: dict[str, Any]) -> None:
        """Wrap already-merged values.

        Args:
            values (dict[str, Any]): Setting values keyed by option ``dest``.

        """
        self._values = dict(values)

    def __getitem__(self, name: str) -> Any:  # noqa: ANN401
        """Return one setting."""
        return self._values[name]

    def __iter__(self) -> Iterator[str]:
        """Iterate over setting names."""
        return iter(self._values)

    def __len__(self) -> int:
        """Return the number of settings."""
        return len(self._values)

    @classmethod
    def load(
        cls,
        options: tuple[Option, ...],
        flags: Mapping[str, Any],
        config_file: str | Path | None = None,
    ) -> ExperimentConfig:
        """Merge flags over a config file over defaults and validate the result.

        Args:
            options (tuple[Option, ...]): Settings the command accepts.
            flags (Mapping[str, Any]): Parsed command-line values; None means not given.
            config_file (str | Path | None): Optional env-style settings file.

        Returns:
            ExperimentConfig: The validated settings.

        Raises:
            ConfigError: On an unknown config-file key, an unparsable value, or a
                failed range check. The message names the offending flag.

        """
        env, file_keys = read_config_file(config_file) if config_file else (None, set())
        known = {option.key for option in options}
        unknown = sorted(file_keys - known)
        if unknown:
            msg = f"--config: unknown setting {unknown[0]}"
            raise ConfigError(msg)

        values = {}
        for option in options:
            value = flags.get(option.dest)
            if value is None and option.key in file_keys:
                try:
                    value = env.get_value(option.key, cast=FILE_CASTS.get(option.cast, option.cast))
                except ValueError as exc:
                    msg = f"--{option.flag}: cannot parse {env.ENVIRON[option.key]!r} from --config"
                    raise ConfigError(msg) from exc
            if value is None:
                value = option.resolve_default()
            option.validate(value)
            values[option.dest] = value
        return cls(values)

    def to_dict(self, exclude: tuple[str, ...] = ()) -> dict[str, Any]:
        """Return the settings as a plain dict, without the named keys."""
        return {name: value for name, value in self._values.items() if name not in exclude}

    def run_id(self, command: str, exclude: tuple[str, ...] = ()) -> str:
        """Deterministic short identifier of a command run with these settings."""
        canonical = json.dumps({"command": command, **self.to_dict(exclude)}, sort_keys=True, default=str)
        return shortuuid.uuid(name=canonical)
