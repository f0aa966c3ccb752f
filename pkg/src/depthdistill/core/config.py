"""
Human-editable key-value documents for the dataclass configs.

Documents are INI files. A config occupies one section; nested dataclass
fields get their own section named after the field::

    [refine]
    iterations = 500
    optimizer = adaptive-moments
    temporal_frames = 1, -1

    [distill]
    quantile = 0.95
"""

# Standard packages
import configparser
import dataclasses
import logging
import typing
from pathlib import Path
from typing import Any, Dict, Optional, Type, TypeVar, Union

# Local packages
from depthdistill.core.errors import ConfigurationError, FormatError
from depthdistill.core.io import decode_text

log = logging.getLogger(__name__)

T = TypeVar("T")

_TRUE = ("true", "yes", "on", "1")
_FALSE = ("false", "no", "off", "0")


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(format_value(v) for v in value)
    return str(value)


def parse_value(text: str, hint: Any, name: str = "value") -> Any:
    """Coerce document text to the type `hint` (bool, int, float, str,
    Optional[...] and Tuple[...]).

    Raises:
        ConfigurationError: text does not parse as the hinted type
    """
    text = text.strip()
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)

    if origin is Union:
        inner = [a for a in args if a is not type(None)]
        if text.lower() == "none" and len(inner) < len(args):
            return None
        return parse_value(text, inner[0], name)
    if origin in (tuple, list):
        parts = [p for p in (s.strip() for s in text.split(",")) if p]
        if args and args[-1] is Ellipsis:
            values = [parse_value(p, args[0], name) for p in parts]
        elif args:
            if len(parts) != len(args):
                raise ConfigurationError(f"{name}: expected {len(args)} values, got {len(parts)}")
            values = [parse_value(p, a, name) for p, a in zip(parts, args)]
        else:
            values = parts
        return tuple(values)
    try:
        if hint is bool:
            lowered = text.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(text)
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
    except ValueError:
        raise ConfigurationError(f"{name}: cannot read {text!r} as {hint.__name__}")
    return text


def _is_config(hint: Any) -> bool:
    return isinstance(hint, type) and dataclasses.is_dataclass(hint)


def to_sections(config: Any, section: str) -> Dict[str, Dict[str, str]]:
    """Flatten a dataclass config into {section: {key: text}}."""
    sections = {section: {}}
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if dataclasses.is_dataclass(value):
            sections.update(to_sections(value, f.name))
        else:
            sections[section][f.name] = format_value(value)
    return sections


def config_to_document(config: Any, section: str) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_dict(to_sections(config, section))
    return document_text(parser)


def document_text(parser: configparser.ConfigParser) -> str:
    lines = []
    for name in parser.sections():
        lines.append(f"[{name}]")
        lines += [f"{key} = {value}" for key, value in parser.items(name)]
        lines.append("")
    return "\n".join(lines)


def parse_document(text: str, source: str = "<document>") -> configparser.ConfigParser:
    """Raises:
    FormatError: the text is not a valid INI document
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise FormatError(f"Cannot parse {source}: {e}")
    return parser


def read_document(path: Union[str, Path]) -> configparser.ConfigParser:
    """Read a document from disk, decoding it with the detected encoding."""
    raw = Path(path).read_bytes()
    return parse_document(decode_text(raw, str(path)), str(path))


def config_from_document(
    document: Union[str, configparser.ConfigParser],
    cls: Type[T],
    section: str,
    base: Optional[T] = None,
) -> T:
    """Build a dataclass config from a document section.

    Missing keys keep the values of `base` (or the dataclass defaults);
    unknown keys are rejected.

    Raises:
        ConfigurationError: unknown key or unparsable value
        FormatError: unparsable document text
    """
    parser = parse_document(document) if isinstance(document, str) else document
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    values = {}

    if parser.has_section(section):
        for key, text in parser.items(section):
            if key not in fields:
                raise ConfigurationError(f"[{section}] has unknown key {key!r}")
            if _is_config(hints[key]):
                raise ConfigurationError(f"[{section}] {key} is configured in its own [{key}] section")
            values[key] = parse_value(text, hints[key], f"[{section}] {key}")

    for name, f in fields.items():
        if _is_config(hints[name]) and parser.has_section(name):
            nested_base = getattr(base, name) if base is not None else None
            values[name] = config_from_document(parser, hints[name], name, nested_base)

    if base is not None:
        config = dataclasses.replace(base, **values)
    else:
        config = cls(**values)
    log.debug(f"Loaded [{section}] as {cls.__name__}")
    return config
