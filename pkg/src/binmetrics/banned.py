"""Banned and discouraged library functions with their danger coefficients."""

import re
from dataclasses import dataclass, field
from types import MappingProxyType

from .exceptions import InputError

BANNED = 1.0
DISCOURAGED = 0.5
COEFFICIENTS = (BANNED, DISCOURAGED)

# After the Microsoft SDL banned.h list; the n-variants are the
# "replace when possible" tier.
_DEFAULT_BANNED = """
strcpy strcpya strcpyw wcscpy _tcscpy _mbscpy strcpybuffa strcpybuffw lstrcpy lstrcpya lstrcpyw
strcat strcata strcatw wcscat _tcscat _mbscat strcatbuff lstrcat lstrcata lstrcatw lstrcatn
memcpy wmemcpy copymemory rtlcopymemory memmove
gets _getts _getws getts
sprintf sprintfa sprintfw swprintf wsprintf wsprintfa wsprintfw _stprintf vsprintf vswprintf
_vstprintf wvsprintf wvsprintfa wvsprintfw _snprintf _snwprintf
scanf wscanf sscanf swscanf fscanf fwscanf _stscanf _tscanf vscanf vsscanf
strtok wcstok _tcstok _mbstok
"""
_DEFAULT_DISCOURAGED = """
strncpy wcsncpy _tcsncpy _mbsncpy lstrcpyn lstrcpyna lstrcpynw
strncat wcsncat _tcsncat _mbsncat
alloca _alloca _malloca
snprintf vsnprintf
"""

_DECORATION = re.compile(r"^(?:__imp__?|_imp_|j_|ds:|cs:)")


def normalize_name(name):
    """Strip import/thunk decoration and leading underscores, lowercase."""
    name = name.strip().lower()
    prev = None
    while prev != name:
        prev = name
        name = _DECORATION.sub("", name)
    name = name.split("@", 1)[0]
    stripped = name.lstrip("_")
    return stripped or name


@dataclass(frozen=True)
class BannedFunctionTable:
    entries: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))

    def __post_init__(self):
        clean = {}
        for name, coef in dict(self.entries).items():
            coef = float(coef)
            if coef not in COEFFICIENTS:
                raise ValueError(f"coefficient for {name!r} must be 1.0 or 0.5, got {coef}")
            clean[normalize_name(name)] = coef
        object.__setattr__(self, "entries", MappingProxyType(clean))

    def coefficient(self, name):
        """Danger coefficient of a callee, or None if it is not listed."""
        return self.entries.get(normalize_name(name))

    def __contains__(self, name):
        return normalize_name(name) in self.entries

    def __len__(self):
        return len(self.entries)

    @classmethod
    def default(cls):
        entries = {n: DISCOURAGED for n in _DEFAULT_DISCOURAGED.split()}
        entries.update({n: BANNED for n in _DEFAULT_BANNED.split()})
        return cls(entries)

    @classmethod
    def loads(cls, text, source="<string>"):
        entries = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise InputError("expected '<name> <coefficient>'", source=source, line=lineno)
            try:
                coef = float(parts[1])
            except ValueError:
                raise InputError(f"bad coefficient {parts[1]!r}", source=source, line=lineno) from None
            if coef not in COEFFICIENTS:
                raise InputError(f"coefficient must be 1.0 or 0.5, got {parts[1]}",
                                 source=source, line=lineno)
            entries[parts[0]] = coef
        return cls(entries)

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.loads(fh.read(), str(path))
        except OSError as exc:
            raise InputError(exc.strerror or str(exc), source=str(path)) from None

    def dumps(self):
        return "".join(f"{name} {coef}\n" for name, coef in sorted(self.entries.items()))
