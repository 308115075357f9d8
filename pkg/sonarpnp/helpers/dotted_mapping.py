"""A nested dictionary addressed with dotted key paths."""

import collections
import typing as t
from collections.abc import Mapping

from sonarpnp.type_aliases import JSONVals

KeyPath = t.Union[str, t.Sequence[str]]


class DottedMapping(collections.UserDict, t.MutableMapping[str, JSONVals]):
    """
    Wraps nested config data so "solver.rank_tol" reaches a leaf.

    A sequence of keys works as well:
    data["solver.rank_tol"] == data["solver"]["rank_tol"]
    == data[["solver", "rank_tol"]]
    """

    @staticmethod
    def parts(key: KeyPath) -> list[str]:
        """Split a key path into its components."""
        if isinstance(key, str):
            return key.split(".")
        return list(key)

    @classmethod
    def split_key(cls, key: KeyPath) -> tuple[list[str], str]:
        """Split a key path into its parent components and its leaf."""
        keys = cls.parts(key)
        leaf = keys.pop()
        return keys, leaf

    def resolve(self, key: KeyPath) -> JSONVals:
        """Walk the key path and return the value it points at."""
        current: JSONVals = self.data
        for part in self.parts(key):
            if not isinstance(current, Mapping):
                raise KeyError(part)
            current = current[part]
        return current

    def section(self, key: KeyPath) -> t.MutableMapping[str, JSONVals]:
        """Resolve a key path which has to point at a section."""
        value = self.resolve(key) if self.parts(key) else self.data
        if not isinstance(value, Mapping):
            raise TypeError(f"Expected {key!r} to be a section.")
        return t.cast(t.MutableMapping[str, JSONVals], value)

    def is_section(self, key: KeyPath) -> bool:
        """Return True when the key path resolves to a nested mapping."""
        return isinstance(self.resolve(key), Mapping)

    def leaf_keys(self, prefix: str = "") -> list[str]:
        """List every dotted path which ends at a non-mapping value."""
        found: list[str] = []
        pending: list[tuple[str, JSONVals]] = [(prefix, self.data)]
        while pending:
            path, value = pending.pop()
            if not isinstance(value, Mapping):
                found.append(path)
                continue
            for name, child in value.items():
                pending.append((f"{path}.{name}" if path else name, child))
        return sorted(found)

    def __getitem__(self, key: KeyPath) -> JSONVals:
        return self.resolve(key)

    def __setitem__(self, key: KeyPath, item: JSONVals) -> None:
        parents, leaf = self.split_key(key)
        self.section(parents)[leaf] = item

    def __delitem__(self, key: KeyPath) -> None:
        parents, leaf = self.split_key(key)
        del self.section(parents)[leaf]

    def __contains__(self, key: object) -> bool:
        try:
            self.resolve(t.cast(KeyPath, key))
        except (KeyError, TypeError):
            return False
        return True

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.data!r})"
