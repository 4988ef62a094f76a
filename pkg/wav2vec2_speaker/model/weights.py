"""
Weight manifests: a directory holding ``index.txt`` (one
``<name>\\t<dtype>\\t<shape>`` line per parameter, shape as comma-separated
ints) and one little-endian raw ``<name>.bin`` file per parameter.
"""

import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from ..exceptions import WeightManifestError
from ..nn.parameters import ParameterStore

logger = logging.getLogger(__name__)

INDEX_NAME = "index.txt"
_DTYPES = {"float32": "<f4", "float64": "<f8"}


def _format_shape(shape: Tuple[int, ...]) -> str:
    return ",".join(str(d) for d in shape)


def _parse_shape(text: str) -> Tuple[int, ...]:
    return tuple(int(d) for d in text.split(",")) if text.strip() else ()


def write_manifest(arrays: Dict[str, np.ndarray], directory: Union[str, Path]):
    """Write named arrays in the manifest layout."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for name, array in arrays.items():
        dtype = np.dtype(array.dtype).name
        if dtype not in _DTYPES:
            array, dtype = array.astype(np.float64), "float64"
        np.ascontiguousarray(array, dtype=_DTYPES[dtype]).tofile(directory / f"{name}.bin")
        lines.append(f"{name}\t{dtype}\t{_format_shape(array.shape)}\n")
    (directory / INDEX_NAME).write_text("".join(lines))


def read_index(directory: Union[str, Path]) -> Dict[str, Tuple[str, Tuple[int, ...]]]:
    """Parse ``index.txt`` into name -> (dtype, shape)."""
    path = Path(directory) / INDEX_NAME
    if not path.exists():
        raise FileNotFoundError(path)
    entries = {}
    problems = []
    for number, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3 or parts[1] not in _DTYPES:
            problems.append(f"{INDEX_NAME} line {number}: malformed entry {line!r}")
            continue
        try:
            entries[parts[0]] = (parts[1], _parse_shape(parts[2]))
        except ValueError:
            problems.append(f"{INDEX_NAME} line {number}: bad shape {parts[2]!r}")
    if problems:
        raise WeightManifestError(problems)
    return entries


def read_manifest(directory: Union[str, Path]) -> Dict[str, np.ndarray]:
    """Load every array of a manifest."""
    directory = Path(directory)
    arrays = {}
    problems = []
    for name, (dtype, shape) in read_index(directory).items():
        path = directory / f"{name}.bin"
        if not path.exists():
            problems.append(f"{name}: data file {path.name} is missing")
            continue
        flat = np.fromfile(path, dtype=_DTYPES[dtype])
        expected = int(np.prod(shape)) if shape else 1
        if flat.size != expected:
            problems.append(f"{name}: data file holds {flat.size} values, index says shape {shape}")
            continue
        arrays[name] = flat.reshape(shape).astype(dtype)
    if problems:
        raise WeightManifestError(problems)
    return arrays


def export_weights(store: ParameterStore, directory: Union[str, Path], names: Optional[Iterable[str]] = None):
    """
    Write a store (or the named subset of it) as a weight manifest.

    Args:
        store: Source parameters
        directory: Manifest directory (created if needed)
        names: Parameters to export; all when omitted
    """
    state = store.state_dict()
    if names is not None:
        state = {n: state[n] for n in names}
    write_manifest(state, directory)
    logger.info("exported %d parameters to %s", len(state), directory)


def import_weights(
    store: ParameterStore,
    directory: Union[str, Path],
    required: Optional[Iterable[str]] = None,
) -> ParameterStore:
    """
    Load manifest arrays into ``store`` by name.

    Every discrepancy (a required name missing from the manifest, a shape
    mismatch) is collected and raised together; nothing is loaded in that case.
    Manifest names the store does not know are logged and skipped.

    Args:
        store: Destination parameters
        directory: Manifest directory
        required: Store names that must be present (default: all of them)

    Returns:
        The updated store
    """
    index = read_index(directory)
    required_names: List[str] = list(required) if required is not None else store.names()
    problems = [f"missing parameter {name}" for name in required_names if name not in index]
    for name, (_, shape) in index.items():
        if name in store and tuple(store[name].shape) != shape:
            problems.append(f"{name}: manifest shape {shape} does not match parameter shape {store[name].shape}")
    if problems:
        raise WeightManifestError(problems)

    unmatched = [name for name in index if name not in store]
    if unmatched:
        logger.warning("ignoring %d manifest entries with no matching parameter: %s",
                       len(unmatched), ", ".join(unmatched[:10]) + (" ..." if len(unmatched) > 10 else ""))
    arrays = read_manifest(directory)
    store.load_state_dict({n: a for n, a in arrays.items() if n in store}, strict=False)
    logger.info("imported %d parameters from %s", len(arrays) - len(unmatched), directory)
    return store
