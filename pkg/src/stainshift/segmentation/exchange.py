"""File-exchange adapter for external pretrained H&E segmenters.

External models run as subprocesses against a directory contract: the
command receives an input directory of 8-bit RGB PNGs and must write one
16-bit grayscale label-map PNG per input, same basename, into the output
directory. A nonzero exit status, a timeout, or missing outputs fail the
exchange; partial results are deleted.
"""

from __future__ import annotations

import os
import shlex
import shutil
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import BackendError, ContractViolationError
from ..imaging import read_label_map, relabel_sequential, write_image
from ..validation import check_rgb

BACKEND_DIR_ENV = "STAINSHIFT_BACKEND_DIR"


@dataclass(frozen=True)
class ExchangeContract:
    """Subprocess template for an external segmenter.

    `command` may reference {input_dir}, {output_dir} and {backend_dir}
    (the latter resolved from the STAINSHIFT_BACKEND_DIR environment
    variable).
    """

    command: str
    timeout: float = 600.0

    def __post_init__(self):
        if not self.command.strip():
            raise ValueError("exchange command must not be empty")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


def _resolve_command(contract: ExchangeContract, input_dir: Path,
                     output_dir: Path) -> list[str]:
    backend_dir = os.environ.get(BACKEND_DIR_ENV, "")
    rendered = contract.command.format(
        input_dir=str(input_dir),
        output_dir=str(output_dir),
        backend_dir=backend_dir,
    )
    return shlex.split(rendered)


def run_exchange(contract: ExchangeContract, input_dir,
                 output_dir) -> Path:
    """Run the external command over a directory of PNGs and verify the
    one-mask-per-input contract. On any failure the output directory is
    removed before the error propagates."""
    input_dir = Path(input_dir)
    output_dir = Path(output_dir)
    names = sorted(p.name for p in input_dir.glob("*.png"))
    if not names:
        raise ValueError(f"no PNG inputs in {input_dir}")
    if output_dir.exists() and any(output_dir.iterdir()):
        raise ValueError(f"output directory {output_dir} is not empty")
    output_dir.mkdir(parents=True, exist_ok=True)

    argv = _resolve_command(contract, input_dir, output_dir)
    try:
        proc = subprocess.run(
            argv, capture_output=True, text=True, timeout=contract.timeout,
        )
    except subprocess.TimeoutExpired:
        shutil.rmtree(output_dir, ignore_errors=True)
        raise BackendError(
            f"exchange backend timed out after {contract.timeout}s: "
            f"{' '.join(argv)}"
        ) from None
    except OSError as exc:
        shutil.rmtree(output_dir, ignore_errors=True)
        raise BackendError(f"cannot launch exchange backend: {exc}") from exc

    if proc.returncode != 0:
        shutil.rmtree(output_dir, ignore_errors=True)
        raise BackendError(
            f"exchange backend exited with status {proc.returncode}; "
            f"stderr: {proc.stderr.strip()[-500:]}"
        )

    missing = [n for n in names if not (output_dir / n).exists()]
    if missing:
        shutil.rmtree(output_dir, ignore_errors=True)
        raise ContractViolationError(
            "exchange backend did not produce outputs for: "
            + ", ".join(missing)
        )
    return output_dir


def exchange_segment_image(contract: ExchangeContract,
                           image) -> np.ndarray:
    """Segment a single in-memory image through the file exchange."""
    rgb = check_rgb(image)
    with tempfile.TemporaryDirectory(prefix="stainshift-exchange-") as tmp:
        input_dir = Path(tmp) / "input"
        output_dir = Path(tmp) / "output"
        input_dir.mkdir()
        write_image(input_dir / "image.png", rgb)
        run_exchange(contract, input_dir, output_dir)
        labels = read_label_map(output_dir / "image.png")
    if labels.shape != rgb.shape[:2]:
        raise ContractViolationError(
            f"backend returned a {labels.shape} mask for a "
            f"{rgb.shape[:2]} image"
        )
    return relabel_sequential(labels)
