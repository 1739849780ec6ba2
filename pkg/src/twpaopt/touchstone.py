"""Touchstone v1 two-port export and a strict reference reader."""

from __future__ import annotations

import os

import numpy as np

from .fileio import atomic_write_text, format_float
from .network import TwoPortResponse


def write_touchstone(path: str | os.PathLike, resp: TwoPortResponse) -> None:
    """Write a two-port .s2p file: `# Hz S RI R <z0>`, rows S11 S21 S12 S22.

    Real/imaginary pairs at 17 significant digits, one frequency per line.
    An empty response is rejected before any file is created.
    """
    if len(resp.freqs) == 0:
        raise ValueError("cannot export an empty response")
    z0 = resp.ref_impedance
    lines = [f"! 2-port S-parameters, {len(resp.freqs)} points",
             f"# Hz S RI R {format_float(z0)}"]
    for i, f in enumerate(resp.freqs):
        fields = [format_float(float(f))]
        for s in (resp.s11[i], resp.s21[i], resp.s12[i], resp.s22[i]):
            fields.append(format_float(float(np.real(s))))
            fields.append(format_float(float(np.imag(s))))
        lines.append(" ".join(fields))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_touchstone(path: str | os.PathLike) -> TwoPortResponse:
    """Read back a .s2p written by write_touchstone (Hz / S / RI only)."""
    freqs, s11, s21, s12, s22 = [], [], [], [], []
    z0 = 50.0
    saw_option = False
    with open(path, "r", encoding="ascii") as fh:
        for raw in fh:
            line = raw.split("!", 1)[0].strip()
            if not line:
                continue
            if line.startswith("#"):
                tokens = line[1:].split()
                if [t.upper() for t in tokens[:3]] != ["HZ", "S", "RI"]:
                    raise ValueError(f"unsupported option line: {raw.strip()}")
                if len(tokens) >= 5 and tokens[3].upper() == "R":
                    z0 = float(tokens[4])
                saw_option = True
                continue
            parts = [float(tok) for tok in line.split()]
            if len(parts) != 9:
                raise ValueError(
                    f"expected 9 columns per data line, got {len(parts)}"
                )
            freqs.append(parts[0])
            s11.append(complex(parts[1], parts[2]))
            s21.append(complex(parts[3], parts[4]))
            s12.append(complex(parts[5], parts[6]))
            s22.append(complex(parts[7], parts[8]))
    if not saw_option:
        raise ValueError("missing option line")
    if not freqs:
        raise ValueError("no data lines")
    return TwoPortResponse(
        freqs=np.array(freqs),
        s11=np.array(s11),
        s21=np.array(s21),
        s12=np.array(s12),
        s22=np.array(s22),
        ref_impedance=z0,
    )
