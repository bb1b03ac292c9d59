"""Atomic array geometry shared by the interaction and retrieval calculations.

Lengths are measured in units of the emission wavelength lambda_eg, so the
resonant wavenumber is k0 = 2*pi.  Lattice sites live on an integer grid
scaled by the spacing d0; defects are carried as a boolean occupation mask
and thermal motion as per-axis Gaussian jitter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

K0 = 2.0 * np.pi  # resonant wavenumber in units of 1/lambda_eg


@dataclass(frozen=True)
class ArrayGeometry:
    """Rectangular 3D atomic array with optional defects and jitter.

    Attributes:
        L_x, L_y: transverse site counts (L_v when equal).
        L_z: number of layers along the propagation axis.
        d0: lattice spacing in units of lambda_eg.
        occupied: flat boolean mask over the L_x*L_y*L_z sites; None means
            fully occupied.
        jitter_sigma: standard deviation of per-axis Gaussian displacement
            in units of d0 (applied through `positions(rng)`).
        polarization: common dipole orientation, default x-hat.
    """

    L_x: int
    L_y: int
    L_z: int
    d0: float
    occupied: np.ndarray | None = None
    jitter_sigma: float = 0.0
    polarization: tuple[float, float, float] = (1.0, 0.0, 0.0)

    def __post_init__(self):
        if self.L_x < 1 or self.L_y < 1 or self.L_z < 1:
            raise ValueError("site counts must be >= 1")
        if self.d0 <= 0:
            raise ValueError("spacing d0 must be positive")
        if self.occupied is not None:
            mask = np.asarray(self.occupied, dtype=bool)
            if mask.shape != (self.n_sites,):
                raise ValueError("occupation mask length mismatch")
            frac = 1.0 - mask.mean()
            if frac > 0.5:
                raise ValueError("defect fraction above 0.5 guard")
            object.__setattr__(self, "occupied", mask)

    @property
    def n_sites(self) -> int:
        return self.L_x * self.L_y * self.L_z

    @property
    def n_atoms(self) -> int:
        if self.occupied is None:
            return self.n_sites
        return int(self.occupied.sum())

    def lattice_vectors(self) -> np.ndarray:
        """Integer lattice vectors of the occupied sites, centered on the array."""
        ix, iy, iz = np.meshgrid(
            np.arange(self.L_x), np.arange(self.L_y), np.arange(self.L_z),
            indexing="ij",
        )
        vecs = np.stack(
            [
                ix.ravel() - (self.L_x - 1) / 2.0,
                iy.ravel() - (self.L_y - 1) / 2.0,
                iz.ravel() - (self.L_z - 1) / 2.0,
            ],
            axis=1,
        )
        if self.occupied is not None:
            vecs = vecs[self.occupied]
        return vecs

    def positions(self, rng: np.random.Generator | None = None) -> np.ndarray:
        """Atom positions in units of lambda_eg, with jitter when rng given."""
        pos = self.lattice_vectors() * self.d0
        if self.jitter_sigma > 0.0:
            if rng is None:
                raise ValueError("jitter requires an RNG for reproducibility")
            pos = pos + rng.normal(scale=self.jitter_sigma * self.d0, size=pos.shape)
        return pos

    def with_defects(self, fraction: float, rng: np.random.Generator) -> "ArrayGeometry":
        """Randomly unoccupy `fraction` of the sites (reproducible from rng)."""
        n_remove = int(round(fraction * self.n_sites))
        mask = np.ones(self.n_sites, dtype=bool)
        if n_remove > 0:
            removed = rng.choice(self.n_sites, size=n_remove, replace=False)
            mask[removed] = False
        return ArrayGeometry(
            self.L_x, self.L_y, self.L_z, self.d0,
            occupied=mask, jitter_sigma=self.jitter_sigma,
            polarization=self.polarization,
        )
