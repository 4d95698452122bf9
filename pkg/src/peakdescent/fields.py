"""Coefficient vectors of P1 functions over the interior DOFs."""

from __future__ import annotations

import numpy as np

from .mesh import Mesh

__all__ = ["Field"]


class Field:
    """One or more P1 coefficient vectors (k components, m interior DOFs).

    Boundary values are implicitly zero.  Instances are immutable; the
    small arithmetic surface (`+`, `-`, scalar `*`) returns new fields.
    """

    __slots__ = ("mesh", "data")

    def __init__(self, mesh: Mesh, data):
        data = np.atleast_2d(np.asarray(data, dtype=np.float64))
        if data.ndim != 2 or data.shape[1] != mesh.num_dofs:
            raise ValueError(
                f"field data shape {data.shape} does not match "
                f"{mesh.num_dofs} interior DOFs"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("field data contains non-finite values")
        data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, "mesh", mesh)
        object.__setattr__(self, "data", data)

    def __setattr__(self, name, value):
        raise AttributeError("Field is immutable")

    @classmethod
    def zeros(cls, mesh: Mesh, k: int = 1) -> "Field":
        return cls(mesh, np.zeros((k, mesh.num_dofs)))

    @classmethod
    def stack(cls, components) -> "Field":
        """Stack k one-component fields on a common mesh into one field."""
        components = list(components)
        mesh = components[0].mesh
        return cls(mesh, np.vstack([c.data for c in components]))

    @property
    def k(self) -> int:
        return self.data.shape[0]

    def component(self, i: int) -> "Field":
        return Field(self.mesh, self.data[i : i + 1])

    def vertex_values(self) -> np.ndarray:
        """Nodal values over all vertices (boundary zeros included), (k, nv)."""
        out = np.zeros((self.k, self.mesh.num_vertices))
        out[:, self.mesh.vertex_of_dof] = self.data
        return out

    def __add__(self, other: "Field") -> "Field":
        return Field(self.mesh, self.data + other.data)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.mesh, self.data - other.data)

    def __mul__(self, s) -> "Field":
        return Field(self.mesh, self.data * float(s))

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.mesh, -self.data)

    def __repr__(self) -> str:
        return f"Field(k={self.k}, m={self.data.shape[1]}, n={self.mesh.n})"
