import numpy as np
import pytest

from shellsph.cloud import ShellParticleCloud


def make_line_cloud(n=41, dp=0.005, thickness=0.01):
    """2D strip along x, normals +z (second axis)."""
    x = np.arange(n) * dp
    pos = np.column_stack([x, np.zeros(n)])
    normals = np.tile([0.0, 1.0], (n, 1))
    vols = np.full(n, dp)
    return ShellParticleCloud(pos, normals, vols, thickness, dp)


def make_plate_cloud(nx=12, ny=12, dp=0.05, thickness=0.02):
    """Flat 3D plate in the xy plane, normals +z."""
    xs = np.arange(nx) * dp
    ys = np.arange(ny) * dp
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pos = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])
    normals = np.tile([0.0, 0.0, 1.0], (gx.size, 1))
    vols = np.full(gx.size, dp * dp)
    return ShellParticleCloud(pos, normals, vols, thickness, dp)


def make_cylinder_cloud(radius=5.0, npsi=48, ny=9, dp=None, thickness=0.1,
                        psi_span=np.pi, outward=True):
    """Open cylindrical panel, axis along y, crown up.

    Normals stay in the xz plane with n_z > -1, and the local frames align
    with the principal (hoop/axial) directions.
    """
    if dp is None:
        dp = radius * psi_span / npsi
    psi = (np.arange(npsi) + 0.5) * psi_span / npsi - 0.5 * psi_span
    y = np.arange(ny) * dp
    gp, gy = np.meshgrid(psi, y, indexing="ij")
    gp, gy = gp.ravel(), gy.ravel()
    pos = np.column_stack([radius * np.sin(gp), gy, radius * np.cos(gp)])
    sign = 1.0 if outward else -1.0
    normals = sign * np.column_stack([np.sin(gp), np.zeros_like(gp), np.cos(gp)])
    vols = np.full(pos.shape[0], radius * (psi_span / npsi) * dp)
    return ShellParticleCloud(pos, normals, vols, thickness, dp)


def make_sphere_band_cloud(radius=5.0, lat_lo=-0.5, lat_hi=0.5, dp=0.35,
                           thickness=0.1):
    """Latitude band of a sphere, outward normals (stays clear of -z pole)."""
    nlat = max(int(round(radius * (lat_hi - lat_lo) / dp)), 2)
    lats = lat_lo + (np.arange(nlat) + 0.5) * (lat_hi - lat_lo) / nlat
    pts, nrm, vol = [], [], []
    dlat = (lat_hi - lat_lo) / nlat
    for lat in lats:
        ring_r = radius * np.cos(lat)
        nring = max(int(round(2.0 * np.pi * ring_r / dp)), 8)
        psi = (np.arange(nring) + 0.5) * 2.0 * np.pi / nring
        x = ring_r * np.cos(psi)
        y = ring_r * np.sin(psi)
        z = np.full(nring, radius * np.sin(lat))
        p = np.column_stack([x, y, z])
        pts.append(p)
        nrm.append(p / radius)
        # exact band area split evenly over the ring
        band = 2.0 * np.pi * radius ** 2 * (np.sin(lat + dlat / 2) - np.sin(lat - dlat / 2))
        vol.append(np.full(nring, band / nring))
    pos = np.vstack(pts)
    normals = np.vstack(nrm)
    vols = np.concatenate(vol)
    return ShellParticleCloud(pos, normals, vols, thickness, dp)


@pytest.fixture(scope="session")
def line_cloud():
    return make_line_cloud()


@pytest.fixture(scope="session")
def plate_cloud():
    return make_plate_cloud()


@pytest.fixture(scope="session")
def cylinder_cloud():
    return make_cylinder_cloud()
