"""Datasets, voxel geometry, ROI partitions and design-matrix construction."""
from collections import namedtuple
import logging

import numpy as np
from scipy.spatial import cKDTree

from voxreg.constants import ROI_CAP
from voxreg.errors import (DatasetError, InsufficientHistoryError,
                           InvalidParameterError, OutOfRangeError)

logger = logging.getLogger(__name__)

DesignKind = namedtuple('DesignKind', ['name', 'base_features', 'lag'])

STATIC = DesignKind(name='static', base_features=None, lag=None)


def dynamic_kind(base_features, lag):
    """Kind tag for a lagged design built from `base_features` columns."""
    return DesignKind(name='dynamic', base_features=int(base_features), lag=int(lag))


class VoxelGeometry(namedtuple('VoxelGeometry', ['coords', 'spacing'])):
    """
    Integer grid coordinates (V x 3) and physical voxel edge lengths in mm.
    Distances between voxels are always taken on `physical`, i.e. grid
    coordinates scaled by spacing.
    """
    __slots__ = ()

    def __new__(cls, coords, spacing=(1.0, 1.0, 1.0)):
        coords = np.asarray(coords, dtype=np.int64)
        spacing = np.asarray(spacing, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise DatasetError('Coordinates must be a V x 3 array, got shape {}'.format(coords.shape))
        if spacing.shape != (3,) or np.any(spacing <= 0):
            raise DatasetError('Spacing must be three strictly positive lengths, got {}'.format(spacing))
        if len(np.unique(coords, axis=0)) != len(coords):
            raise DatasetError('Two voxels share identical grid coordinates')
        coords.setflags(write=False)
        spacing.setflags(write=False)
        return super().__new__(cls, coords, spacing)

    @property
    def n_voxels(self):
        return len(self.coords)

    @property
    def physical(self):
        """Voxel centres in mm."""
        return self.coords * self.spacing

    def tree(self):
        return cKDTree(self.physical)


class RoiPartition(namedtuple('RoiPartition', ['assignment', 'areas'])):
    """
    Disjoint cover of the voxels by areas.
    Args:
        assignment: length-V array of area labels (strings)
        areas: tuple of (label, member voxel indices), in a fixed order
    """
    __slots__ = ()

    def __new__(cls, assignment, areas=None):
        assignment = np.asarray([str(a) for a in assignment], dtype=object)
        if areas is None:
            areas = tuple((label, np.flatnonzero(assignment == label))
                          for label in sorted(set(assignment)))
        areas = tuple((str(label), np.asarray(members, dtype=np.int64)) for label, members in areas)

        covered = np.zeros(len(assignment), dtype=int)
        for label, members in areas:
            if len(members) == 0:
                raise DatasetError('Area {} is empty'.format(label))
            covered[members] += 1
            if np.any(assignment[members] != label):
                raise DatasetError('Area {} disagrees with the voxel assignment'.format(label))
        if np.any(covered != 1):
            raise DatasetError('Areas must be disjoint and cover every voxel')
        return super().__new__(cls, assignment, areas)

    @property
    def n_voxels(self):
        return len(self.assignment)

    @property
    def n_areas(self):
        return len(self.areas)

    def sizes(self):
        return [len(members) for _, members in self.areas]


class Dataset(namedtuple('Dataset', ['design', 'responses', 'geometry', 'rois', 'kind'])):
    """
    A design matrix X (T x P), responses Y (T x V), the voxel geometry and
    the ROI partition. Instances are immutable; derive new ones with
    `take_rows` or `with_responses`.
    """
    __slots__ = ()

    def __new__(cls, design, responses, geometry, rois, kind=STATIC):
        design = np.array(design, dtype=float, ndmin=2)
        responses = np.array(responses, dtype=float, ndmin=2)
        if design.shape[0] != responses.shape[0]:
            raise DatasetError('Design has {} rows but responses have {}'.format(
                design.shape[0], responses.shape[0]))
        if geometry.n_voxels != responses.shape[1]:
            raise DatasetError('Geometry has {} voxels but responses have {} columns'.format(
                geometry.n_voxels, responses.shape[1]))
        if rois.n_voxels != responses.shape[1]:
            raise DatasetError('ROI assignment covers {} voxels, expected {}'.format(
                rois.n_voxels, responses.shape[1]))
        design.setflags(write=False)
        responses.setflags(write=False)
        return super().__new__(cls, design, responses, geometry, rois, kind)

    @property
    def n_rows(self):
        return self.design.shape[0]

    @property
    def n_features(self):
        return self.design.shape[1]

    @property
    def n_voxels(self):
        return self.responses.shape[1]

    @property
    def is_dynamic(self):
        return self.kind.name == 'dynamic'

    def take_rows(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.design[rows], self.responses[rows], self.geometry, self.rois, self.kind)

    def with_responses(self, responses):
        return Dataset(self.design, responses, self.geometry, self.rois, self.kind)

    def with_rois(self, rois):
        return Dataset(self.design, self.responses, self.geometry, rois, self.kind)


def build_lag_design(base, lag, responses=None):
    """
    Concatenate lagged stimulus rows so that row t holds x_{t-1}, ..., x_{t-h}
    (most recent first). x_t itself is excluded (beta_{v,0} = 0).

    Returns:
        (design, trimmed responses); responses is None if none were given.
    """
    base = np.array(base, dtype=float, ndmin=2)
    n_rows = base.shape[0]
    if lag < 1:
        raise InvalidParameterError('Lag must be at least 1, got {}'.format(lag))
    if n_rows <= lag:
        raise InsufficientHistoryError(
            'Need more than {} rows of history, got {}'.format(lag, n_rows))

    design = np.hstack([base[lag - k:n_rows - k] for k in range(1, lag + 1)])
    if responses is not None:
        responses = np.array(responses, dtype=float, ndmin=2)[lag:]
    return design, responses


def lagged_dataset(base, responses, geometry, rois, lag):
    design, trimmed = build_lag_design(base, lag, responses)
    return Dataset(design, trimmed, geometry, rois, dynamic_kind(base.shape[1], lag))


def _bisect(label, members, physical, cap):
    if len(members) <= cap:
        return [(label, members)]
    points = physical[members]
    axis = int(np.argmax(points.max(axis=0) - points.min(axis=0)))
    order = np.lexsort((members, points[:, axis]))
    half = (len(members) + 1) // 2
    first, second = np.sort(members[order[:half]]), np.sort(members[order[half:]])
    return (_bisect(label + '.0', first, physical, cap)
            + _bisect(label + '.1', second, physical, cap))


def split_large_rois(partition, geometry, cap=ROI_CAP):
    """
    Recursively halve every area larger than `cap` along the axis with the
    largest physical extent, at the median coordinate. Halves differ in size
    by at most one; the lower half gets the extra voxel and the suffix '.0'.
    """
    if cap < 1:
        raise InvalidParameterError('ROI cap must be at least 1, got {}'.format(cap))
    if all(len(members) <= cap for _, members in partition.areas):
        return partition

    physical = geometry.physical
    areas = []
    for label, members in partition.areas:
        areas.extend(_bisect(label, members, physical, cap))

    assignment = partition.assignment.copy()
    for label, members in areas:
        assignment[members] = label
    logger.info('Split %d areas into %d (cap %d)', partition.n_areas, len(areas), cap)
    return RoiPartition(assignment, areas)


def ball_neighbors(geometry, center, p, radius, tree=None):
    """All voxels (center included) within l_p distance `radius` mm of `center`."""
    if not 0 <= center < geometry.n_voxels:
        raise OutOfRangeError('Voxel {} out of range [0, {})'.format(center, geometry.n_voxels))
    if p not in (1, 2):
        raise InvalidParameterError('Ball norm must be 1 or 2, got {}'.format(p))
    if radius < 0:
        raise InvalidParameterError('Radius must be non-negative, got {}'.format(radius))
    tree = tree if tree is not None else geometry.tree()
    return set(tree.query_ball_point(geometry.physical[center], radius, p=p))


def layout_geometry(n_voxels, spacing=(1.0, 1.0, 1.0)):
    """Place voxels on a near-cubic grid in raster order (x fastest)."""
    side = int(np.ceil(n_voxels ** (1.0 / 3.0) - 1e-9))
    idx = np.arange(n_voxels)
    coords = np.column_stack([idx % side, (idx // side) % side, idx // (side * side)])
    return VoxelGeometry(coords, spacing)


def contiguous_partition(n_voxels, n_areas):
    """Areas as consecutive runs of voxel indices (sizes differ by at most one)."""
    if not 1 <= n_areas <= n_voxels:
        raise InvalidParameterError('Need 1 <= areas <= voxels, got {} areas'.format(n_areas))
    assignment = np.empty(n_voxels, dtype=object)
    for k, chunk in enumerate(np.array_split(np.arange(n_voxels), n_areas)):
        assignment[chunk] = 'area{}'.format(k)
    return RoiPartition(assignment)
