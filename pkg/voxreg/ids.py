"""Module for translating between ROI labels, area indices and voxels"""
import numpy as np


class AreaIds:
    """Helper class for holding area labels, area indices and voxel membership."""

    def __init__(self, partition):
        """
        Args:
            partition: RoiPartition whose area order defines the area indices
        """
        self._label_to_index = {label: i for i, (label, _) in enumerate(partition.areas)}
        self._index_to_label = [label for label, _ in partition.areas]
        self._members = [members for _, members in partition.areas]

        self._voxel_area = np.empty(partition.n_voxels, dtype=np.int64)
        for i, members in enumerate(self._members):
            self._voxel_area[members] = i

    def __len__(self):
        return len(self._index_to_label)

    @property
    def voxel_area(self):
        """Area index A(v) for every voxel"""
        return self._voxel_area

    def labels(self):
        return list(self._index_to_label)

    def index(self, label):
        """Translate area label to area index"""
        return self._label_to_index[label]

    def label(self, index):
        """Translate area index to area label"""
        return self._index_to_label[index]

    def members(self, index):
        """Voxels V(a) of area `index`"""
        return self._members[index]
