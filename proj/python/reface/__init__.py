# Copyright 2026 The reface Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#/

"""Python bindings for the reface toolkit.

Volumes are exchanged as (X, Y, Z) float32 arrays in NIfTI voxel order.
Results that are naturally records (statistics, summaries) come back as
plain dicts.
"""

import json

from . import _core
from ._core import (
    NiftiImage,
    RefaceError,
    coefficient_of_repeatability,
    compute_cap,
    cosine_distance,
    dice,
    face_air_mask,
    head_phantom,
    kruskal_wallis,
    make_image,
    marching_cubes,
    preprocess_for_render,
    read_nifti,
    relative_overlap,
    render_face,
    reorient_asl,
    reface,
    winsorize,
    write_nifti,
)

__all__ = [
    "NiftiImage",
    "RefaceError",
    "bland_altman",
    "benjamini_hochberg",
    "coefficient_of_repeatability",
    "compare_volumes",
    "compute_cap",
    "cosine_distance",
    "dice",
    "face_air_mask",
    "head_phantom",
    "kruskal_wallis",
    "make_image",
    "marching_cubes",
    "preprocess_for_render",
    "read_nifti",
    "reface",
    "reid_summary",
    "relative_overlap",
    "render_face",
    "reorient_asl",
    "run_cli",
    "wilcoxon_signed_rank",
    "winsorize",
    "write_nifti",
]


def wilcoxon_signed_rank(before, after):
    return json.loads(_core.wilcoxon_signed_rank(list(before), list(after)))


def benjamini_hochberg(p, q=0.05):
    adjusted, rejected = _core.benjamini_hochberg(list(p), q)
    return {"adjusted": adjusted, "rejected": rejected}


def bland_altman(before, after):
    return json.loads(_core.bland_altman(list(before), list(after)))


def reid_summary(pairs, threshold=0.4, scale="raw"):
    pairs = [(list(a), list(b)) for a, b in pairs]
    return json.loads(_core.reid_summary(pairs, threshold, scale))


def compare_volumes(original_csv, anonymized_csv, q=0.05):
    """Region-wise comparison of two volume tables given as CSV text."""
    return json.loads(_core.compare_volumes(original_csv, anonymized_csv, q))


def run_cli(*args):
    """Runs the command-line tool in-process; returns (exit_code, stdout, stderr)."""
    return _core.run_cli([str(a) for a in args])
