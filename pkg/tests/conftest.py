import numpy as np

from voxsim.core import (
    SparseTensor,
    canonical_sort,
    center_offset_index,
    half_offsets,
    kernel_offsets,
)
from voxsim.mapsearch import block_ids, build_depth_table, replicated_border_mask
from voxsim.toolkit import Distribution, SceneSpec, generate_scene


def tensor_from(coords, shape, channels=1, rng=None):
    arr, _ = canonical_sort(np.asarray(coords).reshape(-1, 3))
    if rng is None:
        feats = np.zeros((len(arr), channels))
    else:
        feats = rng.standard_normal((len(arr), channels))
    return SparseTensor(arr, feats, shape)


def random_scene(shape, sparsity, seed, distribution=None, channels=1):
    dist = distribution or Distribution("uniform")
    return generate_scene(SceneSpec(shape, sparsity, dist, seed, channels))


def reference_block_pairs(scene, spec, block_grid):
    """Literal per-output search-space assembly for the blocked search.

    In-block rows over the block's augmented stream (own voxels plus the
    copied first x-column of the x+ neighbor, copies acting as outputs
    too), plus the y-neighbor rows located via their tables, followed by
    symmetric closure and deduplication.  Slow; small scenes only.
    """
    table = build_depth_table(scene, block_grid)
    coords = scene.coords.astype(np.int64)
    n = len(coords)
    bid = block_ids(scene.coords, table)
    copies = replicated_border_mask(scene.coords, table)
    m, nb_y = block_grid
    aug = {b: list(np.nonzero(bid == b)[0]) for b in range(table.num_blocks)}
    for idx in np.nonzero(copies)[0]:
        aug[int(bid[idx]) - nb_y].append(int(idx))
    halfs = half_offsets(spec).astype(np.int64)
    offmap = {tuple(int(v) for v in o): k for k, o in enumerate(kernel_offsets(spec))}
    center = center_offset_index(spec)
    xb, yb = table.x_bounds, table.y_bounds
    pairs = {(j, j, center) for j in range(n)}
    for b, members in aug.items():
        bi, bj = b // nb_y, b % nb_y
        marr = np.array(sorted(members), dtype=np.int64)
        if not len(marr):
            continue
        mc = coords[marr]
        for o in marr.tolist():
            x0, y0, z0 = coords[o]
            space = []
            sel = (
                (mc[:, 2] == z0) & ((mc[:, 1] == y0) | (mc[:, 1] == y0 + 1))
            ) | ((mc[:, 2] == z0 + 1) & (np.abs(mc[:, 1] - y0) <= 1))
            space.extend(marr[sel].tolist())
            for dj, yq in ((-1, y0 - 1), (1, y0 + 1)):
                for dx in (-1, 0, 1):
                    ni, nj = bi + dx, bj + dj
                    if not (0 <= ni < m and 0 <= nj < nb_y):
                        continue
                    xq = x0 + dx
                    if not (xb[ni] <= xq < xb[ni + 1] and yb[nj] <= yq < yb[nj + 1]):
                        continue
                    nb_members = np.array(sorted(aug[ni * nb_y + nj]), dtype=np.int64)
                    if not len(nb_members):
                        continue
                    nc = coords[nb_members]
                    nsel = (nc[:, 1] == yq) & ((nc[:, 2] == z0) | (nc[:, 2] == z0 + 1))
                    space.extend(nb_members[nsel].tolist())
            space = np.unique(np.array(space, dtype=np.int64))
            if not len(space):
                continue
            pos = {
                (int(c[0]), int(c[1]), int(c[2])): int(i)
                for c, i in zip(coords[space], space)
            }
            for off in halfs:
                key = (int(x0 + off[0]), int(y0 + off[1]), int(z0 + off[2]))
                i = pos.get(key)
                if i is not None:
                    pairs.add((i, int(o), offmap[tuple(int(v) for v in off)]))
    neg = {
        k: offmap[tuple(int(-v) for v in o)]
        for k, o in enumerate(kernel_offsets(spec))
    }
    full = set(pairs)
    for i, j, k in pairs:
        if k != center:
            full.add((j, i, neg[k]))
    return full
