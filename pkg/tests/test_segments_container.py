import random

import numpy as np
import pytest

from conftest import canonical_triangles
from ultron.errors import ContainerError
from ultron.mesh import Aabb, Mesh, vertex_normals
from ultron.pipeline import Segment
from ultron.codec import (
    QuantizationParams,
    decode_container,
    decode_segment,
    encode_container,
    encode_segment,
    half_step,
    quantize_array,
    segment_flags,
    widen_to_f32,
)
from ultron.synth import make_icosphere


def moving_segment(rng, n_frames=10, subdiv=2, with_attrs=True, step=0.002):
    base = make_icosphere(subdiv)
    n = base.vertex_count
    key = Mesh(
        vertices=base.vertices,
        triangles=base.triangles,
        colors=rng.random((n, 3)) if with_attrs else None,
        uvs=rng.random((n, 2)) if with_attrs else None,
    )
    frames = np.stack([
        base.vertices + np.array([step, 0, 0]) * k for k in range(n_frames)
    ])
    return Segment(key=key, frames=frames, frame_ids=tuple(range(n_frames)))


def test_single_frame_segment_roundtrip(rng):
    seg = moving_segment(rng, n_frames=1)
    qp = QuantizationParams()
    blob = encode_segment(seg, qp)
    dec, end = decode_segment(blob, segment_flags(seg))
    assert end == len(blob)
    grid = widen_to_f32(Aabb.of_points(seg.frames.reshape(-1, 3)))
    bound = half_step(grid, qp.qp)
    assert np.all(np.abs(dec.frames[0] - seg.frames[0]) <= bound + 1e-15)
    assert np.array_equal(
        canonical_triangles(dec.key.triangles),
        canonical_triangles(seg.key.triangles),
    )


def test_quantized_positions_bit_exact(rng):
    seg = moving_segment(rng)
    qp = QuantizationParams()
    dec, _ = decode_segment(encode_segment(seg, qp), segment_flags(seg))
    grid = widen_to_f32(Aabb.of_points(seg.frames.reshape(-1, 3)))
    for k in range(seg.frame_count):
        q_orig = quantize_array(seg.frames[k], grid.min, grid.max, qp.qp)
        q_back = quantize_array(dec.frames[k], grid.min, grid.max, qp.qp)
        assert np.array_equal(q_orig, q_back)


def _position_payload(blob, frame_count):
    import struct
    from ultron.codec.segments import _HEADER

    (conn_len,) = struct.unpack_from("<Q", blob, _HEADER.size - 8)
    off = _HEADER.size + conn_len
    total = 0
    sizes = []
    for _ in range(frame_count):
        (length,) = struct.unpack_from("<Q", blob, off)
        off += 8 + length
        total += 8 + length
        sizes.append(length)
    return total, sizes


def test_static_segment_position_payload_near_one_frame(rng):
    # all-zero delta streams compress to (nearly) nothing
    base = moving_segment(rng, n_frames=1, subdiv=4, with_attrs=False)
    static = Segment(
        key=base.key,
        frames=np.repeat(base.frames[:1], 20, axis=0),
        frame_ids=tuple(range(20)),
    )
    b20 = encode_segment(static, QuantizationParams())
    b1 = encode_segment(base, QuantizationParams())
    pos20, deltas = _position_payload(b20, 20)
    pos1, _ = _position_payload(b1, 1)
    assert pos20 < 1.1 * pos1
    # the delta streams themselves are all-zero symbols: table-only blocks
    assert all(size < 32 for size in deltas[1:])


def test_smooth_motion_deltas_are_cheap(rng):
    import struct
    from ultron.codec.segments import _HEADER

    # motion below one lattice step per frame
    seg = moving_segment(rng, n_frames=20, step=0.0015, with_attrs=False)
    blob = encode_segment(seg, QuantizationParams())
    (conn_len,) = struct.unpack_from("<Q", blob, _HEADER.size - 8)
    off = _HEADER.size + conn_len
    sizes = []
    for _ in range(20):
        (length,) = struct.unpack_from("<Q", blob, off)
        off += 8 + length
        sizes.append(length)
    assert np.mean(sizes[1:]) < 0.15 * sizes[0]


def _separate_cost(seg, qp):
    total = 0
    for k in range(seg.frame_count):
        one = Segment(
            key=seg.key.with_vertices(seg.frames[k]),
            frames=seg.frames[k:k + 1],
            frame_ids=(seg.frame_ids[k],),
        )
        total += len(encode_segment(one, qp))
    return total


def test_temporal_beats_per_frame_coding(rng):
    seg = moving_segment(rng, n_frames=10, with_attrs=False)
    qp = QuantizationParams()
    joint = len(encode_segment(seg, qp))
    assert joint < _separate_cost(seg, qp)


def test_segment_dominance_even_under_violent_motion(rng):
    # temporal coding must never lose to per-frame coding for >= 2 frames,
    # even when deltas carry as much entropy as absolute positions
    base = make_icosphere(2)
    qp = QuantizationParams()
    for n_frames in (2, 3, 7):
        frames = np.stack([
            base.vertices + rng.normal(scale=0.5, size=base.vertices.shape)
            for _ in range(n_frames)
        ])
        frames[0] = base.vertices
        seg = Segment(
            key=base, frames=frames, frame_ids=tuple(range(n_frames))
        )
        joint = len(encode_segment(seg, qp))
        assert joint < _separate_cost(seg, qp)


def test_stored_normals_roundtrip(rng):
    base = make_icosphere(2)
    frames = np.stack([
        base.vertices * (1.0 + 0.01 * k) for k in range(5)
    ])
    normals = np.stack([
        vertex_normals(Mesh(vertices=f, triangles=base.triangles))
        for f in frames
    ])
    seg = Segment(
        key=Mesh(vertices=frames[0], triangles=base.triangles,
                 normals=normals[0]),
        frames=frames, frame_ids=tuple(range(5)), normal_frames=normals,
    )
    qp = QuantizationParams()
    dec, _ = decode_segment(encode_segment(seg, qp), segment_flags(seg))
    assert dec.normal_frames is not None
    bound = 2.0 / ((1 << qp.qn) - 1)
    assert np.abs(dec.normal_frames - normals).max() <= bound / 2 + 1e-12


def test_color_fidelity(rng):
    seg = moving_segment(rng, n_frames=3)
    dec, _ = decode_segment(
        encode_segment(seg, QuantizationParams()), segment_flags(seg)
    )
    assert np.abs(dec.key.colors - seg.key.colors).max() <= 0.5 / 255 + 1e-12
    assert np.abs(dec.key.uvs - seg.key.uvs).max() <= 0.5 / ((1 << 11) - 1) + 1e-12


def test_container_roundtrip_multiple_segments(rng):
    segs = [moving_segment(rng, n_frames=4)]
    second = moving_segment(rng, n_frames=3)
    segs.append(Segment(
        key=second.key, frames=second.frames, frame_ids=(4, 5, 6),
    ))
    data = encode_container(segs, QuantizationParams())
    back, flags = decode_container(data)
    assert [s.frame_ids for s in back] == [(0, 1, 2, 3), (4, 5, 6)]


def test_empty_container_is_twelve_bytes():
    data = encode_container([], QuantizationParams())
    assert len(data) == 12
    segs, _flags = decode_container(data)
    assert segs == []


def test_trailing_garbage_rejected(rng):
    data = encode_container([moving_segment(rng, 2)], QuantizationParams())
    with pytest.raises(ContainerError):
        decode_container(data + b"\x00")


def test_bad_magic_and_version(rng):
    data = bytearray(encode_container([moving_segment(rng, 2)],
                                      QuantizationParams()))
    bad_magic = bytes(b"XLTR" + data[4:])
    with pytest.raises(ContainerError, match="magic"):
        decode_container(bad_magic)
    bad_version = bytes(data[:4] + b"\x02\x00" + data[6:])
    with pytest.raises(ContainerError, match="version"):
        decode_container(bad_version)


def test_every_header_byte_corruption_detected(rng):
    data = encode_container([moving_segment(rng, 3)], QuantizationParams())
    for i in range(12):
        corrupted = bytearray(data)
        corrupted[i] ^= 0xFF
        with pytest.raises(ContainerError):
            decode_container(bytes(corrupted))


def test_header_bit_flips_never_crash_or_corrupt_geometry(rng):
    data = encode_container([moving_segment(rng, 3)], QuantizationParams())
    reference, _ = decode_container(data)
    for i in range(12):
        for bit in range(8):
            corrupted = bytearray(data)
            corrupted[i] ^= 1 << bit
            try:
                segs, _ = decode_container(bytes(corrupted))
            except ContainerError:
                continue
            # only advisory metadata may survive; geometry must be intact
            assert len(segs) == 1
            assert np.array_equal(segs[0].frames, reference[0].frames)
            assert np.array_equal(
                segs[0].key.triangles, reference[0].key.triangles
            )


def test_body_fuzz_never_crashes(rng):
    data = encode_container([moving_segment(rng, 3)], QuantizationParams())
    random.seed(99)
    for _ in range(400):
        corrupted = bytearray(data)
        corrupted[random.randrange(12, len(data))] ^= 1 << random.randrange(8)
        try:
            decode_container(bytes(corrupted))
        except ContainerError:
            pass


def test_inconsistent_segment_attributes_rejected(rng):
    with_colors = moving_segment(rng, 2, with_attrs=True)
    plain = moving_segment(rng, 2, with_attrs=False)
    with pytest.raises(ContainerError):
        encode_container([with_colors, plain], QuantizationParams())
