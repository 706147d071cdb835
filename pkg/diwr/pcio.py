import os

from dataclasses import dataclass, replace

import numpy as np
import trimesh

from plyfile import PlyData, PlyElement, PlyParseError

from diwr.exceptions import (ParseError, TooFewPoints, DegenerateExtent)

_FORMATS = {'.xyz': 'xyz', '.txt': 'xyz', '.pts': 'xyz', '.ply': 'ply',
            '.obj': 'obj'}

MIN_POINTS = 4


@dataclass(frozen=True)
class ScaleRecord:
    """Uniform scale and translation used to map a cloud into [0, 1]^3

    Attributes
    ----------
    bbox_min: np.ndarray
        Lower corner of the original axis-aligned bounding box.
    bbox_max: np.ndarray
        Upper corner of the original axis-aligned bounding box.
    scale: float
        Factor applied after translating by `-bbox_min`.
    """
    bbox_min: np.ndarray
    bbox_max: np.ndarray
    scale: float

    def forward(self, points):
        return (np.asarray(points, dtype=float) - self.bbox_min) * self.scale

    def inverse(self, points):
        return np.asarray(points, dtype=float) / self.scale + self.bbox_min

    def to_dict(self):
        return {'bbox_min': [float(v) for v in self.bbox_min],
                'bbox_max': [float(v) for v in self.bbox_max],
                'scale': float(self.scale)}


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Point positions together with the optimization state theta

    Attributes
    ----------
    positions: np.ndarray
        (n, 3) point coordinates.
    normals: np.ndarray
        (n, 3) unit normals, all zero until initialized.
    area_weights: np.ndarray
        (n,) non-negative surface-element areas a_i.
    confidences: np.ndarray
        (n,) confidence coefficients c_i in [0, 1].
    densities: np.ndarray
        (n,) neighbour counts rho_i within r_rho.
    scale_record: ScaleRecord or None
        Set once the cloud has been normalized to the unit cube.
    generation: int
        Incremented each time theta is replaced, used to detect stale
        evaluators.
    """
    positions: np.ndarray
    normals: np.ndarray = None
    area_weights: np.ndarray = None
    confidences: np.ndarray = None
    densities: np.ndarray = None
    scale_record: ScaleRecord = None
    generation: int = 0

    def __post_init__(self):
        positions = np.array(self.positions, dtype=float)
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise ValueError('positions must be an (n, 3) array, got shape %r'
                             % (positions.shape, ))
        n = len(positions)

        defaults = {'normals': np.zeros((n, 3)),
                    'area_weights': np.ones(n),
                    'confidences': np.ones(n),
                    'densities': np.zeros(n, dtype=np.int64)}

        object.__setattr__(self, 'positions', positions)
        for name, default in defaults.items():
            value = getattr(self, name)
            if value is None:
                value = default
            else:
                value = np.array(value, dtype=default.dtype)
            if value.shape != default.shape:
                raise ValueError('%s has shape %r but %r was expected for %d '
                                 'points' % (name, value.shape,
                                             default.shape, n))
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        positions.setflags(write=False)

    def __len__(self):
        return len(self.positions)

    @property
    def effective_weights(self):
        """The per-point coefficient a_i c_i of the winding field"""
        return self.area_weights * self.confidences

    def high_confidence(self, tau_in):
        return self.confidences >= tau_in

    def with_state(self, **changes):
        """Copy of the cloud with some channels replaced

        Replacing any theta channel (normals, area weights, confidences)
        bumps the generation counter.
        """
        theta = {'normals', 'area_weights', 'confidences'}
        if theta & set(changes):
            changes.setdefault('generation', self.generation + 1)
        return replace(self, **changes)

    def subset(self, indices):
        """Copy restricted to `indices`, all channels carried over"""
        indices = np.asarray(indices)
        return PointCloud(self.positions[indices], self.normals[indices],
                          self.area_weights[indices],
                          self.confidences[indices], self.densities[indices],
                          scale_record=self.scale_record,
                          generation=self.generation)

    def validate(self, require_normals=True, tol=1e-6):
        """Check the invariants of the optimization state

        Raises
        ------
        ValueError
            If normals are not unit length, confidences leave [0, 1] or
            area weights are negative.
        """
        if require_normals:
            lengths = np.linalg.norm(self.normals, axis=1)
            bad = np.flatnonzero(np.abs(lengths - 1) > tol)
            if len(bad):
                raise ValueError('%d normals are not unit length, the first '
                                 'one is point %d' % (len(bad), bad[0]))
        if np.any(self.confidences < 0) or np.any(self.confidences > 1):
            raise ValueError('Confidences must lie in [0, 1]')
        if np.any(self.area_weights < 0):
            raise ValueError('Area weights must be non-negative')
        if not np.all(np.isfinite(self.positions)):
            raise ValueError('Positions contain non-finite values')


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangle mesh with vertex coordinates and vertex-index triples"""
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(faces) and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise ValueError('Face indices must be in [0, %d)' %
                             len(vertices))
        object.__setattr__(self, 'vertices', vertices)
        object.__setattr__(self, 'faces', faces)

    @classmethod
    def from_trimesh(cls, mesh):
        return cls(np.asarray(mesh.vertices), np.asarray(mesh.faces))

    def to_trimesh(self):
        return trimesh.Trimesh(vertices=self.vertices, faces=self.faces,
                               process=False)

    @property
    def euler_characteristic(self):
        return int(self.to_trimesh().euler_number)

    @property
    def volume(self):
        """Enclosed volume by the divergence theorem (absolute value)"""
        return abs(float(self.to_trimesh().volume))

    def boundary_and_nonmanifold_edges(self):
        """Count edges used by one face and edges used by three or more"""
        edges = np.sort(np.concatenate([self.faces[:, [0, 1]],
                                        self.faces[:, [1, 2]],
                                        self.faces[:, [2, 0]]]), axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        return int(np.sum(counts == 1)), int(np.sum(counts > 2))

    def is_watertight(self):
        boundary, nonmanifold = self.boundary_and_nonmanifold_edges()
        return len(self.faces) > 0 and boundary == 0 and nonmanifold == 0

    def transformed(self, scale_record):
        """Map the vertices back to the frame `scale_record` came from"""
        return TriMesh(scale_record.inverse(self.vertices), self.faces)


def _detect_format(path, fmt):
    if fmt is not None:
        fmt = fmt.lower()
        if fmt == 'obj-points':
            fmt = 'obj'
        if fmt not in {'xyz', 'ply', 'obj'}:
            raise ValueError('Unrecognized point format "%s"' % fmt)
        return fmt

    ext = os.path.splitext(str(path))[1].lower()
    if ext not in _FORMATS:
        raise ValueError('Cannot infer the format of "%s", use one of %s'
                         % (path, ', '.join(sorted(_FORMATS))))
    return _FORMATS[ext]


def _parse_xyz(path):
    rows = []
    with open(path) as f:
        for number, line in enumerate(f, start=1):
            content = line.split('#', 1)[0].strip()
            if not content:
                continue

            fields = content.split()
            # trailing normals are accepted and ignored
            if len(fields) not in (3, 6):
                raise ParseError('Expected 3 (or 6) values but found %d' %
                                 len(fields), path, number)
            try:
                rows.append([float(v) for v in fields[:3]])
            except ValueError:
                column = next(i for i, v in enumerate(fields[:3])
                              if not _is_float(v))
                raise ParseError('Could not convert "%s" to a number' %
                                 fields[column], path, number,
                                 line.index(fields[column]))
    return {'positions': np.array(rows, dtype=float).reshape(-1, 3)}


def _is_float(value):
    try:
        float(value)
    except ValueError:
        return False
    return True


def _parse_obj_points(path):
    rows = []
    with open(path) as f:
        for number, line in enumerate(f, start=1):
            fields = line.split()
            if not fields or fields[0] != 'v':
                continue
            if len(fields) < 4:
                raise ParseError('Vertex record with fewer than 3 '
                                 'coordinates', path, number)
            try:
                rows.append([float(v) for v in fields[1:4]])
            except ValueError:
                raise ParseError('Vertex record is not numeric', path,
                                 number)
    return {'positions': np.array(rows, dtype=float).reshape(-1, 3)}


def _parse_ply(path):
    try:
        ply = PlyData.read(str(path))
    except PlyParseError as e:
        line = getattr(e, 'line', None)
        row = getattr(e, 'row', None)
        raise ParseError('Malformed PLY file: %s' % e, path,
                         line if line is not None else
                         (row + 1 if row is not None else None))
    except (ValueError, EOFError) as e:
        raise ParseError('Malformed PLY file: %s' % e, path)

    if 'vertex' not in ply:
        raise ParseError('PLY file has no vertex element', path)
    vertex = ply['vertex']
    names = {p.name for p in vertex.properties}
    if not {'x', 'y', 'z'} <= names:
        raise ParseError('PLY vertex element lacks x, y or z', path)

    out = {'positions': np.column_stack([np.asarray(vertex[c],
                                                    dtype=np.float64)
                                         for c in 'xyz'])}
    if {'nx', 'ny', 'nz'} <= names:
        out['normals'] = np.column_stack([np.asarray(vertex[c], dtype=float)
                                          for c in ('nx', 'ny', 'nz')])
    for prop, key in (('area', 'area_weights'), ('conf', 'confidences'),
                      ('density', 'densities')):
        if prop in names:
            out[key] = np.asarray(vertex[prop])
    return out


def load_points(path, format=None, with_state=False):
    """Read a point cloud from an XYZ, PLY or OBJ file

    Parameters
    ----------
    path: str
        File to read.
    format: str, optional
        One of "xyz", "ply" or "obj-points". Inferred from the extension
        when omitted.
    with_state: bool
        When True, PLY vertex properties nx, ny, nz, area, conf and density
        are loaded into the optimization state (checkpoint restore). By
        default the input is treated as unoriented and those are ignored.

    Returns
    -------
    PointCloud
        Cloud with zero normals, a_i = 1, c_i = 1 and rho_i = 0 unless the
        state was restored.

    Raises
    ------
    FileNotFoundError
        If `path` does not exist.
    ParseError
        If the file is malformed.
    TooFewPoints
        If fewer than 4 points were read.
    """
    if not os.path.isfile(str(path)):
        raise FileNotFoundError("Cannot find the point file '%s'" % path)

    fmt = _detect_format(path, format)
    parsed = {'xyz': _parse_xyz, 'obj': _parse_obj_points,
              'ply': _parse_ply}[fmt](path)

    positions = parsed.pop('positions')
    if len(positions) < MIN_POINTS:
        raise TooFewPoints('Point clouds need at least %d points, %s has %d'
                           % (MIN_POINTS, path, len(positions)))
    if not np.all(np.isfinite(positions)):
        raise ParseError('Non-finite coordinates found', path)

    if not with_state:
        parsed = {}
    elif 'densities' in parsed:
        parsed['densities'] = parsed['densities'].astype(np.int64)

    return PointCloud(positions, **parsed)


def normalize_unit_cube(cloud):
    """Uniformly scale and translate a cloud into the unit cube

    The longest side of the bounding box is mapped to exactly 1 and the
    lower corner to the origin; the aspect ratio is preserved.

    Parameters
    ----------
    cloud: PointCloud
        Cloud in world units.

    Returns
    -------
    PointCloud
        Normalized copy, with `scale_record` describing the mapping.

    Raises
    ------
    DegenerateExtent
        If all the points coincide.
    """
    bbox_min = cloud.positions.min(axis=0)
    bbox_max = cloud.positions.max(axis=0)
    side = float(np.max(bbox_max - bbox_min))
    if not side > 0:
        raise DegenerateExtent('All %d points coincide, the cloud cannot be '
                               'normalized' % len(cloud))

    # already normalized clouds go through untouched and keep their record
    if np.allclose(bbox_min, 0.0, rtol=0.0, atol=1e-9) and \
            np.isclose(side, 1.0, rtol=1e-9, atol=0.0):
        positions = cloud.positions
        record = cloud.scale_record
        if record is None:
            record = ScaleRecord(bbox_min, bbox_max, 1.0 / side)
    else:
        record = ScaleRecord(bbox_min, bbox_max, 1.0 / side)
        positions = record.forward(cloud.positions)

    return replace(cloud, positions=positions, scale_record=record)


def denormalize_points(points, scale_record):
    """Map normalized coordinates back to the original frame"""
    return scale_record.inverse(points)


def save_points(path, cloud, format=None, binary=True, extra=None):
    """Write a point cloud

    Parameters
    ----------
    path: str
        Destination file.
    cloud: PointCloud
        Cloud to write.
    format: str, optional
        "xyz", "ply" or "obj-points"; inferred from the extension when
        omitted.
    binary: bool
        PLY only, write binary little endian instead of ASCII.
    extra: dict, optional
        PLY only, additional float vertex properties by name.

    Notes
    -----
    Only PLY keeps the optimization state (properties nx, ny, nz, area,
    conf, density). XYZ and OBJ keep positions only.
    """
    fmt = _detect_format(path, format)

    if fmt == 'xyz':
        np.savetxt(path, cloud.positions, fmt='%.17g')
    elif fmt == 'obj':
        with open(path, 'w') as f:
            for x, y, z in cloud.positions:
                f.write('v %.17g %.17g %.17g\n' % (x, y, z))
    else:
        _write_state_ply(path, cloud, binary, extra)


def _write_state_ply(path, cloud, binary, extra=None):
    dtype = [('x', 'f8'), ('y', 'f8'), ('z', 'f8'),
             ('nx', 'f8'), ('ny', 'f8'), ('nz', 'f8'),
             ('area', 'f8'), ('conf', 'f8'), ('density', 'i4')]
    if extra:
        dtype += [(name, 'f8') for name in extra]

    vertex = np.empty(len(cloud), dtype=dtype)
    for i, c in enumerate('xyz'):
        vertex[c] = cloud.positions[:, i]
    for i, c in enumerate(('nx', 'ny', 'nz')):
        vertex[c] = cloud.normals[:, i]
    vertex['area'] = cloud.area_weights
    vertex['conf'] = cloud.confidences
    vertex['density'] = cloud.densities
    for name, values in (extra or {}).items():
        vertex[name] = values

    element = PlyElement.describe(vertex, 'vertex')
    PlyData([element], text=not binary,
            byte_order='<').write(str(path))


def save_mesh(path, mesh, format=None):
    """Write a triangle mesh as OBJ (v/f records only) or binary PLY"""
    if format is None:
        ext = os.path.splitext(str(path))[1].lower()
        format = {'.obj': 'obj', '.ply': 'ply'}.get(ext)
    if format not in {'obj', 'ply'}:
        raise ValueError('Meshes can only be written as obj or ply, got %s'
                         % format)

    if format == 'obj':
        with open(path, 'w') as f:
            for x, y, z in mesh.vertices:
                f.write('v %.17g %.17g %.17g\n' % (x, y, z))
            for a, b, c in mesh.faces + 1:
                f.write('f %d %d %d\n' % (a, b, c))
    else:
        vertex = np.empty(len(mesh.vertices),
                          dtype=[('x', 'f8'), ('y', 'f8'), ('z', 'f8')])
        for i, c in enumerate('xyz'):
            vertex[c] = mesh.vertices[:, i]
        face = np.empty(len(mesh.faces),
                        dtype=[('vertex_indices', 'i4', (3,))])
        face['vertex_indices'] = mesh.faces
        PlyData([PlyElement.describe(vertex, 'vertex'),
                 PlyElement.describe(face, 'face')],
                byte_order='<').write(str(path))


def load_mesh(path):
    """Read a triangle mesh (any format trimesh understands)"""
    if not os.path.isfile(str(path)):
        raise FileNotFoundError("Cannot find the mesh file '%s'" % path)
    try:
        mesh = trimesh.load(str(path), force='mesh', process=False)
    except Exception as e:
        raise ParseError('Could not read mesh: %s' % e, path)
    if len(mesh.faces) == 0:
        raise ParseError('Mesh has no faces', path)
    return TriMesh.from_trimesh(mesh)
