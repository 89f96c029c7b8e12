"""NIfTI-1 volume reading and writing.

The 348-byte header is decoded and encoded with ``nibabel.Nifti1Header``;
voxel bytes are located, decoded and laid out here so the file layout stays
exact: single-file output always has vox_offset 352, magic "n+1", little
endian, scl_slope 1 and scl_inter 0. Input may be single-file ("n+1") or a
.hdr/.img pair ("ni1"), either endianness, optionally gzip-compressed.
"""
import gzip
import io
import logging
import math
import warnings
import zlib
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import nibabel as nib
import numpy as np

from src.models import Volume
from src.utils.errors import (BadMagicError, DimMismatchError, IoFailureError, LossyCastWarning,
                              TruncatedDataError, UnsupportedDatatypeError)
from src.utils.validation import make_report

logger = logging.getLogger(__name__)

HEADER_SIZE = 348
NIFTI2_HEADER_SIZE = 540
SINGLE_FILE_VOX_OFFSET = 352
GZIP_MAGIC = b'\x1f\x8b'
SPACING_TOLERANCE_MM = 1e-6

DATATYPES = {
    2: np.dtype(np.uint8),
    4: np.dtype(np.int16),
    8: np.dtype(np.int32),
    16: np.dtype(np.float32),
    64: np.dtype(np.float64),
}
DATATYPE_NAMES = {dtype.name: code for code, dtype in DATATYPES.items()}


def datatype_code(datatype: Union[int, str, None], default: int = 64) -> int:
    """Resolve a datatype given as NIfTI code or numpy name ('int16', 'float32', ...)"""
    if datatype is None:
        return default
    if isinstance(datatype, str):
        if datatype.isdigit():
            datatype = int(datatype)
        elif datatype in DATATYPE_NAMES:
            return DATATYPE_NAMES[datatype]
        else:
            raise UnsupportedDatatypeError(f'Unsupported datatype {datatype!r}')
    if int(datatype) not in DATATYPES:
        raise UnsupportedDatatypeError(f'Unsupported datatype code {datatype}')
    return int(datatype)


def _read_bytes(path: Path) -> bytes:
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise IoFailureError(f'Cannot read {path}: {str(e)}') from e
    if raw[:2] == GZIP_MAGIC:
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError, zlib.error) as e:
            raise TruncatedDataError(f'{path}: corrupt gzip stream: {str(e)}') from e
    return raw


def _endianness(raw: bytes, path) -> str:
    if len(raw) < HEADER_SIZE:
        raise TruncatedDataError(f'{path}: {len(raw)} bytes, shorter than a NIfTI-1 header')
    for code in ('<', '>'):
        size = int(np.frombuffer(raw[:4], dtype=f'{code}i4')[0])
        if size == HEADER_SIZE:
            return code
        if size == NIFTI2_HEADER_SIZE:
            raise BadMagicError(f'{path}: NIfTI-2 files are not supported')
    raise BadMagicError(f'{path}: sizeof_hdr is not 348 in either byte order')


def parse_header(raw: bytes, path='<memory>') -> nib.Nifti1Header:
    """
    Decode the first 348 bytes into a header in the file's own byte order

    Raises:
        TruncatedDataError, BadMagicError
    """
    endianness = _endianness(raw, path)
    header = nib.Nifti1Header(binaryblock=raw[:HEADER_SIZE], endianness=endianness, check=False)
    magic = bytes(header['magic']).rstrip(b'\x00')
    if magic == b'n+2':
        raise BadMagicError(f'{path}: NIfTI-2 files are not supported')
    if magic not in (b'n+1', b'ni1'):
        raise BadMagicError(f'{path}: unknown magic {magic!r}')
    return header


def _shape(header: nib.Nifti1Header, path) -> tuple:
    dim = [int(n) for n in header['dim']]
    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise DimMismatchError(f'{path}: dim[0] = {ndim}')
    shape = dim[1:ndim + 1]
    if any(n <= 0 for n in shape):
        raise DimMismatchError(f'{path}: non-positive dimension in {shape}')
    if any(n != 1 for n in shape[3:]):
        raise DimMismatchError(f'{path}: only 3D volumes are supported, got {shape}')
    shape = (shape + [1, 1, 1])[:3]
    return tuple(shape)


def _scaling(header: nib.Nifti1Header):
    slope = float(header['scl_slope'])
    inter = float(header['scl_inter'])
    if slope == 0 or not math.isfinite(slope):
        slope = 1.0
    if not math.isfinite(inter):
        inter = 0.0
    return slope, inter


def read_volume(path) -> Volume:
    """
    Read a NIfTI-1 volume with scale and intercept applied

    Unscaled integer data keep their integer dtype so a write/read cycle is
    bit-exact; scaled data become float64.

    Raises:
        BadMagicError, UnsupportedDatatypeError, TruncatedDataError,
        DimMismatchError, IoFailureError
    """
    path = Path(path)
    raw = _read_bytes(path)
    header = parse_header(raw, path)

    code = int(header['datatype'])
    if code not in DATATYPES:
        raise UnsupportedDatatypeError(f'{path}: datatype code {code} is not supported')
    shape = _shape(header, path)

    if bytes(header['magic']).rstrip(b'\x00') == b'ni1':
        image_path = path.with_suffix('.img')
        payload = _read_bytes(image_path)
        offset = int(header['vox_offset'])
    else:
        image_path = path
        payload = raw
        offset = int(header['vox_offset']) or SINGLE_FILE_VOX_OFFSET

    dtype = header.get_data_dtype()
    count = int(np.prod(shape))
    needed = offset + count * dtype.itemsize
    if len(payload) < needed:
        raise TruncatedDataError(f'{image_path}: {len(payload)} bytes, expected at least {needed}')

    data = np.frombuffer(payload, dtype=dtype, count=count, offset=offset)
    data = data.reshape(shape, order='F').astype(dtype.newbyteorder('='))

    slope, inter = _scaling(header)
    if slope != 1.0 or inter != 0.0:
        data = data.astype(np.float64) * slope + inter

    spacing = tuple(float(s) for s in header['pixdim'][1:4])
    spacing = tuple(s if s > 0 else 1.0 for s in spacing)
    logger.debug(f'Read {path}: dims {shape}, datatype {code}, spacing {spacing}')
    return Volume(data, spacing, datatype_code=code, header_bytes=bytes(raw[:HEADER_SIZE]))


def cast_to(data: np.ndarray, code: int) -> Tuple[np.ndarray, int]:
    """
    Cast HU data to a NIfTI datatype, saturating out-of-range values

    Returns:
        (cast array, number of saturated voxels)
    """
    dtype = DATATYPES[code]
    data = np.asarray(data)
    if np.issubdtype(dtype, np.integer):
        info = np.iinfo(dtype)
        rounded = np.rint(data.astype(np.float64))
        lossy = ~np.isfinite(rounded) | (rounded < info.min) | (rounded > info.max)
        cast = np.clip(np.nan_to_num(rounded, nan=0.0), info.min, info.max).astype(dtype)
    else:
        info = np.finfo(dtype)
        values = data.astype(np.float64)
        lossy = np.isfinite(values) & (np.abs(values) > info.max)
        cast = np.clip(values, info.min, info.max).astype(dtype) if lossy.any() else values.astype(dtype)
    return cast, int(lossy.sum())


def _output_header(volume: Volume, code: int) -> nib.Nifti1Header:
    if volume.header_bytes is not None:
        header = parse_header(volume.header_bytes)
        if header.endianness != '<':
            header = header.as_byteswapped('<')
    else:
        header = nib.Nifti1Header(endianness='<')
    header.set_data_shape(volume.dims)
    header.set_data_dtype(DATATYPES[code])
    header.set_zooms(volume.spacing)
    header['scl_slope'] = 1.0
    header['scl_inter'] = 0.0
    header['vox_offset'] = SINGLE_FILE_VOX_OFFSET
    header['magic'] = b'n+1'
    return header


def write_volume(volume: Volume, path, datatype: Union[int, str, None] = None) -> int:
    """
    Write a single-file little-endian NIfTI-1 volume

    Header fields this module does not interpret are carried over from
    ``volume.header_bytes``. A path ending in .gz is gzip-compressed.

    Returns:
        number of voxels saturated by the cast (a LossyCastWarning is issued
        when it is not zero)

    Raises:
        IoFailureError: if the file cannot be written
    """
    path = Path(path)
    code = datatype_code(datatype, default=volume.datatype_code)
    cast, saturated = cast_to(volume.data, code)
    if saturated:
        message = f'{path}: {saturated} voxels saturated casting to {DATATYPES[code].name}'
        warnings.warn(message, LossyCastWarning, stacklevel=2)
        logger.warning(message)

    header = _output_header(volume, code)
    buffer = io.BytesIO()
    header.write_to(buffer)
    buffer.write(np.asarray(cast, dtype=DATATYPES[code].newbyteorder('<')).tobytes(order='F'))
    payload = buffer.getvalue()
    if path.suffix == '.gz':
        payload = gzip.compress(payload, mtime=0)

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(payload)
    except OSError as e:
        raise IoFailureError(f'Cannot write {path}: {str(e)}') from e
    logger.debug(f'Wrote {path}: dims {volume.dims}, datatype {code}')
    return saturated


def validate_geometry(volume: Volume, *masks: Volume) -> Dict[str, Any]:
    """
    Check that masks share the volume's dims and spacing (within 1e-6 mm)
    and hold only 0 and 1

    Returns a validation report
    """
    violations = []
    for number, mask in enumerate(masks, start=1):
        if mask.dims != volume.dims:
            violations.append(f'mask {number}: dims {mask.dims} differ from volume dims {volume.dims}')
        if any(abs(a - b) > SPACING_TOLERANCE_MM for a, b in zip(mask.spacing, volume.spacing)):
            violations.append(f'mask {number}: spacing {mask.spacing} differs from volume spacing {volume.spacing}')
        values = np.asarray(mask.data)
        if not np.all((values == 0) | (values == 1)):
            violations.append(f'mask {number}: non-binary mask')
    return make_report(violations)


def read_mask(path, volume: Optional[Volume] = None) -> Volume:
    """Read a label map; with ``volume`` given its geometry must match"""
    mask = read_volume(path)
    if volume is not None:
        report = validate_geometry(volume, mask)
        if not report['valid']:
            raise DimMismatchError(f"{path}: {report['message']}")
    return mask
