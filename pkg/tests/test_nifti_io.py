import gzip
import io

import nibabel as nib
import numpy as np
import pytest

from src.models import Volume
from src.utils import nifti_io
from src.utils.errors import (BadMagicError, DimMismatchError, IoFailureError, LossyCastWarning,
                              TruncatedDataError, UnsupportedDatatypeError)


def _volume(dtype, spacing=(0.7, 0.7, 1.5)):
    rng = np.random.default_rng(5)
    data = rng.integers(0, 200, size=(6, 5, 4)).astype(dtype)
    return Volume(data, spacing, datatype_code=nifti_io.DATATYPE_NAMES[np.dtype(dtype).name])


@pytest.mark.parametrize('dtype', [np.uint8, np.int16, np.int32, np.float32, np.float64])
def test_write_then_read_is_bit_exact(tmp_path, dtype):
    volume = _volume(dtype)
    path = tmp_path / 'vol.nii'
    assert nifti_io.write_volume(volume, path) == 0
    loaded = nifti_io.read_volume(path)
    assert loaded.dims == (6, 5, 4)
    assert loaded.data.dtype == np.dtype(dtype)
    np.testing.assert_array_equal(loaded.data, volume.data)
    assert loaded.spacing == pytest.approx(volume.spacing)
    assert loaded.datatype_code == volume.datatype_code


def test_single_file_layout(tmp_path):
    path = tmp_path / 'vol.nii'
    nifti_io.write_volume(_volume(np.int16), path)
    raw = path.read_bytes()
    header = nifti_io.parse_header(raw)
    assert header.endianness == '<'
    assert int(header['vox_offset']) == 352
    assert bytes(header['magic']).rstrip(b'\x00') == b'n+1'
    assert float(header['scl_slope']) == 1.0 and float(header['scl_inter']) == 0.0
    assert len(raw) == 352 + 6 * 5 * 4 * 2


def test_big_endian_files_are_read(tmp_path):
    data = np.arange(60, dtype=np.int16).reshape((5, 4, 3), order='F')
    header = nib.Nifti1Header(endianness='>')
    header.set_data_shape(data.shape)
    header.set_data_dtype(np.int16)
    header.set_zooms((0.5, 0.5, 2.0))
    header['vox_offset'] = 352
    header['magic'] = b'n+1'
    buffer = io.BytesIO()
    header.write_to(buffer)
    buffer.write(data.astype('>i2').tobytes(order='F'))
    path = tmp_path / 'big.nii'
    path.write_bytes(buffer.getvalue())

    loaded = nifti_io.read_volume(path)
    np.testing.assert_array_equal(loaded.data, data)
    assert loaded.spacing == pytest.approx((0.5, 0.5, 2.0))

    rewritten = tmp_path / 'little.nii'
    nifti_io.write_volume(loaded, rewritten)
    assert nifti_io.parse_header(rewritten.read_bytes()).endianness == '<'
    np.testing.assert_array_equal(nifti_io.read_volume(rewritten).data, data)


def test_scaled_data_are_converted_to_hu(tmp_path):
    path = tmp_path / 'scaled.nii'
    nifti_io.write_volume(_volume(np.int16), path)
    raw = bytearray(path.read_bytes())
    header = nifti_io.parse_header(bytes(raw))
    header['scl_slope'] = 2.0
    header['scl_inter'] = -1024.0
    raw[:348] = header.binaryblock
    path.write_bytes(bytes(raw))

    loaded = nifti_io.read_volume(path)
    assert loaded.data.dtype == np.float64
    np.testing.assert_allclose(loaded.data, _volume(np.int16).data * 2.0 - 1024.0)


def test_gzip_round_trip(tmp_path):
    volume = _volume(np.float32)
    path = tmp_path / 'vol.nii.gz'
    nifti_io.write_volume(volume, path)
    assert path.read_bytes()[:2] == b'\x1f\x8b'
    assert gzip.decompress(path.read_bytes())[344:347] == b'n+1'
    np.testing.assert_array_equal(nifti_io.read_volume(path).data, volume.data)


def test_unknown_magic_is_rejected(tmp_path):
    path = tmp_path / 'vol.nii'
    nifti_io.write_volume(_volume(np.int16), path)
    raw = bytearray(path.read_bytes())
    raw[344:348] = b'abc\x00'
    path.write_bytes(bytes(raw))
    with pytest.raises(BadMagicError):
        nifti_io.read_volume(path)


def test_nifti2_is_rejected(tmp_path):
    path = tmp_path / 'vol.nii'
    path.write_bytes(np.array([540], dtype='<i4').tobytes() + bytes(600))
    with pytest.raises(BadMagicError, match='NIfTI-2'):
        nifti_io.read_volume(path)


def test_truncated_files_are_rejected(tmp_path):
    path = tmp_path / 'vol.nii'
    nifti_io.write_volume(_volume(np.int16), path)
    raw = path.read_bytes()
    path.write_bytes(raw[:360])
    with pytest.raises(TruncatedDataError):
        nifti_io.read_volume(path)
    path.write_bytes(raw[:100])
    with pytest.raises(TruncatedDataError):
        nifti_io.read_volume(path)


def test_unsupported_datatype_is_rejected(tmp_path):
    path = tmp_path / 'vol.nii'
    nifti_io.write_volume(_volume(np.int16), path)
    raw = bytearray(path.read_bytes())
    header = nifti_io.parse_header(bytes(raw))
    header['datatype'] = 32
    raw[:348] = header.binaryblock
    path.write_bytes(bytes(raw))
    with pytest.raises(UnsupportedDatatypeError):
        nifti_io.read_volume(path)
    with pytest.raises(UnsupportedDatatypeError):
        nifti_io.datatype_code('complex64')


def test_missing_file_is_an_io_failure(tmp_path):
    with pytest.raises(IoFailureError):
        nifti_io.read_volume(tmp_path / 'missing.nii')


def test_saturating_cast_warns(tmp_path):
    volume = Volume(np.array([-40000.0, 0.0, 12.6, 40000.0]).reshape((4, 1, 1)))
    with pytest.warns(LossyCastWarning):
        saturated = nifti_io.write_volume(volume, tmp_path / 'vol.nii', datatype='int16')
    assert saturated == 2
    loaded = nifti_io.read_volume(tmp_path / 'vol.nii')
    assert loaded.data.ravel().tolist() == [-32768, 0, 13, 32767]


def test_datatype_code_resolution():
    assert nifti_io.datatype_code(None, default=16) == 16
    assert nifti_io.datatype_code('int16') == 4
    assert nifti_io.datatype_code('64') == 64
    assert nifti_io.datatype_code(2) == 2


def test_validate_geometry_messages():
    volume = Volume(np.zeros((4, 4, 2)), (1.0, 1.0, 2.0))
    assert nifti_io.validate_geometry(volume, Volume(np.ones((4, 4, 2)), (1.0, 1.0, 2.0)))['valid']

    report = nifti_io.validate_geometry(volume, Volume(np.full((4, 4, 3), 2.0), (1.0, 1.5, 2.0)))
    assert not report['valid']
    assert len(report['violations']) == 3
    assert 'dims' in report['violations'][0]
    assert 'spacing' in report['violations'][1]
    assert 'non-binary' in report['violations'][2]


def test_read_mask_checks_geometry(tmp_path, phantom_volume):
    volume, mask, _ = phantom_volume
    path = tmp_path / 'mask.nii'
    nifti_io.write_volume(mask, path)
    loaded = nifti_io.read_mask(path, volume)
    np.testing.assert_array_equal(loaded.data, mask.data)

    other = Volume(np.zeros((8, 8, 1), dtype=np.uint8), datatype_code=2)
    nifti_io.write_volume(other, path)
    with pytest.raises(DimMismatchError):
        nifti_io.read_mask(path, volume)


def test_corrupt_deflate_stream_is_truncated_data(tmp_path):
    path = tmp_path / 'vol.nii.gz'
    nifti_io.write_volume(_volume(np.int16), path)
    raw = bytearray(path.read_bytes())
    # first deflate byte: final block with the reserved block type
    raw[10] = 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(TruncatedDataError, match='corrupt gzip'):
        nifti_io.read_volume(path)
