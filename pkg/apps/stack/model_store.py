"""
Binary model files.

Layout: b'DESN' | uint32 LE header length | UTF-8 JSON header | payload of
little-endian float64 arrays. The header records the schema version, the
config echo, one {name, shape, offset} entry per array, the readout segment
layout and the SHA-256 of the payload.
"""
import json
import logging
import struct
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
from django.conf import settings

from apps.encoders.services import FittedEncoder
from apps.reservoir.services import ReservoirLayer
from apps.shared.exceptions import (
    ConfigurationError,
    CorruptModelFileError,
    DimensionMismatchError,
    ModelVersionError,
)
from deep_esn.utils.file_io import AtomicFileWriter, sha256_digest

from .services import DeepEsnConfig, DeepEsnModel, SEGMENT_ENCODER, SEGMENT_INPUT, SEGMENT_RESERVOIR

logger = logging.getLogger(__name__)

MAGIC = b'DESN'
HEADER_LENGTH = struct.Struct('<I')
PAYLOAD_DTYPE = np.dtype('<f8')
HEADER_KEYS = frozenset({'schema_version', 'config', 'arrays', 'payload_bytes', 'payload_sha256'})


def readout_layout(config: DeepEsnConfig) -> List[Dict[str, object]]:
    """Segment table of the readout columns, as stored in the header"""
    segments = [(SEGMENT_RESERVOIR, 0, config.layers[-1].size)]
    if config.direct_input:
        segments.append((SEGMENT_INPUT, 0, config.input_dim))
    if config.feature_links:
        segments.extend((SEGMENT_ENCODER, j + 1, spec.output_dim) for j, spec in enumerate(config.encoders))
    layout = []
    offset = 0
    for role, index, length in segments:
        layout.append({'role': role, 'index': index, 'offset': offset, 'length': length})
        offset += length
    return layout


class ModelStore:
    """Save and load trained Deep-ESN models"""

    @staticmethod
    def _arrays(model: DeepEsnModel) -> List[Tuple[str, np.ndarray]]:
        arrays = []
        for i, layer in enumerate(model.reservoirs):
            arrays.append((f'reservoir.{i}.w_in', layer.w_in))
            arrays.append((f'reservoir.{i}.w_res', layer.w_res))
        for j, encoder in enumerate(model.fitted_encoders):
            arrays.append((f'encoder.{j}.weights', encoder.weights))
            arrays.append((f'encoder.{j}.mean', encoder.mean))
        if model.readout is not None:
            arrays.append(('readout', model.readout))
        return arrays

    @staticmethod
    def serialize(model: DeepEsnModel) -> bytes:
        if not model.encoders_fitted:
            raise ConfigurationError('cannot save a model whose encoders are not fitted')

        table = []
        chunks = []
        offset = 0
        for name, array in ModelStore._arrays(model):
            data = np.ascontiguousarray(array, dtype=PAYLOAD_DTYPE).tobytes()
            table.append({'name': name, 'shape': list(array.shape), 'offset': offset})
            chunks.append(data)
            offset += len(data)
        payload = b''.join(chunks)

        header = {
            'schema_version': settings.DEEP_ESN['MODEL_SCHEMA_VERSION'],
            'config': model.config.to_dict(),
            'arrays': table,
            'layout': readout_layout(model.config),
            'payload_bytes': len(payload),
            'payload_sha256': sha256_digest(payload),
        }
        header_bytes = json.dumps(header, sort_keys=True).encode('utf-8')
        return MAGIC + HEADER_LENGTH.pack(len(header_bytes)) + header_bytes + payload

    @staticmethod
    def save(model: DeepEsnModel, path) -> Path:
        target = AtomicFileWriter.write_bytes(path, ModelStore.serialize(model))
        logger.info(f"Saved Deep-ESN model to {target}")
        return target

    @staticmethod
    def deserialize(blob: bytes) -> DeepEsnModel:
        prefix = len(MAGIC) + HEADER_LENGTH.size
        if len(blob) < prefix or blob[:len(MAGIC)] != MAGIC:
            raise CorruptModelFileError('not a Deep-ESN model file')
        (header_length,) = HEADER_LENGTH.unpack_from(blob, len(MAGIC))
        if len(blob) < prefix + header_length:
            raise CorruptModelFileError('model file is truncated inside the header')
        try:
            header = json.loads(blob[prefix:prefix + header_length].decode('utf-8'))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CorruptModelFileError(f"model header is not valid JSON: {str(e)}") from e
        if not isinstance(header, dict):
            raise CorruptModelFileError(f"model header must be a JSON object, got {type(header).__name__}")

        version = header.get('schema_version')
        supported = settings.DEEP_ESN['MODEL_SCHEMA_VERSION']
        if version != supported:
            raise ModelVersionError(
                f"model schema version {version} is not supported (expected {supported})",
                details={'schema_version': version},
            )
        missing = sorted(HEADER_KEYS - header.keys())
        if missing:
            raise CorruptModelFileError('model header is missing keys', details={'missing': missing})

        payload = blob[prefix + header_length:]
        if len(payload) != header.get('payload_bytes'):
            raise CorruptModelFileError(
                f"payload has {len(payload)} bytes, header declares {header.get('payload_bytes')}"
            )
        if sha256_digest(payload) != header.get('payload_sha256'):
            raise CorruptModelFileError('payload checksum mismatch')

        arrays = {}
        try:
            for entry in header['arrays']:
                shape = tuple(entry['shape'])
                count = int(np.prod(shape)) if shape else 1
                values = np.frombuffer(payload, dtype=PAYLOAD_DTYPE, count=count, offset=entry['offset'])
                arrays[entry['name']] = values.reshape(shape).astype(np.float64)
            config = DeepEsnConfig.from_dict(header['config'])
            return ModelStore._rebuild(config, arrays)
        except CorruptModelFileError:
            raise
        except (ConfigurationError, DimensionMismatchError, AttributeError, KeyError, TypeError, ValueError) as e:
            raise CorruptModelFileError(f"model header is inconsistent: {str(e)}") from e

    @staticmethod
    def _rebuild(config: DeepEsnConfig, arrays: Dict[str, np.ndarray]) -> DeepEsnModel:
        try:
            reservoirs = [
                ReservoirLayer(params, arrays[f'reservoir.{i}.w_in'], arrays[f'reservoir.{i}.w_res'])
                for i, params in enumerate(config.layers)
            ]
            encoders = [
                FittedEncoder(spec, arrays[f'encoder.{j}.weights'], arrays[f'encoder.{j}.mean'])
                for j, spec in enumerate(config.encoders)
            ]
        except KeyError as e:
            raise CorruptModelFileError(f"model file is missing array {str(e)}") from e
        return DeepEsnModel(config, reservoirs, encoders, arrays.get('readout'))

    @staticmethod
    def load(path) -> DeepEsnModel:
        blob = Path(path).read_bytes()
        model = ModelStore.deserialize(blob)
        logger.info(f"Loaded Deep-ESN model K={model.depth} from {path}")
        return model
