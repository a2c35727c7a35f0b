from .discretize import (
    SigmaIndex,
    MuIndex,
    DiscretizationConfig,
    int_log2,
    sigma_index,
    sigma_index_array,
    sigma_reconstruct,
    mu_index,
    mu_index_array,
    sigma_index_oracle,
)
from .cdf_tables import CdfLut, LutSet, build_gaussian_cdf, build_all_luts
from .gmm import GmmQuery, build_query, gmm_cdf_index, gmm_encode_symbol, gmm_decode_symbol, symbol_bounds
from .bitio import BitReader, BitWriter, golomb_encode, golomb_decode
from .range_coder import RangeEncoder, RangeDecoder
from .tensor_codec import Bitstream, CodingStats, encode_tensor, decode_tensor

__all__ = [
    "SigmaIndex", "MuIndex", "DiscretizationConfig", "int_log2", "sigma_index", "sigma_index_array",
    "sigma_reconstruct", "mu_index", "mu_index_array", "sigma_index_oracle",
    "CdfLut", "LutSet", "build_gaussian_cdf", "build_all_luts",
    "GmmQuery", "build_query", "gmm_cdf_index", "gmm_encode_symbol", "gmm_decode_symbol", "symbol_bounds",
    "BitReader", "BitWriter", "golomb_encode", "golomb_decode",
    "RangeEncoder", "RangeDecoder",
    "Bitstream", "CodingStats", "encode_tensor", "decode_tensor",
]
