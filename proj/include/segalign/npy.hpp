// Copyright 2026 The SegAlign Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Tensor files use the ".npy" version-1.0 layout: the 6-byte magic, a
// one-line Python-dict header padded to a 64-byte boundary, then the raw
// little-endian payload. Only the four dtypes DenseTensor supports are
// accepted; fortran_order must be False.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "segalign/error.hpp"
#include "segalign/tensor.hpp"

namespace segalign {

namespace detail {

inline const char kNpyMagic[6] = {'\x93', 'N', 'U', 'M', 'P', 'Y'};

inline std::string npy_descr(Dtype t) {
    switch (t) {
        case Dtype::Float32: return "<f4";
        case Dtype::Float64: return "<f8";
        case Dtype::Uint8: return "|u1";
        case Dtype::Uint16: return "<u2";
    }
    throw ValueError("unknown dtype");
}

inline Dtype npy_dtype_from_descr(const std::string& d) {
    if (d == "<f4") return Dtype::Float32;
    if (d == "<f8") return Dtype::Float64;
    if (d == "|u1" || d == "<u1") return Dtype::Uint8;
    if (d == "<u2") return Dtype::Uint16;
    throw IoError("unsupported npy dtype descriptor '" + d + "'");
}

inline void byteswap_payload(std::vector<std::byte>& data, std::size_t item) {
    if (item <= 1) return;
    for (std::size_t i = 0; i + item <= data.size(); i += item) {
        for (std::size_t j = 0; j < item / 2; ++j) {
            std::swap(data[i + j], data[i + item - 1 - j]);
        }
    }
}

// Extracts the value of a quoted string entry, e.g. 'descr': '<f4'.
inline std::string npy_header_string(const std::string& header, const std::string& key) {
    const std::size_t k = header.find("'" + key + "'");
    if (k == std::string::npos) throw IoError("npy header missing key '" + key + "'");
    std::size_t q0 = header.find_first_of("'\"", k + key.size() + 2);
    if (q0 == std::string::npos) throw IoError("npy header: malformed value for '" + key + "'");
    const char quote = header[q0];
    std::size_t q1 = header.find(quote, q0 + 1);
    if (q1 == std::string::npos) throw IoError("npy header: unterminated value for '" + key + "'");
    return header.substr(q0 + 1, q1 - q0 - 1);
}

inline std::vector<std::size_t> npy_header_shape(const std::string& header) {
    const std::size_t k = header.find("'shape'");
    if (k == std::string::npos) throw IoError("npy header missing key 'shape'");
    const std::size_t open = header.find('(', k);
    const std::size_t close = header.find(')', open);
    if (open == std::string::npos || close == std::string::npos) {
        throw IoError("npy header: malformed shape tuple");
    }
    std::vector<std::size_t> shape;
    std::string body = header.substr(open + 1, close - open - 1);
    std::stringstream ss(body);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        std::size_t a = tok.find_first_not_of(" \t");
        if (a == std::string::npos) continue;  // trailing comma of a 1-tuple
        std::size_t b = tok.find_last_not_of(" \t");
        unsigned long long v = 0;
        try {
            v = std::stoull(tok.substr(a, b - a + 1));
        } catch (const std::exception&) {
            throw IoError("npy header: bad shape entry '" + tok + "'");
        }
        shape.push_back(static_cast<std::size_t>(v));
    }
    return shape;
}

}  // namespace detail

/// Parses a complete in-memory .npy file. Exposed separately so tests can
/// exercise the format without touching the filesystem.
inline DenseTensor parse_npy(const std::vector<std::byte>& file, const std::string& origin = "<memory>") {
    if (file.size() < 10 || std::memcmp(file.data(), detail::kNpyMagic, 6) != 0) {
        throw IoError(origin + ": not an npy file (bad magic)");
    }
    const auto major = static_cast<unsigned char>(file[6]);
    const auto minor = static_cast<unsigned char>(file[7]);
    if (major != 1 || minor != 0) {
        throw IoError(origin + ": unsupported npy version " + std::to_string(major) + "." +
                      std::to_string(minor));
    }
    const std::size_t header_len = static_cast<unsigned char>(file[8]) |
                                   (static_cast<std::size_t>(static_cast<unsigned char>(file[9])) << 8);
    if (file.size() < 10 + header_len) throw IoError(origin + ": truncated npy header");
    const std::string header(reinterpret_cast<const char*>(file.data()) + 10, header_len);

    const Dtype dtype = detail::npy_dtype_from_descr(detail::npy_header_string(header, "descr"));
    const std::size_t fo = header.find("'fortran_order'");
    if (fo == std::string::npos) throw IoError(origin + ": npy header missing 'fortran_order'");
    if (header.find("False", fo) == std::string::npos) {
        throw IoError(origin + ": fortran-order tensors are not supported");
    }
    const std::vector<std::size_t> shape = detail::npy_header_shape(header);
    for (std::size_t d : shape) {
        if (d == 0) throw IoError(origin + ": npy shape entries must be >= 1");
    }

    std::size_t count = 1;
    for (std::size_t d : shape) count *= d;
    const std::size_t payload = count * dtype_size(dtype);
    const std::size_t have = file.size() - 10 - header_len;
    if (have < payload) {
        throw IoError(origin + ": truncated npy payload (" + std::to_string(have) + " of " +
                      std::to_string(payload) + " bytes)");
    }
    if (have > payload) {
        throw IoError(origin + ": npy payload has " + std::to_string(have - payload) +
                      " trailing bytes");
    }
    std::vector<std::byte> data(file.begin() + static_cast<std::ptrdiff_t>(10 + header_len), file.end());
    if constexpr (std::endian::native == std::endian::big) {
        detail::byteswap_payload(data, dtype_size(dtype));
    }
    return DenseTensor::from_bytes(shape, dtype, std::move(data));
}

/// Serializes a tensor into .npy v1.0 bytes.
inline std::vector<std::byte> serialize_npy(const DenseTensor& t) {
    std::string dict = "{'descr': '" + detail::npy_descr(t.dtype()) + "', 'fortran_order': False, 'shape': (";
    for (std::size_t i = 0; i < t.rank(); ++i) {
        dict += std::to_string(t.shape()[i]);
        if (i + 1 < t.rank() || t.rank() == 1) dict += ",";
        if (i + 1 < t.rank()) dict += " ";
    }
    dict += "), }";

    // Pad with spaces so that 10 + len(header) is a multiple of 64, newline-terminated.
    std::size_t unpadded = 10 + dict.size() + 1;
    std::size_t padded = (unpadded + 63) / 64 * 64;
    if (padded - 10 > 0xFFFF) throw IoError("npy header too large");
    dict.append(padded - unpadded, ' ');
    dict += '\n';

    std::vector<std::byte> out;
    out.reserve(10 + dict.size() + t.byte_size());
    const auto push = [&out](char c) { out.push_back(static_cast<std::byte>(c)); };
    for (char c : detail::kNpyMagic) push(c);
    push('\x01');
    push('\x00');
    const std::size_t hlen = dict.size();
    push(static_cast<char>(hlen & 0xFF));
    push(static_cast<char>((hlen >> 8) & 0xFF));
    for (char c : dict) push(c);

    const auto payload = t.bytes();
    out.insert(out.end(), payload.begin(), payload.end());
    if constexpr (std::endian::native == std::endian::big) {
        std::vector<std::byte> tail(out.begin() + static_cast<std::ptrdiff_t>(10 + hlen), out.end());
        detail::byteswap_payload(tail, dtype_size(t.dtype()));
        std::copy(tail.begin(), tail.end(), out.begin() + static_cast<std::ptrdiff_t>(10 + hlen));
    }
    return out;
}

inline DenseTensor load_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open tensor file " + path);
    in.seekg(0, std::ios::end);
    const std::streamsize size = in.tellg();
    if (size < 0) throw IoError("cannot stat tensor file " + path);
    in.seekg(0);
    std::vector<std::byte> file(static_cast<std::size_t>(size));
    in.read(reinterpret_cast<char*>(file.data()), size);
    if (!in) throw IoError("read failed: " + path);
    return parse_npy(file, path);
}

inline void save_tensor(const DenseTensor& t, const std::string& path) {
    const std::vector<std::byte> file = serialize_npy(t);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace segalign
