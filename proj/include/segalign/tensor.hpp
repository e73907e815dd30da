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

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "segalign/error.hpp"

namespace segalign {

/// Element types a DenseTensor can hold.
enum class Dtype : std::uint8_t { Float32, Float64, Uint8, Uint16 };

inline std::size_t dtype_size(Dtype t) {
    switch (t) {
        case Dtype::Float32: return 4;
        case Dtype::Float64: return 8;
        case Dtype::Uint8: return 1;
        case Dtype::Uint16: return 2;
    }
    throw ValueError("unknown dtype");
}

inline const char* dtype_name(Dtype t) {
    switch (t) {
        case Dtype::Float32: return "float32";
        case Dtype::Float64: return "float64";
        case Dtype::Uint8: return "uint8";
        case Dtype::Uint16: return "uint16";
    }
    return "?";
}

namespace detail {

template <typename T>
constexpr Dtype dtype_of() {
    if constexpr (std::is_same_v<T, float>) return Dtype::Float32;
    else if constexpr (std::is_same_v<T, double>) return Dtype::Float64;
    else if constexpr (std::is_same_v<T, std::uint8_t>) return Dtype::Uint8;
    else if constexpr (std::is_same_v<T, std::uint16_t>) return Dtype::Uint16;
    else static_assert(sizeof(T) == 0, "unsupported element type");
}

inline std::size_t checked_element_count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) throw ValueError("tensor shape entries must be >= 1");
        if (d > 0 && n > SIZE_MAX / d) throw ValueError("tensor shape overflows size_t");
        n *= d;
    }
    return n;
}

}  // namespace detail

/// Row-major numeric array with an explicit shape and element type.
///
/// Carries images, per-pixel probability maps, dense feature maps and
/// parameter vectors between pipeline stages. Immutable in spirit: all
/// library operations take tensors by const reference and return new ones.
class DenseTensor {
public:
    DenseTensor() = default;

    /// Zero-initialized tensor of the given shape and dtype.
    DenseTensor(std::vector<std::size_t> shape, Dtype dtype)
        : shape_(std::move(shape)), dtype_(dtype) {
        data_.resize(detail::checked_element_count(shape_) * dtype_size(dtype_));
    }

    /// Adopts an existing byte buffer; the buffer length must equal
    /// product(shape) * element size.
    static DenseTensor from_bytes(std::vector<std::size_t> shape, Dtype dtype,
                                  std::vector<std::byte> data) {
        DenseTensor t;
        t.shape_ = std::move(shape);
        t.dtype_ = dtype;
        const std::size_t expect = detail::checked_element_count(t.shape_) * dtype_size(dtype);
        if (data.size() != expect) {
            throw ShapeError("tensor buffer has " + std::to_string(data.size()) +
                             " bytes, shape requires " + std::to_string(expect));
        }
        t.data_ = std::move(data);
        return t;
    }

    template <typename T>
    static DenseTensor from_values(std::vector<std::size_t> shape, const std::vector<T>& values) {
        DenseTensor t(std::move(shape), detail::dtype_of<T>());
        if (values.size() != t.size()) {
            throw ShapeError("value count does not match tensor shape");
        }
        std::memcpy(t.data_.data(), values.data(), t.data_.size());
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    Dtype dtype() const { return dtype_; }

    /// Total element count.
    std::size_t size() const { return data_.size() / dtype_size(dtype_); }
    std::size_t byte_size() const { return data_.size(); }

    std::span<const std::byte> bytes() const { return data_; }
    std::span<std::byte> bytes() { return data_; }

    /// Typed view; throws if T does not match the runtime dtype.
    template <typename T>
    std::span<const T> values() const {
        check_dtype<T>();
        return {reinterpret_cast<const T*>(data_.data()), size()};
    }

    template <typename T>
    std::span<T> values() {
        check_dtype<T>();
        return {reinterpret_cast<T*>(data_.data()), size()};
    }

    std::string shape_string() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ", ";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

    friend bool operator==(const DenseTensor& a, const DenseTensor& b) {
        return a.dtype_ == b.dtype_ && a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    template <typename T>
    void check_dtype() const {
        if (detail::dtype_of<T>() != dtype_) {
            throw ShapeError(std::string("tensor holds ") + dtype_name(dtype_) +
                             ", requested " + dtype_name(detail::dtype_of<T>()));
        }
    }

    std::vector<std::size_t> shape_;
    Dtype dtype_ = Dtype::Float32;
    std::vector<std::byte> data_;
};

}  // namespace segalign
