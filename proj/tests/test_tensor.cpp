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

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "segalign/npy.hpp"
#include "segalign/tensor.hpp"

using namespace segalign;

namespace {

std::filesystem::path temp_dir() {
    auto d = std::filesystem::temp_directory_path() / "segalign_tensor_tests";
    std::filesystem::create_directories(d);
    return d;
}

// Hand-built npy bytes, independent of the writer: magic, version, padded
// header, little-endian payload.
std::vector<std::byte> handmade_npy_2x2_f32(const std::array<float, 4>& vals) {
    std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (2, 2), }";
    const std::size_t unpadded = 10 + header.size() + 1;
    const std::size_t padded = (unpadded + 63) / 64 * 64;
    header.append(padded - unpadded, ' ');
    header += '\n';

    std::vector<std::byte> out;
    const char magic[] = "\x93NUMPY";
    for (int i = 0; i < 6; ++i) out.push_back(static_cast<std::byte>(magic[i]));
    out.push_back(std::byte{1});
    out.push_back(std::byte{0});
    out.push_back(static_cast<std::byte>(header.size() & 0xFF));
    out.push_back(static_cast<std::byte>(header.size() >> 8));
    for (char c : header) out.push_back(static_cast<std::byte>(c));
    for (float v : vals) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::byte>((bits >> (8 * b)) & 0xFF));
    }
    return out;
}

DenseTensor random_tensor(std::mt19937& rng, Dtype dtype, std::vector<std::size_t> shape) {
    DenseTensor t(shape, dtype);
    std::uniform_int_distribution<int> byte_dist(0, 255);
    for (std::byte& b : t.bytes()) b = static_cast<std::byte>(byte_dist(rng));
    if (dtype == Dtype::Float32) {
        for (float& v : t.values<float>()) {
            if (!std::isfinite(v)) v = 0.5f;
        }
    } else if (dtype == Dtype::Float64) {
        for (double& v : t.values<double>()) {
            if (!std::isfinite(v)) v = 0.5;
        }
    }
    return t;
}

}  // namespace

TEST_CASE("dense tensor shape invariants") {
    CHECK_THROWS_AS(DenseTensor({0}, Dtype::Float32), ValueError);
    CHECK_THROWS_AS(DenseTensor({3, 0, 2}, Dtype::Uint8), ValueError);
    CHECK_THROWS_AS(DenseTensor::from_bytes({2, 2}, Dtype::Float32, std::vector<std::byte>(8)),
                    ShapeError);

    DenseTensor t({2, 3}, Dtype::Uint16);
    CHECK(t.size() == 6);
    CHECK(t.byte_size() == 12);
    CHECK_THROWS_AS(t.values<float>(), ShapeError);
}

TEST_CASE("npy load matches hand-built file") {
    const auto file = handmade_npy_2x2_f32({1.0f, 2.0f, 3.0f, 4.0f});
    const DenseTensor t = parse_npy(file);
    CHECK(t.shape() == std::vector<std::size_t>{2, 2});
    CHECK(t.dtype() == Dtype::Float32);
    const auto v = t.values<float>();
    CHECK(v[0] == 1.0f);
    CHECK(v[1] == 2.0f);
    CHECK(v[2] == 3.0f);
    CHECK(v[3] == 4.0f);

    // The writer must reproduce the hand-built layout bit for bit.
    CHECK(serialize_npy(t) == file);
}

TEST_CASE("npy rejects malformed input") {
    auto file = handmade_npy_2x2_f32({1, 2, 3, 4});

    SUBCASE("bad magic") {
        file[0] = std::byte{0x00};
        CHECK_THROWS_AS(parse_npy(file), IoError);
    }
    SUBCASE("truncated payload") {
        file.resize(file.size() - 4);  // 3 floats left for a 2x2 header
        CHECK_THROWS_AS(parse_npy(file), IoError);
    }
    SUBCASE("trailing bytes") {
        file.push_back(std::byte{0});
        CHECK_THROWS_AS(parse_npy(file), IoError);
    }
    SUBCASE("unsupported dtype") {
        std::string s(reinterpret_cast<const char*>(file.data()), file.size());
        const auto pos = s.find("<f4");
        std::memcpy(file.data() + pos, "<i4", 3);
        CHECK_THROWS_AS(parse_npy(file), IoError);
    }
    SUBCASE("fortran order") {
        std::string s(reinterpret_cast<const char*>(file.data()), file.size());
        const auto pos = s.find("False");
        std::memcpy(file.data() + pos, "True ", 5);
        CHECK_THROWS_AS(parse_npy(file), IoError);
    }
}

TEST_CASE("tensor save/load round trip") {
    const auto dir = temp_dir();

    SUBCASE("1x1 uint8 identity") {
        DenseTensor t = DenseTensor::from_values({1, 1}, std::vector<std::uint8_t>{7});
        const auto path = (dir / "one.npy").string();
        save_tensor(t, path);
        CHECK(load_tensor(path) == t);
    }

    SUBCASE("random 7x5x3 float32 tensors are bit-identical") {
        std::mt19937 rng(7);
        const auto path = (dir / "rt.npy").string();
        for (int i = 0; i < 100; ++i) {
            const DenseTensor t = random_tensor(rng, Dtype::Float32, {7, 5, 3});
            save_tensor(t, path);
            const DenseTensor back = load_tensor(path);
            CHECK(back == t);
            CHECK(serialize_npy(back) == serialize_npy(t));
        }
    }

    SUBCASE("random uint16 label grids") {
        std::mt19937 rng(11);
        const auto path = (dir / "grid.npy").string();
        for (int i = 0; i < 100; ++i) {
            const DenseTensor t = random_tensor(rng, Dtype::Uint16, {16, 16});
            save_tensor(t, path);
            CHECK(load_tensor(path) == t);
        }
    }

    SUBCASE("all dtypes round trip") {
        std::mt19937 rng(13);
        for (Dtype d : {Dtype::Float32, Dtype::Float64, Dtype::Uint8, Dtype::Uint16}) {
            const DenseTensor t = random_tensor(rng, d, {4, 3});
            const auto path = (dir / "dt.npy").string();
            save_tensor(t, path);
            CHECK(load_tensor(path) == t);
        }
    }
}

TEST_CASE("save_tensor errors") {
    CHECK_THROWS_AS(save_tensor(DenseTensor({2, 2}, Dtype::Uint8), "/nonexistent_dir_xyz/t.npy"),
                    IoError);
}
