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

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "segalign/error.hpp"

namespace segalign {

/// Dense row-major 0/1 pixel grid.
struct Bitmap {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> px;  // height*width entries, values 0 or 1

    std::uint8_t at(int x, int y) const { return px[static_cast<std::size_t>(y) * width + x]; }
    void set(int x, int y, std::uint8_t v) { px[static_cast<std::size_t>(y) * width + x] = v; }
};

inline Bitmap make_bitmap(int height, int width) {
    if (height <= 0 || width <= 0) throw ShapeError("bitmap dimensions must be positive");
    Bitmap b;
    b.height = height;
    b.width = width;
    b.px.assign(static_cast<std::size_t>(height) * width, 0);
    return b;
}

/// Run-length encoded binary mask. Runs are row-major and alternate
/// zeros/ones starting with a zeros-run; a leading 0-length run encodes a
/// mask whose first pixel is set. Run lengths sum to height*width.
struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint32_t> runs;
    std::uint64_t area = 0;
};

inline BinaryMask encode_rle(const Bitmap& grid) {
    if (grid.height <= 0 || grid.width <= 0) throw ShapeError("encode_rle: empty grid");
    const std::size_t n = static_cast<std::size_t>(grid.height) * grid.width;
    if (grid.px.size() != n) throw ShapeError("encode_rle: pixel buffer does not match dimensions");

    BinaryMask m;
    m.height = grid.height;
    m.width = grid.width;
    std::uint8_t cur = 0;
    std::uint32_t len = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t v = grid.px[i] ? 1 : 0;
        if (v == cur) {
            ++len;
        } else {
            m.runs.push_back(len);
            cur = v;
            len = 1;
        }
        m.area += v;
    }
    m.runs.push_back(len);
    return m;
}

inline Bitmap decode_rle(const BinaryMask& mask) {
    if (mask.height <= 0 || mask.width <= 0) throw ShapeError("decode_rle: empty mask dimensions");
    if (mask.runs.empty()) throw ValueError("decode_rle: no runs");
    const std::uint64_t total = static_cast<std::uint64_t>(mask.height) * mask.width;

    std::uint64_t sum = 0;
    std::uint64_t ones = 0;
    for (std::size_t i = 0; i < mask.runs.size(); ++i) {
        if (mask.runs[i] == 0 && i != 0) {
            throw ValueError("decode_rle: zero-length run at position " + std::to_string(i));
        }
        sum += mask.runs[i];
        if (i % 2 == 1) ones += mask.runs[i];
    }
    if (sum != total) {
        throw ValueError("decode_rle: run lengths sum to " + std::to_string(sum) + ", expected " +
                         std::to_string(total));
    }
    if (ones != mask.area) {
        throw ValueError("decode_rle: area field " + std::to_string(mask.area) +
                         " does not match decoded popcount " + std::to_string(ones));
    }

    Bitmap grid = make_bitmap(mask.height, mask.width);
    std::size_t pos = 0;
    std::uint8_t v = 0;
    for (std::uint32_t run : mask.runs) {
        for (std::uint32_t j = 0; j < run; ++j) grid.px[pos++] = v;
        v = !v;
    }
    return grid;
}

/// Ordered list of candidate masks over one image. Order is preserved
/// through serialization; it is the tie-break key downstream.
struct MaskSet {
    int height = 0;
    int width = 0;
    std::vector<BinaryMask> masks;
};

inline nlohmann::json mask_set_to_json(const MaskSet& set) {
    nlohmann::json j;
    j["height"] = set.height;
    j["width"] = set.width;
    j["masks"] = nlohmann::json::array();
    for (const BinaryMask& m : set.masks) {
        j["masks"].push_back({{"runs", m.runs}, {"area", m.area}});
    }
    return j;
}

inline MaskSet mask_set_from_json(const nlohmann::json& j) {
    MaskSet set;
    set.height = j.at("height").get<int>();
    set.width = j.at("width").get<int>();
    if (set.height <= 0 || set.width <= 0) throw ValueError("mask set: dimensions must be positive");
    for (const auto& jm : j.at("masks")) {
        BinaryMask m;
        m.height = set.height;
        m.width = set.width;
        m.runs = jm.at("runs").get<std::vector<std::uint32_t>>();
        m.area = jm.at("area").get<std::uint64_t>();
        decode_rle(m);  // validates runs sum and area
        set.masks.push_back(std::move(m));
    }
    return set;
}

inline MaskSet load_mask_set(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mask set " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad mask set JSON " + path + ": " + e.what());
    }
    try {
        return mask_set_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad mask set " + path + ": " + e.what());
    }
}

inline void save_mask_set(const MaskSet& set, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << mask_set_to_json(set).dump(2) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace segalign
