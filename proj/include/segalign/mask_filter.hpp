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

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "segalign/error.hpp"
#include "segalign/image.hpp"
#include "segalign/rle.hpp"

namespace segalign {

/// Result of overlap-aware greedy filtering: pairwise-disjoint trimmed
/// masks in processing order, plus the input position each came from.
struct FilteredMaskSet {
    int height = 0;
    int width = 0;
    std::vector<BinaryMask> masks;
    std::vector<std::size_t> original_index;
};

/// Greedy overlap filter. Candidates are processed in descending order of
/// their original area (ties by ascending input index); each mask is
/// trimmed to the pixels no earlier mask claimed, and empty trims are
/// dropped. The union of the outputs equals the union of the inputs.
inline FilteredMaskSet overlap_filter(const MaskSet& candidates) {
    if (candidates.height <= 0 || candidates.width <= 0) {
        throw ShapeError("overlap_filter: mask set has no dimensions");
    }
    for (const BinaryMask& m : candidates.masks) {
        if (m.height != candidates.height || m.width != candidates.width) {
            throw ShapeError("overlap_filter: mask dimensions differ from the set");
        }
    }

    std::vector<std::size_t> order(candidates.masks.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return candidates.masks[a].area > candidates.masks[b].area;
    });

    FilteredMaskSet out;
    out.height = candidates.height;
    out.width = candidates.width;

    Bitmap assigned = make_bitmap(candidates.height, candidates.width);
    Bitmap trimmed = make_bitmap(candidates.height, candidates.width);
    for (std::size_t idx : order) {
        const Bitmap grid = decode_rle(candidates.masks[idx]);
        std::uint64_t kept = 0;
        for (std::size_t i = 0; i < grid.px.size(); ++i) {
            const std::uint8_t v = grid.px[i] && !assigned.px[i];
            trimmed.px[i] = v;
            kept += v;
        }
        if (kept == 0) continue;
        for (std::size_t i = 0; i < grid.px.size(); ++i) {
            if (trimmed.px[i]) assigned.px[i] = 1;
        }
        out.masks.push_back(encode_rle(trimmed));
        out.original_index.push_back(idx);
    }
    return out;
}

/// Paints retained masks into a per-pixel ID map, IDs 1..count in retained
/// order, 0 for uncovered pixels. Masks must be pairwise disjoint.
inline MaskIdMap build_mask_id_map(const FilteredMaskSet& filtered, int height, int width) {
    if (height != filtered.height || width != filtered.width) {
        throw ShapeError("build_mask_id_map: dimensions do not match the filtered set");
    }
    if (filtered.masks.size() > 0xFFFF) {
        throw ValueError("build_mask_id_map: more than 65535 masks");
    }
    MaskIdMap map = make_mask_id_map(height, width);
    map.count = static_cast<std::uint16_t>(filtered.masks.size());
    for (std::size_t k = 0; k < filtered.masks.size(); ++k) {
        const Bitmap grid = decode_rle(filtered.masks[k]);
        const auto id = static_cast<std::uint16_t>(k + 1);
        for (std::size_t i = 0; i < grid.px.size(); ++i) {
            if (!grid.px[i]) continue;
            if (map.ids[i] != 0) {
                throw ValueError("build_mask_id_map: masks overlap at pixel " + std::to_string(i));
            }
            map.ids[i] = id;
        }
    }
    return map;
}

/// Per-image prompt/mask/coverage counters.
struct CoverageStats {
    std::int64_t prompt_count = 0;
    std::int64_t mask_count = 0;
    std::uint64_t covered_pixels = 0;
    double coverage = 0.0;  // covered_pixels / (H*W)
};

inline CoverageStats coverage_stats(const MaskIdMap& idmap, std::int64_t prompt_count) {
    CoverageStats s;
    s.prompt_count = prompt_count;
    s.mask_count = idmap.count;
    for (std::uint16_t v : idmap.ids) s.covered_pixels += (v != 0);
    s.coverage = static_cast<double>(s.covered_pixels) / static_cast<double>(idmap.ids.size());
    return s;
}

/// Renders the mask-count / coverage pair the aggregate report uses,
/// e.g. mask_count=117, coverage=0.9146 -> "117, 91.46 %".
inline std::string format_coverage_cell(std::int64_t mask_count, double coverage) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << mask_count << ", " << coverage * 100.0 << " %";
    return os.str();
}

}  // namespace segalign
