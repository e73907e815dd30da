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
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "segalign/error.hpp"
#include "segalign/seeds.hpp"

namespace segalign {

/// Normalized point prompt in [0,1) with the region it represents.
struct PointPrompt {
    double x = 0.0;
    double y = 0.0;
    int region = 0;
};

struct PointPromptSet {
    std::vector<PointPrompt> points;
};

namespace detail {

// Lower median: element (n-1)/2 of the sorted sequence.
inline int lower_median(std::vector<int>& v) {
    const std::size_t k = (v.size() - 1) / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    return v[k];
}

}  // namespace detail

/// Representative center per region: the per-axis median of the region's
/// pixel coordinates (lower median for even counts). The median of a
/// non-convex region may fall outside it; snap_to_region moves such a
/// center to the nearest region pixel.
inline std::vector<std::pair<int, int>> region_centers(const SuperpixelMap& sp,
                                                       bool snap_to_region = false) {
    if (sp.count <= 0) throw ValueError("region_centers: superpixel map has no regions");
    std::vector<std::vector<int>> xs(static_cast<std::size_t>(sp.count));
    std::vector<std::vector<int>> ys(static_cast<std::size_t>(sp.count));
    for (int y = 0; y < sp.height; ++y) {
        for (int x = 0; x < sp.width; ++x) {
            const std::int32_t r = sp.at(x, y);
            if (r < 0 || r >= sp.count) {
                throw ValueError("region_centers: pixel id " + std::to_string(r) + " out of range");
            }
            xs[static_cast<std::size_t>(r)].push_back(x);
            ys[static_cast<std::size_t>(r)].push_back(y);
        }
    }
    std::vector<std::pair<int, int>> centers(static_cast<std::size_t>(sp.count));
    for (std::int32_t r = 0; r < sp.count; ++r) {
        auto& rx = xs[static_cast<std::size_t>(r)];
        auto& ry = ys[static_cast<std::size_t>(r)];
        if (rx.empty()) throw ValueError("region_centers: region " + std::to_string(r) + " is empty");
        int cx = detail::lower_median(rx);
        int cy = detail::lower_median(ry);
        if (snap_to_region && sp.at(cx, cy) != r) {
            std::int64_t best = -1;
            int bx = cx, by = cy;
            for (int y = 0; y < sp.height; ++y) {
                for (int x = 0; x < sp.width; ++x) {
                    if (sp.at(x, y) != r) continue;
                    const std::int64_t d = static_cast<std::int64_t>(x - cx) * (x - cx) +
                                           static_cast<std::int64_t>(y - cy) * (y - cy);
                    if (best == -1 || d < best) {
                        best = d;
                        bx = x;
                        by = y;
                    }
                }
            }
            cx = bx;
            cy = by;
        }
        centers[static_cast<std::size_t>(r)] = {cx, cy};
    }
    return centers;
}

/// Divides pixel centers by the image extent: (x/W, y/H), strictly in [0,1).
inline PointPromptSet normalize_prompts(const std::vector<std::pair<int, int>>& centers, int width,
                                        int height) {
    if (width <= 0 || height <= 0) throw ShapeError("normalize_prompts: bad image dimensions");
    PointPromptSet out;
    out.points.reserve(centers.size());
    for (std::size_t r = 0; r < centers.size(); ++r) {
        const auto [cx, cy] = centers[r];
        if (cx < 0 || cx >= width || cy < 0 || cy >= height) {
            throw ValueError("normalize_prompts: center (" + std::to_string(cx) + "," +
                             std::to_string(cy) + ") outside image");
        }
        out.points.push_back({static_cast<double>(cx) / width, static_cast<double>(cy) / height,
                              static_cast<int>(r)});
    }
    return out;
}

inline nlohmann::json prompts_to_json(const PointPromptSet& ps) {
    nlohmann::json j = nlohmann::json::array();
    for (const PointPrompt& p : ps.points) {
        j.push_back({{"x", p.x}, {"y", p.y}, {"region", p.region}});
    }
    return j;
}

inline PointPromptSet prompts_from_json(const nlohmann::json& j) {
    PointPromptSet ps;
    for (const auto& jp : j) {
        ps.points.push_back({jp.at("x").get<double>(), jp.at("y").get<double>(),
                             jp.at("region").get<int>()});
    }
    return ps;
}

inline void save_prompts(const PointPromptSet& ps, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << prompts_to_json(ps).dump(2) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

inline PointPromptSet load_prompts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open prompts " + path);
    nlohmann::json j;
    try {
        in >> j;
        return prompts_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad prompt JSON " + path + ": " + e.what());
    }
}

}  // namespace segalign
