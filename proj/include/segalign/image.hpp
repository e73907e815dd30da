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
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "segalign/error.hpp"
#include "segalign/npy.hpp"
#include "segalign/png_io.hpp"
#include "segalign/tensor.hpp"

namespace segalign {

/// Reserved class ID marking pixels excluded from losses and metrics.
inline constexpr std::uint8_t kIgnoreLabel = 255;

/// H x W semantic class IDs (uint8); 255 is the ignore value.
struct LabelMap {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> labels;

    std::uint8_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
    void set(int x, int y, std::uint8_t v) { labels[static_cast<std::size_t>(y) * width + x] = v; }
    std::size_t pixels() const { return labels.size(); }
};

inline LabelMap make_label_map(int height, int width, std::uint8_t fill = kIgnoreLabel) {
    if (height <= 0 || width <= 0) throw ShapeError("label map dimensions must be positive");
    LabelMap m;
    m.height = height;
    m.width = width;
    m.labels.assign(static_cast<std::size_t>(height) * width, fill);
    return m;
}

/// Checks that every non-ignore entry is below `num_classes`.
inline void validate_labels(const LabelMap& m, int num_classes) {
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
        const std::uint8_t v = m.labels[i];
        if (v != kIgnoreLabel && static_cast<int>(v) >= num_classes) {
            throw ValueError("label " + std::to_string(int(v)) + " at pixel " + std::to_string(i) +
                             " exceeds class count " + std::to_string(num_classes));
        }
    }
}

inline LabelMap load_label_map(const std::string& path) {
    LabelMap m;
    m.labels = read_png_gray8(path, m.height, m.width);
    return m;
}

inline void save_label_map(const LabelMap& m, const std::string& path) {
    write_png_gray8(path, m.height, m.width, m.labels);
}

/// H x W x C per-pixel softmax distribution from a teacher network.
struct ProbMap {
    int height = 0;
    int width = 0;
    int classes = 0;
    DenseTensor probs;  // shape {H, W, C}, float32

    const float* pixel(int x, int y) const {
        return probs.values<float>().data() +
               (static_cast<std::size_t>(y) * width + x) * classes;
    }
};

inline ProbMap probmap_from_tensor(DenseTensor t) {
    if (t.rank() != 3) throw ShapeError("probability map must be H x W x C, got " + t.shape_string());
    if (t.dtype() != Dtype::Float32) throw ShapeError("probability map must be float32");
    ProbMap p;
    p.height = static_cast<int>(t.dim(0));
    p.width = static_cast<int>(t.dim(1));
    p.classes = static_cast<int>(t.dim(2));
    p.probs = std::move(t);
    return p;
}

/// Verifies each pixel vector is a distribution: entries in [0,1] and
/// summing to 1 within `tolerance`. Reports the first offending pixel.
inline void validate_probmap(const ProbMap& p, double tolerance = 1e-4) {
    const auto v = p.probs.values<float>();
    std::size_t i = 0;
    for (int y = 0; y < p.height; ++y) {
        for (int x = 0; x < p.width; ++x) {
            double sum = 0.0;
            for (int c = 0; c < p.classes; ++c, ++i) {
                const float e = v[i];
                if (!(e >= 0.0f && e <= 1.0f)) {
                    throw ValueError("probability out of range at pixel (" + std::to_string(x) + "," +
                                     std::to_string(y) + ") class " + std::to_string(c) + ": " +
                                     std::to_string(e));
                }
                sum += e;
            }
            if (std::abs(sum - 1.0) > tolerance) {
                throw ValueError("probabilities at pixel (" + std::to_string(x) + "," +
                                 std::to_string(y) + ") sum to " + std::to_string(sum));
            }
        }
    }
}

inline ProbMap load_probmap(const std::string& path, double tolerance = 1e-4) {
    ProbMap p = probmap_from_tensor(load_tensor(path));
    validate_probmap(p, tolerance);
    return p;
}

/// Per-pixel mask IDs: 1..count label retained masks, 0 marks uncovered.
struct MaskIdMap {
    int height = 0;
    int width = 0;
    std::uint16_t count = 0;
    std::vector<std::uint16_t> ids;

    std::uint16_t at(int x, int y) const { return ids[static_cast<std::size_t>(y) * width + x]; }
};

inline MaskIdMap make_mask_id_map(int height, int width) {
    if (height <= 0 || width <= 0) throw ShapeError("mask id map dimensions must be positive");
    MaskIdMap m;
    m.height = height;
    m.width = width;
    m.ids.assign(static_cast<std::size_t>(height) * width, 0);
    return m;
}

inline void save_mask_id_map(const MaskIdMap& m, const std::string& path) {
    write_png_gray16(path, m.height, m.width, m.ids);
}

inline MaskIdMap load_mask_id_map(const std::string& path) {
    MaskIdMap m;
    m.ids = read_png_gray16(path, m.height, m.width);
    std::uint16_t max_id = 0;
    for (std::uint16_t v : m.ids) max_id = std::max(max_id, v);
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(max_id) + 1, 0);
    for (std::uint16_t v : m.ids) seen[v] = 1;
    for (std::uint16_t k = 1; k <= max_id; ++k) {
        if (!seen[k]) {
            throw ValueError(path + ": mask IDs are not dense, id " + std::to_string(k) + " unused");
        }
    }
    m.count = max_id;
    return m;
}

}  // namespace segalign
