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

// Class prototypes: per-class mean feature vectors accumulated in float64
// over labeled pixels, then l2-normalized. Prototypes are built once from
// source labels and kept fixed; classes never observed are flagged absent.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "segalign/error.hpp"
#include "segalign/image.hpp"
#include "segalign/npy.hpp"
#include "segalign/tensor.hpp"

namespace segalign {

/// Running per-class feature sums and pixel counts.
struct PrototypeAccumulator {
    int num_classes = 0;
    int feature_dim = 0;
    std::vector<double> sums;           // num_classes * feature_dim
    std::vector<std::uint64_t> counts;  // num_classes

    PrototypeAccumulator() = default;
    PrototypeAccumulator(int classes, int dim) : num_classes(classes), feature_dim(dim) {
        if (classes < 1 || classes > 254) throw ValueError("class count must be in [1, 254]");
        if (dim < 1) throw ValueError("feature dimension must be >= 1");
        sums.assign(static_cast<std::size_t>(classes) * dim, 0.0);
        counts.assign(static_cast<std::size_t>(classes), 0);
    }
};

/// K_cls x C matrix of l2-normalized class prototypes. Absent classes keep
/// zero rows and present[c] == false.
struct PrototypeBank {
    int num_classes = 0;
    int feature_dim = 0;
    std::vector<float> prototypes;  // num_classes * feature_dim, row-major
    std::vector<std::uint8_t> present;
    std::vector<std::uint64_t> source_counts;

    std::span<const float> row(int c) const {
        return {prototypes.data() + static_cast<std::size_t>(c) * feature_dim,
                static_cast<std::size_t>(feature_dim)};
    }
};

/// Reduces a label map to a coarser grid by majority vote over the source
/// cells each target cell covers. Ignore pixels do not vote; ties go to
/// the lowest class ID; cells with only ignore pixels stay ignore.
inline LabelMap downsample_labels(const LabelMap& labels, int target_height, int target_width) {
    if (target_height <= 0 || target_width <= 0) {
        throw ShapeError("downsample_labels: target dimensions must be positive");
    }
    if (target_height > labels.height || target_width > labels.width) {
        throw ShapeError("downsample_labels: target larger than source");
    }
    if (target_height == labels.height && target_width == labels.width) return labels;

    LabelMap out = make_label_map(target_height, target_width);
    std::vector<std::uint32_t> votes(256, 0);
    for (int ty = 0; ty < target_height; ++ty) {
        const int y0 = static_cast<int>(static_cast<std::int64_t>(ty) * labels.height / target_height);
        const int y1 = static_cast<int>(static_cast<std::int64_t>(ty + 1) * labels.height / target_height);
        for (int tx = 0; tx < target_width; ++tx) {
            const int x0 = static_cast<int>(static_cast<std::int64_t>(tx) * labels.width / target_width);
            const int x1 = static_cast<int>(static_cast<std::int64_t>(tx + 1) * labels.width / target_width);
            std::fill(votes.begin(), votes.end(), 0);
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    const std::uint8_t v = labels.at(x, y);
                    if (v != kIgnoreLabel) ++votes[v];
                }
            }
            int winner = kIgnoreLabel;
            std::uint32_t best = 0;
            for (int c = 0; c < 255; ++c) {
                if (votes[static_cast<std::size_t>(c)] > best) {
                    best = votes[static_cast<std::size_t>(c)];
                    winner = c;
                }
            }
            out.set(tx, ty, static_cast<std::uint8_t>(winner));
        }
    }
    return out;
}

/// Adds every labeled pixel's feature vector to its class's running sum.
/// Features are H' x W' x C (float32 or float64); labels are H' x W'.
inline void accumulate_prototypes(PrototypeAccumulator& acc, const DenseTensor& features,
                                  const LabelMap& labels) {
    if (features.rank() != 3) {
        throw ShapeError("features must be H x W x C, got " + features.shape_string());
    }
    const int fh = static_cast<int>(features.dim(0));
    const int fw = static_cast<int>(features.dim(1));
    const int fc = static_cast<int>(features.dim(2));
    if (fh != labels.height || fw != labels.width) {
        throw ShapeError("feature map and label map dimensions differ");
    }
    if (fc != acc.feature_dim) {
        throw ShapeError("feature dimension " + std::to_string(fc) + " does not match accumulator " +
                         std::to_string(acc.feature_dim));
    }

    const auto add = [&](auto values) {
        std::size_t i = 0;
        for (std::size_t p = 0; p < labels.labels.size(); ++p, i += static_cast<std::size_t>(fc)) {
            const std::uint8_t cls = labels.labels[p];
            if (cls == kIgnoreLabel) continue;
            if (static_cast<int>(cls) >= acc.num_classes) {
                throw ValueError("label " + std::to_string(int(cls)) + " exceeds accumulator classes");
            }
            double* dst = acc.sums.data() + static_cast<std::size_t>(cls) * fc;
            for (int c = 0; c < fc; ++c) dst[c] += static_cast<double>(values[i + static_cast<std::size_t>(c)]);
            ++acc.counts[cls];
        }
    };
    if (features.dtype() == Dtype::Float32) {
        add(features.values<float>());
    } else if (features.dtype() == Dtype::Float64) {
        add(features.values<double>());
    } else {
        throw ShapeError("features must be float32 or float64");
    }
}

/// Adds `other`'s sums and counts into `acc`.
inline void merge_accumulators(PrototypeAccumulator& acc, const PrototypeAccumulator& other) {
    if (acc.num_classes != other.num_classes || acc.feature_dim != other.feature_dim) {
        throw ShapeError("accumulator layouts differ");
    }
    for (std::size_t i = 0; i < acc.sums.size(); ++i) acc.sums[i] += other.sums[i];
    for (std::size_t i = 0; i < acc.counts.size(); ++i) acc.counts[i] += other.counts[i];
}

/// Mean then l2-normalize each observed class; unobserved classes are
/// flagged absent. Errors if nothing was observed, or a class mean has
/// zero norm (it cannot be normalized).
inline PrototypeBank finalize_prototypes(const PrototypeAccumulator& acc) {
    PrototypeBank bank;
    bank.num_classes = acc.num_classes;
    bank.feature_dim = acc.feature_dim;
    bank.prototypes.assign(static_cast<std::size_t>(acc.num_classes) * acc.feature_dim, 0.0f);
    bank.present.assign(static_cast<std::size_t>(acc.num_classes), 0);
    bank.source_counts = acc.counts;

    bool any = false;
    for (int k = 0; k < acc.num_classes; ++k) {
        if (acc.counts[static_cast<std::size_t>(k)] == 0) continue;
        any = true;
        const double n = static_cast<double>(acc.counts[static_cast<std::size_t>(k)]);
        std::vector<double> mean(static_cast<std::size_t>(acc.feature_dim));
        double norm_sq = 0.0;
        for (int c = 0; c < acc.feature_dim; ++c) {
            mean[static_cast<std::size_t>(c)] =
                acc.sums[static_cast<std::size_t>(k) * acc.feature_dim + c] / n;
            norm_sq += mean[static_cast<std::size_t>(c)] * mean[static_cast<std::size_t>(c)];
        }
        const double norm = std::sqrt(norm_sq);
        if (!(norm > 0.0) || !std::isfinite(norm)) {
            throw ValueError("prototype for class " + std::to_string(k) + " has zero or non-finite norm");
        }
        for (int c = 0; c < acc.feature_dim; ++c) {
            bank.prototypes[static_cast<std::size_t>(k) * acc.feature_dim + c] =
                static_cast<float>(mean[static_cast<std::size_t>(c)] / norm);
        }
        bank.present[static_cast<std::size_t>(k)] = 1;
    }
    if (!any) throw ValueError("finalize_prototypes: no labeled pixels in any class");
    return bank;
}

/// Bank persists as a K x C float32 tensor plus a JSON sidecar carrying
/// presence flags, counts, and the similarity defaults.
inline void save_prototype_bank(const PrototypeBank& bank, const std::string& tensor_path,
                                const std::string& sidecar_path, double temperature,
                                bool normalize_projected) {
    DenseTensor t = DenseTensor::from_values(
        {static_cast<std::size_t>(bank.num_classes), static_cast<std::size_t>(bank.feature_dim)},
        bank.prototypes);
    save_tensor(t, tensor_path);

    nlohmann::json j;
    j["present"] = bank.present;
    j["counts"] = bank.source_counts;
    j["temperature"] = temperature;
    j["normalize_projected"] = normalize_projected;
    std::ofstream out(sidecar_path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + sidecar_path + " for writing");
    out << j.dump(2) << "\n";
    if (!out) throw IoError("write failed: " + sidecar_path);
}

inline PrototypeBank load_prototype_bank(const std::string& tensor_path,
                                         const std::string& sidecar_path) {
    DenseTensor t = load_tensor(tensor_path);
    if (t.rank() != 2 || t.dtype() != Dtype::Float32) {
        throw IoError(tensor_path + ": prototype bank must be a K x C float32 tensor");
    }
    PrototypeBank bank;
    bank.num_classes = static_cast<int>(t.dim(0));
    bank.feature_dim = static_cast<int>(t.dim(1));
    const auto v = t.values<float>();
    bank.prototypes.assign(v.begin(), v.end());

    std::ifstream in(sidecar_path);
    if (!in) throw IoError("cannot open bank sidecar " + sidecar_path);
    nlohmann::json j;
    try {
        in >> j;
        bank.present = j.at("present").get<std::vector<std::uint8_t>>();
        bank.source_counts = j.at("counts").get<std::vector<std::uint64_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad bank sidecar " + sidecar_path + ": " + e.what());
    }
    if (bank.present.size() != static_cast<std::size_t>(bank.num_classes) ||
        bank.source_counts.size() != static_cast<std::size_t>(bank.num_classes)) {
        throw IoError(sidecar_path + ": sidecar arrays do not match bank class count");
    }
    return bank;
}

}  // namespace segalign
