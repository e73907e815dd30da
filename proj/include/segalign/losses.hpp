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

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "segalign/error.hpp"
#include "segalign/image.hpp"
#include "segalign/tensor.hpp"

namespace segalign {

/// Total training objective: supervised + target + lambda * alignment.
inline double total_loss(double l_source, double l_target, double l_proto, double lambda) {
    if (!std::isfinite(l_source) || !std::isfinite(l_target) || !std::isfinite(l_proto) ||
        !std::isfinite(lambda)) {
        throw ValueError("total_loss: non-finite input");
    }
    return l_source + l_target + lambda * l_proto;
}

/// Mean over non-ignore pixels of -log p(y). Probabilities below 1e-12 are
/// clamped; clamped_count (when given) reports how many pixels were.
inline double pixel_cross_entropy(const ProbMap& p, const LabelMap& labels,
                                  std::size_t* clamped_count = nullptr) {
    if (p.height != labels.height || p.width != labels.width) {
        throw ShapeError("pixel_cross_entropy: dimensions differ");
    }
    const auto v = p.probs.values<float>();
    double total = 0.0;
    std::uint64_t n = 0;
    std::size_t clamped = 0;
    for (std::size_t i = 0; i < labels.labels.size(); ++i) {
        const std::uint8_t y = labels.labels[i];
        if (y == kIgnoreLabel) continue;
        if (static_cast<int>(y) >= p.classes) {
            throw ValueError("pixel_cross_entropy: label " + std::to_string(int(y)) + " out of range");
        }
        double prob = v[i * static_cast<std::size_t>(p.classes) + y];
        if (prob < 1e-12) {
            prob = 1e-12;
            ++clamped;
        }
        total -= std::log(prob);
        ++n;
    }
    if (n == 0) throw ValueError("pixel_cross_entropy: no labeled pixels");
    if (clamped_count) *clamped_count = clamped;
    return total / static_cast<double>(n);
}

/// out[i] = alpha * teacher[i] + (1 - alpha) * student[i].
inline std::vector<double> ema_update(std::span<const double> teacher,
                                      std::span<const double> student, double alpha) {
    if (teacher.size() != student.size()) {
        throw ShapeError("ema_update: parameter vectors have different lengths");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValueError("ema_update: alpha must be in [0, 1]");
    std::vector<double> out(teacher.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = alpha * teacher[i] + (1.0 - alpha) * student[i];
    }
    return out;
}

/// Tensor form of the EMA update; shapes and dtypes must match, and the
/// dtype must be a float type.
inline DenseTensor ema_update(const DenseTensor& teacher, const DenseTensor& student, double alpha) {
    if (teacher.shape() != student.shape() || teacher.dtype() != student.dtype()) {
        throw ShapeError("ema_update: teacher and student tensors differ in shape or dtype");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValueError("ema_update: alpha must be in [0, 1]");
    DenseTensor out(teacher.shape(), teacher.dtype());
    if (teacher.dtype() == Dtype::Float32) {
        auto t = teacher.values<float>();
        auto s = student.values<float>();
        auto o = out.values<float>();
        for (std::size_t i = 0; i < o.size(); ++i) {
            o[i] = static_cast<float>(alpha * t[i] + (1.0 - alpha) * s[i]);
        }
    } else if (teacher.dtype() == Dtype::Float64) {
        auto t = teacher.values<double>();
        auto s = student.values<double>();
        auto o = out.values<double>();
        for (std::size_t i = 0; i < o.size(); ++i) {
            o[i] = alpha * t[i] + (1.0 - alpha) * s[i];
        }
    } else {
        throw ShapeError("ema_update: parameters must be float32 or float64");
    }
    return out;
}

}  // namespace segalign
