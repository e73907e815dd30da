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

// Mask-level pseudo-label refinement. A mask region is relabelled as a
// whole when the pixels passing both confidence criteria (max softmax
// above tau, top-1/top-2 margin above tau_prime) unanimously agree on one
// class; otherwise the region keeps the confidence-thresholded pixel
// labels. Uncovered pixels always keep the pixel-level labels.

#include <cstdint>
#include <string>
#include <vector>

#include "segalign/error.hpp"
#include "segalign/image.hpp"
#include "segalign/rle.hpp"

namespace segalign {

struct RefineParams {
    double tau = 0.968;        // confidence threshold
    double tau_prime = 0.99;   // softmax-margin threshold
};

inline void validate_refine_params(const RefineParams& p) {
    // 1.0 is accepted as an inclusive upper bound: with strict comparisons it
    // disables the criterion, which the pipeline uses as an off switch.
    if (!(p.tau > 0.0 && p.tau <= 1.0)) throw ValueError("tau must be in (0, 1]");
    if (!(p.tau_prime > 0.0 && p.tau_prime <= 1.0)) throw ValueError("tau_prime must be in (0, 1]");
}

/// True where the maximum softmax probability strictly exceeds tau.
inline Bitmap confidence_mask(const ProbMap& p, double tau) {
    Bitmap out = make_bitmap(p.height, p.width);
    const auto v = p.probs.values<float>();
    for (std::size_t i = 0; i < out.px.size(); ++i) {
        float best = 0.0f;
        const float* px = v.data() + i * p.classes;
        for (int c = 0; c < p.classes; ++c) best = std::max(best, px[c]);
        out.px[i] = static_cast<double>(best) > tau;
    }
    return out;
}

/// True where the top-1 / top-2 probability gap strictly exceeds tau_prime.
inline Bitmap margin_mask(const ProbMap& p, double tau_prime) {
    if (p.classes < 2) throw ShapeError("margin_mask requires at least 2 classes");
    Bitmap out = make_bitmap(p.height, p.width);
    const auto v = p.probs.values<float>();
    for (std::size_t i = 0; i < out.px.size(); ++i) {
        const float* px = v.data() + i * p.classes;
        float top1 = px[0], top2 = px[1];
        if (top2 > top1) std::swap(top1, top2);
        for (int c = 2; c < p.classes; ++c) {
            if (px[c] > top1) {
                top2 = top1;
                top1 = px[c];
            } else if (px[c] > top2) {
                top2 = px[c];
            }
        }
        out.px[i] = static_cast<double>(top1) - static_cast<double>(top2) > tau_prime;
    }
    return out;
}

/// Per-pixel argmax class; ties resolve to the lowest class index.
inline LabelMap argmax_labels(const ProbMap& p) {
    if (p.classes < 1 || p.classes > 255) {
        throw ShapeError("argmax_labels supports 1..255 classes");
    }
    LabelMap out = make_label_map(p.height, p.width);
    const auto v = p.probs.values<float>();
    for (std::size_t i = 0; i < out.labels.size(); ++i) {
        const float* px = v.data() + i * p.classes;
        int best = 0;
        for (int c = 1; c < p.classes; ++c) {
            if (px[c] > px[best]) best = c;
        }
        out.labels[i] = static_cast<std::uint8_t>(best);
    }
    return out;
}

/// Confidence-thresholded pixel-level pseudo-labels: argmax class where
/// the confidence criterion holds, ignore elsewhere.
inline LabelMap threshold_labels(const ProbMap& p, double tau) {
    LabelMap out = argmax_labels(p);
    const Bitmap conf = confidence_mask(p, tau);
    for (std::size_t i = 0; i < out.labels.size(); ++i) {
        if (!conf.px[i]) out.labels[i] = kIgnoreLabel;
    }
    return out;
}

/// Where each refined label came from. Serialized as an 8-bit PNG of the
/// enum values.
enum class Provenance : std::uint8_t { MaskAssigned = 0, PixelLevel = 1, Ignored = 2 };

struct ClassDelta {
    std::uint64_t before = 0;
    std::uint64_t after = 0;
};

struct RefineStats {
    std::vector<ClassDelta> per_class;

    std::uint64_t total_before() const {
        std::uint64_t n = 0;
        for (const ClassDelta& d : per_class) n += d.before;
        return n;
    }
    std::uint64_t total_after() const {
        std::uint64_t n = 0;
        for (const ClassDelta& d : per_class) n += d.after;
        return n;
    }
};

struct RefinedLabels {
    LabelMap labels;
    std::vector<std::uint8_t> provenance;  // Provenance values, H*W
    RefineStats stats;
};

/// Dual-criterion mask-level refinement with pixel-level fallback.
inline RefinedLabels refine(const ProbMap& p, const MaskIdMap& idmap, const RefineParams& params) {
    validate_refine_params(params);
    if (p.height != idmap.height || p.width != idmap.width) {
        throw ShapeError("refine: probability map and mask id map dimensions differ");
    }

    const Bitmap conf = confidence_mask(p, params.tau);
    const Bitmap marg = margin_mask(p, params.tau_prime);
    const LabelMap arg = argmax_labels(p);

    LabelMap base = arg;
    for (std::size_t i = 0; i < base.labels.size(); ++i) {
        if (!conf.px[i]) base.labels[i] = kIgnoreLabel;
    }

    // Pixels grouped per mask ID, single pass.
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(idmap.count) + 1);
    for (std::size_t i = 0; i < idmap.ids.size(); ++i) {
        members[idmap.ids[i]].push_back(i);
    }

    RefinedLabels out;
    out.labels = base;
    out.provenance.assign(base.labels.size(), static_cast<std::uint8_t>(Provenance::PixelLevel));

    for (std::uint16_t m = 1; m <= idmap.count; ++m) {
        int agreed = -1;
        bool unanimous = true;
        for (std::size_t i : members[m]) {
            if (!(conf.px[i] && marg.px[i])) continue;
            const int cls = arg.labels[i];
            if (agreed == -1) {
                agreed = cls;
            } else if (cls != agreed) {
                unanimous = false;
                break;
            }
        }
        if (agreed != -1 && unanimous) {
            for (std::size_t i : members[m]) {
                out.labels.labels[i] = static_cast<std::uint8_t>(agreed);
                out.provenance[i] = static_cast<std::uint8_t>(Provenance::MaskAssigned);
            }
        }
    }

    for (std::size_t i = 0; i < out.labels.labels.size(); ++i) {
        if (out.provenance[i] != static_cast<std::uint8_t>(Provenance::MaskAssigned) &&
            out.labels.labels[i] == kIgnoreLabel) {
            out.provenance[i] = static_cast<std::uint8_t>(Provenance::Ignored);
        }
    }

    out.stats.per_class.assign(static_cast<std::size_t>(p.classes), ClassDelta{});
    for (std::size_t i = 0; i < base.labels.size(); ++i) {
        if (base.labels[i] != kIgnoreLabel) ++out.stats.per_class[base.labels[i]].before;
        if (out.labels.labels[i] != kIgnoreLabel) ++out.stats.per_class[out.labels.labels[i]].after;
    }
    return out;
}

}  // namespace segalign
