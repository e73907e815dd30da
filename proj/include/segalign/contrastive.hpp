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

// Prototype-contrastive alignment: per-pixel projected features are scored
// against the fixed class prototypes with a temperature-scaled cosine
// similarity, and pulled toward their class prototype by a softmax
// cross-entropy over classes. The loss path runs in float64 end to end so
// the analytic gradient matches central finite differences tightly.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "segalign/error.hpp"
#include "segalign/image.hpp"
#include "segalign/prototypes.hpp"
#include "segalign/tensor.hpp"

namespace segalign {

/// Per-pixel linear map applied to encoder features before alignment.
struct ProjectionHead {
    int in_channels = 0;
    int out_channels = 0;
    std::vector<float> weight;  // in_channels x out_channels, row-major
    std::vector<float> bias;    // out_channels
};

inline void validate_projection_head(const ProjectionHead& head) {
    if (head.in_channels < 1 || head.out_channels < 1) {
        throw ShapeError("projection head channel counts must be >= 1");
    }
    if (head.weight.size() != static_cast<std::size_t>(head.in_channels) * head.out_channels ||
        head.bias.size() != static_cast<std::size_t>(head.out_channels)) {
        throw ShapeError("projection head buffers do not match channel counts");
    }
    for (float v : head.weight) {
        if (!std::isfinite(v)) throw ValueError("projection head weight is not finite");
    }
    for (float v : head.bias) {
        if (!std::isfinite(v)) throw ValueError("projection head bias is not finite");
    }
}

struct AlignConfig {
    double temperature = 0.1;
    double lambda = 0.1;
    bool normalize_projected = true;
    // When set, absent prototype classes contribute -inf similarity, i.e.
    // exactly zero weight in the softmax denominator. Off by default: any
    // absent class is then an error.
    bool allow_absent_classes = false;
};

inline void validate_align_config(const AlignConfig& cfg) {
    if (!(cfg.temperature > 0.0)) throw ValueError("temperature must be > 0");
    if (cfg.lambda < 0.0) throw ValueError("lambda must be >= 0");
}

/// z = W f + b per pixel; output has the input's dtype and spatial shape
/// with the head's output channel count.
inline DenseTensor project(const DenseTensor& features, const ProjectionHead& head) {
    validate_projection_head(head);
    if (features.rank() != 3) {
        throw ShapeError("project: features must be H x W x C, got " + features.shape_string());
    }
    if (static_cast<int>(features.dim(2)) != head.in_channels) {
        throw ShapeError("project: feature channels " + std::to_string(features.dim(2)) +
                         " do not match head input " + std::to_string(head.in_channels));
    }
    const std::size_t hw = features.dim(0) * features.dim(1);
    const int ci = head.in_channels;
    const int co = head.out_channels;

    DenseTensor out({features.dim(0), features.dim(1), static_cast<std::size_t>(co)},
                    features.dtype());
    const auto run = [&](auto in, auto dst) {
        for (std::size_t p = 0; p < hw; ++p) {
            const auto* f = in.data() + p * static_cast<std::size_t>(ci);
            auto* z = dst.data() + p * static_cast<std::size_t>(co);
            for (int o = 0; o < co; ++o) {
                double s = head.bias[static_cast<std::size_t>(o)];
                for (int i = 0; i < ci; ++i) {
                    s += static_cast<double>(f[i]) *
                         head.weight[static_cast<std::size_t>(i) * co + o];
                }
                z[o] = static_cast<std::remove_reference_t<decltype(z[0])>>(s);
            }
        }
    };
    if (features.dtype() == Dtype::Float32) {
        run(features.values<float>(), out.values<float>());
    } else if (features.dtype() == Dtype::Float64) {
        run(features.values<double>(), out.values<double>());
    } else {
        throw ShapeError("project: features must be float32 or float64");
    }
    return out;
}

namespace detail {

inline void check_bank_usable(const PrototypeBank& bank, const AlignConfig& cfg) {
    if (bank.num_classes < 1) throw ShapeError("prototype bank is empty");
    if (cfg.allow_absent_classes) return;
    for (int c = 0; c < bank.num_classes; ++c) {
        if (!bank.present[static_cast<std::size_t>(c)]) {
            throw ValueError("prototype for class " + std::to_string(c) +
                             " is absent; enable allow_absent_classes to exclude it");
        }
    }
}

// Copies one pixel's feature vector into a float64 scratch row.
template <typename Src>
inline void load_pixel(const Src& src, std::size_t p, int channels, double* dst) {
    const auto* f = src.data() + p * static_cast<std::size_t>(channels);
    for (int c = 0; c < channels; ++c) dst[c] = static_cast<double>(f[c]);
}

}  // namespace detail

/// Temperature-scaled cosine similarities, H' x W' x K float64. With
/// normalize_projected the pixel vector is l2-normalized first (zero-norm
/// pixels are an error); otherwise the raw dot product is used. Absent
/// classes yield -inf when allowed, else an error.
inline DenseTensor similarity(const DenseTensor& z, const PrototypeBank& bank,
                              const AlignConfig& cfg) {
    validate_align_config(cfg);
    detail::check_bank_usable(bank, cfg);
    if (z.rank() != 3) throw ShapeError("similarity: z must be H x W x C");
    if (static_cast<int>(z.dim(2)) != bank.feature_dim) {
        throw ShapeError("similarity: feature dim " + std::to_string(z.dim(2)) +
                         " does not match bank dim " + std::to_string(bank.feature_dim));
    }
    const std::size_t hw = z.dim(0) * z.dim(1);
    const int C = bank.feature_dim;
    const int K = bank.num_classes;

    DenseTensor out({z.dim(0), z.dim(1), static_cast<std::size_t>(K)}, Dtype::Float64);
    auto dst = out.values<double>();
    std::vector<double> zi(static_cast<std::size_t>(C));

    const auto run = [&](auto src) {
        for (std::size_t p = 0; p < hw; ++p) {
            detail::load_pixel(src, p, C, zi.data());
            if (cfg.normalize_projected) {
                double norm_sq = 0.0;
                for (int c = 0; c < C; ++c) norm_sq += zi[static_cast<std::size_t>(c)] * zi[static_cast<std::size_t>(c)];
                const double norm = std::sqrt(norm_sq);
                if (!(norm > 0.0)) {
                    throw ValueError("similarity: zero-norm feature at pixel " + std::to_string(p));
                }
                for (int c = 0; c < C; ++c) zi[static_cast<std::size_t>(c)] /= norm;
            }
            for (int k = 0; k < K; ++k) {
                if (!bank.present[static_cast<std::size_t>(k)]) {
                    dst[p * static_cast<std::size_t>(K) + static_cast<std::size_t>(k)] =
                        -std::numeric_limits<double>::infinity();
                    continue;
                }
                const auto proto = bank.row(k);
                double s = 0.0;
                for (int c = 0; c < C; ++c) {
                    s += zi[static_cast<std::size_t>(c)] * static_cast<double>(proto[static_cast<std::size_t>(c)]);
                }
                dst[p * static_cast<std::size_t>(K) + static_cast<std::size_t>(k)] = s / cfg.temperature;
            }
        }
    };
    if (z.dtype() == Dtype::Float32) {
        run(z.values<float>());
    } else if (z.dtype() == Dtype::Float64) {
        run(z.values<double>());
    } else {
        throw ShapeError("similarity: z must be float32 or float64");
    }
    return out;
}

/// Mean over labeled pixels of -log softmax(s)[label], computed with
/// max-subtraction. Ignore pixels are excluded; at least one labeled pixel
/// is required, and every label must index a present (finite) class.
inline double proto_loss(const DenseTensor& similarities, const LabelMap& labels) {
    if (similarities.rank() != 3) throw ShapeError("proto_loss: similarities must be H x W x K");
    if (static_cast<int>(similarities.dim(0)) != labels.height ||
        static_cast<int>(similarities.dim(1)) != labels.width) {
        throw ShapeError("proto_loss: similarity and label dimensions differ");
    }
    if (similarities.dtype() != Dtype::Float64) {
        throw ShapeError("proto_loss: similarities must be float64");
    }
    const int K = static_cast<int>(similarities.dim(2));
    const auto s = similarities.values<double>();

    double total = 0.0;
    std::uint64_t n = 0;
    for (std::size_t p = 0; p < labels.labels.size(); ++p) {
        const std::uint8_t y = labels.labels[p];
        if (y == kIgnoreLabel) continue;
        if (static_cast<int>(y) >= K) {
            throw ValueError("proto_loss: label " + std::to_string(int(y)) + " out of range");
        }
        const double* row = s.data() + p * static_cast<std::size_t>(K);
        double mx = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < K; ++k) mx = std::max(mx, row[k]);
        double denom = 0.0;
        for (int k = 0; k < K; ++k) denom += std::exp(row[k] - mx);
        const double sy = row[y];
        if (!std::isfinite(sy)) {
            throw ValueError("proto_loss: label " + std::to_string(int(y)) +
                             " references an absent class at pixel " + std::to_string(p));
        }
        total += std::log(denom) - (sy - mx);
        ++n;
    }
    if (n == 0) throw ValueError("proto_loss: no labeled pixels");
    return total / static_cast<double>(n);
}

/// Analytic dL/dz for proto_loss(similarity(z, bank, cfg), labels),
/// including the normalization Jacobian when cfg.normalize_projected.
/// Returns a float64 tensor with z's shape; rows for ignore pixels are 0.
inline DenseTensor proto_loss_grad(const DenseTensor& z, const PrototypeBank& bank,
                                   const LabelMap& labels, const AlignConfig& cfg) {
    validate_align_config(cfg);
    detail::check_bank_usable(bank, cfg);
    if (z.rank() != 3) throw ShapeError("proto_loss_grad: z must be H x W x C");
    if (static_cast<int>(z.dim(0)) != labels.height || static_cast<int>(z.dim(1)) != labels.width) {
        throw ShapeError("proto_loss_grad: z and label dimensions differ");
    }
    if (static_cast<int>(z.dim(2)) != bank.feature_dim) {
        throw ShapeError("proto_loss_grad: feature dim does not match bank");
    }
    const std::size_t hw = z.dim(0) * z.dim(1);
    const int C = bank.feature_dim;
    const int K = bank.num_classes;

    std::uint64_t n = 0;
    for (std::uint8_t y : labels.labels) {
        if (y == kIgnoreLabel) continue;
        if (static_cast<int>(y) >= K) throw ValueError("proto_loss_grad: label out of range");
        if (!bank.present[y]) {
            throw ValueError("proto_loss_grad: label " + std::to_string(int(y)) +
                             " references an absent class");
        }
        ++n;
    }
    if (n == 0) throw ValueError("proto_loss_grad: no labeled pixels");

    DenseTensor out({z.dim(0), z.dim(1), static_cast<std::size_t>(C)}, Dtype::Float64);
    auto g = out.values<double>();
    std::vector<double> zi(static_cast<std::size_t>(C));
    std::vector<double> zhat(static_cast<std::size_t>(C));
    std::vector<double> q(static_cast<std::size_t>(K));
    std::vector<double> dl_dzhat(static_cast<std::size_t>(C));

    const auto run = [&](auto src) {
        for (std::size_t p = 0; p < hw; ++p) {
            const std::uint8_t y = labels.labels[p];
            if (y == kIgnoreLabel) continue;
            detail::load_pixel(src, p, C, zi.data());

            double norm = 1.0;
            if (cfg.normalize_projected) {
                double norm_sq = 0.0;
                for (int c = 0; c < C; ++c) norm_sq += zi[static_cast<std::size_t>(c)] * zi[static_cast<std::size_t>(c)];
                norm = std::sqrt(norm_sq);
                if (!(norm > 0.0)) {
                    throw ValueError("proto_loss_grad: zero-norm feature at pixel " + std::to_string(p));
                }
                for (int c = 0; c < C; ++c) zhat[static_cast<std::size_t>(c)] = zi[static_cast<std::size_t>(c)] / norm;
            } else {
                zhat.assign(zi.begin(), zi.end());
            }

            // Softmax over present classes of s_k = zhat . p_k / T.
            double mx = -std::numeric_limits<double>::infinity();
            for (int k = 0; k < K; ++k) {
                if (!bank.present[static_cast<std::size_t>(k)]) {
                    q[static_cast<std::size_t>(k)] = -std::numeric_limits<double>::infinity();
                    continue;
                }
                const auto proto = bank.row(k);
                double s = 0.0;
                for (int c = 0; c < C; ++c) {
                    s += zhat[static_cast<std::size_t>(c)] * static_cast<double>(proto[static_cast<std::size_t>(c)]);
                }
                q[static_cast<std::size_t>(k)] = s / cfg.temperature;
                mx = std::max(mx, q[static_cast<std::size_t>(k)]);
            }
            double denom = 0.0;
            for (int k = 0; k < K; ++k) {
                if (bank.present[static_cast<std::size_t>(k)]) {
                    q[static_cast<std::size_t>(k)] = std::exp(q[static_cast<std::size_t>(k)] - mx);
                    denom += q[static_cast<std::size_t>(k)];
                } else {
                    q[static_cast<std::size_t>(k)] = 0.0;
                }
            }
            for (int k = 0; k < K; ++k) q[static_cast<std::size_t>(k)] /= denom;

            // dL_i/dzhat = (sum_k q_k p_k - p_y) / T, averaged by 1/N later.
            for (int c = 0; c < C; ++c) dl_dzhat[static_cast<std::size_t>(c)] = 0.0;
            for (int k = 0; k < K; ++k) {
                const double w = q[static_cast<std::size_t>(k)] - (k == static_cast<int>(y) ? 1.0 : 0.0);
                if (w == 0.0) continue;
                const auto proto = bank.row(k);
                for (int c = 0; c < C; ++c) {
                    dl_dzhat[static_cast<std::size_t>(c)] += w * static_cast<double>(proto[static_cast<std::size_t>(c)]);
                }
            }
            const double scale = 1.0 / (cfg.temperature * static_cast<double>(n));

            double* dst = g.data() + p * static_cast<std::size_t>(C);
            if (cfg.normalize_projected) {
                // Chain through zhat = z / |z|: (I - zhat zhat^T) / |z|.
                double dot = 0.0;
                for (int c = 0; c < C; ++c) dot += dl_dzhat[static_cast<std::size_t>(c)] * zhat[static_cast<std::size_t>(c)];
                for (int c = 0; c < C; ++c) {
                    dst[c] = scale * (dl_dzhat[static_cast<std::size_t>(c)] - dot * zhat[static_cast<std::size_t>(c)]) / norm;
                }
            } else {
                for (int c = 0; c < C; ++c) dst[c] = scale * dl_dzhat[static_cast<std::size_t>(c)];
            }
        }
    };
    if (z.dtype() == Dtype::Float32) {
        run(z.values<float>());
    } else if (z.dtype() == Dtype::Float64) {
        run(z.values<double>());
    } else {
        throw ShapeError("proto_loss_grad: z must be float32 or float64");
    }
    return out;
}

}  // namespace segalign
