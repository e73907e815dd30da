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

#include <array>
#include <cstdint>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "segalign/error.hpp"
#include "segalign/image.hpp"

namespace segalign {

/// Rows are ground truth, columns are predictions; gt-ignore pixels are
/// skipped and counted in `ignored`.
struct ConfusionMatrix {
    int num_classes = 0;
    std::vector<std::uint64_t> counts;  // num_classes * num_classes
    std::uint64_t ignored = 0;

    std::uint64_t at(int gt, int pred) const {
        return counts[static_cast<std::size_t>(gt) * num_classes + pred];
    }
    std::uint64_t& at(int gt, int pred) {
        return counts[static_cast<std::size_t>(gt) * num_classes + pred];
    }
};

inline ConfusionMatrix make_confusion(int num_classes) {
    if (num_classes < 1 || num_classes > 254) throw ValueError("class count must be in [1, 254]");
    ConfusionMatrix cm;
    cm.num_classes = num_classes;
    cm.counts.assign(static_cast<std::size_t>(num_classes) * num_classes, 0);
    return cm;
}

inline ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& gt, int num_classes) {
    if (pred.height != gt.height || pred.width != gt.width) {
        throw ShapeError("confusion: prediction and ground-truth dimensions differ");
    }
    ConfusionMatrix cm = make_confusion(num_classes);
    for (std::size_t i = 0; i < gt.labels.size(); ++i) {
        const std::uint8_t g = gt.labels[i];
        if (g == kIgnoreLabel) {
            ++cm.ignored;
            continue;
        }
        const std::uint8_t p = pred.labels[i];
        if (static_cast<int>(g) >= num_classes) {
            throw ValueError("confusion: ground-truth class " + std::to_string(int(g)) + " out of range");
        }
        if (static_cast<int>(p) >= num_classes) {
            throw ValueError("confusion: predicted class " + std::to_string(int(p)) + " out of range");
        }
        ++cm.at(g, p);
    }
    return cm;
}

inline void merge(ConfusionMatrix& acc, const ConfusionMatrix& other) {
    if (acc.num_classes != other.num_classes) throw ShapeError("confusion matrices differ in size");
    for (std::size_t i = 0; i < acc.counts.size(); ++i) acc.counts[i] += other.counts[i];
    acc.ignored += other.ignored;
}

/// Per-class IoU over an explicit class subset. Classes whose TP+FP+FN is
/// zero are flagged undefined and excluded from the mean.
struct IoUReport {
    std::vector<int> classes;          // evaluated subset, in input order
    std::vector<double> iou;           // aligned with classes; 0 when undefined
    std::vector<std::uint8_t> defined;
    double miou = 0.0;                 // mean over defined entries
};

inline IoUReport iou_report(const ConfusionMatrix& cm, std::span<const int> class_subset) {
    if (class_subset.empty()) throw ValueError("iou_report: class subset is empty");
    std::vector<std::uint64_t> row_sum(static_cast<std::size_t>(cm.num_classes), 0);
    std::vector<std::uint64_t> col_sum(static_cast<std::size_t>(cm.num_classes), 0);
    for (int g = 0; g < cm.num_classes; ++g) {
        for (int p = 0; p < cm.num_classes; ++p) {
            row_sum[static_cast<std::size_t>(g)] += cm.at(g, p);
            col_sum[static_cast<std::size_t>(p)] += cm.at(g, p);
        }
    }

    IoUReport rep;
    double sum = 0.0;
    int defined = 0;
    for (int c : class_subset) {
        if (c < 0 || c >= cm.num_classes) {
            throw ValueError("iou_report: class " + std::to_string(c) + " out of range");
        }
        const std::uint64_t tp = cm.at(c, c);
        const std::uint64_t denom = row_sum[static_cast<std::size_t>(c)] +
                                    col_sum[static_cast<std::size_t>(c)] - tp;
        rep.classes.push_back(c);
        if (denom == 0) {
            rep.iou.push_back(0.0);
            rep.defined.push_back(0);
        } else {
            const double iou = static_cast<double>(tp) / static_cast<double>(denom);
            rep.iou.push_back(iou);
            rep.defined.push_back(1);
            sum += iou;
            ++defined;
        }
    }
    rep.miou = defined > 0 ? sum / defined : 0.0;
    return rep;
}

/// Cityscapes evaluation class names, report column order.
inline constexpr std::array<const char*, 19> kCityscapesClasses = {
    "Road", "S.walk", "Build.", "Wall", "Fence", "Pole", "Tr.Light", "Sign", "Veget.", "Terrain",
    "Sky", "Person", "Rider", "Car", "Truck", "Bus", "Train", "M.bike", "Bike"};

inline std::vector<int> full_class_subset(int num_classes) {
    std::vector<int> v(static_cast<std::size_t>(num_classes));
    for (int c = 0; c < num_classes; ++c) v[static_cast<std::size_t>(c)] = c;
    return v;
}

/// The 16-class evaluation subset: all 19 classes minus terrain, truck and
/// train (the "--" columns of the 16-class benchmark convention).
inline std::vector<int> cityscapes_16_subset() {
    std::vector<int> v;
    for (int c = 0; c < 19; ++c) {
        if (c == 9 || c == 14 || c == 16) continue;
        v.push_back(c);
    }
    return v;
}

/// Fixed-width text row: one column per class (one-decimal percent, "--"
/// for classes outside the subset or undefined) plus the trailing mIoU.
inline std::string format_iou_row(const IoUReport& rep, int num_classes,
                                  std::span<const char* const> names, const std::string& method) {
    std::ostringstream os;
    os << std::left << std::setw(12) << method << std::right;
    (void)names;
    for (int c = 0; c < num_classes; ++c) {
        std::ptrdiff_t pos = -1;
        for (std::size_t i = 0; i < rep.classes.size(); ++i) {
            if (rep.classes[i] == c) {
                pos = static_cast<std::ptrdiff_t>(i);
                break;
            }
        }
        if (pos < 0 || !rep.defined[static_cast<std::size_t>(pos)]) {
            os << std::setw(9) << "--";
        } else {
            os << std::setw(9) << std::fixed << std::setprecision(1)
               << rep.iou[static_cast<std::size_t>(pos)] * 100.0;
        }
    }
    os << std::setw(9) << std::fixed << std::setprecision(1) << rep.miou * 100.0;
    return os.str();
}

inline std::string format_iou_header(int num_classes, std::span<const char* const> names,
                                     const std::string& method_col = "Method") {
    std::ostringstream os;
    os << std::left << std::setw(12) << method_col << std::right;
    for (int c = 0; c < num_classes; ++c) {
        const std::string name = c < static_cast<int>(names.size())
                                     ? std::string(names[static_cast<std::size_t>(c)])
                                     : std::to_string(c);
        os << std::setw(9) << name;
    }
    os << std::setw(9) << "mIoU";
    return os.str();
}

inline nlohmann::json iou_report_to_json(const IoUReport& rep) {
    nlohmann::json per_class = nlohmann::json::object();
    for (std::size_t i = 0; i < rep.classes.size(); ++i) {
        if (rep.defined[i]) {
            per_class[std::to_string(rep.classes[i])] = rep.iou[i];
        } else {
            per_class[std::to_string(rep.classes[i])] = nullptr;
        }
    }
    return nlohmann::json{{"per_class", per_class}, {"miou", rep.miou}};
}

}  // namespace segalign
