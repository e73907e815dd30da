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

#include <random>

#include "segalign/metrics.hpp"

using namespace segalign;

namespace {

LabelMap labels_of(int h, int w, const std::vector<std::uint8_t>& vals) {
    LabelMap m = make_label_map(h, w);
    m.labels = vals;
    return m;
}

LabelMap random_labels(std::mt19937& rng, int h, int w, int classes, bool with_ignore) {
    std::uniform_int_distribution<int> d(0, classes - 1 + (with_ignore ? 1 : 0));
    LabelMap m = make_label_map(h, w);
    for (auto& v : m.labels) {
        const int k = d(rng);
        v = k >= classes ? kIgnoreLabel : static_cast<std::uint8_t>(k);
    }
    return m;
}

}  // namespace

TEST_CASE("confusion counting") {
    SUBCASE("perfect prediction fills the diagonal") {
        const LabelMap gt = labels_of(2, 2, {2, 2, 2, 2});
        const ConfusionMatrix cm = confusion(gt, gt, 3);
        CHECK(cm.at(2, 2) == 4);
        CHECK(cm.at(0, 0) == 0);
        CHECK(cm.ignored == 0);
    }
    SUBCASE("all-ignore ground truth yields a zero matrix") {
        const LabelMap gt = labels_of(1, 3, {255, 255, 255});
        const LabelMap pred = labels_of(1, 3, {0, 1, 2});
        const ConfusionMatrix cm = confusion(pred, gt, 3);
        for (std::uint64_t c : cm.counts) CHECK(c == 0);
        CHECK(cm.ignored == 3);
    }
    SUBCASE("two-pixel hand fixture") {
        const LabelMap gt = labels_of(1, 2, {0, 1});
        const LabelMap pred = labels_of(1, 2, {0, 0});
        const ConfusionMatrix cm = confusion(pred, gt, 2);
        CHECK(cm.at(0, 0) == 1);
        CHECK(cm.at(1, 0) == 1);
        CHECK(cm.at(0, 1) == 0);
        CHECK(cm.at(1, 1) == 0);
    }
    SUBCASE("out-of-range class") {
        const LabelMap gt = labels_of(1, 1, {5});
        const LabelMap pred = labels_of(1, 1, {0});
        CHECK_THROWS_AS(confusion(pred, gt, 3), ValueError);
        CHECK_THROWS_AS(confusion(gt, pred, 3), ValueError);
    }
    SUBCASE("dimension mismatch") {
        CHECK_THROWS_AS(confusion(make_label_map(1, 2), make_label_map(2, 1), 3), ShapeError);
    }
}

TEST_CASE("iou report") {
    SUBCASE("hand fixture: IoU {0.5, 0} -> mIoU 0.25") {
        const LabelMap gt = labels_of(1, 2, {0, 1});
        const LabelMap pred = labels_of(1, 2, {0, 0});
        const ConfusionMatrix cm = confusion(pred, gt, 2);
        const std::vector<int> subset{0, 1};
        const IoUReport rep = iou_report(cm, subset);
        CHECK(rep.iou[0] == doctest::Approx(0.5));
        CHECK(rep.iou[1] == doctest::Approx(0.0));
        CHECK(rep.defined == std::vector<std::uint8_t>{1, 1});
        CHECK(rep.miou == doctest::Approx(0.25));
    }
    SUBCASE("perfect prediction") {
        const LabelMap gt = labels_of(2, 2, {0, 1, 2, 1});
        const ConfusionMatrix cm = confusion(gt, gt, 3);
        const IoUReport rep = iou_report(cm, full_class_subset(3));
        for (double v : rep.iou) CHECK(v == doctest::Approx(1.0));
        CHECK(rep.miou == doctest::Approx(1.0));
    }
    SUBCASE("classes absent from both sides are excluded from the mean") {
        const LabelMap gt = labels_of(1, 2, {0, 0});
        const ConfusionMatrix cm = confusion(gt, gt, 4);
        const IoUReport rep = iou_report(cm, full_class_subset(4));
        CHECK(rep.defined == std::vector<std::uint8_t>{1, 0, 0, 0});
        CHECK(rep.miou == doctest::Approx(1.0));  // mean over the single defined class
    }
    SUBCASE("empty subset is an error") {
        const ConfusionMatrix cm = make_confusion(3);
        CHECK_THROWS_AS(iou_report(cm, std::vector<int>{}), ValueError);
    }
}

TEST_CASE("16-class subset drops exactly terrain, truck, train") {
    const std::vector<int> subset = cityscapes_16_subset();
    CHECK(subset.size() == 16);
    for (int c : {9, 14, 16}) {
        CHECK(std::find(subset.begin(), subset.end(), c) == subset.end());
    }
    for (int c = 0; c < 19; ++c) {
        if (c == 9 || c == 14 || c == 16) continue;
        CHECK(std::find(subset.begin(), subset.end(), c) != subset.end());
    }
    CHECK(std::string(kCityscapesClasses[9]) == "Terrain");
    CHECK(std::string(kCityscapesClasses[14]) == "Truck");
    CHECK(std::string(kCityscapesClasses[16]) == "Train");
}

TEST_CASE("confusion symmetry: swapping pred and gt transposes the matrix") {
    std::mt19937 rng(10);
    const LabelMap a = random_labels(rng, 5, 5, 4, false);
    const LabelMap b = random_labels(rng, 5, 5, 4, false);
    const ConfusionMatrix ab = confusion(a, b, 4);  // pred=a, gt=b
    const ConfusionMatrix ba = confusion(b, a, 4);
    for (int g = 0; g < 4; ++g) {
        for (int p = 0; p < 4; ++p) CHECK(ab.at(g, p) == ba.at(p, g));
    }
}

TEST_CASE("confusion additivity over split images") {
    std::mt19937 rng(20);
    const LabelMap gt1 = random_labels(rng, 3, 4, 5, true);
    const LabelMap pr1 = random_labels(rng, 3, 4, 5, false);
    const LabelMap gt2 = random_labels(rng, 3, 4, 5, true);
    const LabelMap pr2 = random_labels(rng, 3, 4, 5, false);

    ConfusionMatrix sum = confusion(pr1, gt1, 5);
    merge(sum, confusion(pr2, gt2, 5));

    LabelMap gt_cat = make_label_map(6, 4);
    LabelMap pr_cat = make_label_map(6, 4);
    std::copy(gt1.labels.begin(), gt1.labels.end(), gt_cat.labels.begin());
    std::copy(gt2.labels.begin(), gt2.labels.end(), gt_cat.labels.begin() + 12);
    std::copy(pr1.labels.begin(), pr1.labels.end(), pr_cat.labels.begin());
    std::copy(pr2.labels.begin(), pr2.labels.end(), pr_cat.labels.begin() + 12);
    const ConfusionMatrix cat = confusion(pr_cat, gt_cat, 5);

    CHECK(sum.counts == cat.counts);
    CHECK(sum.ignored == cat.ignored);
}

TEST_CASE("miou matches brute force on random maps") {
    std::mt19937 rng(30);
    for (int trial = 0; trial < 50; ++trial) {
        const int classes = 4;
        const LabelMap gt = random_labels(rng, 6, 6, classes, true);
        const LabelMap pred = random_labels(rng, 6, 6, classes, false);
        const ConfusionMatrix cm = confusion(pred, gt, classes);
        const IoUReport rep = iou_report(cm, full_class_subset(classes));

        double sum = 0.0;
        int defined = 0;
        for (int c = 0; c < classes; ++c) {
            std::uint64_t tp = 0, fp = 0, fn = 0;
            for (std::size_t i = 0; i < gt.labels.size(); ++i) {
                if (gt.labels[i] == kIgnoreLabel) continue;
                const bool in_gt = gt.labels[i] == c;
                const bool in_pred = pred.labels[i] == c;
                tp += in_gt && in_pred;
                fp += !in_gt && in_pred;
                fn += in_gt && !in_pred;
            }
            if (tp + fp + fn == 0) continue;
            const double iou = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
            CHECK(rep.iou[static_cast<std::size_t>(c)] == doctest::Approx(iou));
            CHECK(rep.iou[static_cast<std::size_t>(c)] >= 0.0);
            CHECK(rep.iou[static_cast<std::size_t>(c)] <= 1.0);
            sum += iou;
            ++defined;
        }
        REQUIRE(defined > 0);
        CHECK(rep.miou == doctest::Approx(sum / defined));
    }
}

TEST_CASE("table row formatting") {
    const LabelMap gt = labels_of(1, 2, {0, 1});
    const LabelMap pred = labels_of(1, 2, {0, 0});
    const ConfusionMatrix cm = confusion(pred, gt, 2);
    const IoUReport rep = iou_report(cm, std::vector<int>{0, 1});
    const std::string row = format_iou_row(rep, 2, kCityscapesClasses, "test");
    CHECK(row.find("50.0") != std::string::npos);
    CHECK(row.find("0.0") != std::string::npos);
    CHECK(row.find("25.0") != std::string::npos);

    // Classes outside the subset render as "--".
    const IoUReport sub = iou_report(cm, std::vector<int>{0});
    const std::string row2 = format_iou_row(sub, 2, kCityscapesClasses, "test");
    CHECK(row2.find("--") != std::string::npos);

    const nlohmann::json j = iou_report_to_json(rep);
    CHECK(j.at("miou").get<double>() == doctest::Approx(0.25));
    CHECK(j.at("per_class").at("0").get<double>() == doctest::Approx(0.5));
}
