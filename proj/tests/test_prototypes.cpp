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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "segalign/prototypes.hpp"

using namespace segalign;

namespace {

DenseTensor features_of(int h, int w, int c, const std::vector<float>& vals) {
    return DenseTensor::from_values(
        {static_cast<std::size_t>(h), static_cast<std::size_t>(w), static_cast<std::size_t>(c)},
        vals);
}

LabelMap labels_of(int h, int w, const std::vector<std::uint8_t>& vals) {
    LabelMap m = make_label_map(h, w);
    m.labels = vals;
    return m;
}

}  // namespace

TEST_CASE("downsample_labels majority vote") {
    SUBCASE("majority wins") {
        const LabelMap in = labels_of(2, 2, {0, 0, 0, 1});
        const LabelMap out = downsample_labels(in, 1, 1);
        CHECK(out.labels == std::vector<std::uint8_t>{0});
    }
    SUBCASE("tie goes to the lowest class id") {
        const LabelMap in = labels_of(1, 2, {1, 0});
        const LabelMap out = downsample_labels(in, 1, 1);
        CHECK(out.labels == std::vector<std::uint8_t>{0});
    }
    SUBCASE("all-ignore cell stays ignore") {
        const LabelMap in = labels_of(1, 2, {255, 255});
        const LabelMap out = downsample_labels(in, 1, 1);
        CHECK(out.labels == std::vector<std::uint8_t>{255});
    }
    SUBCASE("ignore pixels do not vote") {
        const LabelMap in = labels_of(2, 2, {255, 255, 255, 3});
        const LabelMap out = downsample_labels(in, 1, 1);
        CHECK(out.labels == std::vector<std::uint8_t>{3});
    }
    SUBCASE("target larger than source is an error") {
        const LabelMap in = labels_of(2, 2, {0, 0, 0, 0});
        CHECK_THROWS_AS(downsample_labels(in, 4, 4), ShapeError);
    }
    SUBCASE("uneven ratios partition every source pixel") {
        const LabelMap in = labels_of(3, 5, std::vector<std::uint8_t>(15, 2));
        const LabelMap out = downsample_labels(in, 2, 2);
        CHECK(out.labels == std::vector<std::uint8_t>(4, 2));
    }
}

TEST_CASE("accumulate_prototypes") {
    SUBCASE("single labeled pixel") {
        PrototypeAccumulator acc(3, 2);
        accumulate_prototypes(acc, features_of(1, 1, 2, {1.0f, 0.0f}), labels_of(1, 1, {1}));
        CHECK(acc.sums[2] == doctest::Approx(1.0));
        CHECK(acc.sums[3] == doctest::Approx(0.0));
        CHECK(acc.counts[1] == 1);
        CHECK(acc.counts[0] == 0);
    }
    SUBCASE("all-ignore map leaves the accumulator unchanged") {
        PrototypeAccumulator acc(3, 2);
        accumulate_prototypes(acc, features_of(1, 2, 2, {1, 2, 3, 4}), labels_of(1, 2, {255, 255}));
        CHECK(std::accumulate(acc.counts.begin(), acc.counts.end(), std::uint64_t{0}) == 0);
        for (double s : acc.sums) CHECK(s == 0.0);
    }
    SUBCASE("two images equal their concatenation") {
        std::mt19937 rng(4);
        std::uniform_real_distribution<float> u(-1.0f, 1.0f);
        std::uniform_int_distribution<int> cls(0, 2);
        std::vector<float> fa(2 * 3 * 4), fb(2 * 3 * 4);
        std::vector<std::uint8_t> la(6), lb(6);
        for (auto& v : fa) v = u(rng);
        for (auto& v : fb) v = u(rng);
        for (auto& v : la) v = static_cast<std::uint8_t>(cls(rng));
        for (auto& v : lb) v = static_cast<std::uint8_t>(cls(rng));

        PrototypeAccumulator split(3, 4);
        accumulate_prototypes(split, features_of(2, 3, 4, fa), labels_of(2, 3, la));
        accumulate_prototypes(split, features_of(2, 3, 4, fb), labels_of(2, 3, lb));

        std::vector<float> fcat(fa);
        fcat.insert(fcat.end(), fb.begin(), fb.end());
        std::vector<std::uint8_t> lcat(la);
        lcat.insert(lcat.end(), lb.begin(), lb.end());
        PrototypeAccumulator cat(3, 4);
        accumulate_prototypes(cat, features_of(4, 3, 4, fcat), labels_of(4, 3, lcat));

        CHECK(split.sums == cat.sums);  // same addition order per class
        CHECK(split.counts == cat.counts);
    }
    SUBCASE("dimension mismatch") {
        PrototypeAccumulator acc(3, 2);
        CHECK_THROWS_AS(accumulate_prototypes(acc, features_of(1, 1, 2, {1, 2}), labels_of(1, 2, {0, 0})),
                        ShapeError);
        CHECK_THROWS_AS(accumulate_prototypes(acc, features_of(1, 1, 3, {1, 2, 3}), labels_of(1, 1, {0})),
                        ShapeError);
    }
}

TEST_CASE("finalize_prototypes") {
    SUBCASE("mean then l2 normalization") {
        PrototypeAccumulator acc(2, 2);
        accumulate_prototypes(acc, features_of(1, 2, 2, {1, 0, 0, 1}), labels_of(1, 2, {1, 1}));
        const PrototypeBank bank = finalize_prototypes(acc);
        CHECK(bank.present == std::vector<std::uint8_t>{0, 1});
        CHECK(bank.prototypes[2] == doctest::Approx(0.70710678).epsilon(1e-7));
        CHECK(bank.prototypes[3] == doctest::Approx(0.70710678).epsilon(1e-7));
        CHECK(bank.source_counts[1] == 2);
    }
    SUBCASE("single pixel 3-4-5") {
        PrototypeAccumulator acc(1, 2);
        accumulate_prototypes(acc, features_of(1, 1, 2, {3, 4}), labels_of(1, 1, {0}));
        const PrototypeBank bank = finalize_prototypes(acc);
        CHECK(bank.prototypes[0] == doctest::Approx(0.6));
        CHECK(bank.prototypes[1] == doctest::Approx(0.8));
    }
    SUBCASE("unobserved class flagged absent") {
        PrototypeAccumulator acc(3, 2);
        accumulate_prototypes(acc, features_of(1, 1, 2, {1, 0}), labels_of(1, 1, {0}));
        const PrototypeBank bank = finalize_prototypes(acc);
        CHECK(bank.present == std::vector<std::uint8_t>{1, 0, 0});
    }
    SUBCASE("all classes empty is an error") {
        PrototypeAccumulator acc(2, 2);
        CHECK_THROWS_AS(finalize_prototypes(acc), ValueError);
    }
    SUBCASE("zero-norm mean is an error") {
        PrototypeAccumulator acc(1, 2);
        accumulate_prototypes(acc, features_of(1, 2, 2, {1, 0, -1, 0}), labels_of(1, 2, {0, 0}));
        CHECK_THROWS_AS(finalize_prototypes(acc), ValueError);
    }
}

TEST_CASE("prototype rows are unit norm; merge order does not matter") {
    std::mt19937 rng(31);
    std::uniform_real_distribution<float> u(-2.0f, 2.0f);
    std::uniform_int_distribution<int> cls(0, 4);

    const int images = 6;
    std::vector<PrototypeAccumulator> per_image;
    for (int i = 0; i < images; ++i) {
        std::vector<float> f(4 * 4 * 3);
        std::vector<std::uint8_t> l(16);
        for (auto& v : f) v = u(rng);
        for (auto& v : l) v = static_cast<std::uint8_t>(cls(rng));
        PrototypeAccumulator acc(5, 3);
        accumulate_prototypes(acc, features_of(4, 4, 3, f), labels_of(4, 4, l));
        per_image.push_back(std::move(acc));
    }

    PrototypeAccumulator in_order(5, 3);
    for (const auto& a : per_image) merge_accumulators(in_order, a);

    std::vector<std::size_t> perm(per_image.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    PrototypeAccumulator shuffled(5, 3);
    for (std::size_t i : perm) merge_accumulators(shuffled, per_image[i]);

    for (std::size_t i = 0; i < in_order.sums.size(); ++i) {
        const double a = in_order.sums[i], b = shuffled.sums[i];
        const double scale = std::max({std::abs(a), std::abs(b), 1.0});
        CHECK(std::abs(a - b) / scale < 1e-9);
    }

    const PrototypeBank bank = finalize_prototypes(in_order);
    for (int c = 0; c < bank.num_classes; ++c) {
        if (!bank.present[static_cast<std::size_t>(c)]) continue;
        double norm_sq = 0.0;
        for (float v : bank.row(c)) norm_sq += static_cast<double>(v) * v;
        CHECK(std::abs(std::sqrt(norm_sq) - 1.0) < 1e-6);
    }
}

TEST_CASE("prototype bank file round trip") {
    PrototypeAccumulator acc(3, 4);
    accumulate_prototypes(acc, features_of(1, 2, 4, {1, 2, 3, 4, -1, 0.5f, 2, 0}),
                          labels_of(1, 2, {0, 2}));
    const PrototypeBank bank = finalize_prototypes(acc);

    const auto dir = std::filesystem::temp_directory_path() / "segalign_proto_tests";
    std::filesystem::create_directories(dir);
    const auto npy = (dir / "bank.npy").string();
    const auto sidecar = (dir / "bank.json").string();
    save_prototype_bank(bank, npy, sidecar, 0.1, true);
    const PrototypeBank back = load_prototype_bank(npy, sidecar);

    CHECK(back.num_classes == bank.num_classes);
    CHECK(back.feature_dim == bank.feature_dim);
    CHECK(back.prototypes == bank.prototypes);
    CHECK(back.present == bank.present);
    CHECK(back.source_counts == bank.source_counts);
}
