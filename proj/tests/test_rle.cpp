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

#include <filesystem>
#include <random>

#include "segalign/rle.hpp"

using namespace segalign;

namespace {

Bitmap bitmap_of(int h, int w, std::initializer_list<int> px) {
    Bitmap b = make_bitmap(h, w);
    std::size_t i = 0;
    for (int v : px) b.px[i++] = static_cast<std::uint8_t>(v);
    return b;
}

}  // namespace

TEST_CASE("rle encoding format") {
    SUBCASE("zeros-first alternation") {
        const BinaryMask m = encode_rle(bitmap_of(1, 4, {0, 1, 1, 0}));
        CHECK(m.runs == std::vector<std::uint32_t>{1, 2, 1});
        CHECK(m.area == 2);
    }
    SUBCASE("all-zero grid") {
        const BinaryMask m = encode_rle(bitmap_of(2, 2, {0, 0, 0, 0}));
        CHECK(m.runs == std::vector<std::uint32_t>{4});
        CHECK(m.area == 0);
    }
    SUBCASE("leading set pixel produces a zero-length first run") {
        const BinaryMask m = encode_rle(bitmap_of(1, 4, {1, 1, 1, 1}));
        CHECK(m.runs == std::vector<std::uint32_t>{0, 4});
        CHECK(m.area == 4);
    }
    SUBCASE("empty grid rejected") {
        Bitmap b;
        CHECK_THROWS_AS(encode_rle(b), ShapeError);
    }
}

TEST_CASE("rle decoding") {
    SUBCASE("inverse of the encode example") {
        BinaryMask m{1, 4, {1, 2, 1}, 2};
        const Bitmap g = decode_rle(m);
        CHECK(g.px == std::vector<std::uint8_t>{0, 1, 1, 0});
    }
    SUBCASE("leading zero-length run permitted") {
        BinaryMask m{1, 4, {0, 4}, 4};
        CHECK(decode_rle(m).px == std::vector<std::uint8_t>{1, 1, 1, 1});
    }
    SUBCASE("runs must sum to H*W") {
        BinaryMask m{1, 4, {3}, 0};
        CHECK_THROWS_AS(decode_rle(m), ValueError);
    }
    SUBCASE("area field must match the decoded popcount") {
        BinaryMask m{1, 4, {1, 2, 1}, 3};
        CHECK_THROWS_AS(decode_rle(m), ValueError);
    }
    SUBCASE("interior zero-length run rejected") {
        BinaryMask m{1, 4, {1, 0, 3}, 0};
        CHECK_THROWS_AS(decode_rle(m), ValueError);
    }
}

TEST_CASE("rle round trip on random grids") {
    std::mt19937 rng(101);
    std::uniform_int_distribution<int> coin(0, 1);
    for (int i = 0; i < 1000; ++i) {
        Bitmap g = make_bitmap(16, 16);
        for (auto& v : g.px) v = static_cast<std::uint8_t>(coin(rng));
        const BinaryMask m = encode_rle(g);
        const Bitmap back = decode_rle(m);
        REQUIRE(back.px == g.px);
        std::uint64_t pop = 0;
        for (auto v : g.px) pop += v;
        REQUIRE(m.area == pop);
    }
}

TEST_CASE("mask set serialization preserves order") {
    std::mt19937 rng(7);
    std::uniform_int_distribution<int> coin(0, 1);
    MaskSet set;
    set.height = 8;
    set.width = 8;
    for (int k = 0; k < 5; ++k) {
        Bitmap g = make_bitmap(8, 8);
        for (auto& v : g.px) v = static_cast<std::uint8_t>(coin(rng));
        set.masks.push_back(encode_rle(g));
    }

    const auto dir = std::filesystem::temp_directory_path() / "segalign_rle_tests";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "masks.json").string();
    save_mask_set(set, path);
    const MaskSet back = load_mask_set(path);

    REQUIRE(back.masks.size() == set.masks.size());
    CHECK(back.height == set.height);
    CHECK(back.width == set.width);
    for (std::size_t k = 0; k < set.masks.size(); ++k) {
        CHECK(back.masks[k].runs == set.masks[k].runs);
        CHECK(back.masks[k].area == set.masks[k].area);
    }
}

TEST_CASE("mask set json validates runs") {
    nlohmann::json j{{"height", 2},
                     {"width", 2},
                     {"masks", {{{"runs", {1, 1}}, {"area", 1}}}}};  // sums to 2, not 4
    CHECK_THROWS_AS(mask_set_from_json(j), ValueError);
}
