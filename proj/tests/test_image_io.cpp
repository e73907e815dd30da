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

#include "segalign/image.hpp"
#include "segalign/manifest.hpp"
#include "segalign/png_io.hpp"

using namespace segalign;

namespace {

std::filesystem::path temp_dir() {
    auto d = std::filesystem::temp_directory_path() / "segalign_image_tests";
    std::filesystem::create_directories(d);
    return d;
}

ProbMap probmap_of(int h, int w, int c, const std::vector<float>& vals) {
    return probmap_from_tensor(DenseTensor::from_values(
        {static_cast<std::size_t>(h), static_cast<std::size_t>(w), static_cast<std::size_t>(c)},
        vals));
}

}  // namespace

TEST_CASE("label map png round trip preserves every id including ignore") {
    LabelMap m = make_label_map(2, 3);
    m.labels = {0, 1, 2, 254, 255, 7};
    const auto path = (temp_dir() / "labels.png").string();
    save_label_map(m, path);
    const LabelMap back = load_label_map(path);
    CHECK(back.height == 2);
    CHECK(back.width == 3);
    CHECK(back.labels == m.labels);
}

TEST_CASE("gray16 png round trip") {
    std::mt19937 rng(3);
    std::uniform_int_distribution<int> d(0, 0xFFFF);
    std::vector<std::uint16_t> px(5 * 4);
    for (auto& v : px) v = static_cast<std::uint16_t>(d(rng));
    const auto path = (temp_dir() / "g16.png").string();
    write_png_gray16(path, 5, 4, px);
    int h = 0, w = 0;
    CHECK(read_png_gray16(path, h, w) == px);
    CHECK(h == 5);
    CHECK(w == 4);

    // A 16-bit file is not acceptable where an 8-bit label map is expected.
    CHECK_THROWS_AS(read_png_gray8(path, h, w), IoError);
}

TEST_CASE("rgb png round trip") {
    RgbImage img;
    img.height = 3;
    img.width = 2;
    img.px = {255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 20, 30, 0, 0, 0, 255, 255, 255};
    const auto path = (temp_dir() / "rgb.png").string();
    write_png_rgb8(path, img);
    const RgbImage back = read_png_rgb8(path);
    CHECK(back.height == img.height);
    CHECK(back.width == img.width);
    CHECK(back.px == img.px);
}

TEST_CASE("validate_probmap") {
    SUBCASE("uniform three-class map is valid") {
        const float t = 1.0f / 3.0f;
        const ProbMap p = probmap_of(1, 1, 3, {t, t, t});
        CHECK_NOTHROW(validate_probmap(p, 1e-4));
    }
    SUBCASE("non-normalized pixel reported") {
        const ProbMap p = probmap_of(1, 1, 2, {0.5f, 0.6f});
        CHECK_THROWS_WITH_AS(validate_probmap(p, 1e-4), doctest::Contains("(0,0)"), ValueError);
    }
    SUBCASE("out-of-range entry") {
        const ProbMap p = probmap_of(1, 1, 2, {1.00004f, -0.00004f});
        CHECK_THROWS_WITH_AS(validate_probmap(p, 1e-3), doctest::Contains("out of range"), ValueError);
    }
}

TEST_CASE("mask id map png round trip validates density") {
    MaskIdMap m = make_mask_id_map(2, 2);
    m.ids = {1, 1, 0, 2};
    m.count = 2;
    const auto path = (temp_dir() / "ids.png").string();
    save_mask_id_map(m, path);
    const MaskIdMap back = load_mask_id_map(path);
    CHECK(back.count == 2);
    CHECK(back.ids == m.ids);

    MaskIdMap sparse = make_mask_id_map(1, 2);
    sparse.ids = {0, 3};  // ids 1 and 2 unused
    sparse.count = 3;
    const auto bad = (temp_dir() / "sparse.png").string();
    save_mask_id_map(sparse, bad);
    CHECK_THROWS_AS(load_mask_id_map(bad), ValueError);
}

TEST_CASE("manifest records and stems") {
    const auto dir = temp_dir();
    Manifest m;
    ImageRecord r;
    r.probmap = "/data/frames/frame_001.npy";
    m.push_back(r);
    ImageRecord r2;
    r2.image = "/data/img/a.png";
    r2.labels = "/data/gt/a_gt.png";
    m.push_back(r2);

    const auto path = (dir / "manifest.json").string();
    save_manifest(m, path);
    const Manifest back = load_manifest(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].stem() == "frame_001");
    CHECK(back[1].stem() == "a");
    CHECK(back[1].labels == "/data/gt/a_gt.png");
}
