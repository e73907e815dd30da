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

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "segalign/error.hpp"

namespace segalign {

/// One manifest entry. Each path is optional per pipeline stage; a stage
/// that needs a missing path reports a per-image error.
struct ImageRecord {
    std::string image;
    std::string probmap;
    std::string masks;
    std::string features;
    std::string labels;

    /// Basename (no extension) of the first populated path; used to name
    /// per-image outputs.
    std::string stem() const {
        for (const std::string* p : {&image, &probmap, &masks, &features, &labels}) {
            if (!p->empty()) return std::filesystem::path(*p).stem().string();
        }
        return {};
    }
};

using Manifest = std::vector<ImageRecord>;

inline Manifest manifest_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw ValueError("manifest must be a JSON array");
    Manifest m;
    for (const auto& rec : j) {
        ImageRecord r;
        r.image = rec.value("image", "");
        r.probmap = rec.value("probmap", "");
        r.masks = rec.value("masks", "");
        r.features = rec.value("features", "");
        r.labels = rec.value("labels", "");
        m.push_back(std::move(r));
    }
    return m;
}

inline nlohmann::json manifest_to_json(const Manifest& m) {
    nlohmann::json j = nlohmann::json::array();
    for (const ImageRecord& r : m) {
        nlohmann::json rec = nlohmann::json::object();
        if (!r.image.empty()) rec["image"] = r.image;
        if (!r.probmap.empty()) rec["probmap"] = r.probmap;
        if (!r.masks.empty()) rec["masks"] = r.masks;
        if (!r.features.empty()) rec["features"] = r.features;
        if (!r.labels.empty()) rec["labels"] = r.labels;
        j.push_back(std::move(rec));
    }
    return j;
}

inline Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad manifest JSON " + path + ": " + e.what());
    }
    return manifest_from_json(j);
}

inline void save_manifest(const Manifest& m, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << manifest_to_json(m).dump(2) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace segalign
