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

// Manifest-driven batch drivers behind the CLI subcommands. Images are
// independent tasks distributed to a bounded worker pool; every shared
// result (stats, confusion matrices, accumulators) is reduced in manifest
// order by the calling thread, so outputs are byte-identical regardless of
// worker count.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "segalign/contrastive.hpp"
#include "segalign/error.hpp"
#include "segalign/image.hpp"
#include "segalign/losses.hpp"
#include "segalign/manifest.hpp"
#include "segalign/mask_filter.hpp"
#include "segalign/metrics.hpp"
#include "segalign/npy.hpp"
#include "segalign/prompts.hpp"
#include "segalign/prototypes.hpp"
#include "segalign/pseudo_label.hpp"
#include "segalign/rle.hpp"
#include "segalign/seeds.hpp"

namespace segalign {

// ---------------------------------------------------------------------------
// Logging: one JSON object per event on stderr, level gated by the
// SEGALIGN_LOG_LEVEL environment variable (debug|info|warn|error).
// ---------------------------------------------------------------------------

enum class LogLevel : int { Debug = 0, Info = 1, Warn = 2, Err = 3 };

namespace detail {

inline LogLevel env_log_level() {
    const char* v = std::getenv("SEGALIGN_LOG_LEVEL");
    if (!v) return LogLevel::Info;
    const std::string s(v);
    if (s == "debug") return LogLevel::Debug;
    if (s == "warn" || s == "warning") return LogLevel::Warn;
    if (s == "error") return LogLevel::Err;
    return LogLevel::Info;
}

inline std::mutex& log_mutex() {
    static std::mutex m;
    return m;
}

inline const char* level_name(LogLevel l) {
    switch (l) {
        case LogLevel::Debug: return "debug";
        case LogLevel::Info: return "info";
        case LogLevel::Warn: return "warn";
        case LogLevel::Err: return "error";
    }
    return "?";
}

}  // namespace detail

inline void log_event(LogLevel lvl, const std::string& event, nlohmann::json fields = nlohmann::json::object()) {
    static const LogLevel threshold = detail::env_log_level();
    if (static_cast<int>(lvl) < static_cast<int>(threshold)) return;
    fields["level"] = detail::level_name(lvl);
    fields["event"] = event;
    std::lock_guard<std::mutex> lock(detail::log_mutex());
    std::fprintf(stderr, "%s\n", fields.dump().c_str());
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct PipelineConfig {
    double tau = 0.968;
    double tau_prime = 0.99;
    double temperature = 0.1;
    double lambda = 0.1;
    double alpha = 0.99;
    SeedsParams seeds;                // levels == 0 means auto-fit per image
    bool normalize_projected = true;
    bool allow_absent = false;
    bool snap_prompts = false;
    bool save_superpixels = false;
    bool strict_order = true;
    int num_classes = 19;
    std::vector<int> class_subset;    // empty = all classes
    int workers = 1;
    std::string out_dir = ".";
    bool force = false;
    std::string prompts_dir;          // stats: where <stem>.prompts.json live
    std::string pred_dir;             // eval: where predicted label maps live
    std::string pred_suffix = ".labels.png";
    // Treat prediction pixels holding the ignore value as skipped instead of
    // erroring; used when scoring refined pseudo-labels, which legitimately
    // leave low-confidence pixels unlabeled.
    bool eval_skip_unlabeled_pred = false;
    double probmap_tolerance = 1e-4;

    AlignConfig align() const {
        return AlignConfig{temperature, lambda, normalize_projected, allow_absent};
    }
    RefineParams refine_params() const { return RefineParams{tau, tau_prime}; }
    std::vector<int> subset_or_all() const {
        return class_subset.empty() ? full_class_subset(num_classes) : class_subset;
    }
};

inline void apply_config_json(PipelineConfig& cfg, const nlohmann::json& j) {
    cfg.tau = j.value("tau", cfg.tau);
    cfg.tau_prime = j.value("tau_prime", cfg.tau_prime);
    cfg.temperature = j.value("temperature", cfg.temperature);
    cfg.lambda = j.value("lambda", cfg.lambda);
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.seeds.num_superpixels = j.value("num_superpixels", cfg.seeds.num_superpixels);
    cfg.seeds.levels = j.value("levels", cfg.seeds.levels);
    cfg.seeds.bins_per_channel = j.value("bins_per_channel", cfg.seeds.bins_per_channel);
    cfg.seeds.iterations = j.value("iterations", cfg.seeds.iterations);
    cfg.seeds.smoothing_prior = j.value("smoothing_prior", cfg.seeds.smoothing_prior);
    cfg.normalize_projected = j.value("normalize_projected", cfg.normalize_projected);
    cfg.allow_absent = j.value("allow_absent", cfg.allow_absent);
    cfg.snap_prompts = j.value("snap_prompts", cfg.snap_prompts);
    cfg.save_superpixels = j.value("save_superpixels", cfg.save_superpixels);
    cfg.strict_order = j.value("strict_order", cfg.strict_order);
    cfg.num_classes = j.value("num_classes", cfg.num_classes);
    if (j.contains("class_subset")) cfg.class_subset = j.at("class_subset").get<std::vector<int>>();
    cfg.workers = j.value("workers", cfg.workers);
    cfg.out_dir = j.value("out", cfg.out_dir);
    cfg.prompts_dir = j.value("prompts_dir", cfg.prompts_dir);
    cfg.pred_dir = j.value("pred_dir", cfg.pred_dir);
    cfg.pred_suffix = j.value("pred_suffix", cfg.pred_suffix);
    cfg.eval_skip_unlabeled_pred = j.value("skip_unlabeled_pred", cfg.eval_skip_unlabeled_pred);
}

inline void load_config_file(PipelineConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad config JSON " + path + ": " + e.what());
    }
    apply_config_json(cfg, j);
}

// ---------------------------------------------------------------------------
// Record scheduling
// ---------------------------------------------------------------------------

struct RecordResult {
    std::size_t index = 0;
    std::string stem;
    bool ok = false;
    bool skipped = false;
    std::string error;
};

struct CommandOutcome {
    std::vector<RecordResult> records;

    bool all_ok() const {
        for (const RecordResult& r : records) {
            if (!r.ok) return false;
        }
        return true;
    }
    std::size_t failures() const {
        std::size_t n = 0;
        for (const RecordResult& r : records) n += !r.ok;
        return n;
    }
};

namespace detail {

template <typename Fn>
inline std::vector<RecordResult> run_records(const Manifest& manifest, int workers, Fn&& fn) {
    std::vector<RecordResult> results(manifest.size());
    if (manifest.empty()) {
        log_event(LogLevel::Warn, "empty_manifest");
        return results;
    }
    std::atomic<std::size_t> next{0};
    const auto work = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= manifest.size()) break;
            RecordResult& r = results[i];
            r.index = i;
            r.stem = manifest[i].stem();
            try {
                fn(i, manifest[i], r);
                r.ok = true;
                log_event(LogLevel::Info, r.skipped ? "image_skipped" : "image_done",
                          {{"image", r.stem}});
            } catch (const std::exception& e) {
                r.ok = false;
                r.error = e.what();
                log_event(LogLevel::Err, "image_failed", {{"image", r.stem}, {"error", r.error}});
            }
        }
    };
    const int n = std::clamp(workers, 1, 256);
    if (n == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n));
        for (int t = 0; t < n; ++t) pool.emplace_back(work);
        for (std::thread& t : pool) t.join();
    }
    return results;
}

inline void require_path(const std::string& path, const char* what) {
    if (path.empty()) throw ValueError(std::string("manifest record has no ") + what + " path");
    if (!std::filesystem::exists(path)) {
        throw IoError(std::string(what) + " file missing: " + path);
    }
}

/// True when every output exists and none is older than any input.
inline bool outputs_fresh(const std::vector<std::string>& inputs,
                          const std::vector<std::string>& outputs) {
    namespace fs = std::filesystem;
    fs::file_time_type newest_in = fs::file_time_type::min();
    for (const std::string& p : inputs) {
        if (p.empty()) continue;
        std::error_code ec;
        const auto t = fs::last_write_time(p, ec);
        if (ec) return false;
        newest_in = std::max(newest_in, t);
    }
    for (const std::string& p : outputs) {
        std::error_code ec;
        const auto t = fs::last_write_time(p, ec);
        if (ec) return false;  // missing output
        if (t < newest_in) return false;
    }
    return true;
}

inline std::string join_out(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

inline void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
}

inline SeedsParams seeds_for_image(const PipelineConfig& cfg, int width, int height) {
    SeedsParams p = cfg.seeds;
    if (p.levels == 0) p.levels = pick_levels(p.num_superpixels, width, height);
    return p;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// prompts: image -> superpixels -> normalized median-center point prompts
// ---------------------------------------------------------------------------

struct PromptsOutcome : CommandOutcome {
    std::vector<std::int64_t> prompt_counts;  // -1 where the record failed
};

inline PromptsOutcome cmd_prompts(const Manifest& manifest, const PipelineConfig& cfg) {
    detail::ensure_out_dir(cfg.out_dir);
    PromptsOutcome out;
    out.prompt_counts.assign(manifest.size(), -1);

    out.records = detail::run_records(manifest, cfg.workers, [&](std::size_t i, const ImageRecord& rec,
                                                                 RecordResult& r) {
        detail::require_path(rec.image, "image");
        const std::string prompt_path = detail::join_out(cfg.out_dir, r.stem + ".prompts.json");
        const std::string sp_path = detail::join_out(cfg.out_dir, r.stem + ".superpixels.png");

        std::vector<std::string> outputs = {prompt_path};
        if (cfg.save_superpixels) outputs.push_back(sp_path);
        if (!cfg.force && detail::outputs_fresh({rec.image}, outputs)) {
            out.prompt_counts[i] =
                static_cast<std::int64_t>(load_prompts(prompt_path).points.size());
            r.skipped = true;
            return;
        }

        const RgbImage img = read_png_rgb8(rec.image);
        const SeedsParams params = detail::seeds_for_image(cfg, img.width, img.height);
        const SuperpixelMap sp = seeds_partition(img, params);
        const auto centers = region_centers(sp, cfg.snap_prompts);
        const PointPromptSet prompts = normalize_prompts(centers, img.width, img.height);
        save_prompts(prompts, prompt_path);
        if (cfg.save_superpixels) save_superpixel_map(sp, sp_path);
        out.prompt_counts[i] = static_cast<std::int64_t>(prompts.points.size());
        log_event(LogLevel::Info, "prompts_written",
                  {{"image", r.stem}, {"prompts", prompts.points.size()}, {"regions", sp.count}});
    });
    return out;
}

// ---------------------------------------------------------------------------
// filter: candidate masks -> overlap filter -> mask-ID map
// ---------------------------------------------------------------------------

struct FilterOutcome : CommandOutcome {};

inline FilterOutcome cmd_filter(const Manifest& manifest, const PipelineConfig& cfg) {
    detail::ensure_out_dir(cfg.out_dir);
    FilterOutcome out;
    out.records = detail::run_records(manifest, cfg.workers, [&](std::size_t, const ImageRecord& rec,
                                                                 RecordResult& r) {
        detail::require_path(rec.masks, "masks");
        const std::string filtered_path = detail::join_out(cfg.out_dir, r.stem + ".filtered.json");
        const std::string idmap_path = detail::join_out(cfg.out_dir, r.stem + ".maskid.png");
        if (!cfg.force && detail::outputs_fresh({rec.masks}, {filtered_path, idmap_path})) {
            r.skipped = true;
            return;
        }

        const MaskSet candidates = load_mask_set(rec.masks);
        const FilteredMaskSet filtered = overlap_filter(candidates);
        const MaskIdMap idmap = build_mask_id_map(filtered, candidates.height, candidates.width);

        MaskSet trimmed;
        trimmed.height = filtered.height;
        trimmed.width = filtered.width;
        trimmed.masks = filtered.masks;
        save_mask_set(trimmed, filtered_path);
        save_mask_id_map(idmap, idmap_path);
        log_event(LogLevel::Info, "masks_filtered",
                  {{"image", r.stem},
                   {"candidates", candidates.masks.size()},
                   {"retained", filtered.masks.size()}});
    });
    return out;
}

// ---------------------------------------------------------------------------
// refine: probmap + masks -> refined label map + provenance + stats
// ---------------------------------------------------------------------------

struct RefineOutcome : CommandOutcome {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> gains;  // labeled pixels before/after
};

// Stats record: one {before, after} entry per class id, plus the totals.
inline nlohmann::json refine_stats_to_json(const RefineStats& stats) {
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t c = 0; c < stats.per_class.size(); ++c) {
        const ClassDelta& d = stats.per_class[c];
        if (d.before == 0 && d.after == 0) continue;
        j[std::to_string(c)] = {{"before", d.before}, {"after", d.after}};
    }
    j["total"] = {{"before", stats.total_before()}, {"after", stats.total_after()}};
    return j;
}

inline RefineOutcome cmd_refine(const Manifest& manifest, const PipelineConfig& cfg) {
    detail::ensure_out_dir(cfg.out_dir);
    validate_refine_params(cfg.refine_params());
    RefineOutcome out;
    out.gains.assign(manifest.size(), {0, 0});

    out.records = detail::run_records(manifest, cfg.workers, [&](std::size_t i, const ImageRecord& rec,
                                                                 RecordResult& r) {
        detail::require_path(rec.probmap, "probmap");
        detail::require_path(rec.masks, "masks");
        const std::string labels_path = detail::join_out(cfg.out_dir, r.stem + ".labels.png");
        const std::string prov_path = detail::join_out(cfg.out_dir, r.stem + ".provenance.png");
        const std::string stats_path = detail::join_out(cfg.out_dir, r.stem + ".stats.json");
        if (!cfg.force &&
            detail::outputs_fresh({rec.probmap, rec.masks}, {labels_path, prov_path, stats_path})) {
            std::ifstream in(stats_path);
            nlohmann::json j;
            in >> j;
            out.gains[i] = {j.at("total").at("before").get<std::uint64_t>(),
                            j.at("total").at("after").get<std::uint64_t>()};
            r.skipped = true;
            return;
        }

        const ProbMap prob = load_probmap(rec.probmap, cfg.probmap_tolerance);
        if (prob.classes > cfg.num_classes) {
            throw ValueError("probmap has " + std::to_string(prob.classes) +
                             " classes, config allows " + std::to_string(cfg.num_classes));
        }
        const MaskSet candidates = load_mask_set(rec.masks);
        if (candidates.height != prob.height || candidates.width != prob.width) {
            throw ShapeError("mask set and probability map dimensions differ");
        }
        const FilteredMaskSet filtered = overlap_filter(candidates);
        const MaskIdMap idmap = build_mask_id_map(filtered, prob.height, prob.width);
        const RefinedLabels refined = refine(prob, idmap, cfg.refine_params());

        save_label_map(refined.labels, labels_path);
        write_png_gray8(prov_path, prob.height, prob.width, refined.provenance);
        std::ofstream sf(stats_path, std::ios::trunc);
        if (!sf) throw IoError("cannot open " + stats_path + " for writing");
        sf << refine_stats_to_json(refined.stats).dump(2) << "\n";

        out.gains[i] = {refined.stats.total_before(), refined.stats.total_after()};
        log_event(LogLevel::Info, "labels_refined",
                  {{"image", r.stem},
                   {"before", out.gains[i].first},
                   {"after", out.gains[i].second}});
    });

    // Aggregate CSV of labeled-pixel gains, manifest order.
    const std::string csv_path = detail::join_out(cfg.out_dir, "refine_stats.csv");
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw IoError("cannot open " + csv_path + " for writing");
    csv << "image,before,after,gain\n";
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        if (!out.records[i].ok) continue;
        const auto [before, after] = out.gains[i];
        csv << out.records[i].stem << "," << before << "," << after << ","
            << (after >= before ? after - before : 0) << "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// prototypes: features + labels -> class prototype bank
// ---------------------------------------------------------------------------

struct PrototypesOutcome : CommandOutcome {
    PrototypeBank bank;
    bool bank_built = false;
    std::vector<int> absent_classes;
};

inline PrototypesOutcome cmd_prototypes(const Manifest& manifest, const PipelineConfig& cfg) {
    detail::ensure_out_dir(cfg.out_dir);
    PrototypesOutcome out;

    std::vector<std::optional<PrototypeAccumulator>> parts(manifest.size());
    std::mutex reduce_mutex;
    PrototypeAccumulator rolling;  // used when strict_order is off
    bool rolling_init = false;
    int feature_dim = -1;
    std::mutex dim_mutex;

    out.records = detail::run_records(manifest, cfg.workers, [&](std::size_t i, const ImageRecord& rec,
                                                                 RecordResult& r) {
        detail::require_path(rec.features, "features");
        detail::require_path(rec.labels, "labels");
        const DenseTensor features = load_tensor(rec.features);
        if (features.rank() != 3) throw ShapeError("features must be H x W x C");
        LabelMap labels = load_label_map(rec.labels);
        validate_labels(labels, cfg.num_classes);
        const int fh = static_cast<int>(features.dim(0));
        const int fw = static_cast<int>(features.dim(1));
        if (labels.height != fh || labels.width != fw) {
            labels = downsample_labels(labels, fh, fw);
        }
        {
            std::lock_guard<std::mutex> lock(dim_mutex);
            const int fc = static_cast<int>(features.dim(2));
            if (feature_dim == -1) feature_dim = fc;
            if (feature_dim != fc) {
                throw ShapeError("feature dimension " + std::to_string(fc) +
                                 " differs from earlier images (" + std::to_string(feature_dim) + ")");
            }
        }
        PrototypeAccumulator acc(cfg.num_classes, static_cast<int>(features.dim(2)));
        accumulate_prototypes(acc, features, labels);
        if (cfg.strict_order) {
            parts[i] = std::move(acc);
        } else {
            std::lock_guard<std::mutex> lock(reduce_mutex);
            if (!rolling_init) {
                rolling = std::move(acc);
                rolling_init = true;
            } else {
                merge_accumulators(rolling, acc);
            }
        }
        log_event(LogLevel::Debug, "prototypes_accumulated", {{"image", r.stem}});
    });

    PrototypeAccumulator total;
    bool total_init = false;
    if (cfg.strict_order) {
        for (std::size_t i = 0; i < parts.size(); ++i) {
            if (!parts[i].has_value()) continue;
            if (!total_init) {
                total = std::move(*parts[i]);
                total_init = true;
            } else {
                merge_accumulators(total, *parts[i]);
            }
        }
    } else {
        total = std::move(rolling);
        total_init = rolling_init;
    }
    if (!total_init) {
        log_event(LogLevel::Err, "prototypes_no_input");
        return out;
    }

    out.bank = finalize_prototypes(total);
    out.bank_built = true;
    for (int c = 0; c < out.bank.num_classes; ++c) {
        if (!out.bank.present[static_cast<std::size_t>(c)]) out.absent_classes.push_back(c);
    }
    save_prototype_bank(out.bank, detail::join_out(cfg.out_dir, "prototypes.npy"),
                        detail::join_out(cfg.out_dir, "prototypes.json"), cfg.temperature,
                        cfg.normalize_projected);
    log_event(LogLevel::Info, "prototypes_written",
              {{"classes", out.bank.num_classes}, {"absent", out.absent_classes.size()}});
    if (!out.absent_classes.empty() && !cfg.allow_absent) {
        std::string names;
        for (int c : out.absent_classes) {
            if (!names.empty()) names += ",";
            names += std::to_string(c);
        }
        log_event(LogLevel::Err, "prototypes_absent_classes", {{"classes", names}});
        throw ValueError("classes never observed: " + names + " (use --allow-absent to accept)");
    }
    return out;
}

// ---------------------------------------------------------------------------
// proto-loss: features (+ optional head) vs bank -> contrastive loss
// ---------------------------------------------------------------------------

struct ProtoLossOutcome : CommandOutcome {
    double loss = 0.0;               // pixel-weighted aggregate
    std::uint64_t pixels = 0;
    std::vector<double> per_image;   // per-image mean loss; NaN where failed
};

inline ProtoLossOutcome cmd_proto_loss(const Manifest& manifest, const PipelineConfig& cfg,
                                       const std::string& bank_path, const std::string& sidecar_path,
                                       const std::string& head_weight_path,
                                       const std::string& head_bias_path,
                                       const std::string& grad_out_dir = "") {
    detail::ensure_out_dir(cfg.out_dir);
    const PrototypeBank bank = load_prototype_bank(bank_path, sidecar_path);
    std::optional<ProjectionHead> head;
    if (!head_weight_path.empty() || !head_bias_path.empty()) {
        if (head_weight_path.empty() || head_bias_path.empty()) {
            throw ValueError("projection head needs both --head-weight and --head-bias");
        }
        const DenseTensor w = load_tensor(head_weight_path);
        const DenseTensor b = load_tensor(head_bias_path);
        if (w.rank() != 2 || w.dtype() != Dtype::Float32) {
            throw IoError("head weight must be a C_in x C_out float32 tensor");
        }
        if (b.rank() != 1 || b.dtype() != Dtype::Float32 || b.dim(0) != w.dim(1)) {
            throw IoError("head bias must be a float32 vector matching the weight output dim");
        }
        ProjectionHead h;
        h.in_channels = static_cast<int>(w.dim(0));
        h.out_channels = static_cast<int>(w.dim(1));
        h.weight.assign(w.values<float>().begin(), w.values<float>().end());
        h.bias.assign(b.values<float>().begin(), b.values<float>().end());
        validate_projection_head(h);
        head = std::move(h);
    }
    if (!grad_out_dir.empty()) detail::ensure_out_dir(grad_out_dir);

    ProtoLossOutcome out;
    out.per_image.assign(manifest.size(), std::numeric_limits<double>::quiet_NaN());
    std::vector<std::uint64_t> per_pixels(manifest.size(), 0);

    out.records = detail::run_records(manifest, cfg.workers, [&](std::size_t i, const ImageRecord& rec,
                                                                 RecordResult& r) {
        detail::require_path(rec.features, "features");
        detail::require_path(rec.labels, "labels");
        DenseTensor z = load_tensor(rec.features);
        if (z.rank() != 3) throw ShapeError("features must be H x W x C");
        if (head.has_value()) z = project(z, *head);
        LabelMap labels = load_label_map(rec.labels);
        validate_labels(labels, bank.num_classes);
        const int fh = static_cast<int>(z.dim(0));
        const int fw = static_cast<int>(z.dim(1));
        if (labels.height != fh || labels.width != fw) {
            labels = downsample_labels(labels, fh, fw);
        }
        const AlignConfig ac = cfg.align();
        const DenseTensor sims = similarity(z, bank, ac);
        out.per_image[i] = proto_loss(sims, labels);
        std::uint64_t n = 0;
        for (std::uint8_t y : labels.labels) n += (y != kIgnoreLabel);
        per_pixels[i] = n;
        if (!grad_out_dir.empty()) {
            const DenseTensor grad = proto_loss_grad(z, bank, labels, ac);
            save_tensor(grad, detail::join_out(grad_out_dir, r.stem + ".grad.npy"));
        }
        log_event(LogLevel::Info, "proto_loss",
                  {{"image", r.stem}, {"loss", out.per_image[i]}, {"pixels", n}});
    });

    double weighted = 0.0;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        if (!out.records[i].ok) continue;
        weighted += out.per_image[i] * static_cast<double>(per_pixels[i]);
        out.pixels += per_pixels[i];
    }
    out.loss = out.pixels > 0 ? weighted / static_cast<double>(out.pixels) : 0.0;

    nlohmann::json report;
    report["loss"] = out.loss;
    report["pixels"] = out.pixels;
    report["lambda"] = cfg.lambda;
    report["temperature"] = cfg.temperature;
    report["normalize_projected"] = cfg.normalize_projected;
    nlohmann::json per = nlohmann::json::array();
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        if (!out.records[i].ok) continue;
        per.push_back({{"image", out.records[i].stem},
                       {"loss", out.per_image[i]},
                       {"pixels", per_pixels[i]}});
    }
    report["images"] = per;
    const std::string report_path = detail::join_out(cfg.out_dir, "proto_loss.json");
    std::ofstream rf(report_path, std::ios::trunc);
    if (!rf) throw IoError("cannot open " + report_path + " for writing");
    rf << report.dump(2) << "\n";
    return out;
}

// ---------------------------------------------------------------------------
// eval: predictions vs ground truth -> per-class IoU / mIoU
// ---------------------------------------------------------------------------

struct EvalOutcome : CommandOutcome {
    ConfusionMatrix cm;
    IoUReport report;
};

inline EvalOutcome cmd_eval(const Manifest& manifest, const PipelineConfig& cfg) {
    detail::ensure_out_dir(cfg.out_dir);
    if (cfg.pred_dir.empty()) throw ValueError("eval requires --pred-dir");
    EvalOutcome out;
    out.cm = make_confusion(cfg.num_classes);
    std::vector<std::optional<ConfusionMatrix>> parts(manifest.size());

    out.records = detail::run_records(manifest, cfg.workers, [&](std::size_t i, const ImageRecord& rec,
                                                                 RecordResult& r) {
        detail::require_path(rec.labels, "labels");
        const std::string pred_path = detail::join_out(cfg.pred_dir, r.stem + cfg.pred_suffix);
        detail::require_path(pred_path, "prediction");
        LabelMap gt = load_label_map(rec.labels);
        const LabelMap pred = load_label_map(pred_path);
        if (cfg.eval_skip_unlabeled_pred) {
            if (pred.height != gt.height || pred.width != gt.width) {
                throw ShapeError("prediction and ground-truth dimensions differ");
            }
            for (std::size_t p = 0; p < gt.labels.size(); ++p) {
                if (pred.labels[p] == kIgnoreLabel) gt.labels[p] = kIgnoreLabel;
            }
        }
        parts[i] = confusion(pred, gt, cfg.num_classes);
    });

    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (parts[i].has_value()) merge(out.cm, *parts[i]);
    }
    const std::vector<int> subset = cfg.subset_or_all();
    out.report = iou_report(out.cm, subset);

    nlohmann::json j = iou_report_to_json(out.report);
    j["ignored_pixels"] = out.cm.ignored;
    j["num_classes"] = cfg.num_classes;
    const std::string report_path = detail::join_out(cfg.out_dir, "eval.json");
    std::ofstream rf(report_path, std::ios::trunc);
    if (!rf) throw IoError("cannot open " + report_path + " for writing");
    rf << j.dump(2) << "\n";
    return out;
}

// ---------------------------------------------------------------------------
// stats: masks (+ prompt files) -> per-image coverage + aggregate CSV
// ---------------------------------------------------------------------------

struct StatsOutcome : CommandOutcome {
    std::vector<CoverageStats> per_image;
};

inline StatsOutcome cmd_stats(const Manifest& manifest, const PipelineConfig& cfg) {
    detail::ensure_out_dir(cfg.out_dir);
    StatsOutcome out;
    out.per_image.assign(manifest.size(), CoverageStats{});

    out.records = detail::run_records(manifest, cfg.workers, [&](std::size_t i, const ImageRecord& rec,
                                                                 RecordResult& r) {
        detail::require_path(rec.masks, "masks");
        const MaskSet candidates = load_mask_set(rec.masks);
        const FilteredMaskSet filtered = overlap_filter(candidates);
        const MaskIdMap idmap = build_mask_id_map(filtered, candidates.height, candidates.width);

        std::int64_t prompt_count = 0;
        if (!cfg.prompts_dir.empty()) {
            const std::string pp = detail::join_out(cfg.prompts_dir, r.stem + ".prompts.json");
            if (std::filesystem::exists(pp)) {
                prompt_count = static_cast<std::int64_t>(load_prompts(pp).points.size());
            } else {
                log_event(LogLevel::Warn, "prompts_missing", {{"image", r.stem}, {"path", pp}});
            }
        }
        const CoverageStats st = coverage_stats(idmap, prompt_count);
        out.per_image[i] = st;

        nlohmann::json j{{"image", r.stem},
                         {"prompts", st.prompt_count},
                         {"masks", st.mask_count},
                         {"covered_pixels", st.covered_pixels},
                         {"coverage", st.coverage}};
        const std::string jpath = detail::join_out(cfg.out_dir, r.stem + ".coverage.json");
        std::ofstream jf(jpath, std::ios::trunc);
        if (!jf) throw IoError("cannot open " + jpath + " for writing");
        jf << j.dump(2) << "\n";
    });

    const std::string csv_path = detail::join_out(cfg.out_dir, "coverage.csv");
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw IoError("cannot open " + csv_path + " for writing");
    csv << "image,prompts,masks,coverage\n";
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        if (!out.records[i].ok) continue;
        const CoverageStats& st = out.per_image[i];
        csv << out.records[i].stem << ", " << st.prompt_count << ", "
            << format_coverage_cell(st.mask_count, st.coverage) << "\n";
    }
    return out;
}

}  // namespace segalign
