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

// Command-line driver: manifest-driven batch processing for superpixel
// prompts, mask filtering, pseudo-label refinement, prototype banks,
// contrastive losses, EMA parameter updates, and IoU evaluation.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "segalign/segalign.hpp"

namespace {

struct CommonArgs {
    std::string manifest;
    std::string config;
    std::string out;
    int workers = 1;
    bool force = false;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool manifest_required = true) {
    auto* m = cmd->add_option("--manifest", a.manifest, "Manifest JSON (array of per-image records)");
    if (manifest_required) m->required();
    cmd->add_option("--config", a.config, "Pipeline config JSON; explicit flags override it");
    cmd->add_option("--out", a.out, "Output directory");
    cmd->add_option("--workers", a.workers, "Worker threads (per-image parallelism)");
    cmd->add_flag("--force", a.force, "Reprocess even when outputs are up to date");
}

segalign::PipelineConfig build_config(const CLI::App* cmd, const CommonArgs& a) {
    segalign::PipelineConfig cfg;
    if (!a.config.empty()) segalign::load_config_file(cfg, a.config);
    if (cmd->count("--out")) cfg.out_dir = a.out;
    if (cmd->count("--workers")) cfg.workers = a.workers;
    if (cmd->count("--force")) cfg.force = a.force;
    return cfg;
}

int summarize(const char* name, const segalign::CommandOutcome& outcome) {
    std::size_t ok = 0, skipped = 0, failed = 0;
    for (const auto& r : outcome.records) {
        if (!r.ok) {
            ++failed;
        } else if (r.skipped) {
            ++skipped;
        } else {
            ++ok;
        }
    }
    std::printf("%s: %zu processed, %zu skipped, %zu failed\n", name, ok, skipped, failed);
    for (const auto& r : outcome.records) {
        if (!r.ok) std::printf("  [failed] %s: %s\n", r.stem.c_str(), r.error.c_str());
    }
    return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"superpixel-prompted mask refinement and prototype alignment toolkit"};
    app.require_subcommand(1);

    // --- prompts ---------------------------------------------------------
    auto* prompts = app.add_subcommand("prompts", "Superpixel-guided point prompts per image");
    CommonArgs pa;
    add_common(prompts, pa);
    int p_k = 0, p_levels = -1, p_bins = 0, p_iters = -1, p_prior = -1;
    bool p_snap = false, p_save_sp = false;
    prompts->add_option("--superpixels", p_k, "Requested superpixel budget K");
    prompts->add_option("--levels", p_levels, "Block hierarchy depth (0 = auto-fit per image)");
    prompts->add_option("--bins", p_bins, "Histogram bins per color channel");
    prompts->add_option("--sp-iterations", p_iters, "Boundary update sweeps per level");
    prompts->add_option("--smoothing-prior", p_prior, "Same-label 3x3 prior exponent");
    prompts->add_flag("--snap-prompts", p_snap, "Snap centers outside their region onto it");
    prompts->add_flag("--save-superpixels", p_save_sp, "Also write <stem>.superpixels.png");

    // --- filter ----------------------------------------------------------
    auto* filter = app.add_subcommand("filter", "Overlap-aware greedy mask filtering");
    CommonArgs fa;
    add_common(filter, fa);

    // --- refine ----------------------------------------------------------
    auto* refine = app.add_subcommand("refine", "Mask-level pseudo-label refinement");
    CommonArgs ra;
    add_common(refine, ra);
    double r_tau = 0, r_tau_prime = 0;
    int r_classes = 0;
    refine->add_option("--tau", r_tau, "Confidence threshold");
    refine->add_option("--tau-prime", r_tau_prime, "Softmax-margin threshold");
    refine->add_option("--classes", r_classes, "Class count");

    // --- prototypes ------------------------------------------------------
    auto* protos = app.add_subcommand("prototypes", "Build the class prototype bank");
    CommonArgs ta;
    add_common(protos, ta);
    int t_classes = 0;
    bool t_allow_absent = false, t_no_strict = false;
    protos->add_option("--classes", t_classes, "Class count");
    protos->add_flag("--allow-absent", t_allow_absent, "Exit 0 even when classes were never observed");
    protos->add_flag("--no-strict-order", t_no_strict,
                     "Merge per-image accumulators in completion order instead of manifest order");

    // --- proto-loss ------------------------------------------------------
    auto* ploss = app.add_subcommand("proto-loss", "Prototype contrastive loss over a manifest");
    CommonArgs la;
    add_common(ploss, la);
    std::string l_bank, l_sidecar, l_head_w, l_head_b, l_grad_out;
    double l_temp = 0;
    bool l_raw = false, l_allow_absent = false;
    ploss->add_option("--bank", l_bank, "Prototype bank tensor (.npy)")->required();
    ploss->add_option("--bank-sidecar", l_sidecar, "Bank sidecar JSON (default: bank with .json)");
    ploss->add_option("--head-weight", l_head_w, "Projection head weight tensor");
    ploss->add_option("--head-bias", l_head_b, "Projection head bias tensor");
    ploss->add_option("--grad-out", l_grad_out, "Directory for per-image dL/dz tensors");
    ploss->add_option("--temperature", l_temp, "Similarity temperature");
    ploss->add_flag("--raw-similarity", l_raw, "Skip l2-normalizing projected features");
    ploss->add_flag("--allow-absent", l_allow_absent, "Exclude absent classes from the softmax");

    // --- ema -------------------------------------------------------------
    auto* ema = app.add_subcommand("ema", "Exponential moving average of two parameter tensors");
    std::string e_teacher, e_student, e_out;
    double e_alpha = 0.99;
    ema->add_option("--teacher", e_teacher, "Teacher parameter tensor (.npy)")->required();
    ema->add_option("--student", e_student, "Student parameter tensor (.npy)")->required();
    ema->add_option("--alpha", e_alpha, "EMA coefficient");
    ema->add_option("--out", e_out, "Output tensor path")->required();

    // --- eval ------------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "Per-class IoU / mIoU against ground truth");
    CommonArgs va;
    add_common(eval, va);
    std::string v_pred_dir, v_pred_suffix, v_row_label = "ours";
    int v_classes = 0;
    std::vector<int> v_subset;
    bool v_subset16 = false, v_skip_unlabeled = false;
    eval->add_option("--pred-dir", v_pred_dir, "Directory holding <stem>.labels.png predictions");
    eval->add_option("--pred-suffix", v_pred_suffix, "Prediction filename suffix");
    eval->add_option("--classes", v_classes, "Class count");
    eval->add_option("--subset", v_subset, "Explicit class subset for the mean");
    eval->add_flag("--subset-16", v_subset16, "Use the 16-class subset (drops terrain/truck/train)");
    eval->add_flag("--skip-unlabeled-pred", v_skip_unlabeled,
                   "Skip pixels the prediction left unlabeled (for scoring refined pseudo-labels)");
    eval->add_option("--row-label", v_row_label, "Method label for the printed row");

    // --- stats -----------------------------------------------------------
    auto* stats = app.add_subcommand("stats", "Prompt/mask/coverage statistics");
    CommonArgs sa;
    add_common(stats, sa);
    std::string s_prompts_dir;
    stats->add_option("--prompts-dir", s_prompts_dir, "Directory holding <stem>.prompts.json");

    CLI11_PARSE(app, argc, argv);

    try {
        if (prompts->parsed()) {
            segalign::PipelineConfig cfg = build_config(prompts, pa);
            if (prompts->count("--superpixels")) cfg.seeds.num_superpixels = p_k;
            if (prompts->count("--levels")) cfg.seeds.levels = p_levels;
            if (prompts->count("--bins")) cfg.seeds.bins_per_channel = p_bins;
            if (prompts->count("--sp-iterations")) cfg.seeds.iterations = p_iters;
            if (prompts->count("--smoothing-prior")) cfg.seeds.smoothing_prior = p_prior;
            if (prompts->count("--snap-prompts")) cfg.snap_prompts = p_snap;
            if (prompts->count("--save-superpixels")) cfg.save_superpixels = p_save_sp;
            const auto outcome = segalign::cmd_prompts(segalign::load_manifest(pa.manifest), cfg);
            return summarize("prompts", outcome);
        }
        if (filter->parsed()) {
            segalign::PipelineConfig cfg = build_config(filter, fa);
            const auto outcome = segalign::cmd_filter(segalign::load_manifest(fa.manifest), cfg);
            return summarize("filter", outcome);
        }
        if (refine->parsed()) {
            segalign::PipelineConfig cfg = build_config(refine, ra);
            if (refine->count("--tau")) cfg.tau = r_tau;
            if (refine->count("--tau-prime")) cfg.tau_prime = r_tau_prime;
            if (refine->count("--classes")) cfg.num_classes = r_classes;
            const auto outcome = segalign::cmd_refine(segalign::load_manifest(ra.manifest), cfg);
            return summarize("refine", outcome);
        }
        if (protos->parsed()) {
            segalign::PipelineConfig cfg = build_config(protos, ta);
            if (protos->count("--classes")) cfg.num_classes = t_classes;
            if (protos->count("--allow-absent")) cfg.allow_absent = t_allow_absent;
            if (protos->count("--no-strict-order")) cfg.strict_order = !t_no_strict;
            const auto outcome = segalign::cmd_prototypes(segalign::load_manifest(ta.manifest), cfg);
            const int rc = summarize("prototypes", outcome);
            if (!outcome.bank_built) return 1;
            if (!outcome.absent_classes.empty()) {
                std::printf("absent classes:");
                for (int c : outcome.absent_classes) std::printf(" %d", c);
                std::printf("\n");
                if (!cfg.allow_absent) return 1;
            }
            return rc;
        }
        if (ploss->parsed()) {
            segalign::PipelineConfig cfg = build_config(ploss, la);
            if (ploss->count("--temperature")) cfg.temperature = l_temp;
            if (ploss->count("--raw-similarity")) cfg.normalize_projected = !l_raw;
            if (ploss->count("--allow-absent")) cfg.allow_absent = l_allow_absent;
            if (l_sidecar.empty()) {
                l_sidecar = std::filesystem::path(l_bank).replace_extension(".json").string();
            }
            const auto outcome = segalign::cmd_proto_loss(segalign::load_manifest(la.manifest), cfg,
                                                          l_bank, l_sidecar, l_head_w, l_head_b,
                                                          l_grad_out);
            const int rc = summarize("proto-loss", outcome);
            std::printf("proto-loss: %.9f over %llu pixels\n", outcome.loss,
                        static_cast<unsigned long long>(outcome.pixels));
            return rc;
        }
        if (ema->parsed()) {
            const segalign::DenseTensor teacher = segalign::load_tensor(e_teacher);
            const segalign::DenseTensor student = segalign::load_tensor(e_student);
            const segalign::DenseTensor updated = segalign::ema_update(teacher, student, e_alpha);
            segalign::save_tensor(updated, e_out);
            std::printf("ema: wrote %s (alpha=%g, %zu parameters)\n", e_out.c_str(), e_alpha,
                        updated.size());
            return 0;
        }
        if (eval->parsed()) {
            segalign::PipelineConfig cfg = build_config(eval, va);
            if (eval->count("--pred-dir")) cfg.pred_dir = v_pred_dir;
            if (eval->count("--pred-suffix")) cfg.pred_suffix = v_pred_suffix;
            if (eval->count("--classes")) cfg.num_classes = v_classes;
            if (eval->count("--subset")) cfg.class_subset = v_subset;
            if (v_subset16) cfg.class_subset = segalign::cityscapes_16_subset();
            if (eval->count("--skip-unlabeled-pred")) cfg.eval_skip_unlabeled_pred = v_skip_unlabeled;
            const auto outcome = segalign::cmd_eval(segalign::load_manifest(va.manifest), cfg);
            const int rc = summarize("eval", outcome);
            std::printf("%s\n",
                        segalign::format_iou_header(cfg.num_classes, segalign::kCityscapesClasses)
                            .c_str());
            std::printf("%s\n",
                        segalign::format_iou_row(outcome.report, cfg.num_classes,
                                                 segalign::kCityscapesClasses, v_row_label)
                            .c_str());
            return rc;
        }
        if (stats->parsed()) {
            segalign::PipelineConfig cfg = build_config(stats, sa);
            if (stats->count("--prompts-dir")) cfg.prompts_dir = s_prompts_dir;
            const auto outcome = segalign::cmd_stats(segalign::load_manifest(sa.manifest), cfg);
            return summarize("stats", outcome);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;
}
