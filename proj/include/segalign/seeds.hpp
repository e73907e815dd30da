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

// Energy-driven superpixel partitioning (SEEDS). Superpixels start as a
// regular block grid and are refined by hill-climbing: first whole blocks
// are exchanged between neighboring superpixels, coarse to fine, then
// individual boundary pixels. A candidate move is taken when it strictly
// increases the histogram-intersection score between the moved element and
// its destination region, measured on joint RGB color histograms. Pixel
// moves are additionally weighted by a same-label 3x3 smoothing prior.
// Moves that would locally split the donor region are rejected, and a
// final enforcement pass reattaches any stray fragments, so every region
// is 4-connected.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "segalign/error.hpp"
#include "segalign/png_io.hpp"

namespace segalign {

struct SeedsParams {
    int num_superpixels = 1000;  // requested budget K; the result never exceeds it
    int levels = 4;              // block-hierarchy depth (1 = pixel updates only)
    int bins_per_channel = 5;    // joint histogram has bins_per_channel^3 bins
    int iterations = 4;          // boundary-update sweeps per level
    int smoothing_prior = 2;     // exponent on the 3x3 same-label neighbor count
};

inline void validate_seeds_params(const SeedsParams& p) {
    if (p.num_superpixels < 1) throw ValueError("num_superpixels must be >= 1");
    if (p.levels < 1 || p.levels > 16) throw ValueError("levels must be in [1, 16]");
    if (p.bins_per_channel < 2 || p.bins_per_channel > 16) {
        throw ValueError("bins_per_channel must be in [2, 16]");
    }
    if (p.iterations < 0) throw ValueError("iterations must be >= 0");
    if (p.smoothing_prior < 0 || p.smoothing_prior > 8) {
        throw ValueError("smoothing_prior must be in [0, 8]");
    }
}

/// Region IDs per pixel, 0-based and dense in [0, count).
struct SuperpixelMap {
    int height = 0;
    int width = 0;
    std::vector<std::int32_t> ids;
    std::int32_t count = 0;

    std::int32_t at(int x, int y) const { return ids[static_cast<std::size_t>(y) * width + x]; }
};

/// Deepest hierarchy (capped at max_levels) whose coarsest blocks still
/// hold >= 1 pixel while leaving room for num_superpixels regions.
inline int pick_levels(int num_superpixels, int width, int height, int max_levels = 4) {
    for (int l = max_levels; l >= 2; --l) {
        const int f = 1 << (l - 1);
        if (width < f || height < f) continue;
        const std::int64_t capacity = static_cast<std::int64_t>(width / f) * (height / f);
        if (capacity >= num_superpixels) return l;
    }
    return 1;
}

namespace detail {

inline double prior_pow(int count, int exponent) {
    double r = 1.0;
    for (int i = 0; i < exponent; ++i) r *= count;
    return r;
}

// Circular 8-neighborhood offsets, consecutive entries 4-adjacent.
inline constexpr int kRingDx[8] = {0, 1, 1, 1, 0, -1, -1, -1};
inline constexpr int kRingDy[8] = {-1, -1, 0, 1, 1, 1, 0, -1};

class SeedsEngine {
public:
    SeedsEngine(const RgbImage& img, const SeedsParams& p)
        : W_(img.width), H_(img.height), params_(p) {
        validate_seeds_params(p);
        if (W_ <= 0 || H_ <= 0 || img.px.size() != static_cast<std::size_t>(W_) * H_ * 3) {
            throw ShapeError("seeds_partition: malformed image");
        }
        factor_ = 1 << (params_.levels - 1);
        if (W_ < factor_ || H_ < factor_) {
            throw ValueError("image " + std::to_string(W_) + "x" + std::to_string(H_) +
                             " too small for " + std::to_string(params_.levels) +
                             " levels (coarsest block needs " + std::to_string(factor_) +
                             " pixels per side)");
        }
        choose_grid();
        bin_pixels(img);
    }

    SuperpixelMap run() {
        init_regions();
        block_stages();
        pixel_stage();
        enforce_connectivity();
        return compact();
    }

private:
    void choose_grid() {
        const int K = params_.num_superpixels;
        const int max_nx = W_ / factor_;
        const int max_ny = H_ / factor_;
        int ny = static_cast<int>(std::floor(std::sqrt(static_cast<double>(K) * H_ / W_)));
        ny = std::clamp(ny, 1, std::min(max_ny, K));
        int nx = std::clamp(K / ny, 1, max_nx);
        nx_ = nx;
        ny_ = ny;
        nbx_ = nx_ * factor_;
        nby_ = ny_ * factor_;
        bx_of_x_.resize(static_cast<std::size_t>(W_));
        by_of_y_.resize(static_cast<std::size_t>(H_));
        for (int x = 0; x < W_; ++x) {
            bx_of_x_[static_cast<std::size_t>(x)] =
                static_cast<int>(static_cast<std::int64_t>(x) * nbx_ / W_);
        }
        for (int y = 0; y < H_; ++y) {
            by_of_y_[static_cast<std::size_t>(y)] =
                static_cast<int>(static_cast<std::int64_t>(y) * nby_ / H_);
        }
    }

    void bin_pixels(const RgbImage& img) {
        const int b = params_.bins_per_channel;
        nbins_ = b * b * b;
        pixel_bin_.resize(static_cast<std::size_t>(W_) * H_);
        for (std::size_t i = 0; i < pixel_bin_.size(); ++i) {
            const int r = img.px[3 * i] * b / 256;
            const int g = img.px[3 * i + 1] * b / 256;
            const int bl = img.px[3 * i + 2] * b / 256;
            pixel_bin_[i] = (r * b + g) * b + bl;
        }
    }

    void init_regions() {
        // Finest-level block histograms.
        fhist_.assign(static_cast<std::size_t>(nbx_) * nby_ * nbins_, 0);
        fsize_.assign(static_cast<std::size_t>(nbx_) * nby_, 0);
        for (int y = 0; y < H_; ++y) {
            for (int x = 0; x < W_; ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * W_ + x;
                const std::size_t fb = static_cast<std::size_t>(by_of_y_[y]) * nbx_ + bx_of_x_[x];
                ++fhist_[fb * nbins_ + pixel_bin_[p]];
                ++fsize_[fb];
            }
        }
        // Region histograms, one region per top-level grid cell.
        num_regions_ = nx_ * ny_;
        rhist_.assign(static_cast<std::size_t>(num_regions_) * nbins_, 0);
        rsize_.assign(static_cast<std::size_t>(num_regions_), 0);
        for (int fy = 0; fy < nby_; ++fy) {
            for (int fx = 0; fx < nbx_; ++fx) {
                const int r = (fy >> (params_.levels - 1)) * nx_ + (fx >> (params_.levels - 1));
                const std::size_t fb = static_cast<std::size_t>(fy) * nbx_ + fx;
                for (int j = 0; j < nbins_; ++j) {
                    rhist_[static_cast<std::size_t>(r) * nbins_ + j] += fhist_[fb * nbins_ + j];
                }
                rsize_[static_cast<std::size_t>(r)] += fsize_[fb];
            }
        }
        // Top-level block labels: identity.
        blabel_.resize(static_cast<std::size_t>(num_regions_));
        std::iota(blabel_.begin(), blabel_.end(), 0);
        cur_gx_ = nx_;
        cur_gy_ = ny_;
    }

    double intersect(const std::uint32_t* a, std::uint64_t asum, const std::uint32_t* b,
                     std::uint64_t bsum) const {
        if (asum == 0 || bsum == 0) return 0.0;
        double s = 0.0;
        for (int j = 0; j < nbins_; ++j) {
            s += std::min(a[j] / static_cast<double>(asum), b[j] / static_cast<double>(bsum));
        }
        return s;
    }

    // Intersection of block histogram with its own region minus the block.
    double intersect_minus_self(const std::uint32_t* blk, std::uint64_t bsum,
                                const std::uint32_t* reg, std::uint64_t rsum) const {
        if (rsum <= bsum) return 0.0;
        double s = 0.0;
        const double rem = static_cast<double>(rsum - bsum);
        for (int j = 0; j < nbins_; ++j) {
            s += std::min(blk[j] / static_cast<double>(bsum), (reg[j] - blk[j]) / rem);
        }
        return s;
    }

    // True when the same-label cells on the 8-ring around a grid cell form
    // at most one circular arc; removing the center then cannot split the
    // donor region.
    template <typename LabelAt>
    static bool single_arc(int x, int y, int gx, int gy, int lab, LabelAt at) {
        bool same[8];
        for (int k = 0; k < 8; ++k) {
            const int nxp = x + kRingDx[k];
            const int nyp = y + kRingDy[k];
            same[k] = nxp >= 0 && nxp < gx && nyp >= 0 && nyp < gy && at(nxp, nyp) == lab;
        }
        int arcs = 0;
        for (int k = 0; k < 8; ++k) {
            if (same[k] && !same[(k + 7) % 8]) ++arcs;
        }
        return arcs <= 1;
    }

    void block_stages() {
        for (int level = params_.levels - 1; level >= 1; --level) {
            const int gx = nx_ << (params_.levels - level);
            const int gy = ny_ << (params_.levels - level);
            // Push labels one level down.
            std::vector<int> next(static_cast<std::size_t>(gx) * gy);
            for (int j = 0; j < gy; ++j) {
                for (int i = 0; i < gx; ++i) {
                    next[static_cast<std::size_t>(j) * gx + i] =
                        blabel_[static_cast<std::size_t>(j / 2) * cur_gx_ + i / 2];
                }
            }
            blabel_.swap(next);
            cur_gx_ = gx;
            cur_gy_ = gy;

            // Histograms of the blocks at this level, summed from finest blocks.
            const int sub = 1 << (level - 1);
            std::vector<std::uint32_t> bhist(static_cast<std::size_t>(gx) * gy * nbins_, 0);
            std::vector<std::uint32_t> bsize(static_cast<std::size_t>(gx) * gy, 0);
            for (int fy = 0; fy < nby_; ++fy) {
                for (int fx = 0; fx < nbx_; ++fx) {
                    const std::size_t dst = static_cast<std::size_t>(fy / sub) * gx + fx / sub;
                    const std::size_t src = static_cast<std::size_t>(fy) * nbx_ + fx;
                    for (int j = 0; j < nbins_; ++j) {
                        bhist[dst * nbins_ + j] += fhist_[src * nbins_ + j];
                    }
                    bsize[dst] += fsize_[src];
                }
            }
            // Blocks per region at this level; a region never donates its
            // last block, so no region vanishes.
            std::vector<std::uint32_t> nblocks(static_cast<std::size_t>(num_regions_), 0);
            for (int b = 0; b < gx * gy; ++b) {
                ++nblocks[static_cast<std::size_t>(blabel_[static_cast<std::size_t>(b)])];
            }

            const auto lab_at = [&](int i, int j) {
                return blabel_[static_cast<std::size_t>(j) * gx + i];
            };
            for (int it = 0; it < params_.iterations; ++it) {
                int moved = 0;
                for (int j = 0; j < gy; ++j) {
                    for (int i = 0; i < gx; ++i) {
                        const std::size_t b = static_cast<std::size_t>(j) * gx + i;
                        const int a = blabel_[b];
                        int cand[4];
                        int ncand = 0;
                        const auto consider = [&](int ci, int cj) {
                            if (ci < 0 || ci >= gx || cj < 0 || cj >= gy) return;
                            const int l = lab_at(ci, cj);
                            if (l == a) return;
                            for (int q = 0; q < ncand; ++q) {
                                if (cand[q] == l) return;
                            }
                            cand[ncand++] = l;
                        };
                        consider(i - 1, j);
                        consider(i, j - 1);
                        consider(i + 1, j);
                        consider(i, j + 1);
                        if (ncand == 0) continue;
                        if (nblocks[static_cast<std::size_t>(a)] <= 1) continue;
                        if (!single_arc(i, j, gx, gy, a, lab_at)) continue;

                        const std::uint32_t* hb = &bhist[b * nbins_];
                        const std::uint64_t sb = bsize[b];
                        const double stay = intersect_minus_self(
                            hb, sb, &rhist_[static_cast<std::size_t>(a) * nbins_], rsize_[a]);
                        int best = -1;
                        double best_score = stay;
                        for (int q = 0; q < ncand; ++q) {
                            const int n = cand[q];
                            const double s = intersect(
                                hb, sb, &rhist_[static_cast<std::size_t>(n) * nbins_], rsize_[n]);
                            if (s > best_score) {
                                best_score = s;
                                best = n;
                            }
                        }
                        if (best < 0) continue;
                        for (int q = 0; q < nbins_; ++q) {
                            rhist_[static_cast<std::size_t>(a) * nbins_ + q] -= hb[q];
                            rhist_[static_cast<std::size_t>(best) * nbins_ + q] += hb[q];
                        }
                        rsize_[a] -= bsize[b];
                        rsize_[best] += bsize[b];
                        --nblocks[static_cast<std::size_t>(a)];
                        ++nblocks[static_cast<std::size_t>(best)];
                        blabel_[b] = best;
                        ++moved;
                    }
                }
                if (moved == 0) break;
            }
        }
    }

    void pixel_stage() {
        label_.resize(static_cast<std::size_t>(W_) * H_);
        for (int y = 0; y < H_; ++y) {
            for (int x = 0; x < W_; ++x) {
                label_[static_cast<std::size_t>(y) * W_ + x] =
                    blabel_[static_cast<std::size_t>(by_of_y_[y]) * cur_gx_ + bx_of_x_[x]];
            }
        }
        const auto lab_at = [&](int x, int y) { return label_[static_cast<std::size_t>(y) * W_ + x]; };
        const auto count8 = [&](int x, int y, int l) {
            int c = 0;
            for (int k = 0; k < 8; ++k) {
                const int nxp = x + kRingDx[k];
                const int nyp = y + kRingDy[k];
                if (nxp >= 0 && nxp < W_ && nyp >= 0 && nyp < H_ && lab_at(nxp, nyp) == l) ++c;
            }
            return c;
        };

        const int q = params_.smoothing_prior;
        for (int it = 0; it < params_.iterations; ++it) {
            int moved = 0;
            for (int y = 0; y < H_; ++y) {
                for (int x = 0; x < W_; ++x) {
                    const std::size_t p = static_cast<std::size_t>(y) * W_ + x;
                    const int a = label_[p];
                    int cand[4];
                    int ncand = 0;
                    const auto consider = [&](int cx, int cy) {
                        if (cx < 0 || cx >= W_ || cy < 0 || cy >= H_) return;
                        const int l = lab_at(cx, cy);
                        if (l == a) return;
                        for (int t = 0; t < ncand; ++t) {
                            if (cand[t] == l) return;
                        }
                        cand[ncand++] = l;
                    };
                    consider(x - 1, y);
                    consider(x, y - 1);
                    consider(x + 1, y);
                    consider(x, y + 1);
                    if (ncand == 0) continue;
                    if (rsize_[a] <= 1) continue;  // never empty a region
                    if (!single_arc(x, y, W_, H_, a, lab_at)) continue;

                    const int bin = pixel_bin_[p];
                    double stay = 0.0;
                    if (rsize_[a] > 1) {
                        stay = (rhist_[static_cast<std::size_t>(a) * nbins_ + bin] - 1) /
                               static_cast<double>(rsize_[a] - 1);
                    }
                    if (q > 0) stay *= prior_pow(count8(x, y, a), q);
                    int best = -1;
                    double best_score = stay;
                    for (int t = 0; t < ncand; ++t) {
                        const int n = cand[t];
                        double s = rhist_[static_cast<std::size_t>(n) * nbins_ + bin] /
                                   static_cast<double>(rsize_[n]);
                        if (q > 0) s *= prior_pow(count8(x, y, n), q);
                        if (s > best_score) {
                            best_score = s;
                            best = n;
                        }
                    }
                    if (best < 0) continue;
                    --rhist_[static_cast<std::size_t>(a) * nbins_ + bin];
                    --rsize_[a];
                    ++rhist_[static_cast<std::size_t>(best) * nbins_ + bin];
                    ++rsize_[best];
                    label_[p] = best;
                    ++moved;
                }
            }
            if (moved == 0) break;
        }
    }

    // Reattaches any fragment that is not part of its region's largest
    // 4-connected component to the neighboring region with the longest
    // shared boundary.
    void enforce_connectivity() {
        const std::size_t n = label_.size();
        std::vector<int> comp(n);
        std::vector<std::size_t> stack;
        for (int round = 0; round < 64; ++round) {
            std::fill(comp.begin(), comp.end(), -1);
            std::vector<int> comp_region;
            std::vector<std::uint32_t> comp_size;
            std::vector<std::size_t> comp_first;
            for (std::size_t i = 0; i < n; ++i) {
                if (comp[i] != -1) continue;
                const int id = static_cast<int>(comp_region.size());
                const int reg = label_[i];
                comp_region.push_back(reg);
                comp_size.push_back(0);
                comp_first.push_back(i);
                stack.assign(1, i);
                comp[i] = id;
                while (!stack.empty()) {
                    const std::size_t p = stack.back();
                    stack.pop_back();
                    ++comp_size[static_cast<std::size_t>(id)];
                    const int x = static_cast<int>(p % W_);
                    const int y = static_cast<int>(p / W_);
                    const auto visit = [&](int cx, int cy) {
                        if (cx < 0 || cx >= W_ || cy < 0 || cy >= H_) return;
                        const std::size_t pp = static_cast<std::size_t>(cy) * W_ + cx;
                        if (comp[pp] == -1 && label_[pp] == reg) {
                            comp[pp] = id;
                            stack.push_back(pp);
                        }
                    };
                    visit(x - 1, y);
                    visit(x + 1, y);
                    visit(x, y - 1);
                    visit(x, y + 1);
                }
            }

            // Largest component per region; earliest first-pixel wins ties.
            std::vector<int> main_comp(static_cast<std::size_t>(num_regions_), -1);
            for (std::size_t c = 0; c < comp_region.size(); ++c) {
                const auto reg = static_cast<std::size_t>(comp_region[c]);
                const int cur = main_comp[reg];
                if (cur == -1 || comp_size[c] > comp_size[static_cast<std::size_t>(cur)]) {
                    main_comp[reg] = static_cast<int>(c);
                }
            }
            bool any_fragment = false;
            for (std::size_t c = 0; c < comp_region.size(); ++c) {
                if (main_comp[static_cast<std::size_t>(comp_region[c])] != static_cast<int>(c)) {
                    any_fragment = true;
                    break;
                }
            }
            if (!any_fragment) return;

            // Count fragment boundary contacts per neighboring region.
            for (std::size_t c = 0; c < comp_region.size(); ++c) {
                if (main_comp[static_cast<std::size_t>(comp_region[c])] == static_cast<int>(c)) continue;
                std::vector<std::pair<int, std::uint32_t>> contact;  // region -> shared edge count
                for (std::size_t p = 0; p < n; ++p) {
                    if (comp[p] != static_cast<int>(c)) continue;
                    const int x = static_cast<int>(p % W_);
                    const int y = static_cast<int>(p / W_);
                    const auto touch = [&](int cx, int cy) {
                        if (cx < 0 || cx >= W_ || cy < 0 || cy >= H_) return;
                        const int other = label_[static_cast<std::size_t>(cy) * W_ + cx];
                        if (other == comp_region[c]) return;
                        for (auto& e : contact) {
                            if (e.first == other) {
                                ++e.second;
                                return;
                            }
                        }
                        contact.emplace_back(other, 1);
                    };
                    touch(x - 1, y);
                    touch(x + 1, y);
                    touch(x, y - 1);
                    touch(x, y + 1);
                }
                if (contact.empty()) continue;  // isolated full region; nothing to do
                int target = contact[0].first;
                std::uint32_t best = contact[0].second;
                for (const auto& e : contact) {
                    if (e.second > best || (e.second == best && e.first < target)) {
                        target = e.first;
                        best = e.second;
                    }
                }
                for (std::size_t p = 0; p < n; ++p) {
                    if (comp[p] == static_cast<int>(c)) label_[p] = target;
                }
            }
        }
        throw Error("superpixel connectivity enforcement did not converge");
    }

    SuperpixelMap compact() {
        SuperpixelMap out;
        out.height = H_;
        out.width = W_;
        out.ids.assign(label_.size(), -1);
        std::vector<std::int32_t> remap(static_cast<std::size_t>(num_regions_), -1);
        std::int32_t next = 0;
        for (std::size_t i = 0; i < label_.size(); ++i) {
            auto& m = remap[static_cast<std::size_t>(label_[i])];
            if (m == -1) m = next++;
            out.ids[i] = m;
        }
        out.count = next;
        return out;
    }

    int W_, H_;
    SeedsParams params_;
    int factor_ = 1;
    int nx_ = 1, ny_ = 1;
    int nbx_ = 1, nby_ = 1;
    int nbins_ = 0;
    int num_regions_ = 0;
    int cur_gx_ = 0, cur_gy_ = 0;
    std::vector<int> bx_of_x_, by_of_y_;
    std::vector<int> pixel_bin_;
    std::vector<std::uint32_t> fhist_, fsize_;
    std::vector<std::uint32_t> rhist_, rsize_;
    std::vector<int> blabel_;
    std::vector<int> label_;
};

}  // namespace detail

/// Partitions an RGB image into at most params.num_superpixels spatially
/// contiguous regions. Deterministic for fixed inputs and params.
inline SuperpixelMap seeds_partition(const RgbImage& image, const SeedsParams& params) {
    detail::SeedsEngine engine(image, params);
    return engine.run();
}

inline void save_superpixel_map(const SuperpixelMap& sp, const std::string& path) {
    if (sp.count > 0x10000) throw ValueError("superpixel map has too many regions for 16-bit PNG");
    std::vector<std::uint16_t> px(sp.ids.size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint16_t>(sp.ids[i]);
    write_png_gray16(path, sp.height, sp.width, px);
}

inline SuperpixelMap load_superpixel_map(const std::string& path) {
    SuperpixelMap sp;
    std::vector<std::uint16_t> px = read_png_gray16(path, sp.height, sp.width);
    sp.ids.assign(px.begin(), px.end());
    std::int32_t max_id = -1;
    for (std::int32_t v : sp.ids) max_id = std::max(max_id, v);
    sp.count = max_id + 1;
    return sp;
}

}  // namespace segalign
