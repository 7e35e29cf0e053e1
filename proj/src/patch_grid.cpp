#include "tdiff/patch_grid.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "tdiff/errors.hpp"

namespace tdiff {

namespace {

std::vector<int> lattice_1d(int extent, int ps, int stride) {
    std::vector<int> xs;
    for (int x = 0; x + ps <= extent; x += stride) xs.push_back(x);
    if (xs.empty() || xs.back() != extent - ps) xs.push_back(extent - ps);
    return xs;
}

constexpr double kWindowFloor = 1e-3;

}  // namespace

std::vector<double> make_window(int ps, WindowKind kind) {
    if (ps < 2) throw DataError("window size must be at least 2");
    std::vector<double> w(static_cast<size_t>(ps) * ps, 1.0);
    if (kind == WindowKind::Flat) return w;
    // periodic Hann profile: pairs at 50% overlap sum to a constant exactly
    std::vector<double> prof(ps);
    for (int i = 0; i < ps; ++i)
        prof[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / ps)) + kWindowFloor;
    for (int j = 0; j < ps; ++j)
        for (int i = 0; i < ps; ++i)
            w[static_cast<size_t>(j) * ps + i] = prof[i] * prof[j];
    return w;
}

PatchGrid plan_grid(int width, int height, int ps, int stride, WindowKind kind) {
    if (ps < 1) throw DataError("patch size must be positive");
    if (stride < 1) throw DataError("stride must be positive");
    if (ps > width || ps > height)
        throw DataError("patch size " + std::to_string(ps) + " exceeds image extent " +
                        std::to_string(width) + "x" + std::to_string(height));
    PatchGrid grid;
    grid.width = width;
    grid.height = height;
    grid.ps = ps;
    grid.stride = stride;
    grid.window_kind = kind;
    const auto xs = lattice_1d(width, ps, stride);
    const auto ys = lattice_1d(height, ps, stride);
    for (int y : ys)
        for (int x : xs) grid.origins.emplace_back(x, y);
    grid.window = make_window(ps, kind);
    return grid;
}

ThermalImage aggregate(const std::vector<PatchRef>& predictions, const PatchGrid& grid) {
    if (predictions.size() != grid.origins.size())
        throw DataError("aggregate: prediction count does not match grid");
    // map predictions onto grid order so the reduction is order-invariant
    std::map<std::pair<int, int>, const PatchRef*> by_origin;
    for (const auto& p : predictions) {
        if (p.size != grid.ps) throw DataError("aggregate: patch size does not match grid");
        by_origin[{p.origin_x, p.origin_y}] = &p;
    }

    ThermalImage out(grid.width, grid.height, ValueDomain::Normalized);
    const size_t n = out.pixel_count();
    std::vector<double> num(n, 0.0), den(n, 0.0), base(n, 0.0);
    std::vector<double> lo(n, 0.0), hi(n, 0.0);
    std::vector<char> seen(n, 0);

    for (const auto& origin : grid.origins) {
        const auto it = by_origin.find(origin);
        if (it == by_origin.end())
            throw DataError("aggregate: missing prediction for grid origin");
        const PatchRef& p = *it->second;
        for (int j = 0; j < grid.ps; ++j) {
            const int y = origin.second + j;
            if (y < 0 || y >= grid.height) continue;
            for (int i = 0; i < grid.ps; ++i) {
                const int x = origin.first + i;
                if (x < 0 || x >= grid.width) continue;
                const size_t idx = static_cast<size_t>(y) * grid.width + x;
                const double w = grid.window[static_cast<size_t>(j) * grid.ps + i];
                const double v = p.at(i, j);
                if (!seen[idx]) {
                    seen[idx] = 1;
                    base[idx] = v;
                    lo[idx] = hi[idx] = v;
                } else {
                    lo[idx] = std::min(lo[idx], v);
                    hi[idx] = std::max(hi[idx], v);
                }
                // accumulating deviations from the first contribution keeps
                // the all-equal case bit-exact
                num[idx] += w * (v - base[idx]);
                den[idx] += w;
            }
        }
    }

    for (size_t idx = 0; idx < n; ++idx) {
        if (!seen[idx] || den[idx] <= 0.0)
            throw DataError("aggregate: pixel with zero total weight");
        const double v = base[idx] + num[idx] / den[idx];
        out.data[idx] = std::clamp(v, lo[idx], hi[idx]);
    }
    return out;
}

double seam_energy(const ThermalImage& img, const PatchGrid& grid) {
    img.validate();
    std::set<int> bcols, brows;
    for (const auto& [ox, oy] : grid.origins) {
        if (ox > 0) bcols.insert(ox);
        if (ox + grid.ps < grid.width) bcols.insert(ox + grid.ps);
        if (oy > 0) brows.insert(oy);
        if (oy + grid.ps < grid.height) brows.insert(oy + grid.ps);
    }
    double sum_b = 0.0, sum_n = 0.0;
    long cnt_b = 0, cnt_n = 0;
    // horizontal second differences across column seams
    for (int x = 1; x + 1 < img.width; ++x) {
        const bool boundary = bcols.count(x) > 0;
        for (int y = 0; y < img.height; ++y) {
            const double d = std::abs(img.at(x - 1, y) - 2.0 * img.at(x, y) + img.at(x + 1, y));
            if (boundary) { sum_b += d; ++cnt_b; }
            else { sum_n += d; ++cnt_n; }
        }
    }
    // vertical second differences across row seams
    for (int y = 1; y + 1 < img.height; ++y) {
        const bool boundary = brows.count(y) > 0;
        for (int x = 0; x < img.width; ++x) {
            const double d = std::abs(img.at(x, y - 1) - 2.0 * img.at(x, y) + img.at(x, y + 1));
            if (boundary) { sum_b += d; ++cnt_b; }
            else { sum_n += d; ++cnt_n; }
        }
    }
    const double mean_b = cnt_b > 0 ? sum_b / cnt_b : 0.0;
    const double mean_n = cnt_n > 0 ? sum_n / cnt_n : 0.0;
    return mean_b - mean_n;
}

}  // namespace tdiff
