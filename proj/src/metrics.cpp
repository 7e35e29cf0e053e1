#include "tdiff/metrics.hpp"

#include <cmath>
#include <limits>

#include "tdiff/errors.hpp"

namespace tdiff {

double psnr(const ThermalImage& a, const ThermalImage& b, double peak) {
    if (!a.same_extent(b)) throw DataError("psnr: extent mismatch");
    if (peak <= 0.0) throw DataError("psnr: peak must be positive");
    double mse = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const ThermalImage& a, const ThermalImage& b, double peak,
            int window, double window_sigma, double k1, double k2) {
    if (!a.same_extent(b)) throw DataError("ssim: extent mismatch");
    if (a.width < window || a.height < window)
        throw DataError("ssim: image smaller than the " + std::to_string(window) +
                        "-pixel window");
    // normalized Gaussian window
    std::vector<double> w(static_cast<size_t>(window) * window);
    const int r = window / 2;
    double wsum = 0.0;
    for (int j = 0; j < window; ++j)
        for (int i = 0; i < window; ++i) {
            const double dx = i - r, dy = j - r;
            const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * window_sigma * window_sigma));
            w[static_cast<size_t>(j) * window + i] = g;
            wsum += g;
        }
    for (double& v : w) v /= wsum;

    const double c1 = (k1 * peak) * (k1 * peak);
    const double c2 = (k2 * peak) * (k2 * peak);
    double total = 0.0;
    long count = 0;
    for (int y = 0; y + window <= a.height; ++y) {
        for (int x = 0; x + window <= a.width; ++x) {
            double mx = 0.0, my = 0.0;
            for (int j = 0; j < window; ++j)
                for (int i = 0; i < window; ++i) {
                    const double wv = w[static_cast<size_t>(j) * window + i];
                    mx += wv * a.at(x + i, y + j);
                    my += wv * b.at(x + i, y + j);
                }
            double vx = 0.0, vy = 0.0, cov = 0.0;
            for (int j = 0; j < window; ++j)
                for (int i = 0; i < window; ++i) {
                    const double wv = w[static_cast<size_t>(j) * window + i];
                    const double da = a.at(x + i, y + j) - mx;
                    const double db = b.at(x + i, y + j) - my;
                    vx += wv * da * da;
                    vy += wv * db * db;
                    cov += wv * da * db;
                }
            const double num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
            const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
            total += num / den;
            ++count;
        }
    }
    return total / count;
}

MetricReport summarize(std::vector<ImageScore> scores) {
    MetricReport report;
    report.per_image = std::move(scores);
    if (report.per_image.empty()) return report;
    double ps = 0.0, ss = 0.0;
    for (const auto& s : report.per_image) {
        ps += s.psnr_db;
        ss += s.ssim;
    }
    report.mean_psnr_db = ps / report.per_image.size();
    report.mean_ssim = ss / report.per_image.size();
    return report;
}

}  // namespace tdiff
