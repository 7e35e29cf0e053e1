#pragma once

#include <string>
#include <vector>

#include "tdiff/image.hpp"

namespace tdiff {

// 10 log10(peak^2 / MSE); +infinity for identical images.
double psnr(const ThermalImage& a, const ThermalImage& b, double peak);

// Mean local SSIM over valid window positions. Gaussian window, standard
// Wang et al. constants by default.
double ssim(const ThermalImage& a, const ThermalImage& b, double peak,
            int window = 11, double window_sigma = 1.5, double k1 = 0.01,
            double k2 = 0.03);

struct ImageScore {
    std::string id;
    std::string task;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

struct MetricReport {
    double mean_psnr_db = 0.0;
    double mean_ssim = 0.0;
    std::vector<ImageScore> per_image;
};

MetricReport summarize(std::vector<ImageScore> scores);

}  // namespace tdiff
