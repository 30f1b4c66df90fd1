#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sr/image_io.hpp"
#include "sr/metrics.hpp"
#include "sr/model.hpp"
#include "sr/pipeline.hpp"
#include "sr/report.hpp"
#include "sr/resize.hpp"

namespace sr {

inline std::vector<std::string> list_images(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory not found: " + dir);
    std::vector<std::string> paths;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (ext == ".png") paths.push_back(e.path().string());
    }
    std::sort(paths.begin(), paths.end());
    return paths;
}

namespace detail {

// Quantizes luma to the 8-bit integer grid (saturating, round-half-up),
// mirroring the uint8 convention of the reference evaluation chain.
inline Tensor quantize_luma(Tensor t) {
    for (double& v : t.data) {
        v = v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v);
        v = std::floor(v + 0.5);
    }
    return t;
}

}  // namespace detail

// Scores one ground-truth image against its degraded restoration on the
// luma channel, shaving `scale` pixels per border.
//
// Two restoration routes share the protocol:
//  - baseline (no model): the luma plane itself is degraded and compared;
//  - model: the RGB image is degraded, refined tile by tile, then reduced
//    to luma.
struct EvalCase {
    std::string name;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

inline EvalCase evaluate_image(const Tensor& rgb, const std::string& name, int scale,
                               const Model* model, int tile, int threads = 1) {
    if (scale < 2 || scale > 4) throw std::invalid_argument("evaluate: scale must be 2, 3, or 4");
    EvalCase out;
    out.name = name;
    if (model == nullptr) {
        const Tensor y = detail::quantize_luma(modcrop(ycbcr_luma(rgb), scale));
        Tensor low = bicubic_resize(y, 1.0 / static_cast<double>(scale));
        Tensor up = detail::quantize_luma(bicubic_resize(low, static_cast<double>(scale)));
        const Tensor a = shave(y, scale), b = shave(up, scale);
        out.psnr_db = psnr(a, b, 8);
        out.ssim = ssim(a, b);
        return out;
    }
    const Tensor hr = modcrop(rgb, scale);
    const Tensor deg = degrade_image(hr, scale);
    const Tensor sr = refine_image(*model, deg, tile, threads);
    const Tensor a = shave(detail::quantize_luma(ycbcr_luma(hr)), scale);
    const Tensor b = shave(detail::quantize_luma(ycbcr_luma(sr)), scale);
    out.psnr_db = psnr(a, b, 8);
    out.ssim = ssim(a, b);
    return out;
}

// Evaluates every PNG in a directory.  Per-image failures are logged to
// stderr and the run continues; the report holds the successful rows.
inline QualityReport evaluate_dataset(const std::string& dir, int scale, const Model* model,
                                      int tile, int threads = 1) {
    const std::vector<std::string> paths = list_images(dir);
    if (paths.empty()) throw std::runtime_error("dataset directory has no PNG images: " + dir);
    QualityReport report;
    report.shave = scale;
    for (const std::string& path : paths) {
        const std::string name = std::filesystem::path(path).filename().string();
        try {
            const Tensor rgb = read_png(path);
            const EvalCase c = evaluate_image(rgb, name, scale, model, tile, threads);
            report.images.push_back({c.name, c.psnr_db, c.ssim});
        } catch (const std::exception& e) {
            std::fprintf(stderr, "warning: %s failed: %s\n", name.c_str(), e.what());
        }
    }
    if (report.images.empty()) throw std::runtime_error("evaluation failed for every image in: " + dir);
    report.compute_means();
    return report;
}

}  // namespace sr
