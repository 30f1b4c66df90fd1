#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace sr {

// Per-dataset quality summary.  PSNR of identical images is +infinity and is
// serialized as the literal string "inf" in both CSV and JSON.
struct QualityReport {
    struct Entry {
        std::string image;
        double psnr_db = 0.0;
        double ssim = 0.0;
    };
    std::vector<Entry> images;
    double mean_psnr_db = 0.0;
    double mean_ssim = 0.0;
    std::string color_space = "y-bt601-studio";
    int shave = 0;

    void compute_means() {
        mean_psnr_db = 0.0;
        mean_ssim = 0.0;
        if (images.empty()) return;
        for (const Entry& e : images) {
            mean_psnr_db += e.psnr_db;
            mean_ssim += e.ssim;
        }
        mean_psnr_db /= static_cast<double>(images.size());
        mean_ssim /= static_cast<double>(images.size());
    }
};

namespace detail {

inline nlohmann::json psnr_to_json(double v) {
    if (std::isinf(v)) return "inf";
    return v;
}

inline double psnr_from_json(const nlohmann::json& j) {
    if (j.is_string()) {
        if (j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
        throw std::invalid_argument("quality report: unexpected PSNR string \"" +
                                    j.get<std::string>() + "\"");
    }
    return j.get<double>();
}

}  // namespace detail

inline std::string to_csv(const QualityReport& r) {
    std::ostringstream os;
    os.precision(17);
    os << "image,psnr_db,ssim\n";
    auto put_psnr = [&os](double v) {
        if (std::isinf(v))
            os << "inf";
        else
            os << v;
    };
    for (const QualityReport::Entry& e : r.images) {
        os << e.image << ",";
        put_psnr(e.psnr_db);
        os << "," << e.ssim << "\n";
    }
    os << "mean,";
    put_psnr(r.mean_psnr_db);
    os << "," << r.mean_ssim << "\n";
    return os.str();
}

inline nlohmann::json to_json(const QualityReport& r) {
    nlohmann::json j;
    j["color_space"] = r.color_space;
    j["shave"] = r.shave;
    j["images"] = nlohmann::json::array();
    for (const QualityReport::Entry& e : r.images)
        j["images"].push_back({{"image", e.image},
                               {"psnr_db", detail::psnr_to_json(e.psnr_db)},
                               {"ssim", e.ssim}});
    j["mean_psnr_db"] = detail::psnr_to_json(r.mean_psnr_db);
    j["mean_ssim"] = r.mean_ssim;
    return j;
}

inline QualityReport report_from_json(const nlohmann::json& j) {
    QualityReport r;
    r.color_space = j.at("color_space").get<std::string>();
    r.shave = j.at("shave").get<int>();
    for (const nlohmann::json& e : j.at("images")) {
        QualityReport::Entry entry;
        entry.image = e.at("image").get<std::string>();
        entry.psnr_db = detail::psnr_from_json(e.at("psnr_db"));
        entry.ssim = e.at("ssim").get<double>();
        r.images.push_back(std::move(entry));
    }
    r.mean_psnr_db = detail::psnr_from_json(j.at("mean_psnr_db"));
    r.mean_ssim = j.at("mean_ssim").get<double>();
    return r;
}

}  // namespace sr
