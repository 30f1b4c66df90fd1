#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#ifdef SR_USE_CBLAS
#include <cblas.h>
#endif

#include "sr/evaluate.hpp"
#include "sr/image_io.hpp"
#include "sr/metrics.hpp"
#include "sr/model.hpp"
#include "sr/pipeline.hpp"
#include "sr/report.hpp"
#include "sr/training.hpp"

namespace {

// Everything a command can need: model/train settings plus file paths.
// JSON config values load first; command-line flags override them.
struct RunConfig {
    sr::ModelConfig model;
    sr::TrainConfig train;
    std::string data_dir;
    std::string model_file;
    std::string input_file;
    std::string out_path;
    int threads = static_cast<int>(std::thread::hardware_concurrency());
};

const std::vector<std::string>& known_config_keys() {
    static const std::vector<std::string> keys{
        "tile_size",     "channels_in",    "feature_width", "expansion_width",
        "n_residual_blocks", "kernel_size", "padding",       "seed",
        "learning_rate", "beta1",          "beta2",         "epsilon",
        "optimizer",     "schedule",       "batch_size",    "scale",
        "max_epochs",    "max_steps",      "max_seconds",   "checkpoint_every",
        "eval_psnr",     "data",           "model",         "input",
        "out",           "threads"};
    return keys;
}

sr::Schedule parse_schedule(const std::string& s) {
    if (s == "random") return sr::Schedule::random_learning;  // CLI shorthand
    return sr::schedule_from_string(s);
}

void apply_config_file(RunConfig& rc, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("config file is not valid JSON: " + std::string(e.what()));
    }
    if (!j.is_object()) throw std::runtime_error("config file must hold a JSON object");
    const auto& known = known_config_keys();
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw std::runtime_error("unknown config key: " + key);
        if (key == "tile_size") rc.model.tile_size = value.get<int>();
        else if (key == "channels_in") rc.model.channels_in = value.get<int>();
        else if (key == "feature_width") rc.model.feature_width = value.get<int>();
        else if (key == "expansion_width") rc.model.expansion_width = value.get<int>();
        else if (key == "n_residual_blocks") rc.model.n_residual_blocks = value.get<int>();
        else if (key == "kernel_size") rc.model.kernel_size = value.get<int>();
        else if (key == "padding") rc.model.pad_mode = sr::pad_policy_from_string(value.get<std::string>());
        else if (key == "seed") {
            rc.model.seed = value.get<std::uint64_t>();
            rc.train.seed = rc.model.seed;
        } else if (key == "learning_rate") rc.train.learning_rate = value.get<double>();
        else if (key == "beta1") rc.train.beta1 = value.get<double>();
        else if (key == "beta2") rc.train.beta2 = value.get<double>();
        else if (key == "epsilon") rc.train.epsilon = value.get<double>();
        else if (key == "optimizer") rc.train.optimizer = sr::optimizer_from_string(value.get<std::string>());
        else if (key == "schedule") rc.train.schedule = parse_schedule(value.get<std::string>());
        else if (key == "batch_size") rc.train.batch_size = value.get<int>();
        else if (key == "scale") rc.train.scale = value.get<int>();
        else if (key == "max_epochs") rc.train.max_epochs = value.get<int>();
        else if (key == "max_steps") rc.train.max_steps = value.get<long>();
        else if (key == "max_seconds") rc.train.max_seconds = value.get<double>();
        else if (key == "checkpoint_every") rc.train.checkpoint_every = value.get<int>();
        else if (key == "eval_psnr") rc.train.eval_psnr = value.get<bool>();
        else if (key == "data") rc.data_dir = value.get<std::string>();
        else if (key == "model") rc.model_file = value.get<std::string>();
        else if (key == "input") rc.input_file = value.get<std::string>();
        else if (key == "out") rc.out_path = value.get<std::string>();
        else if (key == "threads") rc.threads = value.get<int>();
    }
}

void set_blas_threads(int threads) {
#ifdef SR_USE_CBLAS
    openblas_set_num_threads(threads > 0 ? threads : 1);
#else
    (void)threads;
#endif
}

// Loads every usable image in a directory as aligned degraded/target tile
// pairs.  Unreadable or too-small images are skipped with a warning.
std::vector<sr::TrainPair> load_pairs(const std::string& dir, int scale, int tile) {
    std::vector<sr::TrainPair> pairs;
    for (const std::string& path : sr::list_images(dir)) {
        const std::string name = std::filesystem::path(path).filename().string();
        try {
            sr::Tensor rgb = sr::modcrop(sr::read_png(path), scale);
            if (rgb.height() < tile || rgb.width() < tile)
                throw std::runtime_error("image smaller than one tile");
            const sr::Tensor degraded = sr::degrade_image(rgb, scale);
            auto [hr_tiles, grid] = sr::split_tiles(rgb, tile);
            auto [lr_tiles, grid2] = sr::split_tiles(degraded, tile);
            for (std::size_t i = 0; i < hr_tiles.size(); ++i)
                pairs.push_back({std::move(lr_tiles[i]), std::move(hr_tiles[i])});
        } catch (const std::exception& e) {
            std::fprintf(stderr, "warning: skipping %s: %s\n", name.c_str(), e.what());
        }
    }
    return pairs;
}

void print_epoch(const char* prefix, const sr::EpochRecord& r) {
    std::printf("%sepoch=%d batches=%d samples=%ld seconds=%.3f loss=%.10g", prefix, r.epoch,
                r.batches, r.samples, r.seconds, r.loss);
    if (r.psnr_db) std::printf(" psnr=%.4f", *r.psnr_db);
    std::printf("\n");
    std::fflush(stdout);
}

int cmd_train(const RunConfig& rc) {
    if (rc.data_dir.empty()) throw std::runtime_error("train requires --data");
    if (rc.out_path.empty()) throw std::runtime_error("train requires --out");
    rc.model.validate();
    sr::TrainConfig tcfg = rc.train;
    tcfg.checkpoint_path = rc.out_path;
    tcfg.validate();

    std::vector<sr::TrainPair> pairs = load_pairs(rc.data_dir, tcfg.scale, rc.model.tile_size);
    if (pairs.empty()) throw std::runtime_error("no usable training images in: " + rc.data_dir);
    std::printf("training on %zu tiles (tile=%d, scale=%d, schedule=%s)\n", pairs.size(),
                rc.model.tile_size, tcfg.scale, sr::to_string(tcfg.schedule));

    sr::TrainResult res =
        sr::train(pairs, rc.model, tcfg, [](const sr::EpochRecord& r) { print_epoch("", r); });
    std::printf("best epoch=%d loss=%.10g steps=%ld; weights written to %s\n", res.best_epoch,
                res.best_loss, res.steps, rc.out_path.c_str());
    return 0;
}

int cmd_upscale(const RunConfig& rc, int scale) {
    if (rc.model_file.empty()) throw std::runtime_error("upscale requires --model");
    if (rc.input_file.empty()) throw std::runtime_error("upscale requires --in");
    if (rc.out_path.empty()) throw std::runtime_error("upscale requires --out");
    sr::Model m = sr::load_weights(rc.model_file);
    m.cfg.pad_mode = rc.model.pad_mode;
    m.cfg.tile_size = rc.model.tile_size;
    const sr::Tensor img = sr::read_png(rc.input_file);
    const sr::Tensor out = sr::upscale_image(m, img, scale, m.cfg.tile_size, rc.threads);
    sr::write_png(out, rc.out_path);
    std::printf("wrote %s (%dx%d)\n", rc.out_path.c_str(), out.width(), out.height());
    return 0;
}

int cmd_baseline(const RunConfig& rc, int scale) {
    if (rc.input_file.empty()) throw std::runtime_error("baseline requires --in");
    if (rc.out_path.empty()) throw std::runtime_error("baseline requires --out");
    const sr::Tensor img = sr::read_png(rc.input_file);
    const sr::Tensor out = sr::clamp01(sr::bicubic_resize(img, static_cast<double>(scale)));
    sr::write_png(out, rc.out_path);
    std::printf("wrote %s (%dx%d)\n", rc.out_path.c_str(), out.width(), out.height());
    return 0;
}

void write_report(const sr::QualityReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report: " + path);
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".json")
        out << sr::to_json(report).dump(2) << '\n';
    else
        out << sr::to_csv(report);
}

int cmd_evaluate(const RunConfig& rc, int scale) {
    if (rc.data_dir.empty()) throw std::runtime_error("evaluate requires --data");
    std::optional<sr::Model> model;
    if (!rc.model_file.empty() && rc.model_file != "none") {
        model = sr::load_weights(rc.model_file);
        model->cfg.pad_mode = rc.model.pad_mode;
        model->cfg.tile_size = rc.model.tile_size;
    }
    const sr::QualityReport report = sr::evaluate_dataset(
        rc.data_dir, scale, model ? &*model : nullptr, rc.model.tile_size, rc.threads);
    for (const auto& e : report.images)
        std::printf("%s psnr=%.6f ssim=%.6f\n", e.image.c_str(), e.psnr_db, e.ssim);
    std::printf("mean psnr=%.6f ssim=%.6f (%zu images, shave=%d)\n", report.mean_psnr_db,
                report.mean_ssim, report.images.size(), report.shave);
    if (!rc.out_path.empty()) write_report(report, rc.out_path);
    return 0;
}

// Marks boundary-pair magnitudes on a black canvas: pixels adjacent to a
// tile boundary hold |I(p) - I(q)| scaled by the largest adjacent-pair step.
sr::Tensor seam_heatmap(const sr::Tensor& luma, int tile) {
    const int h = luma.height(), w = luma.width();
    sr::Tensor heat({1, h, w});
    double max_step = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 1; x < w; ++x)
            max_step = std::max(max_step, std::abs(luma(0, y, x) - luma(0, y, x - 1)));
    for (int y = 1; y < h; ++y)
        for (int x = 0; x < w; ++x)
            max_step = std::max(max_step, std::abs(luma(0, y, x) - luma(0, y - 1, x)));
    if (max_step <= 0.0) return heat;
    for (int x = tile; x < w; x += tile)
        for (int y = 0; y < h; ++y)
            heat(0, y, x) = std::abs(luma(0, y, x) - luma(0, y, x - 1)) / max_step;
    for (int y = tile; y < h; y += tile)
        for (int x = 0; x < w; ++x)
            heat(0, y, x) = std::max(heat(0, y, x), std::abs(luma(0, y, x) - luma(0, y - 1, x)) / max_step);
    return heat;
}

int cmd_seam(const RunConfig& rc, int tile, const std::string& heatmap_path) {
    if (rc.input_file.empty()) throw std::runtime_error("seam requires --in");
    const sr::Tensor img = sr::read_png(rc.input_file);
    const double index = sr::seam_index(img, tile);
    std::printf("seam_index=%.10g (tile=%d)\n", index, tile);
    if (!heatmap_path.empty()) {
        sr::Tensor luma = sr::to_luma(img);
        for (double& v : luma.data) v /= 255.0;
        sr::write_png(seam_heatmap(luma, tile), heatmap_path);
        std::printf("wrote %s\n", heatmap_path.c_str());
    }
    return 0;
}

double dataset_psnr(const sr::Model& m, const std::vector<sr::TrainPair>& pairs) {
    double sum = 0.0;
    for (const auto& p : pairs) {
        sr::Tensor pred = sr::forward(m, p.input);
        sr::Tensor a = pred, b = p.target;
        for (double& v : a.data) v *= 255.0;
        for (double& v : b.data) v *= 255.0;
        sum += sr::psnr(b, a, 8);
    }
    return sum / static_cast<double>(pairs.size());
}

int cmd_experiment_random(const RunConfig& rc) {
    if (rc.data_dir.empty()) throw std::runtime_error("experiment-random requires --data");
    rc.model.validate();
    sr::TrainConfig base = rc.train;
    base.checkpoint_path.clear();
    base.validate();

    std::vector<sr::TrainPair> pairs = load_pairs(rc.data_dir, base.scale, rc.model.tile_size);
    if (pairs.empty()) throw std::runtime_error("no usable training images in: " + rc.data_dir);
    std::printf("comparing schedules on %zu tiles under an identical budget\n", pairs.size());

    struct Arm {
        const char* name;
        sr::Schedule schedule;
        sr::TrainResult res;
        double final_psnr = 0.0;
        double mean_epoch_seconds = 0.0;
    };
    Arm arms[2] = {{"sequential", sr::Schedule::sequential, {}, 0, 0},
                   {"random_learning", sr::Schedule::random_learning, {}, 0, 0}};
    for (Arm& arm : arms) {
        sr::TrainConfig cfg = base;
        cfg.schedule = arm.schedule;
        const std::string prefix = std::string(arm.name) + " ";
        arm.res = sr::train(pairs, rc.model, cfg,
                            [&](const sr::EpochRecord& r) { print_epoch(prefix.c_str(), r); });
        arm.final_psnr = dataset_psnr(arm.res.model, pairs);
        double secs = 0.0;
        for (const auto& e : arm.res.epochs) secs += e.seconds;
        arm.mean_epoch_seconds =
            arm.res.epochs.empty() ? 0.0 : secs / static_cast<double>(arm.res.epochs.size());
    }

    std::printf("schedule epochs steps final_loss final_psnr mean_epoch_seconds\n");
    for (const Arm& arm : arms)
        std::printf("%s %zu %ld %.10g %.4f %.4f\n", arm.name, arm.res.epochs.size(),
                    arm.res.steps, arm.res.best_loss, arm.final_psnr, arm.mean_epoch_seconds);

    if (!rc.out_path.empty()) {
        nlohmann::json out;
        for (const Arm& arm : arms) {
            nlohmann::json epochs = nlohmann::json::array();
            for (const auto& r : arm.res.epochs) {
                nlohmann::json e{{"epoch", r.epoch}, {"batches", r.batches},   {"samples", r.samples},
                                 {"seconds", r.seconds}, {"loss", r.loss}};
                if (r.psnr_db) e["psnr"] = *r.psnr_db;
                epochs.push_back(std::move(e));
            }
            out[arm.name] = {{"epochs", std::move(epochs)},
                             {"completed_epochs", arm.res.completed_epochs},
                             {"steps", arm.res.steps},
                             {"final_loss", arm.res.best_loss},
                             {"final_psnr", arm.final_psnr},
                             {"mean_epoch_seconds", arm.mean_epoch_seconds}};
        }
        std::ofstream f(rc.out_path);
        if (!f) throw std::runtime_error("cannot write report: " + rc.out_path);
        f << out.dump(2) << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tiled single-image super-resolution toolkit"};
    app.require_subcommand(1);

    RunConfig rc;
    std::string config_path, padding = "mirror", schedule = "sequential", optimizer = "adam";
    std::string heatmap_path;
    int scale = 3, tile = 33;
    std::uint64_t seed = 0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option("--seed", seed, "RNG seed for initialization and batching");
        cmd->add_option("--threads", rc.threads, "worker threads (default: machine parallelism)");
        cmd->add_option("--tile", tile, "tile size in pixels");
        cmd->add_option("--padding", padding, "padding mode: mirror | zero | valid");
    };

    CLI::App* c_train = app.add_subcommand("train", "train a model on a directory of images");
    add_common(c_train);
    c_train->add_option("--data", rc.data_dir, "directory of training images");
    c_train->add_option("--out", rc.out_path, "output weight file");
    c_train->add_option("--scale", scale, "super-resolution factor (2-4)");
    c_train->add_option("--lr", rc.train.learning_rate, "learning rate");
    c_train->add_option("--beta1", rc.train.beta1, "Adam beta1");
    c_train->add_option("--beta2", rc.train.beta2, "Adam beta2");
    c_train->add_option("--epsilon", rc.train.epsilon, "Adam epsilon");
    c_train->add_option("--optimizer", optimizer, "adam | gd");
    c_train->add_option("--schedule", schedule, "sequential | random_learning (alias: random)");
    c_train->add_option("--batch-size", rc.train.batch_size, "tiles per batch");
    c_train->add_option("--max-epochs", rc.train.max_epochs, "epoch budget (0 = unlimited)");
    c_train->add_option("--max-steps", rc.train.max_steps, "optimizer-step budget (0 = unlimited)");
    c_train->add_option("--max-seconds", rc.train.max_seconds, "wall-clock budget (0 = unlimited)");
    c_train->add_option("--checkpoint-every", rc.train.checkpoint_every, "checkpoint cadence in epochs");
    c_train->add_flag("--eval-psnr", rc.train.eval_psnr, "record per-epoch PSNR telemetry");
    c_train->add_option("--feature-width", rc.model.feature_width, "residual trunk width");
    c_train->add_option("--expansion-width", rc.model.expansion_width, "expansion stage width");
    c_train->add_option("--blocks", rc.model.n_residual_blocks, "number of residual blocks");
    c_train->add_option("--kernel", rc.model.kernel_size, "convolution kernel size");
    c_train->add_option("--resume", rc.model_file, "resume from an existing weight file");

    CLI::App* c_upscale = app.add_subcommand("upscale", "super-resolve one image with a model");
    add_common(c_upscale);
    c_upscale->add_option("--model", rc.model_file, "weight file");
    c_upscale->add_option("--in", rc.input_file, "input PNG");
    c_upscale->add_option("--out", rc.out_path, "output PNG");
    c_upscale->add_option("--scale", scale, "super-resolution factor");

    CLI::App* c_evaluate = app.add_subcommand("evaluate", "score a dataset directory");
    add_common(c_evaluate);
    c_evaluate->add_option("--model", rc.model_file, "weight file, or 'none' for the bicubic baseline");
    c_evaluate->add_option("--data", rc.data_dir, "dataset directory of PNG images");
    c_evaluate->add_option("--out", rc.out_path, "report file (.csv or .json)");
    c_evaluate->add_option("--scale", scale, "super-resolution factor (2-4)");

    CLI::App* c_seam = app.add_subcommand("seam", "measure tile-boundary artifacts of an image");
    add_common(c_seam);
    c_seam->add_option("--in", rc.input_file, "input PNG");
    c_seam->add_option("--heatmap", heatmap_path, "optional boundary heat-map PNG");

    CLI::App* c_random = app.add_subcommand("experiment-random",
                                            "compare sequential vs random-learning schedules");
    add_common(c_random);
    c_random->add_option("--data", rc.data_dir, "directory of training images");
    c_random->add_option("--out", rc.out_path, "JSON report file");
    c_random->add_option("--scale", scale, "super-resolution factor (2-4)");
    c_random->add_option("--lr", rc.train.learning_rate, "learning rate");
    c_random->add_option("--batch-size", rc.train.batch_size, "tiles per batch");
    c_random->add_option("--max-epochs", rc.train.max_epochs, "epoch budget (0 = unlimited)");
    c_random->add_option("--max-steps", rc.train.max_steps, "optimizer-step budget (0 = unlimited)");
    c_random->add_option("--max-seconds", rc.train.max_seconds, "wall-clock budget (0 = unlimited)");
    c_random->add_flag("--eval-psnr", rc.train.eval_psnr, "record per-epoch PSNR telemetry");
    c_random->add_option("--feature-width", rc.model.feature_width, "residual trunk width");
    c_random->add_option("--expansion-width", rc.model.expansion_width, "expansion stage width");
    c_random->add_option("--blocks", rc.model.n_residual_blocks, "number of residual blocks");
    c_random->add_option("--kernel", rc.model.kernel_size, "convolution kernel size");

    CLI::App* c_baseline = app.add_subcommand("baseline", "bicubic-only upscale of one image");
    add_common(c_baseline);
    c_baseline->add_option("--in", rc.input_file, "input PNG");
    c_baseline->add_option("--out", rc.out_path, "output PNG");
    c_baseline->add_option("--scale", scale, "upscale factor");

    CLI11_PARSE(app, argc, argv);

    try {
        CLI::App* sub = app.get_subcommands().front();
        // Config file first, then flags override whatever the file set.
        if (!config_path.empty()) apply_config_file(rc, config_path);
        auto given = [&](const char* name) {
            const CLI::Option* o = sub->get_option_no_throw(name);
            return o != nullptr && o->count() > 0;
        };
        if (given("--seed")) {
            rc.model.seed = seed;
            rc.train.seed = seed;
        }
        if (given("--tile")) rc.model.tile_size = tile;
        else tile = rc.model.tile_size;
        if (given("--padding")) rc.model.pad_mode = sr::pad_policy_from_string(padding);
        if (given("--scale")) rc.train.scale = scale;
        else scale = rc.train.scale;
        if (sub == c_train || sub == c_random) {
            if (given("--optimizer")) rc.train.optimizer = sr::optimizer_from_string(optimizer);
            if (given("--schedule")) rc.train.schedule = parse_schedule(schedule);
        }
        if (tile < 1) throw std::runtime_error("tile size must be positive");
        set_blas_threads(rc.threads);

        if (sub == c_train) {
            if (!rc.model_file.empty()) {  // resume path
                sr::ResumeState rs = sr::resume(rc.model_file, rc.model);
                sr::TrainConfig tcfg = rc.train;
                tcfg.checkpoint_path = rc.out_path.empty() ? rc.model_file : rc.out_path;
                tcfg.validate();
                std::vector<sr::TrainPair> pairs =
                    load_pairs(rc.data_dir, tcfg.scale, rc.model.tile_size);
                if (pairs.empty()) throw std::runtime_error("no usable training images in: " + rc.data_dir);
                sr::TrainResult res = sr::train_from(rs.model, rs.epochs, pairs, tcfg,
                                                     [](const sr::EpochRecord& r) { print_epoch("", r); });
                std::printf("best epoch=%d loss=%.10g steps=%ld; weights written to %s\n",
                            res.best_epoch, res.best_loss, res.steps, tcfg.checkpoint_path.c_str());
                return 0;
            }
            return cmd_train(rc);
        }
        if (sub == c_upscale) return cmd_upscale(rc, scale);
        if (sub == c_evaluate) return cmd_evaluate(rc, scale);
        if (sub == c_seam) return cmd_seam(rc, tile, heatmap_path);
        if (sub == c_random) return cmd_experiment_random(rc);
        if (sub == c_baseline) return cmd_baseline(rc, scale);
        throw std::runtime_error("no subcommand given");
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
