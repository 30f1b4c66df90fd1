#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sr/metrics.hpp"
#include "sr/model.hpp"
#include "sr/resize.hpp"
#include "sr/rng.hpp"
#include "sr/tiling.hpp"

namespace sr {

enum class Optimizer { adam, gd };
enum class Schedule { sequential, random_learning };

inline Optimizer optimizer_from_string(const std::string& s) {
    if (s == "adam") return Optimizer::adam;
    if (s == "gd") return Optimizer::gd;
    throw std::invalid_argument("unknown optimizer: " + s);
}

inline const char* to_string(Optimizer o) {
    return o == Optimizer::adam ? "adam" : "gd";
}

inline Schedule schedule_from_string(const std::string& s) {
    if (s == "sequential") return Schedule::sequential;
    if (s == "random_learning") return Schedule::random_learning;
    throw std::invalid_argument("unknown schedule: " + s);
}

inline const char* to_string(Schedule s) {
    return s == Schedule::sequential ? "sequential" : "random_learning";
}

struct TrainConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    Optimizer optimizer = Optimizer::adam;
    Schedule schedule = Schedule::sequential;
    int batch_size = 8;
    int scale = 3;
    // Budgets: 0 disables that budget; at least one must be set.
    int max_epochs = 0;
    long max_steps = 0;
    double max_seconds = 0.0;
    // Checkpointing: every N completed epochs (0 = only when training ends),
    // written to checkpoint_path when it is non-empty.
    int checkpoint_every = 0;
    std::string checkpoint_path;
    bool eval_psnr = false;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning rate must be positive");
        if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("train config: beta1 must be in [0, 1)");
        if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("train config: beta2 must be in [0, 1)");
        if (!(epsilon > 0.0)) throw std::invalid_argument("train config: epsilon must be positive");
        if (batch_size < 1) throw std::invalid_argument("train config: batch size must be at least 1");
        if (scale < 2 || scale > 4) throw std::invalid_argument("train config: scale must be 2, 3, or 4");
        if (max_epochs < 0 || max_steps < 0 || max_seconds < 0)
            throw std::invalid_argument("train config: budgets must be non-negative");
        if (max_epochs == 0 && max_steps == 0 && max_seconds == 0.0)
            throw std::invalid_argument("train config: no stopping budget configured");
        if (checkpoint_every < 0) throw std::invalid_argument("train config: checkpoint cadence must be non-negative");
    }
};

// One input/target tile pair; both tensors share extents.
struct TrainPair {
    Tensor input;
    Tensor target;
};

struct EpochRecord {
    int epoch = 0;
    int batches = 0;
    long samples = 0;
    double seconds = 0.0;
    double loss = 0.0;
    std::optional<double> psnr_db;
};

struct TrainResult {
    Model model;  // weights of the best-loss epoch
    std::vector<EpochRecord> epochs;
    double best_loss = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    long steps = 0;
    int completed_epochs = 0;
    bool aborted_epoch = false;
};

// Mean batch objective: (1 / 2N) * sum_i ||target_i - prediction_i||^2 over
// the N pairs named by `indices`.
inline double batch_loss(const Model& m, const std::vector<TrainPair>& pairs,
                         const std::vector<int>& indices) {
    if (indices.empty()) throw std::invalid_argument("batch_loss: empty batch");
    double total = 0.0;
    for (int idx : indices) {
        const TrainPair& p = pairs.at(static_cast<std::size_t>(idx));
        const Tensor pred = forward(m, p.input);
        detail::check_same_shape(pred, p.target, "batch_loss");
        for (std::size_t j = 0; j < pred.data.size(); ++j) {
            const double d = p.target.data[j] - pred.data[j];
            total += d * d;
        }
    }
    return total / (2.0 * static_cast<double>(indices.size()));
}

inline double batch_loss(const Model& m, const std::vector<TrainPair>& pairs) {
    std::vector<int> all(pairs.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    return batch_loss(m, pairs, all);
}

// Adam first/second moment buffers, aligned with Model::kernels() order.
struct OptimizerState {
    long t = 0;
    std::vector<std::vector<double>> m_w, v_w;
    std::vector<std::vector<double>> m_b, v_b;
};

inline OptimizerState init_optimizer_state(const Model& m) {
    OptimizerState st;
    for (const auto& [name, k] : m.kernels()) {
        (void)name;
        st.m_w.emplace_back(k->weights.data.size(), 0.0);
        st.v_w.emplace_back(k->weights.data.size(), 0.0);
        st.m_b.emplace_back(k->bias.size(), 0.0);
        st.v_b.emplace_back(k->bias.size(), 0.0);
    }
    return st;
}

namespace detail {

inline bool all_finite(const ModelGrads& g) {
    for (const Tensor& w : g.weights)
        for (double v : w.data)
            if (!std::isfinite(v)) return false;
    for (const auto& b : g.bias)
        for (double v : b)
            if (!std::isfinite(v)) return false;
    return true;
}

inline void adam_update(double& w, double g, double& m, double& v, double bc1,
                        double bc2, const TrainConfig& cfg) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    const double mh = m / bc1;
    const double vh = v / bc2;
    w = snap_f32(w - cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon));
}

}  // namespace detail

// Applies one optimizer step in double precision, then snaps every parameter
// back to its float32 representation so saved weights reload bit-exactly.
inline void optimizer_step(Model& m, const ModelGrads& g, OptimizerState& st,
                           const TrainConfig& cfg) {
    auto kernels = m.kernels();
    if (g.weights.size() != kernels.size())
        throw std::invalid_argument("optimizer_step: gradient/model layer count mismatch");
    if (cfg.optimizer == Optimizer::gd) {
        for (std::size_t i = 0; i < kernels.size(); ++i) {
            ConvKernel& k = *kernels[i].second;
            for (std::size_t j = 0; j < k.weights.data.size(); ++j)
                k.weights.data[j] = detail::snap_f32(k.weights.data[j] - cfg.learning_rate * g.weights[i].data[j]);
            for (std::size_t j = 0; j < k.bias.size(); ++j)
                k.bias[j] = detail::snap_f32(k.bias[j] - cfg.learning_rate * g.bias[i][j]);
        }
        ++st.t;
        return;
    }
    ++st.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < kernels.size(); ++i) {
        ConvKernel& k = *kernels[i].second;
        for (std::size_t j = 0; j < k.weights.data.size(); ++j)
            detail::adam_update(k.weights.data[j], g.weights[i].data[j], st.m_w[i][j], st.v_w[i][j], bc1, bc2, cfg);
        for (std::size_t j = 0; j < k.bias.size(); ++j)
            detail::adam_update(k.bias[j], g.bias[i][j], st.m_b[i][j], st.v_b[i][j], bc1, bc2, cfg);
    }
}

// Degrades one high-resolution tile: bicubic downscale by 1/scale, bicubic
// upscale back, crop to the source extents, clamp to [0, 1].
inline Tensor degrade_tile(const Tensor& hr, int scale) {
    if (scale < 2) throw std::invalid_argument("degrade_tile: scale must be at least 2");
    const Tensor low = bicubic_resize(hr, 1.0 / static_cast<double>(scale));
    Tensor up = bicubic_resize(low, static_cast<double>(scale));
    if (up.height() < hr.height() || up.width() < hr.width())
        throw std::logic_error("degrade_tile: upscaled tile smaller than source");
    Tensor out({hr.dims[0], hr.dims[1], hr.dims[2]});
    for (int c = 0; c < hr.dims[0]; ++c)
        for (int y = 0; y < hr.dims[1]; ++y)
            for (int x = 0; x < hr.dims[2]; ++x)
                out(c, y, x) = std::clamp(up(c, y, x), 0.0, 1.0);
    return out;
}

inline std::vector<TrainPair> make_training_pairs(const std::vector<Tensor>& hr_tiles, int scale) {
    std::vector<TrainPair> pairs;
    pairs.reserve(hr_tiles.size());
    for (const Tensor& t : hr_tiles) pairs.push_back({degrade_tile(t, scale), t});
    return pairs;
}

// Checkpoint files: the weight file itself plus a "<path>.json" telemetry
// sidecar holding the per-epoch records.
inline std::string sidecar_path(const std::string& weight_path) { return weight_path + ".json"; }

inline void write_sidecar(const std::vector<EpochRecord>& records, const std::string& weight_path) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const EpochRecord& r : records) {
        nlohmann::json e{{"epoch", r.epoch}, {"batches", r.batches},   {"samples", r.samples},
                         {"seconds", r.seconds}, {"loss", r.loss}};
        if (r.psnr_db) e["psnr"] = *r.psnr_db;
        epochs.push_back(std::move(e));
    }
    const std::string path = sidecar_path(weight_path);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write telemetry sidecar: " + path);
    out << nlohmann::json{{"epochs", std::move(epochs)}}.dump(2) << '\n';
}

inline void checkpoint(const Model& m, const std::vector<EpochRecord>& records,
                       const std::string& weight_path) {
    save_weights(m, weight_path);
    write_sidecar(records, weight_path);
}

struct ResumeState {
    Model model;
    std::vector<EpochRecord> epochs;
    bool telemetry_missing = false;
};

inline std::vector<EpochRecord> read_sidecar(const std::string& weight_path) {
    std::ifstream in(sidecar_path(weight_path));
    if (!in) throw std::runtime_error("cannot open telemetry sidecar: " + sidecar_path(weight_path));
    nlohmann::json j;
    in >> j;
    std::vector<EpochRecord> records;
    for (const auto& e : j.at("epochs")) {
        EpochRecord r;
        r.epoch = e.at("epoch").get<int>();
        r.batches = e.at("batches").get<int>();
        r.samples = e.at("samples").get<long>();
        r.seconds = e.at("seconds").get<double>();
        r.loss = e.at("loss").get<double>();
        if (e.contains("psnr")) r.psnr_db = e.at("psnr").get<double>();
        records.push_back(r);
    }
    return records;
}

// Loads a checkpoint for continued training.  A weight file without its
// telemetry sidecar is still usable: the weights load and the history resets.
inline ResumeState resume(const std::string& weight_path, const ModelConfig& cfg) {
    ResumeState rs{load_weights(weight_path, cfg), {}, false};
    std::ifstream probe(sidecar_path(weight_path));
    if (!probe) {
        rs.telemetry_missing = true;
        std::fprintf(stderr, "warning: telemetry missing, weights loaded\n");
        return rs;
    }
    probe.close();
    rs.epochs = read_sidecar(weight_path);
    return rs;
}

namespace detail {

inline double epoch_psnr(const Model& m, const std::vector<TrainPair>& pairs) {
    const std::size_t n = std::min<std::size_t>(pairs.size(), 8);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor pred = forward(m, pairs[i].input);
        Tensor a = pred, b = pairs[i].target;
        for (double& v : a.data) v *= 255.0;
        for (double& v : b.data) v *= 255.0;
        sum += psnr(b, a, 8);
    }
    return sum / static_cast<double>(n);
}

}  // namespace detail

using EpochObserver = std::function<void(const EpochRecord&)>;

// Core loop.  Starts from `model` (with `history` epochs already recorded),
// re-shuffles the pair order every epoch, and applies either every batch
// (sequential) or a random-learning subset.  Budgets count this invocation
// only.  Returns the weights of the best mean-loss epoch.
inline TrainResult train_from(Model model, std::vector<EpochRecord> history,
                              const std::vector<TrainPair>& pairs, const TrainConfig& cfg,
                              const EpochObserver& observe = {}) {
    cfg.validate();
    if (pairs.empty()) throw std::invalid_argument("train: empty dataset");
    for (const TrainPair& p : pairs) {
        detail::check_same_shape(p.input, p.target, "train pair");
        if (p.input.dims[0] != model.cfg.channels_in)
            throw std::invalid_argument("train pair: channel count does not match the model");
    }

    TrainResult res;
    res.epochs = std::move(history);
    const int first_epoch = res.epochs.empty() ? 1 : res.epochs.back().epoch + 1;

    Rng rng(Rng::mix(cfg.seed, 0x747261696eULL));
    OptimizerState st = init_optimizer_state(model);
    Model best = model;
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };
    auto budget_left = [&] {
        if (cfg.max_steps > 0 && res.steps >= cfg.max_steps) return false;
        if (cfg.max_seconds > 0 && elapsed() >= cfg.max_seconds) return false;
        return true;
    };

    int epochs_this_run = 0;
    for (int epoch = first_epoch; budget_left(); ++epoch) {
        if (cfg.max_epochs > 0 && epochs_this_run >= cfg.max_epochs) break;
        const auto epoch_start = std::chrono::steady_clock::now();

        auto batches = make_batches(pairs.size(), cfg.batch_size, rng);
        if (cfg.schedule == Schedule::random_learning) {
            BatchPlan plan = random_select(batches, rng);
            std::vector<std::vector<int>> chosen;
            chosen.reserve(plan.selected.size());
            std::vector<int> sel = plan.selected;
            std::sort(sel.begin(), sel.end());
            for (int idx : sel) chosen.push_back(std::move(batches[static_cast<std::size_t>(idx)]));
            batches = std::move(chosen);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        double loss_sum = 0.0;
        bool aborted = false;
        bool truncated = false;
        for (const std::vector<int>& batch : batches) {
            if (!budget_left()) {
                truncated = true;
                break;
            }
            const double n = static_cast<double>(batch.size());
            ModelGrads grads;
            double loss = 0.0;
            bool first = true;
            for (int idx : batch) {
                const TrainPair& p = pairs[static_cast<std::size_t>(idx)];
                ForwardCache c = forward_train(model, p.input);
                Tensor grad_out(c.output.dims);
                for (std::size_t j = 0; j < c.output.data.size(); ++j) {
                    const double d = c.output.data[j] - p.target.data[j];
                    loss += d * d;
                    grad_out.data[j] = d / n;
                }
                ModelGrads g = backward(model, c, grad_out);
                if (first) {
                    grads = std::move(g);
                    first = false;
                } else {
                    grads.add(g);
                }
            }
            loss /= 2.0 * n;
            if (!std::isfinite(loss) || !detail::all_finite(grads)) {
                std::fprintf(stderr, "warning: non-finite loss or gradient in epoch %d; epoch aborted\n", epoch);
                res.aborted_epoch = true;
                aborted = true;
                break;
            }
            optimizer_step(model, grads, st, cfg);
            ++res.steps;
            ++rec.batches;
            rec.samples += static_cast<long>(batch.size());
            loss_sum += loss;
        }

        if (aborted && rec.batches == 0) {
            ++epochs_this_run;  // nothing recordable, but the attempt counts
            continue;
        }
        if (rec.batches == 0) break;  // budget exhausted before any batch ran
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
        rec.loss = loss_sum / static_cast<double>(rec.batches);
        if (cfg.eval_psnr) rec.psnr_db = detail::epoch_psnr(model, pairs);
        if (observe) observe(rec);
        res.epochs.push_back(rec);
        ++epochs_this_run;
        if (!aborted && !truncated) ++res.completed_epochs;

        if (rec.loss < res.best_loss) {
            res.best_loss = rec.loss;
            res.best_epoch = rec.epoch;
            best = model;
        }
        if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
            epochs_this_run % cfg.checkpoint_every == 0)
            checkpoint(model, res.epochs, cfg.checkpoint_path);
        if (truncated) break;
    }

    res.model = std::move(best);
    if (res.epochs.empty() || !std::isfinite(res.best_loss)) res.model = std::move(model);
    if (!cfg.checkpoint_path.empty()) checkpoint(res.model, res.epochs, cfg.checkpoint_path);
    return res;
}

inline TrainResult train(const std::vector<TrainPair>& pairs, const ModelConfig& mcfg,
                         const TrainConfig& cfg, const EpochObserver& observe = {}) {
    return train_from(build_model(mcfg), {}, pairs, cfg, observe);
}

// Convenience entry point for raw high-resolution tiles: degrades each tile
// with the configured scale, then trains on the resulting pairs.
inline TrainResult train_tiles(const std::vector<Tensor>& hr_tiles, const ModelConfig& mcfg,
                               const TrainConfig& cfg) {
    return train(make_training_pairs(hr_tiles, cfg.scale), mcfg, cfg);
}

}  // namespace sr
