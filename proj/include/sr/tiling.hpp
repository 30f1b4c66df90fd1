#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sr/rng.hpp"
#include "sr/tensor.hpp"

namespace sr {

// Placement record mapping each tile back to its origin in the source image.
// Interior origins lie on the t-grid; the last row/column of tiles is anchored
// to the image edge when the extent is not a multiple of t, so coverage is
// always complete.
struct TileGrid {
    int height = 0;
    int width = 0;
    int tile = 0;
    int channels = 0;
    std::vector<std::pair<int, int>> origins;  // row-major (row, col)
};

namespace detail {

inline std::vector<int> axis_origins(int extent, int t) {
    const int count = (extent + t - 1) / t;
    std::vector<int> o(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) o[i] = std::min(i * t, extent - t);
    return o;
}

}  // namespace detail

inline std::pair<std::vector<Tensor>, TileGrid> split_tiles(const Tensor& image,
                                                            int t) {
    if (image.rank() != 3)
        throw std::invalid_argument("split_tiles expects a (channels, height, width) image");
    if (t < 1) throw std::invalid_argument("split_tiles: tile size must be positive");
    const int h = image.height(), w = image.width(), c_n = image.channels();
    if (h < t || w < t)
        throw std::invalid_argument("split_tiles: image (" + std::to_string(h) + "x" +
                                    std::to_string(w) + ") is smaller than the tile size " +
                                    std::to_string(t));
    TileGrid grid;
    grid.height = h;
    grid.width = w;
    grid.tile = t;
    grid.channels = c_n;
    const std::vector<int> rows = detail::axis_origins(h, t);
    const std::vector<int> cols = detail::axis_origins(w, t);
    std::vector<Tensor> tiles;
    tiles.reserve(rows.size() * cols.size());
    for (int r : rows)
        for (int c : cols) {
            grid.origins.emplace_back(r, c);
            Tensor tile({c_n, t, t});
            for (int ch = 0; ch < c_n; ++ch)
                for (int i = 0; i < t; ++i)
                    for (int j = 0; j < t; ++j)
                        tile(ch, i, j) = image(ch, r + i, c + j);
            tiles.push_back(std::move(tile));
        }
    return {std::move(tiles), std::move(grid)};
}

// Writes each tile back to its origin; pixels covered by several edge-anchored
// tiles receive the average of the contributions.
inline Tensor merge_tiles(const std::vector<Tensor>& tiles, const TileGrid& grid) {
    if (tiles.size() != grid.origins.size())
        throw std::invalid_argument("merge_tiles: tile count does not match the grid");
    const int t = grid.tile;
    Tensor sum({grid.channels, grid.height, grid.width});
    std::vector<int> count(static_cast<std::size_t>(grid.height) * grid.width, 0);
    for (std::size_t n = 0; n < tiles.size(); ++n) {
        const Tensor& tile = tiles[n];
        if (tile.dims != std::vector<int>{grid.channels, t, t})
            throw std::invalid_argument("merge_tiles: tile " + std::to_string(n) +
                                        " extents do not match the grid tile size");
        const auto [r, c] = grid.origins[n];
        for (int ch = 0; ch < grid.channels; ++ch)
            for (int i = 0; i < t; ++i)
                for (int j = 0; j < t; ++j) sum(ch, r + i, c + j) += tile(ch, i, j);
        for (int i = 0; i < t; ++i)
            for (int j = 0; j < t; ++j)
                ++count[static_cast<std::size_t>(r + i) * grid.width + c + j];
    }
    for (int ch = 0; ch < grid.channels; ++ch)
        for (int i = 0; i < grid.height; ++i)
            for (int j = 0; j < grid.width; ++j)
                sum(ch, i, j) /= count[static_cast<std::size_t>(i) * grid.width + j];
    return sum;
}

// Shuffles tile indices with the seeded RNG and chunks them into ceil(n/b)
// batches (the last may be short).  Batches hold indices into the tile list so
// callers can gather tensors lazily.
inline std::vector<std::vector<int>> make_batches(std::size_t n_tiles, int b,
                                                  Rng& rng) {
    if (n_tiles == 0) throw std::invalid_argument("make_batches: no tiles");
    if (b < 1) throw std::invalid_argument("make_batches: batch size must be at least 1");
    std::vector<int> order(n_tiles);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<std::vector<int>> batches;
    for (std::size_t i = 0; i < n_tiles; i += static_cast<std::size_t>(b)) {
        const std::size_t end = std::min(n_tiles, i + static_cast<std::size_t>(b));
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

inline std::vector<std::vector<int>> make_batches(const std::vector<Tensor>& tiles,
                                                  int b, Rng& rng) {
    return make_batches(tiles.size(), b, rng);
}

// One epoch's random-learning selection: k batches out of the shuffled list,
// k uniform in {1, ..., max(1, floor(n/(8b)))}, chosen without replacement.
struct BatchPlan {
    int batch_size = 0;
    int batch_count = 0;
    int k_max = 0;
    int k = 0;
    std::vector<int> selected;
};

inline BatchPlan random_select(const std::vector<std::vector<int>>& batches,
                               Rng& rng) {
    if (batches.empty()) throw std::invalid_argument("random_select: no batches");
    BatchPlan plan;
    plan.batch_count = static_cast<int>(batches.size());
    plan.batch_size = static_cast<int>(batches.front().size());
    std::size_t n = 0;
    for (const auto& b : batches) n += b.size();
    // "from 0 to n/(8b)", with k clamped to at least 1 so every epoch trains.
    plan.k_max = std::max(
        1, static_cast<int>(n / (8 * static_cast<std::size_t>(plan.batch_size))));
    plan.k = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(plan.k_max)));
    std::vector<int> pool(batches.size());
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < plan.k; ++i) {
        const std::size_t j =
            static_cast<std::size_t>(i) +
            static_cast<std::size_t>(rng.next_below(pool.size() - static_cast<std::size_t>(i)));
        std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
        plan.selected.push_back(pool[static_cast<std::size_t>(i)]);
    }
    return plan;
}

}  // namespace sr
