#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "diffmi/common.hpp"
#include "diffmi/rng.hpp"
#include "diffmi/tensor.hpp"

namespace diffmi {

struct Dims {
    int channels = 1;
    int height = 8;
    int width = 8;

    std::int64_t flat() const {
        return static_cast<std::int64_t>(channels) * height * width;
    }
    void validate() const {
        if (channels < 1 || height < 2 || width < 2)
            throw ConfigError("dims must be at least 1 channel and 2x2 pixels");
    }
};

struct Example {
    std::int64_t id = 0;
    Tensor pixels;  // (C, H, W), values in [-1, 1]

    Tensor flattened() const {
        return Tensor({static_cast<int>(pixels.size())},
                      {pixels.data().begin(), pixels.data().end()});
    }
};

enum class DatasetKind { Blobs, Bars, Mix };

inline std::string to_string(DatasetKind k) {
    switch (k) {
        case DatasetKind::Blobs: return "blobs";
        case DatasetKind::Bars: return "bars";
        case DatasetKind::Mix: return "mix";
    }
    return "?";
}

inline DatasetKind dataset_kind_from_string(const std::string& s) {
    if (s == "blobs") return DatasetKind::Blobs;
    if (s == "bars") return DatasetKind::Bars;
    if (s == "mix") return DatasetKind::Mix;
    throw ConfigError("unknown dataset family '" + s + "' (expected blobs, bars or mix)");
}

namespace detail {

inline void paint_blobs(Tensor& img, const Dims& d, Rng& rng) {
    for (int c = 0; c < d.channels; ++c) {
        const int bumps = 1 + static_cast<int>(rng.uniform_int(4));
        for (int b = 0; b < bumps; ++b) {
            const double cx = rng.uniform(0.0, d.width - 1.0);
            const double cy = rng.uniform(0.0, d.height - 1.0);
            const double s = rng.uniform(0.7, 2.5);
            const double amp = rng.uniform(0.4, 1.0);
            const double sign = rng.uniform() < 0.7 ? 1.0 : -1.0;
            const double inv = 1.0 / (2.0 * s * s);
            for (int y = 0; y < d.height; ++y) {
                for (int x = 0; x < d.width; ++x) {
                    const double dx = x - cx, dy = y - cy;
                    const std::int64_t idx =
                        (static_cast<std::int64_t>(c) * d.height + y) * d.width + x;
                    img[idx] += sign * amp * std::exp(-(dx * dx + dy * dy) * inv);
                }
            }
        }
    }
}

inline void paint_bars(Tensor& img, const Dims& d, Rng& rng) {
    for (std::int64_t i = 0; i < img.size(); ++i) img[i] = -1.0;
    for (int c = 0; c < d.channels; ++c) {
        const int rects = 1 + static_cast<int>(rng.uniform_int(3));
        for (int r = 0; r < rects; ++r) {
            const int x0 = static_cast<int>(rng.uniform_int(d.width));
            const int w = 1 + static_cast<int>(rng.uniform_int(d.width - x0));
            const int y0 = static_cast<int>(rng.uniform_int(d.height));
            const int h = 1 + static_cast<int>(rng.uniform_int(d.height - y0));
            const double v = rng.uniform(0.2, 1.0);
            for (int y = y0; y < y0 + h; ++y) {
                for (int x = x0; x < x0 + w; ++x) {
                    const std::int64_t idx =
                        (static_cast<std::int64_t>(c) * d.height + y) * d.width + x;
                    img[idx] = std::max(img[idx], v);
                }
            }
        }
    }
}

}  // namespace detail

/// Procedural image families. Pure function of (kind, n, dims, seed); each
/// example draws from its own derived stream, so a prefix of a larger
/// dataset equals the smaller dataset.
inline std::vector<Example> generate(DatasetKind kind, std::int64_t n, const Dims& dims,
                                     std::uint64_t seed) {
    if (n < 1) throw ConfigError("dataset size must be at least 1");
    dims.validate();
    std::vector<Example> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        Tensor img({dims.channels, dims.height, dims.width});
        DatasetKind k = kind;
        if (k == DatasetKind::Mix) k = rng.uniform() < 0.5 ? DatasetKind::Blobs : DatasetKind::Bars;
        if (k == DatasetKind::Blobs)
            detail::paint_blobs(img, dims, rng);
        else
            detail::paint_bars(img, dims, rng);
        for (std::int64_t p = 0; p < img.size(); ++p)
            img[p] = std::clamp(img[p], -1.0, 1.0);
        out.push_back(Example{i, std::move(img)});
    }
    return out;
}

/// The three attack populations: the private training set, the public
/// auxiliary set the attacker sees, and the nonmember holdout used for
/// evaluation. Pairwise disjoint by id.
struct DatasetSplit {
    std::vector<Example> members;
    std::vector<Example> public_set;
    std::vector<Example> holdout;
};

/// Half the data becomes members; public_fraction of the remaining half
/// becomes the public set and the rest the holdout. Shuffle is seeded.
inline DatasetSplit split(std::vector<Example> data, double public_fraction,
                          std::uint64_t seed) {
    const std::int64_t n = static_cast<std::int64_t>(data.size());
    if (n < 4) throw ConfigError("split needs at least 4 examples");
    if (!(public_fraction > 0.0 && public_fraction < 1.0))
        throw ConfigError("public_fraction must be in (0,1)");

    Rng rng(seed);
    for (std::int64_t i = n - 1; i > 0; --i) {
        const std::int64_t j = rng.uniform_int(i + 1);
        std::swap(data[static_cast<std::size_t>(i)], data[static_cast<std::size_t>(j)]);
    }

    const std::int64_t member_n = n / 2;
    const std::int64_t rest = n - member_n;
    const std::int64_t public_n =
        static_cast<std::int64_t>(rest * public_fraction);

    DatasetSplit out;
    out.members.assign(data.begin(), data.begin() + member_n);
    out.public_set.assign(data.begin() + member_n, data.begin() + member_n + public_n);
    out.holdout.assign(data.begin() + member_n + public_n, data.end());
    return out;
}

}  // namespace diffmi
