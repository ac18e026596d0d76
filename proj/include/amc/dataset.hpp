#ifndef AMC_DATASET_HPP
#define AMC_DATASET_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "amc/error.hpp"
#include "amc/image_io.hpp"
#include "amc/rng.hpp"

namespace amc {

// Eagerly decoded samples grouped by class. Immutable after load; episodes
// reference samples by (class index, sample index) into this structure.
struct DatasetClass {
    std::string name;
    std::vector<Image> samples;  // each already image_size x image_size
};

struct Dataset {
    int image_size = 0;
    std::vector<DatasetClass> classes;

    int class_count() const { return static_cast<int>(classes.size()); }
    const Image& sample(int c, int s) const {
        return classes[static_cast<std::size_t>(c)].samples[static_cast<std::size_t>(s)];
    }
    std::size_t total_samples() const {
        std::size_t n = 0;
        for (const auto& c : classes) n += c.samples.size();
        return n;
    }
};

// One subdirectory per class, files decoded in lexicographic order so the
// same tree always produces the same dataset. A file that fails to decode is
// an error naming that file, never a silent skip.
inline Dataset load_dataset(const std::string& root, int image_size) {
    namespace fs = std::filesystem;
    if (image_size <= 0) throw ConfigError("load_dataset: image size must be positive");
    if (!fs::is_directory(root)) throw DataError("dataset root '" + root + "' is not a directory");

    std::vector<std::string> class_dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) class_dirs.push_back(e.path().filename().string());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty()) throw DataError("dataset root '" + root + "' has no class directories");

    Dataset ds;
    ds.image_size = image_size;
    for (const auto& cname : class_dirs) {
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(fs::path(root) / cname))
            if (e.is_regular_file()) files.push_back(e.path().string());
        std::sort(files.begin(), files.end());
        if (files.empty()) throw DataError("class directory '" + cname + "' in '" + root + "' is empty");

        DatasetClass cls;
        cls.name = cname;
        cls.samples.reserve(files.size());
        for (const auto& f : files) cls.samples.push_back(resize_bilinear(decode_image(f), image_size, image_size));
        ds.classes.push_back(std::move(cls));
    }
    return ds;
}

// Materialize a dataset as a class-per-directory PPM tree, the layout
// load_dataset reads back.
inline void save_dataset_ppm(const Dataset& ds, const std::string& root) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw DataError("cannot create dataset directory '" + root + "'");
    for (const auto& cls : ds.classes) {
        const fs::path dir = fs::path(root) / cls.name;
        fs::create_directories(dir, ec);
        if (ec) throw DataError("cannot create class directory '" + dir.string() + "'");
        for (std::size_t s = 0; s < cls.samples.size(); ++s) {
            char namebuf[32];
            std::snprintf(namebuf, sizeof(namebuf), "sample_%04zu.ppm", s);
            write_ppm((dir / namebuf).string(), cls.samples[s]);
        }
    }
}

// Partition classes (never samples) into train/val/test. Counts are
// floor(ratio * C) for train and val, remainder to test, after a seeded
// shuffle of the class order.
inline std::array<Dataset, 3> split_classes(const Dataset& ds, double train_ratio, double val_ratio,
                                            double test_ratio, std::uint64_t seed) {
    if (train_ratio < 0 || val_ratio < 0 || test_ratio < 0 ||
        std::fabs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9)
        throw ConfigError("split_classes: ratios must be nonnegative and sum to 1");
    const int C = ds.class_count();
    std::vector<int> order(static_cast<std::size_t>(C));
    for (int i = 0; i < C; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng rng(Rng::derive(seed, 0x5011f));
    rng.shuffle(order);

    const int n_train = static_cast<int>(std::floor(train_ratio * C));
    const int n_val = static_cast<int>(std::floor(val_ratio * C));
    std::array<Dataset, 3> out;
    for (auto& d : out) d.image_size = ds.image_size;
    for (int i = 0; i < C; ++i) {
        const int which = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
        out[static_cast<std::size_t>(which)].classes.push_back(ds.classes[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
    }
    // Keep class order deterministic within each split regardless of shuffle.
    for (auto& d : out)
        std::sort(d.classes.begin(), d.classes.end(),
                  [](const DatasetClass& a, const DatasetClass& b) { return a.name < b.name; });
    return out;
}

}  // namespace amc

#endif
