#ifndef AMC_SYNTHETIC_HPP
#define AMC_SYNTHETIC_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "amc/dataset.hpp"
#include "amc/error.hpp"
#include "amc/rng.hpp"

namespace amc {

// Recipe for a deterministic texture dataset. Each class is a parameter
// bundle (dominant blob scale, orientation, hue, grating frequency); samples
// jitter the bundle and add noise. `difficulty` in (0,1] is the separation
// scale: 1.0 keeps bundles far apart (easy), lower values randomize the
// incidental cues (phases, layout) so the multi-scale texture vocabulary
// has to carry the decision.
struct SyntheticSpec {
    int n_classes = 10;
    int samples_per_class = 40;
    int image_size = 64;
    std::uint64_t seed = 7;
    double difficulty = 1.0;

    void validate() const {
        if (n_classes < 2) throw ConfigError("synthetic spec: need at least 2 classes");
        if (samples_per_class < 1) throw ConfigError("synthetic spec: need at least 1 sample per class");
        if (image_size < 8) throw ConfigError("synthetic spec: image size must be at least 8");
        if (difficulty <= 0.0 || difficulty > 1.0) throw ConfigError("synthetic spec: difficulty must be in (0,1]");
    }
};

inline void to_json(nlohmann::json& j, const SyntheticSpec& s) {
    j = {{"n_classes", s.n_classes},
         {"samples_per_class", s.samples_per_class},
         {"image_size", s.image_size},
         {"seed", s.seed},
         {"difficulty", s.difficulty}};
}

inline void from_json(const nlohmann::json& j, SyntheticSpec& s) {
    j.at("n_classes").get_to(s.n_classes);
    j.at("samples_per_class").get_to(s.samples_per_class);
    j.at("image_size").get_to(s.image_size);
    j.at("seed").get_to(s.seed);
    j.at("difficulty").get_to(s.difficulty);
}

inline SyntheticSpec load_synthetic_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open synthetic spec '" + path + "'");
    SyntheticSpec spec;
    try {
        spec = nlohmann::json::parse(in).get<SyntheticSpec>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError("bad synthetic spec '" + path + "': " + e.what());
    }
    spec.validate();
    return spec;
}

namespace detail {

struct Rgb {
    double r, g, b;
};

inline Rgb hsv_to_rgb(double h, double s, double v) {
    h = h - std::floor(h);
    const double c = v * s;
    const double hp = h * 6.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1)      { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else             { r = c; b = x; }
    const double m = v - c;
    return {r + m, g + m, b + m};
}

struct ClassBundle {
    double sigma;      // dominant blob scale in pixels
    double theta;      // orientation of streaks and grating
    double hue;        // base hue in [0,1)
    double grating_f;  // background grating frequency (cycles per image)
    double phase;      // anchor grating phase
    bool speckle_on_blobs;  // whether the fine speckle rides the streaks or the background
    double speckle_f;       // speckle frequency (much finer than the grating)
    double sp_phase1, sp_phase2;
    std::vector<std::pair<double, double>> centers;  // anchor streak layout
};

inline ClassBundle class_bundle(const SyntheticSpec& spec, int c) {
    Rng rng(Rng::derive(spec.seed, 1000 + static_cast<std::uint64_t>(c)));
    ClassBundle b;
    // Classes come in twin pairs (2m, 2m+1). Twins share every cue that
    // survives spatial averaging: dominant scale, orientation, hue, grating
    // frequency, speckle frequency. The only thing separating twins is which
    // structure the fine speckle coincides with (streaks vs background), a
    // relation between channels rather than an amount of anything, so pooled
    // first-order statistics cannot split a twin pair while cross-channel
    // co-occurrence can. Pair-level cues still separate the pairs from each
    // other and stay clean across difficulties, which is what lets features
    // learned on one class split carry over to held-out classes.
    const int m = c / 2;
    const int scale_idx = m % 3;  // coarse / mid / fine dominant scale
    const double base = scale_idx == 0 ? 5.0 : (scale_idx == 1 ? 10.0 : 20.0);
    b.sigma = spec.image_size / base * (1.0 + 0.08 * rng.uniform(-1.0, 1.0));
    // Golden-angle walk in orientation space (gratings repeat mod pi) keeps
    // pairs spread for any pair count.
    b.theta = m * 1.94161103873173431 + 0.05 * rng.uniform(-1.0, 1.0);
    b.hue = m * 0.61803398874989485;
    b.hue -= std::floor(b.hue);
    b.grating_f = 2.0 + static_cast<double>(m % 4) + 0.2 * rng.uniform(-1.0, 1.0);
    b.phase = rng.uniform(0.0, 6.283185307179586);
    b.speckle_on_blobs = (c % 2) == 0;
    // Two speckle frequencies, alternating at the pair level: frequency is a
    // plain pooled cue that pulls checker-tuned filters into existence early,
    // which the coincidence signal then rides on.
    b.speckle_f = 9.0 + 3.0 * static_cast<double>(m % 2) + 0.3 * rng.uniform(-1.0, 1.0);
    b.sp_phase1 = rng.uniform(0.0, 6.283185307179586);
    b.sp_phase2 = rng.uniform(0.0, 6.283185307179586);
    const double frac = 10.4 * (b.sigma / spec.image_size) * (b.sigma / spec.image_size);
    // Aim streak coverage near half the canvas so the total speckle energy is
    // roughly the same whichever side hosts it; otherwise plain pooled energy
    // would leak the twin bit.
    const int blobs = std::max(2, static_cast<int>(std::lround(0.45 / frac)));
    for (int i = 0; i < blobs; ++i)
        b.centers.emplace_back(rng.uniform(0.0, static_cast<double>(spec.image_size)),
                               rng.uniform(0.0, static_cast<double>(spec.image_size)));
    return b;
}

}  // namespace detail

// Pure function of the spec: same spec, bitwise-identical pixels. Classes
// carry two kinds of signal: incidental ones (exact phases, exact layout)
// that are strong at difficulty 1 and washed out below, and the texture
// vocabulary (hue, streak scale, orientation, grating frequency, speckle
// coincidence) that survives at every difficulty.
inline Dataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const int S = spec.image_size;
    const double sep = spec.difficulty;
    // Phases and streak layout are the memorizable accidents of a class: they
    // separate a handful of training classes perfectly and mean nothing for
    // held-out ones. They fade to fully random quickly below 1.0 (dead by
    // 0.8) so that at working difficulties only the factor vocabulary (hue,
    // scale, orientation, frequency, coincidence) is left to separate
    // classes. Vocabulary jitters stay gentle so that signal remains crisp;
    // hue in particular is pair-shared, so it can never split a twin pair,
    // only tell pairs apart.
    const double fade = std::min(1.0, 5.0 * (1.0 - sep));
    const double hue_jitter = 0.08 * fade;
    const double theta_jitter = 0.35 * (1.0 - sep);
    const double saturation = 0.30 + 0.50 * sep;
    const double noise_std = 8.0 + 30.0 * (1.0 - sep);
    const double center_jitter = (0.01 + 0.30 * fade) * S;
    const double phase_jitter = 3.14159265358979324 * fade;

    Dataset ds;
    ds.image_size = S;
    for (int c = 0; c < spec.n_classes; ++c) {
        const auto bundle = detail::class_bundle(spec, c);
        DatasetClass cls;
        char namebuf[24];
        std::snprintf(namebuf, sizeof(namebuf), "class_%02d", c);
        cls.name = namebuf;

        for (int s = 0; s < spec.samples_per_class; ++s) {
            Rng rng(Rng::derive(spec.seed, 2'000'000 + static_cast<std::uint64_t>(c) * 100'000 +
                                               static_cast<std::uint64_t>(s)));
            const double theta = bundle.theta + theta_jitter * rng.uniform(-1.0, 1.0);
            const double hue = bundle.hue + hue_jitter * rng.uniform(-1.0, 1.0);
            const double sigma = bundle.sigma * std::exp(0.10 * rng.uniform(-1.0, 1.0));
            const double phase = bundle.phase + phase_jitter * rng.uniform(-1.0, 1.0);
            const double sp1 = bundle.sp_phase1 + phase_jitter * rng.uniform(-1.0, 1.0);
            const double sp2 = bundle.sp_phase2 + phase_jitter * rng.uniform(-1.0, 1.0);
            const double ct = std::cos(theta), st = std::sin(theta);

            const auto fg = detail::hsv_to_rgb(hue, saturation, 0.95);
            const auto bg = detail::hsv_to_rgb(hue + 0.5, saturation * 0.6, 0.40);

            struct Blob {
                double cx, cy;
            };
            std::vector<Blob> blobs(bundle.centers.size());
            for (std::size_t i = 0; i < blobs.size(); ++i) {
                blobs[i].cx = bundle.centers[i].first + center_jitter * rng.uniform(-1.0, 1.0);
                blobs[i].cy = bundle.centers[i].second + center_jitter * rng.uniform(-1.0, 1.0);
            }

            Image img;
            img.width = S;
            img.height = S;
            img.rgb.resize(static_cast<std::size_t>(S) * S * 3);
            const double sig_major = 2.2 * sigma, sig_minor = 0.75 * sigma;
            for (int y = 0; y < S; ++y) {
                for (int x = 0; x < S; ++x) {
                    // Oriented streaks, max-composited so coverage saturates.
                    double mask = 0.0;
                    for (const auto& blob : blobs) {
                        const double dx = x - blob.cx, dy = y - blob.cy;
                        const double u = (dx * ct + dy * st) / sig_major;
                        const double v = (-dx * st + dy * ct) / sig_minor;
                        const double g = std::exp(-0.5 * (u * u + v * v));
                        if (g > mask) mask = g;
                    }
                    const double wave =
                        0.5 + 0.5 * std::sin(6.283185307179586 * bundle.grating_f * (x * ct + y * st) / S + phase);
                    const double bgv = 0.70 + 0.45 * wave;  // grating modulates background brightness
                    // Fine checker riding whichever structure this class puts
                    // it on. Its axes stay image-aligned for every class so
                    // the checker itself is one shared pattern; classes only
                    // move it between structures (and pairs retune its
                    // frequency), which keeps the coincidence cue readable by
                    // one detector across all pairs.
                    const double axis_a = 6.283185307179586 * bundle.speckle_f * x / S;
                    const double axis_b = 6.283185307179586 * bundle.speckle_f * y / S;
                    const double speckle = std::sin(axis_a + sp1) * std::sin(axis_b + sp2);
                    const double host = bundle.speckle_on_blobs ? mask : 1.0 - mask;
                    const double sp_mod = 1.0 + 0.45 * speckle * host;
                    double rgb[3] = {(bg.r * bgv * (1.0 - mask) + fg.r * mask) * sp_mod,
                                     (bg.g * bgv * (1.0 - mask) + fg.g * mask) * sp_mod,
                                     (bg.b * bgv * (1.0 - mask) + fg.b * mask) * sp_mod};
                    const std::size_t o = (static_cast<std::size_t>(y) * S + x) * 3;
                    for (int ch = 0; ch < 3; ++ch) {
                        const double noisy = rgb[ch] * 255.0 + noise_std * rng.normal();
                        img.rgb[o + static_cast<std::size_t>(ch)] =
                            static_cast<std::uint8_t>(std::lround(std::clamp(noisy, 0.0, 255.0)));
                    }
                }
            }
            cls.samples.push_back(std::move(img));
        }
        ds.classes.push_back(std::move(cls));
    }
    return ds;
}

}  // namespace amc

#endif
