#ifndef AMC_CONFIG_HPP
#define AMC_CONFIG_HPP

#include <algorithm>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "amc/error.hpp"

namespace amc {

// Architecture knobs. The defaults pin the published-size network; the tiny
// variant exists so exhaustive gradient checks finish in minutes.
struct ModelConfig {
    int image_size = 64;
    std::vector<int> block_channels{64, 128, 128, 128};
    int proj_channels = 64;            // per-level pyramid width
    std::vector<int> dilations{1, 2, 4, 8};
    int fuse_channels = 256;
    int attn_reduction = 4;            // attention hidden = proj_channels / reduction
    double tau_init = 10.0;
    double tau_min = 0.01;
    double tau_max = 100.0;
    bool use_pyramid = true;
    bool use_accm = true;
    bool use_corr_meta = true;

    int levels() const { return static_cast<int>(dilations.size()); }
    int pairs() const { return levels() * (levels() - 1) / 2; }
    int attn_hidden() const { return std::max(1, proj_channels / attn_reduction); }

    // Width of the embedding z under the active component switches.
    int embedding_dim() const {
        if (use_accm) return fuse_channels;
        if (use_pyramid) return levels() * proj_channels;
        return block_channels.back();
    }

    void validate() const {
        if (image_size < 8) throw ConfigError("image_size must be at least 8");
        if (block_channels.size() != 4) throw ConfigError("backbone needs exactly 4 blocks");
        for (int c : block_channels)
            if (c < 1) throw ConfigError("block channel counts must be positive");
        if (proj_channels < 1 || fuse_channels < 1) throw ConfigError("channel widths must be positive");
        if (dilations.empty() || dilations.front() != 1) throw ConfigError("dilations must start at 1");
        for (std::size_t i = 1; i < dilations.size(); ++i)
            if (dilations[i] <= dilations[i - 1]) throw ConfigError("dilations must be strictly increasing");
        if (levels() < 2) throw ConfigError("pyramid needs at least 2 levels");
        if (attn_reduction < 1) throw ConfigError("attn_reduction must be positive");
        if (!(tau_min > 0.0 && tau_min < tau_max)) throw ConfigError("temperature bounds must satisfy 0 < min < max");
        if (!(tau_init >= tau_min && tau_init <= tau_max)) throw ConfigError("tau_init outside its clamp range");
        if (use_accm && !use_pyramid) throw ConfigError("the correlation module requires the pyramid");
    }

    static ModelConfig tiny() {
        ModelConfig c;
        c.image_size = 16;
        c.block_channels = {8, 16, 16, 16};
        c.proj_channels = 8;
        c.fuse_channels = 32;
        return c;
    }

    std::string to_kv() const;
    static ModelConfig from_kv(const std::string& text);
};

namespace detail {

inline std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

inline std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) throw ConfigError("empty entry in int list '" + s + "'");
        out.push_back(std::stoi(tok));
    }
    return out;
}

}  // namespace detail

inline std::string ModelConfig::to_kv() const {
    std::ostringstream os;
    os.precision(17);
    os << "image_size=" << image_size << "\n"
       << "block_channels=" << detail::join_ints(block_channels) << "\n"
       << "proj_channels=" << proj_channels << "\n"
       << "dilations=" << detail::join_ints(dilations) << "\n"
       << "fuse_channels=" << fuse_channels << "\n"
       << "attn_reduction=" << attn_reduction << "\n"
       << "tau_init=" << tau_init << "\n"
       << "tau_min=" << tau_min << "\n"
       << "tau_max=" << tau_max << "\n"
       << "use_pyramid=" << (use_pyramid ? 1 : 0) << "\n"
       << "use_accm=" << (use_accm ? 1 : 0) << "\n"
       << "use_corr_meta=" << (use_corr_meta ? 1 : 0) << "\n";
    return os.str();
}

inline ModelConfig ModelConfig::from_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("malformed config line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto need = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw ConfigError("config missing key '" + key + "'");
        return it->second;
    };
    ModelConfig c;
    c.image_size = std::stoi(need("image_size"));
    c.block_channels = detail::split_ints(need("block_channels"));
    c.proj_channels = std::stoi(need("proj_channels"));
    c.dilations = detail::split_ints(need("dilations"));
    c.fuse_channels = std::stoi(need("fuse_channels"));
    c.attn_reduction = std::stoi(need("attn_reduction"));
    c.tau_init = std::stod(need("tau_init"));
    c.tau_min = std::stod(need("tau_min"));
    c.tau_max = std::stod(need("tau_max"));
    c.use_pyramid = need("use_pyramid") == "1";
    c.use_accm = need("use_accm") == "1";
    c.use_corr_meta = need("use_corr_meta") == "1";
    c.validate();
    return c;
}

// Episodic schedule knobs.
struct TrainConfig {
    int n_way = 5;
    int k_shot = 5;
    int q_queries = 15;
    int episodes_total = 10000;
    int batch_episodes = 8;
    double lr0 = 1e-3;
    double lr_decay = 0.5;
    int decay_every = 2000;
    int val_every = 500;
    int val_episodes = 600;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_way < 2) throw ConfigError("n_way must be at least 2");
        if (k_shot < 1 || q_queries < 1) throw ConfigError("k_shot and q_queries must be positive");
        if (episodes_total < 1 || batch_episodes < 1) throw ConfigError("episode counts must be positive");
        if (lr0 <= 0.0 || lr_decay <= 0.0 || lr_decay > 1.0) throw ConfigError("bad learning-rate schedule");
        if (decay_every < 1 || val_every < 1 || val_episodes < 2) throw ConfigError("bad cadence settings");
    }
};

}  // namespace amc

#endif
