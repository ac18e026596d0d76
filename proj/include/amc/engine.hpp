#ifndef AMC_ENGINE_HPP
#define AMC_ENGINE_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "amc/adam.hpp"
#include "amc/checkpoint.hpp"
#include "amc/config.hpp"
#include "amc/episode.hpp"
#include "amc/metrics.hpp"
#include "amc/meta_head.hpp"
#include "amc/model.hpp"

namespace amc {

// Learning rate after `episodes_done` episodes: lr0 * decay^floor(e/every).
// Decay counts episodes, not optimizer steps; a batch picks up the rate its
// first episode falls under.
inline double lr_at(std::int64_t episodes_done, const TrainConfig& cfg) {
    if (episodes_done < 0) throw ContractError("lr_at: negative episode count");
    const auto k = episodes_done / cfg.decay_every;
    return cfg.lr0 * std::pow(cfg.lr_decay, static_cast<double>(k));
}

template <typename S>
struct EpisodeOutcome {
    Tensor<S> loss;
    int correct = 0;
    int total = 0;
};

// Shared forward path for training and evaluation: embed the support set,
// build one prototype per episode class, score every query.
template <typename S>
EpisodeOutcome<S> episode_forward(const Model<S>& model, const Dataset& ds, const Episode& ep) {
    std::vector<std::vector<Tensor<S>>> by_class(static_cast<std::size_t>(ep.n_way));
    for (const auto& item : ep.support)
        by_class[static_cast<std::size_t>(item.label)].push_back(model.embed(episode_image<S>(ds, item)));

    std::vector<Tensor<S>> prototypes;
    prototypes.reserve(static_cast<std::size_t>(ep.n_way));
    for (const auto& zs : by_class) prototypes.push_back(build_prototype(zs, model.support_weights(zs)));

    EpisodeOutcome<S> out;
    std::vector<Tensor<S>> logits;
    std::vector<int> labels;
    logits.reserve(ep.query.size());
    for (const auto& item : ep.query) {
        auto lg = classify_logits(model.embed(episode_image<S>(ds, item)), prototypes, model.tau());
        int best = 0;
        for (int c = 1; c < ep.n_way; ++c)
            if (lg.values()[static_cast<std::size_t>(c)] > lg.values()[static_cast<std::size_t>(best)]) best = c;
        if (best == item.label) ++out.correct;
        logits.push_back(std::move(lg));
        labels.push_back(item.label);
    }
    out.total = static_cast<int>(ep.query.size());
    out.loss = episode_loss(logits, labels);
    return out;
}

struct EvalReport {
    double mean_accuracy = 0.0;  // percent
    double ci95 = 0.0;           // percent
    double mean_loss = 0.0;
    int episode_count = 0;
    std::vector<double> per_episode_accuracies;  // fractions in [0,1]
};

// Mean and 95% interval (1.96 * sample stddev / sqrt(E)) over per-episode
// query accuracy.
inline EvalReport summarize_accuracies(const std::vector<double>& accuracies, double mean_loss) {
    const int E = static_cast<int>(accuracies.size());
    if (E < 2) throw ContractError("summarize_accuracies: need at least 2 episodes");
    double mean = 0.0;
    for (double a : accuracies) mean += a;
    mean /= E;
    double var = 0.0;
    for (double a : accuracies) var += (a - mean) * (a - mean);
    var /= (E - 1);
    EvalReport rep;
    rep.mean_accuracy = mean * 100.0;
    rep.ci95 = 1.96 * std::sqrt(var) / std::sqrt(static_cast<double>(E)) * 100.0;
    rep.mean_loss = mean_loss;
    rep.episode_count = E;
    rep.per_episode_accuracies = accuracies;
    return rep;
}

template <typename S>
EvalReport evaluate(const Model<S>& model, const Dataset& ds, int episodes, int n, int k, int q, std::uint64_t seed) {
    if (episodes < 2) throw ContractError("evaluate: need at least 2 episodes");
    NoGradGuard no_grad;
    Rng rng(Rng::derive(seed, 0xEA15ull));
    std::vector<double> accs;
    accs.reserve(static_cast<std::size_t>(episodes));
    double loss_sum = 0.0;
    for (int e = 0; e < episodes; ++e) {
        const auto ep = sample_episode(ds, n, k, q, rng);
        const auto out = episode_forward(model, ds, ep);
        accs.push_back(static_cast<double>(out.correct) / out.total);
        loss_sum += static_cast<double>(out.loss.item());
    }
    return summarize_accuracies(accs, loss_sum / episodes);
}

// Episodic training: batches of `batch_episodes` episodes, one Adam step per
// batch on the mean episode loss, validation on a seed-fixed episode set
// every `val_every` episodes and once more at the end. Returns the
// checkpoint with the best validation accuracy.
template <typename S>
Checkpoint<S> train(Model<S>& model, const TrainConfig& cfg, const Dataset& train_set, const Dataset& val_set,
                    MetricSink& sink, bool timing = false) {
    cfg.validate();
    Adam<S> opt(model.params);
    Rng episode_rng(Rng::derive(cfg.seed, 0xE9150DEull));

    Checkpoint<S> best;
    double best_acc = -1.0;
    std::int64_t episodes_done = 0;
    std::int64_t next_val_marker = 1;
    std::int64_t last_val_at = -1;

    const auto run_validation = [&]() {
        last_val_at = episodes_done;
        const auto t0 = std::chrono::steady_clock::now();
        const auto rep = evaluate(model, val_set, cfg.val_episodes, cfg.n_way, cfg.k_shot, cfg.q_queries, cfg.seed);
        const auto t1 = std::chrono::steady_clock::now();
        MetricRecord rec;
        rec.step = static_cast<std::uint64_t>(episodes_done);
        rec.split = "val";
        rec.loss = rep.mean_loss;
        rec.accuracy = rep.mean_accuracy;
        rec.ci95 = rep.ci95;
        rec.lr = lr_at(episodes_done, cfg);
        if (timing) rec.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        sink.write(rec);
        if (rep.mean_accuracy > best_acc) {
            best_acc = rep.mean_accuracy;
            best = make_checkpoint(model, &opt, static_cast<std::uint64_t>(episodes_done), best_acc);
        }
    };

    while (episodes_done < cfg.episodes_total) {
        const auto t0 = std::chrono::steady_clock::now();
        const int batch = static_cast<int>(
            std::min<std::int64_t>(cfg.batch_episodes, cfg.episodes_total - episodes_done));
        const double lr = lr_at(episodes_done, cfg);

        model.params.zero_grad();
        double batch_loss = 0.0;
        int correct = 0, total = 0;
        for (int b = 0; b < batch; ++b) {
            const auto ep = sample_episode(train_set, cfg.n_way, cfg.k_shot, cfg.q_queries, episode_rng);
            auto out = episode_forward(model, train_set, ep);
            const double loss_value = static_cast<double>(out.loss.item());
            if (!std::isfinite(loss_value))
                throw NumericError("training aborted: non-finite loss at episode " +
                                   std::to_string(episodes_done + b + 1) + " (optimizer step " +
                                   std::to_string(opt.step_count() + 1) + ")");
            batch_loss += loss_value;
            correct += out.correct;
            total += out.total;
            // Scaling before backward makes the accumulated gradient the
            // batch-mean gradient without touching the stored loss value.
            backward(scale(out.loss, 1.0 / batch));
        }
        batch_loss /= batch;
        opt.step(lr);
        model.apply_constraints();
        episodes_done += batch;
        const auto t1 = std::chrono::steady_clock::now();

        MetricRecord rec;
        rec.step = static_cast<std::uint64_t>(episodes_done);
        rec.split = "train";
        rec.loss = batch_loss;
        rec.accuracy = 100.0 * correct / total;
        rec.lr = lr;
        if (timing) rec.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        sink.write(rec);

        if (episodes_done >= next_val_marker * static_cast<std::int64_t>(cfg.val_every)) {
            run_validation();
            next_val_marker = episodes_done / cfg.val_every + 1;
        }
    }
    // A final validation so short runs still select a checkpoint, unless the
    // last batch already ended on a validation boundary.
    if (last_val_at != episodes_done) run_validation();
    return best;
}

struct InferResult {
    int label = 0;                      // index into class order given to infer
    std::vector<double> probabilities;  // one per class, sums to 1
    double wall_ms = 0.0;               // embedding + scoring time for the query
};

// Classify one query against prototypes built from a labeled support set.
// `support` is ordered by class; each inner vector holds that class's images.
template <typename S>
InferResult infer(const Model<S>& model, const std::vector<std::vector<Tensor<S>>>& support,
                  const Tensor<S>& query, bool timing = false) {
    if (support.size() < 2) throw ConfigError("infer: need support images from at least 2 classes");
    NoGradGuard no_grad;
    std::vector<Tensor<S>> prototypes;
    prototypes.reserve(support.size());
    for (const auto& images : support) {
        if (images.empty()) throw ConfigError("infer: a support class has no images");
        std::vector<Tensor<S>> zs;
        zs.reserve(images.size());
        for (const auto& img : images) zs.push_back(model.embed(img));
        prototypes.push_back(build_prototype(zs, model.support_weights(zs)));
    }

    const auto t0 = std::chrono::steady_clock::now();
    const auto probs = classify(model.embed(query), prototypes, model.tau());
    const auto t1 = std::chrono::steady_clock::now();

    InferResult res;
    res.probabilities.assign(probs.values().begin(), probs.values().end());
    for (std::size_t c = 1; c < res.probabilities.size(); ++c)
        if (res.probabilities[c] > res.probabilities[static_cast<std::size_t>(res.label)])
            res.label = static_cast<int>(c);
    if (timing) res.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    return res;
}

}  // namespace amc

#endif
