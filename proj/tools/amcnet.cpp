#include <cstdint>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "amc/checkpoint.hpp"
#include "amc/engine.hpp"
#include "amc/synthetic.hpp"

namespace {

struct SplitRatios {
    double train = 0.6, val = 0.2, test = 0.2;
};

SplitRatios parse_split(const std::string& text) {
    SplitRatios r;
    std::istringstream in(text);
    char c1 = 0, c2 = 0;
    if (!(in >> r.train >> c1 >> r.val >> c2 >> r.test) || c1 != ',' || c2 != ',')
        throw amc::ConfigError("--split wants three comma-separated ratios, got '" + text + "'");
    return r;
}

// Assemble the training corpus from either a directory tree or a synthetic
// spec, then partition its classes.
struct Corpus {
    amc::Dataset train, val, test;
};

Corpus build_corpus(const std::string& data_dir, const std::string& spec_file, int image_size,
                    const SplitRatios& ratios, std::uint64_t seed, int n_way) {
    amc::Dataset full;
    if (!spec_file.empty()) {
        auto spec = amc::load_synthetic_spec(spec_file);
        spec.image_size = image_size;
        full = amc::generate_synthetic(spec);
    } else {
        full = amc::load_dataset(data_dir, image_size);
    }
    auto parts = amc::split_classes(full, ratios.train, ratios.val, ratios.test, seed);
    Corpus c{std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
    if (c.train.class_count() < n_way || c.val.class_count() < n_way)
        throw amc::ConfigError("split leaves " + std::to_string(c.train.class_count()) + " train and " +
                               std::to_string(c.val.class_count()) + " val classes, but episodes are " +
                               std::to_string(n_way) + "-way; adjust --split or the dataset");
    return c;
}

int run_train(const std::string& data_dir, const std::string& spec_file, amc::TrainConfig tcfg,
              amc::ModelConfig mcfg, const std::string& split_text, const std::string& out_path,
              const std::string& metrics_path, bool timing, bool quiet) {
    tcfg.validate();
    mcfg.validate();
    const auto corpus =
        build_corpus(data_dir, spec_file, mcfg.image_size, parse_split(split_text), tcfg.seed, tcfg.n_way);

    auto model = amc::Model<float>::init(mcfg, tcfg.seed);
    if (!quiet)
        std::cout << "model: " << model.param_count() << " parameters, train classes " << corpus.train.class_count()
                  << ", val classes " << corpus.val.class_count() << "\n";

    amc::MetricSink sink = metrics_path.empty()
                               ? (quiet ? amc::MetricSink() : amc::MetricSink::to_stream(std::cout))
                               : amc::MetricSink::to_file(metrics_path, quiet ? nullptr : &std::cout);
    const auto best = amc::train(model, tcfg, corpus.train, corpus.val, sink, timing);
    amc::save_checkpoint(best, out_path);
    if (!quiet)
        std::cout << "best validation accuracy " << std::fixed << std::setprecision(2) << best.best_val_accuracy
                  << "% at episode " << best.episodes_done << "; checkpoint written to " << out_path << "\n";
    return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& data_dir, int episodes, int n, int k, int q,
             std::uint64_t seed, const std::string& format) {
    const auto ckpt = amc::load_checkpoint<float>(ckpt_path);
    const auto model = amc::restore_model(ckpt);
    const auto ds = amc::load_dataset(data_dir, model.cfg.image_size);
    const auto rep = amc::evaluate(model, ds, episodes, n, k, q, seed);

    if (format == "csv") {
        std::cout << "mean_accuracy,ci95,episodes,mean_loss\n"
                  << std::fixed << std::setprecision(4) << rep.mean_accuracy << "," << rep.ci95 << ","
                  << rep.episode_count << "," << rep.mean_loss << "\n";
    } else if (format == "json") {
        nlohmann::ordered_json j{{"mean_accuracy", rep.mean_accuracy},
                                 {"ci95", rep.ci95},
                                 {"episodes", rep.episode_count},
                                 {"mean_loss", rep.mean_loss}};
        std::cout << j.dump(2) << "\n";
    } else {
        std::cout << std::fixed << std::setprecision(2) << n << "-way " << k << "-shot over " << rep.episode_count
                  << " episodes\n"
                  << "  accuracy  " << rep.mean_accuracy << "% +/- " << rep.ci95 << "\n"
                  << "  mean loss " << std::setprecision(4) << rep.mean_loss << "\n";
    }
    return 0;
}

int run_infer(const std::string& ckpt_path, const std::string& support_dir, const std::string& query_path,
              bool timing) {
    const auto ckpt = amc::load_checkpoint<float>(ckpt_path);
    const auto model = amc::restore_model(ckpt);
    const int S = model.cfg.image_size;
    const auto support_ds = amc::load_dataset(support_dir, S);

    std::vector<std::vector<amc::Tensor<float>>> support;
    for (int c = 0; c < support_ds.class_count(); ++c) {
        std::vector<amc::Tensor<float>> images;
        for (int s = 0; s < static_cast<int>(support_ds.classes[static_cast<std::size_t>(c)].samples.size()); ++s)
            images.push_back(amc::episode_image<float>(support_ds, {c, c, s}));
        support.push_back(std::move(images));
    }

    const auto img = amc::resize_bilinear(amc::decode_image(query_path), S, S);
    const auto query = amc::Tensor<float>::from({3, S, S}, amc::planar_unit<float>(img));
    const auto res = amc::infer(model, support, query, timing);

    std::cout << "prediction: " << support_ds.classes[static_cast<std::size_t>(res.label)].name << "\n";
    for (std::size_t c = 0; c < res.probabilities.size(); ++c)
        std::cout << "  p(" << support_ds.classes[c].name << ") = " << std::fixed << std::setprecision(6)
                  << res.probabilities[c] << "\n";
    if (timing)
        std::cout << "query wall time: " << std::fixed << std::setprecision(2) << res.wall_ms << " ms\n";
    return 0;
}

int run_gen(const std::string& spec_file, const std::string& out_dir) {
    const auto spec = amc::load_synthetic_spec(spec_file);
    const auto ds = amc::generate_synthetic(spec);
    amc::save_dataset_ppm(ds, out_dir);
    std::cout << "wrote " << ds.class_count() << " classes x " << spec.samples_per_class << " samples at "
              << spec.image_size << "x" << spec.image_size << " to " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"few-shot scene classifier: multi-scale features with correlation-guided prototypes"};
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model episodically");
    std::string data_dir, spec_file, out_path, metrics_path, split_text = "0.6,0.2,0.2";
    amc::TrainConfig tcfg;
    amc::ModelConfig mcfg;
    bool no_pyramid = false, no_accm = false, no_corr_meta = false, timing = false, quiet = false;
    auto* data_opt = train_cmd->add_option("--data", data_dir, "dataset root: one directory per class");
    auto* spec_opt = train_cmd->add_option("--synthetic", spec_file, "synthetic dataset spec (json)");
    data_opt->excludes(spec_opt);
    spec_opt->excludes(data_opt);
    train_cmd->add_option("--n-way", tcfg.n_way, "classes per episode");
    train_cmd->add_option("--k-shot", tcfg.k_shot, "support samples per class");
    train_cmd->add_option("--q", tcfg.q_queries, "query samples per class");
    train_cmd->add_option("--episodes", tcfg.episodes_total, "total training episodes");
    train_cmd->add_option("--batch-episodes", tcfg.batch_episodes, "episodes per optimizer step");
    train_cmd->add_option("--lr", tcfg.lr0, "initial learning rate");
    train_cmd->add_option("--decay", tcfg.lr_decay, "learning-rate decay factor");
    train_cmd->add_option("--decay-every", tcfg.decay_every, "episodes between decays");
    train_cmd->add_option("--val-every", tcfg.val_every, "episodes between validations");
    train_cmd->add_option("--val-episodes", tcfg.val_episodes, "episodes per validation");
    train_cmd->add_option("--seed", tcfg.seed, "master seed");
    train_cmd->add_option("--out", out_path, "checkpoint output path")->required();
    train_cmd->add_option("--image-size", mcfg.image_size, "square input resolution");
    train_cmd->add_option("--split", split_text, "train,val,test class ratios");
    train_cmd->add_option("--metrics", metrics_path, "metric stream output file (ndjson)");
    train_cmd->add_flag("--no-pyramid", no_pyramid, "drop the multi-scale pyramid (and the correlation module)");
    train_cmd->add_flag("--no-accm", no_accm, "drop the correlation module");
    train_cmd->add_flag("--no-corr-meta", no_corr_meta, "uniform support weights instead of attention");
    train_cmd->add_flag("--timing", timing, "record wall-clock times in metrics");
    train_cmd->add_flag("--quiet", quiet, "suppress stdout chatter");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint episodically");
    std::string eval_ckpt, eval_data, eval_format = "table";
    int eval_episodes = 600, eval_n = 5, eval_k = 5, eval_q = 15;
    std::uint64_t eval_seed = 0;
    eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--data", eval_data, "dataset root")->required();
    eval_cmd->add_option("--episodes", eval_episodes, "evaluation episodes");
    eval_cmd->add_option("--n-way", eval_n, "classes per episode");
    eval_cmd->add_option("--k-shot", eval_k, "support samples per class");
    eval_cmd->add_option("--q", eval_q, "query samples per class");
    eval_cmd->add_option("--seed", eval_seed, "evaluation seed");
    eval_cmd->add_option("--format", eval_format, "table|csv|json")
        ->check(CLI::IsMember({"table", "csv", "json"}));

    // infer
    auto* infer_cmd = app.add_subcommand("infer", "classify one image against a support set");
    std::string infer_ckpt, infer_support, infer_query;
    bool infer_timing = false;
    infer_cmd->add_option("--ckpt", infer_ckpt, "checkpoint file")->required();
    infer_cmd->add_option("--support", infer_support, "support root: one directory per class")->required();
    infer_cmd->add_option("--query", infer_query, "query image")->required();
    infer_cmd->add_flag("--timing", infer_timing, "print per-query wall time");

    // gen-synthetic
    auto* gen_cmd = app.add_subcommand("gen-synthetic", "materialize a synthetic dataset as ppm files");
    std::string gen_spec, gen_out;
    gen_cmd->add_option("--spec", gen_spec, "synthetic dataset spec (json)")->required();
    gen_cmd->add_option("--out", gen_out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) {
            if (data_dir.empty() && spec_file.empty())
                throw amc::ConfigError("train needs --data or --synthetic");
            mcfg.use_pyramid = !no_pyramid;
            mcfg.use_accm = !no_accm && !no_pyramid;
            mcfg.use_corr_meta = !no_corr_meta;
            return run_train(data_dir, spec_file, tcfg, mcfg, split_text, out_path, metrics_path, timing, quiet);
        }
        if (*eval_cmd)
            return run_eval(eval_ckpt, eval_data, eval_episodes, eval_n, eval_k, eval_q, eval_seed, eval_format);
        if (*infer_cmd) return run_infer(infer_ckpt, infer_support, infer_query, infer_timing);
        if (*gen_cmd) return run_gen(gen_spec, gen_out);
    } catch (const amc::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
