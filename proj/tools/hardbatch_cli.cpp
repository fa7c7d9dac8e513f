#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "hardbatch/checkpoint.hpp"
#include "hardbatch/log.hpp"
#include "hardbatch/trainer.hpp"

namespace {

using namespace hardbatch;

PreparedData load_eval_data(const std::string& path, std::optional<double> holdout_fraction,
                            std::uint64_t split_seed) {
  PreparedData data;
  data.dataset = load_jsonl(path);
  if (data.dataset.image_backed) data.images = load_images(data.dataset);
  if (holdout_fraction) {
    const auto count = static_cast<std::size_t>(
        std::lround(*holdout_fraction * static_cast<double>(data.dataset.num_classes)));
    Rng rng(derive_seed(split_seed, stream::kSplit));
    const auto holdout = choose_holdout_classes(data.dataset, count, rng);
    data.dataset = split_query_gallery(data.dataset, holdout, rng);
  }
  return data;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hard-batch metric learning: train, evaluate, inspect samplers"};
  app.require_subcommand(1);

  auto* train_cmd = app.add_subcommand("train", "Train a model from a JSON config");
  std::string config_path, out_dir = "run";
  bool metrics_csv = false;
  train_cmd->add_option("--config", config_path, "JSON config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", out_dir, "Output directory")->capture_default_str();
  train_cmd->add_flag("--metrics-csv", metrics_csv, "Also export metrics.csv");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a query/gallery split");
  std::string ckpt_path, data_path, report_path;
  bool rerank = false;
  RerankParams rr;
  std::optional<double> holdout;
  std::uint64_t split_seed = 0;
  eval_cmd->add_option("--checkpoint", ckpt_path)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", data_path, "Dataset JSONL (tagged, or see --holdout)")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_flag("--rerank", rerank, "Apply k-reciprocal re-ranking");
  eval_cmd->add_option("--k1", rr.k1)->capture_default_str();
  eval_cmd->add_option("--k2", rr.k2)->capture_default_str();
  eval_cmd->add_option("--lambda-rr", rr.lambda_rr)->capture_default_str();
  eval_cmd->add_option("--holdout", holdout, "Split untagged data: fraction of identities held out");
  eval_cmd->add_option("--split-seed", split_seed)->capture_default_str();
  eval_cmd->add_option("--out", report_path, "Write the JSON report here as well");

  auto* stats_cmd = app.add_subcommand("sampler-stats", "Per-batch class similarity for both samplers");
  std::string stats_ckpt, stats_data, stats_out;
  std::size_t stats_epochs = 10, P = 16, K = 4;
  std::uint64_t stats_seed = 0;
  bool with_embeddings = false;
  double margin = 0.3;
  stats_cmd->add_option("--checkpoint", stats_ckpt)->required()->check(CLI::ExistingFile);
  stats_cmd->add_option("--data", stats_data)->required()->check(CLI::ExistingFile);
  stats_cmd->add_option("--epochs", stats_epochs)->required();
  stats_cmd->add_option("--out", stats_out, "CSV output path")->required();
  stats_cmd->add_option("-P,--P", P)->capture_default_str();
  stats_cmd->add_option("-K,--K", K)->capture_default_str();
  stats_cmd->add_option("--seed", stats_seed)->capture_default_str();
  stats_cmd->add_option("--margin", margin)->capture_default_str();
  stats_cmd->add_flag("--embeddings", with_embeddings, "Also report active triplet fraction per batch");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      cmd_train(load_config(config_path), out_dir, metrics_csv);
    } else if (*eval_cmd) {
      const Checkpoint ckpt = load_checkpoint(ckpt_path);
      const PreparedData data = load_eval_data(data_path, holdout, split_seed);
      const auto report = cmd_eval(ckpt, data, rerank ? std::optional<RerankParams>(rr) : std::nullopt);
      const std::string text = report.dump(2) + "\n";
      std::cout << text;
      if (!report_path.empty()) write_file(report_path, text);
    } else if (*stats_cmd) {
      const Checkpoint ckpt = load_checkpoint(stats_ckpt);
      const PreparedData data = load_eval_data(stats_data, std::nullopt, 0);
      write_file(stats_out, cmd_sampler_stats(ckpt.params, data, stats_epochs, P, K, stats_seed,
                                              with_embeddings, margin, ckpt.normalize_embeddings));
      log_info("wrote " + stats_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
