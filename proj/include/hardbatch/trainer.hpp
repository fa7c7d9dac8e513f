#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hardbatch/augment.hpp"
#include "hardbatch/checkpoint.hpp"
#include "hardbatch/data.hpp"
#include "hardbatch/eval.hpp"
#include "hardbatch/model.hpp"
#include "hardbatch/sampling.hpp"
#include "json.hpp"

namespace hardbatch {

/// Which sampler each epoch uses. PaperSchedule is random PK for the warmup
/// epochs and hard-batch mining afterwards.
enum class SamplerMode { Random, Hard, PaperSchedule };

struct TrainConfig {
  // Batch geometry: P identities x K instances.
  std::size_t P = 16;
  std::size_t K = 4;
  std::size_t epochs = 30;
  double base_lr = 0.008;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double margin = 0.3;
  double id_weight = 1.0;
  double triplet_weight = 1.0;
  double lambda = 0.1;
  // Learning-rate multiplier for the scene head only, so the adversary keeps
  // up with the extractor it is reversed against.
  double scene_lr_scale = 1.0;
  // Extra L2 on the scene weights on top of weight_decay. Damps the
  // extractor/adversary rotation so the pair settles instead of spiralling.
  double scene_weight_decay = 0.0;
  std::size_t warmup_epochs = 1;
  SamplerMode sampler = SamplerMode::PaperSchedule;
  std::uint64_t seed = 0;

  std::vector<std::size_t> hidden{32};
  std::size_t embedding_dim = 8;
  bool normalize_embeddings = false;
  // false drops the scene head from the objective entirely.
  bool scene_branch = true;

  std::size_t eval_every = 5;
  double holdout_fraction = 0.25;
  std::uint64_t split_seed = 0;

  // Exactly one source: jsonl path when non-empty, synthetic spec otherwise.
  std::string jsonl;
  SynthSpec synth;
  AugmentConfig augment;

  void validate() const;
};

TrainConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const TrainConfig& config);
TrainConfig load_config(const std::filesystem::path& path);

/// FNV-1a 64 over the canonical JSON dump of the config.
std::uint64_t config_hash(const TrainConfig& config);

struct MetricsRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  std::string sampler;
  double l_id = 0.0;
  double l_triplet = 0.0;
  double l_adv = 0.0;
  double l_total = 0.0;
  double active_triplet_fraction = 0.0;
  double intra_batch_similarity = 0.0;
  double lr = 0.0;
};

nlohmann::json to_json(const MetricsRecord& r);

struct EvalRecord {
  std::size_t epoch = 0;  // completed epochs at evaluation time
  double map = 0.0;
  double cmc1 = 0.0;
};

/// Dataset with Train/Query/Gallery tags plus decoded images when the source
/// is image-backed (dim is then H*W*3).
struct PreparedData {
  Dataset dataset;
  std::vector<ImageBuffer> images;
};

/// Loads or generates the dataset and holds out
/// round(holdout_fraction * C) identities for retrieval evaluation.
PreparedData prepare_data(const TrainConfig& config);

/// Decodes every image of an image-backed dataset; all must share a size.
std::vector<ImageBuffer> load_images(Dataset& dataset);

/// Input rows for the given samples (images are not augmented here).
Matrix input_matrix(const PreparedData& data, std::span<const std::size_t> indices);

/// Embeddings as used for retrieval: raw x, or L2-normalized when requested.
Matrix retrieval_embeddings(const ModelParams& params, const Matrix& inputs, bool normalize);

EvalResult evaluate_split(const ModelParams& params, const PreparedData& data, bool normalize,
                          const std::optional<RerankParams>& rerank = std::nullopt);

struct TrainResult {
  ModelParams params;
  ModelParams velocity;
  std::vector<MetricsRecord> metrics;
  std::vector<EvalRecord> evals;  // initial (epoch 0), cadence, final
  std::size_t steps = 0;
};

struct TrainSnapshot {
  std::size_t epoch;  // completed epochs
  std::size_t step;   // completed optimizer steps
  const ModelParams& params;
  const ModelParams& velocity;
};

/// Invoked at every evaluation point (epoch 0, the eval cadence, and the end).
using EvalCallback = std::function<void(const TrainSnapshot&)>;

/// Runs the full training loop on prepared data.
TrainResult train(const TrainConfig& config, const PreparedData& data,
                  const EvalCallback& on_eval = {});

/// `train` subcommand. Writes into out_dir:
///   config.json, dataset.jsonl (tagged), metrics.jsonl, eval.jsonl,
///   checkpoint.bin, checkpoint_epoch<N>.bin at the eval cadence,
///   and metrics.csv when metrics_csv is set.
void cmd_train(const TrainConfig& config, const std::filesystem::path& out_dir,
               bool metrics_csv = false);

/// `eval` subcommand: JSON report
///   {map, cmc, n_query, n_gallery, reranked, params}
nlohmann::json cmd_eval(const Checkpoint& ckpt, const PreparedData& data,
                        const std::optional<RerankParams>& rerank);

/// `sampler-stats` subcommand. For each epoch both samplers build a plan from
/// the same seed; one CSV row per batch:
///   sampler,epoch,batch,anchor_class,intra_batch_similarity,active_triplet_fraction
/// active_triplet_fraction is empty unless with_embeddings is set.
std::string cmd_sampler_stats(const ModelParams& params, const PreparedData& data,
                              std::size_t epochs, std::size_t P, std::size_t K,
                              std::uint64_t seed, bool with_embeddings, double margin = 0.3,
                              bool normalize = false);

/// Linear softmax probe fit by full-batch gradient descent on standardized
/// features; returns accuracy on the test rows.
double linear_probe_accuracy(const Matrix& train_x, std::span<const int> train_y,
                             const Matrix& test_x, std::span<const int> test_y,
                             std::size_t num_labels, std::size_t iterations = 500,
                             double lr = 0.5);

}  // namespace hardbatch
