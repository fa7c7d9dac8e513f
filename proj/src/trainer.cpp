#include "hardbatch/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "hardbatch/log.hpp"
#include "hardbatch/losses.hpp"

namespace hardbatch {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& known, const std::string& where) {
  if (!obj.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!known.contains(key)) {
      throw std::invalid_argument("config: unknown key \"" + key + "\" in " + where);
    }
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& dst, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument("config: bad type for \"" + std::string(key) + "\" in " + where);
  }
}

SamplerMode parse_sampler(const std::string& s) {
  if (s == "random") return SamplerMode::Random;
  if (s == "hard") return SamplerMode::Hard;
  if (s == "paper" || s == "paper-schedule") return SamplerMode::PaperSchedule;
  throw std::invalid_argument("config: sampler must be random | hard | paper-schedule, got \"" + s + "\"");
}

std::string sampler_name(SamplerMode m) {
  switch (m) {
    case SamplerMode::Random: return "random";
    case SamplerMode::Hard: return "hard";
    case SamplerMode::PaperSchedule: return "paper-schedule";
  }
  return "paper-schedule";
}

PatchParams patch_from_json(const json& obj, PatchParams p, const std::string& where) {
  reject_unknown_keys(obj, {"p", "area", "aspect"}, where);
  read_field(obj, "p", p.p, where);
  if (obj.contains("area")) {
    const auto a = obj.at("area").get<std::vector<double>>();
    if (a.size() != 2) throw std::invalid_argument("config: " + where + ".area must be [lo, hi]");
    p.area_lo = a[0];
    p.area_hi = a[1];
  }
  if (obj.contains("aspect")) {
    const auto a = obj.at("aspect").get<std::vector<double>>();
    if (a.size() != 2) throw std::invalid_argument("config: " + where + ".aspect must be [lo, hi]");
    p.aspect_lo = a[0];
    p.aspect_hi = a[1];
  }
  return p;
}

json patch_to_json(const PatchParams& p) {
  return {{"p", p.p}, {"area", {p.area_lo, p.area_hi}}, {"aspect", {p.aspect_lo, p.aspect_hi}}};
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

}  // namespace

void TrainConfig::validate() const {
  if (P < 2) throw std::invalid_argument("config: P must be >= 2");
  if (K < 2) throw std::invalid_argument("config: K must be >= 2");
  if (P * K < 4) throw std::invalid_argument("config: P*K must be >= 4");
  if (base_lr < 0.0) throw std::invalid_argument("config: base_lr must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("config: momentum must be in [0,1)");
  if (weight_decay < 0.0) throw std::invalid_argument("config: weight_decay must be >= 0");
  if (lambda < 0.0) throw std::invalid_argument("config: lambda must be >= 0");
  if (scene_lr_scale < 0.0) throw std::invalid_argument("config: scene_lr_scale must be >= 0");
  if (scene_weight_decay < 0.0) throw std::invalid_argument("config: scene_weight_decay must be >= 0");
  if (triplet_weight < 0.0 || id_weight < 0.0) {
    throw std::invalid_argument("config: loss weights must be >= 0");
  }
  if (embedding_dim == 0) throw std::invalid_argument("config: embedding_dim must be >= 1");
  if (std::any_of(hidden.begin(), hidden.end(), [](std::size_t h) { return h == 0; })) {
    throw std::invalid_argument("config: hidden sizes must be >= 1");
  }
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw std::invalid_argument("config: holdout_fraction must be in [0,1)");
  }
  if (jsonl.empty()) synth.validate();
  augment.erasing.validate();
  augment.grayscale.validate();
}

TrainConfig config_from_json(const json& doc) {
  TrainConfig c;
  const std::string top = "config";
  reject_unknown_keys(doc, {"P", "K", "epochs", "base_lr", "momentum", "weight_decay", "margin",
                            "id_weight", "triplet_weight", "lambda", "scene_lr_scale", "scene_weight_decay",
                            "warmup_epochs", "sampler",
                            "seed", "model", "eval_every", "holdout_fraction", "split_seed", "data",
                            "augment"},
                      top);
  read_field(doc, "P", c.P, top);
  read_field(doc, "K", c.K, top);
  read_field(doc, "epochs", c.epochs, top);
  read_field(doc, "base_lr", c.base_lr, top);
  read_field(doc, "momentum", c.momentum, top);
  read_field(doc, "weight_decay", c.weight_decay, top);
  read_field(doc, "margin", c.margin, top);
  read_field(doc, "id_weight", c.id_weight, top);
  read_field(doc, "triplet_weight", c.triplet_weight, top);
  read_field(doc, "lambda", c.lambda, top);
  read_field(doc, "scene_lr_scale", c.scene_lr_scale, top);
  read_field(doc, "scene_weight_decay", c.scene_weight_decay, top);
  read_field(doc, "warmup_epochs", c.warmup_epochs, top);
  read_field(doc, "seed", c.seed, top);
  read_field(doc, "eval_every", c.eval_every, top);
  read_field(doc, "holdout_fraction", c.holdout_fraction, top);
  read_field(doc, "split_seed", c.split_seed, top);
  if (doc.contains("sampler")) c.sampler = parse_sampler(doc.at("sampler").get<std::string>());

  if (doc.contains("model")) {
    const json& m = doc.at("model");
    reject_unknown_keys(m, {"hidden", "embedding_dim", "normalize_embeddings", "scene_branch"}, "model");
    read_field(m, "hidden", c.hidden, "model");
    read_field(m, "embedding_dim", c.embedding_dim, "model");
    read_field(m, "normalize_embeddings", c.normalize_embeddings, "model");
    read_field(m, "scene_branch", c.scene_branch, "model");
  }
  if (doc.contains("data")) {
    const json& d = doc.at("data");
    reject_unknown_keys(d, {"jsonl", "synth"}, "data");
    if (d.contains("jsonl") && d.contains("synth")) {
      throw std::invalid_argument("config: data needs exactly one of \"jsonl\" or \"synth\"");
    }
    read_field(d, "jsonl", c.jsonl, "data");
    if (d.contains("synth")) {
      const json& s = d.at("synth");
      const std::string w = "data.synth";
      reject_unknown_keys(s, {"num_classes", "num_scenes", "dim", "samples_per_class",
                              "center_radius", "pair_fraction", "pair_sep", "cluster_sigma",
                              "scene_shift_magnitude", "seed"},
                          w);
      read_field(s, "num_classes", c.synth.num_classes, w);
      read_field(s, "num_scenes", c.synth.num_scenes, w);
      read_field(s, "dim", c.synth.dim, w);
      read_field(s, "samples_per_class", c.synth.samples_per_class, w);
      read_field(s, "center_radius", c.synth.center_radius, w);
      read_field(s, "pair_fraction", c.synth.pair_fraction, w);
      read_field(s, "pair_sep", c.synth.pair_sep, w);
      read_field(s, "cluster_sigma", c.synth.cluster_sigma, w);
      read_field(s, "scene_shift_magnitude", c.synth.scene_shift_magnitude, w);
      read_field(s, "seed", c.synth.seed, w);
    }
  }
  if (doc.contains("augment")) {
    const json& a = doc.at("augment");
    reject_unknown_keys(a, {"enabled", "flip_p", "pad", "erasing", "grayscale"}, "augment");
    read_field(a, "enabled", c.augment.enabled, "augment");
    read_field(a, "flip_p", c.augment.flip_p, "augment");
    read_field(a, "pad", c.augment.pad, "augment");
    if (a.contains("erasing")) c.augment.erasing = patch_from_json(a.at("erasing"), c.augment.erasing, "augment.erasing");
    if (a.contains("grayscale")) {
      c.augment.grayscale = patch_from_json(a.at("grayscale"), c.augment.grayscale, "augment.grayscale");
    }
  }
  c.validate();
  return c;
}

json config_to_json(const TrainConfig& c) {
  json data;
  if (!c.jsonl.empty()) {
    data["jsonl"] = c.jsonl;
  } else {
    data["synth"] = {{"num_classes", c.synth.num_classes},
                     {"num_scenes", c.synth.num_scenes},
                     {"dim", c.synth.dim},
                     {"samples_per_class", c.synth.samples_per_class},
                     {"center_radius", c.synth.center_radius},
                     {"pair_fraction", c.synth.pair_fraction},
                     {"pair_sep", c.synth.pair_sep},
                     {"cluster_sigma", c.synth.cluster_sigma},
                     {"scene_shift_magnitude", c.synth.scene_shift_magnitude},
                     {"seed", c.synth.seed}};
  }
  return {{"P", c.P},
          {"K", c.K},
          {"epochs", c.epochs},
          {"base_lr", c.base_lr},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"margin", c.margin},
          {"id_weight", c.id_weight},
          {"triplet_weight", c.triplet_weight},
          {"lambda", c.lambda},
          {"scene_lr_scale", c.scene_lr_scale},
          {"scene_weight_decay", c.scene_weight_decay},
          {"warmup_epochs", c.warmup_epochs},
          {"sampler", sampler_name(c.sampler)},
          {"seed", c.seed},
          {"model",
           {{"hidden", c.hidden},
            {"embedding_dim", c.embedding_dim},
            {"normalize_embeddings", c.normalize_embeddings},
            {"scene_branch", c.scene_branch}}},
          {"eval_every", c.eval_every},
          {"holdout_fraction", c.holdout_fraction},
          {"split_seed", c.split_seed},
          {"data", data},
          {"augment",
           {{"enabled", c.augment.enabled},
            {"flip_p", c.augment.flip_p},
            {"pad", c.augment.pad},
            {"erasing", patch_to_json(c.augment.erasing)},
            {"grayscale", patch_to_json(c.augment.grayscale)}}}};
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  TrainConfig c = config_from_json(doc);
  if (!c.jsonl.empty() && std::filesystem::path(c.jsonl).is_relative()) {
    c.jsonl = (path.parent_path() / c.jsonl).lexically_normal().string();
  }
  return c;
}

std::uint64_t config_hash(const TrainConfig& config) {
  const std::string text = config_to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

json to_json(const MetricsRecord& r) {
  return {{"epoch", r.epoch},
          {"step", r.step},
          {"sampler", r.sampler},
          {"l_id", r.l_id},
          {"l_triplet", r.l_triplet},
          {"l_adv", r.l_adv},
          {"l_total", r.l_total},
          {"active_triplet_fraction", r.active_triplet_fraction},
          {"intra_batch_similarity", r.intra_batch_similarity},
          {"lr", r.lr}};
}

std::vector<ImageBuffer> load_images(Dataset& dataset) {
  std::vector<ImageBuffer> images;
  for (const auto& s : dataset.samples) {
    images.push_back(read_ppm(dataset.base_dir / s.image));
    if (images.back().height != images.front().height || images.back().width != images.front().width) {
      throw std::invalid_argument("dataset: image " + s.image + " differs in size from the first image");
    }
  }
  dataset.dim = images.empty() ? 0 : images.front().pixels.size();
  return images;
}

PreparedData prepare_data(const TrainConfig& config) {
  config.validate();
  PreparedData out;
  Dataset raw = config.jsonl.empty() ? synth_generate(config.synth) : load_jsonl(config.jsonl);
  if (raw.samples.empty()) throw std::invalid_argument("dataset is empty");
  if (raw.image_backed) out.images = load_images(raw);
  const auto holdout_count = static_cast<std::size_t>(
      std::lround(config.holdout_fraction * static_cast<double>(raw.num_classes)));
  Rng split_rng(derive_seed(config.split_seed, stream::kSplit));
  const std::vector<int> holdout = choose_holdout_classes(raw, holdout_count, split_rng);
  out.dataset = split_query_gallery(raw, holdout, split_rng);
  log_info("dataset: " + std::to_string(out.dataset.samples.size()) + " samples, C=" +
           std::to_string(out.dataset.num_classes) + ", T=" + std::to_string(out.dataset.num_scenes) +
           ", D=" + std::to_string(out.dataset.dim) + ", holdout identities=" +
           std::to_string(holdout.size()));
  return out;
}

Matrix input_matrix(const PreparedData& data, std::span<const std::size_t> indices) {
  if (!data.dataset.image_backed) return feature_matrix(data.dataset, indices);
  Matrix m(indices.size(), data.dataset.dim);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto f = image_to_features(data.images.at(indices[r]));
    std::copy(f.begin(), f.end(), m.row(r).begin());
  }
  return m;
}

Matrix retrieval_embeddings(const ModelParams& params, const Matrix& inputs, bool normalize) {
  Matrix e = embed(params, inputs);
  return normalize ? l2_normalize_rows(e) : e;
}

EvalResult evaluate_split(const ModelParams& params, const PreparedData& data, bool normalize,
                          const std::optional<RerankParams>& rerank) {
  const auto q = data.dataset.indices_with(Split::Query);
  const auto g = data.dataset.indices_with(Split::Gallery);
  if (q.empty() || g.empty()) throw std::invalid_argument("evaluate: dataset has no query/gallery split");
  const RetrievalMeta qm{class_labels(data.dataset, q), scene_labels(data.dataset, q)};
  const RetrievalMeta gm{class_labels(data.dataset, g), scene_labels(data.dataset, g)};
  return evaluate(retrieval_embeddings(params, input_matrix(data, q), normalize), qm,
                  retrieval_embeddings(params, input_matrix(data, g), normalize), gm, rerank);
}

TrainResult train(const TrainConfig& config, const PreparedData& data, const EvalCallback& on_eval) {
  config.validate();
  const Dataset& ds = data.dataset;
  if (ds.dim == 0) throw std::invalid_argument("train: dataset has zero feature dimension");
  const std::vector<std::size_t> train_idx = ds.indices_with(Split::Train);
  const std::vector<int> train_labels = class_labels(ds, train_idx);
  const std::size_t n_train_classes = std::set<int>(train_labels.begin(), train_labels.end()).size();
  if (n_train_classes < config.P) {
    throw std::invalid_argument("train: " + std::to_string(n_train_classes) +
                                " training identities, fewer than P = " + std::to_string(config.P));
  }
  const std::size_t batches_per_epoch = n_train_classes / config.P;
  const std::size_t total_steps = config.epochs * batches_per_epoch;
  const bool can_eval = ds.has_eval_split();

  Rng init_rng(derive_seed(config.seed, stream::kInit));
  TrainResult res;
  res.params = init_params(init_rng, {ds.dim, config.hidden, config.embedding_dim, ds.num_classes,
                                      ds.num_scenes});
  res.params.validate();
  res.velocity = res.params.zeros_like();

  auto checkpoint_eval = [&](std::size_t epoch) {
    if (can_eval) {
      const EvalResult er = evaluate_split(res.params, data, config.normalize_embeddings);
      res.evals.push_back({epoch, er.map, er.cmc.front()});
      log_info("epoch " + std::to_string(epoch) + ": mAP " + fmt_double(er.map) + " rank-1 " +
               fmt_double(er.cmc.front()));
    }
    if (on_eval) on_eval({epoch, res.steps, res.params, res.velocity});
  };
  checkpoint_eval(0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    SamplerKind kind = SamplerKind::Random;
    if (config.sampler == SamplerMode::Hard) kind = SamplerKind::HardMined;
    if (config.sampler == SamplerMode::PaperSchedule) kind = schedule(epoch, config.warmup_epochs);

    Rng sampler_rng(derive_seed(config.seed, stream::kSampler, epoch));
    const Matrix w_snapshot = res.params.class_weights;
    const EpochPlan plan = kind == SamplerKind::Random
                               ? pk_random_epoch(train_labels, config.P, config.K, sampler_rng)
                               : hard_batch_epoch(w_snapshot, train_labels, config.P, config.K, sampler_rng);

    for (const Batch& batch : plan.batches) {
      std::vector<std::size_t> idx;
      for (std::size_t pos : batch.indices) idx.push_back(train_idx[pos]);
      Matrix inputs;
      if (ds.image_backed) {
        inputs = Matrix(idx.size(), ds.dim);
        Rng aug_rng(derive_seed(config.seed, stream::kAugment, res.steps));
        for (std::size_t r = 0; r < idx.size(); ++r) {
          const auto f = image_to_features(augment_image(data.images[idx[r]], config.augment, aug_rng));
          std::copy(f.begin(), f.end(), inputs.row(r).begin());
        }
      } else {
        inputs = feature_matrix(ds, idx);
      }
      const std::vector<int> labels = class_labels(ds, idx);
      const std::vector<int> scenes = scene_labels(ds, idx);

      const ForwardTrace trace = forward(res.params, inputs);
      const LossOutput id = softmax_cross_entropy(trace.id_logits, labels);
      const Matrix metric_emb =
          config.normalize_embeddings ? l2_normalize_rows(trace.embeddings) : trace.embeddings;
      const TripletResult triplet = batch_hard_triplet(metric_emb, labels, config.margin);
      // Without a scene branch the adversarial loss is zero with an empty gradient.
      const LossOutput adv = config.scene_branch ? scene_adversarial_loss(trace.scene_logits, scenes)
                                                 : LossOutput{0.0, Matrix()};

      Matrix grad_id = id.grad;
      for (double& v : grad_id.values()) v *= config.id_weight;
      Matrix grad_emb = triplet.loss.grad;
      for (double& v : grad_emb.values()) v *= config.triplet_weight;
      if (config.normalize_embeddings) grad_emb = l2_normalize_rows_backward(trace.embeddings, grad_emb);
      ParamGrads grads = backward(res.params, trace, grad_emb, grad_id, adv.grad,
                                  GradReversalCoeff(config.lambda));
      if (config.scene_branch) {
        const auto w = res.params.scene_weights.values();
        auto gw = grads.scene_weights.values();
        for (std::size_t i = 0; i < gw.size(); ++i) {
          gw[i] = (gw[i] + config.scene_weight_decay * w[i]) * config.scene_lr_scale;
        }
        for (double& v : grads.scene_bias) v *= config.scene_lr_scale;
      }
      const double lr = cosine_lr(res.steps, total_steps, config.base_lr);
      sgd_step(res.params, grads, res.velocity, {lr, config.momentum, config.weight_decay});

      MetricsRecord m;
      m.epoch = epoch;
      m.step = res.steps;
      m.sampler = std::string(to_string(kind));
      m.l_id = config.id_weight * id.value;
      m.l_triplet = triplet.loss.value;
      m.l_adv = adv.value;
      m.l_total = total_loss(m.l_id, m.l_triplet, m.l_adv, config.triplet_weight, config.lambda);
      m.active_triplet_fraction = triplet.stats.active_fraction;
      m.intra_batch_similarity = intra_batch_similarity(w_snapshot, batch);
      m.lr = lr;
      res.metrics.push_back(std::move(m));
      ++res.steps;
    }
    log_debug("epoch " + std::to_string(epoch) + " (" + std::string(to_string(kind)) + ") done, step " +
              std::to_string(res.steps));

    const std::size_t done = epoch + 1;
    if (done == config.epochs || (config.eval_every > 0 && done % config.eval_every == 0)) {
      checkpoint_eval(done);
    }
  }
  return res;
}

void cmd_train(const TrainConfig& config, const std::filesystem::path& out_dir, bool metrics_csv) {
  std::filesystem::create_directories(out_dir);
  const PreparedData data = prepare_data(config);
  const std::uint64_t hash = config_hash(config);
  write_text(out_dir / "config.json", config_to_json(config).dump(2) + "\n");
  if (data.dataset.image_backed) {
    // Image paths stay relative to the original dataset file.
    Dataset copy = data.dataset;
    for (auto& s : copy.samples) {
      s.image = std::filesystem::absolute(data.dataset.base_dir / s.image).lexically_normal().string();
    }
    save_jsonl(out_dir / "dataset.jsonl", copy);
  } else {
    save_jsonl(out_dir / "dataset.jsonl", data.dataset);
  }

  std::string eval_log;
  auto on_eval = [&](const TrainSnapshot& snap) {
    Checkpoint ck{snap.params, snap.velocity, hash, snap.epoch, snap.step, config.normalize_embeddings};
    if (snap.epoch > 0 && snap.epoch != config.epochs) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_epoch%03zu.bin", snap.epoch);
      save_checkpoint(out_dir / name, ck);
    }
  };
  const TrainResult res = train(config, data, on_eval);

  save_checkpoint(out_dir / "checkpoint.bin",
                  {res.params, res.velocity, hash, config.epochs, res.steps, config.normalize_embeddings});
  std::string log;
  for (const auto& m : res.metrics) log += to_json(m).dump() + "\n";
  write_text(out_dir / "metrics.jsonl", log);
  for (const auto& e : res.evals) {
    eval_log += json{{"epoch", e.epoch}, {"map", e.map}, {"cmc1", e.cmc1}}.dump() + "\n";
  }
  write_text(out_dir / "eval.jsonl", eval_log);
  if (metrics_csv) {
    std::string csv =
        "epoch,step,sampler,l_id,l_triplet,l_adv,l_total,active_triplet_fraction,intra_batch_similarity,lr\n";
    for (const auto& m : res.metrics) {
      csv += std::to_string(m.epoch) + "," + std::to_string(m.step) + "," + m.sampler + "," +
             fmt_double(m.l_id) + "," + fmt_double(m.l_triplet) + "," + fmt_double(m.l_adv) + "," +
             fmt_double(m.l_total) + "," + fmt_double(m.active_triplet_fraction) + "," +
             fmt_double(m.intra_batch_similarity) + "," + fmt_double(m.lr) + "\n";
    }
    write_text(out_dir / "metrics.csv", csv);
  }
  log_info("wrote " + (out_dir / "checkpoint.bin").string());
}

json cmd_eval(const Checkpoint& ckpt, const PreparedData& data, const std::optional<RerankParams>& rerank) {
  if (ckpt.params.input_dim() != data.dataset.dim) {
    throw std::invalid_argument("eval: checkpoint input dim " + std::to_string(ckpt.params.input_dim()) +
                                " != dataset feature dim " + std::to_string(data.dataset.dim));
  }
  const EvalResult r = evaluate_split(ckpt.params, data, ckpt.normalize_embeddings, rerank);
  json report{{"map", r.map},
              {"cmc", r.cmc},
              {"n_query", data.dataset.indices_with(Split::Query).size()},
              {"n_gallery", data.dataset.indices_with(Split::Gallery).size()},
              {"reranked", rerank.has_value()},
              {"params", nullptr}};
  if (rerank) {
    report["params"] = {{"k1", rerank->k1}, {"k2", rerank->k2}, {"lambda_rr", rerank->lambda_rr}};
  }
  return report;
}

std::string cmd_sampler_stats(const ModelParams& params, const PreparedData& data, std::size_t epochs,
                              std::size_t P, std::size_t K, std::uint64_t seed, bool with_embeddings,
                              double margin, bool normalize) {
  if (params.input_dim() != data.dataset.dim) {
    throw std::invalid_argument("sampler-stats: checkpoint input dim does not match dataset");
  }
  if (params.num_classes() < data.dataset.num_classes) {
    throw std::invalid_argument("sampler-stats: dataset has more classes than the checkpoint head");
  }
  const auto train_idx = data.dataset.indices_with(Split::Train);
  const auto labels = class_labels(data.dataset, train_idx);
  Matrix emb;
  if (with_embeddings) emb = retrieval_embeddings(params, input_matrix(data, train_idx), normalize);

  std::ostringstream csv;
  csv << "sampler,epoch,batch,anchor_class,intra_batch_similarity,active_triplet_fraction\n";
  for (std::size_t e = 0; e < epochs; ++e) {
    for (const SamplerKind kind : {SamplerKind::Random, SamplerKind::HardMined}) {
      Rng rng(derive_seed(seed, stream::kSampler, e));
      const EpochPlan plan = kind == SamplerKind::Random
                                 ? pk_random_epoch(labels, P, K, rng)
                                 : hard_batch_epoch(params.class_weights, labels, P, K, rng);
      for (std::size_t b = 0; b < plan.batches.size(); ++b) {
        const Batch& batch = plan.batches[b];
        csv << to_string(kind) << ',' << e << ',' << b << ',';
        if (plan.anchor_class) csv << *plan.anchor_class;
        csv << ',' << fmt_double(intra_batch_similarity(params.class_weights, batch)) << ',';
        if (with_embeddings) {
          const Matrix be = gather_rows(emb, batch.indices);
          std::vector<int> bl;
          for (std::size_t pos : batch.indices) bl.push_back(labels[pos]);
          csv << fmt_double(batch_hard_triplet(be, bl, margin).stats.active_fraction);
        }
        csv << '\n';
      }
    }
  }
  return csv.str();
}

double linear_probe_accuracy(const Matrix& train_x, std::span<const int> train_y, const Matrix& test_x,
                             std::span<const int> test_y, std::size_t num_labels, std::size_t iterations,
                             double lr) {
  if (train_x.cols() != test_x.cols()) throw std::invalid_argument("probe: feature width mismatch");
  if (train_x.rows() == 0 || test_x.rows() == 0) throw std::invalid_argument("probe: empty split");
  const std::size_t d = train_x.cols();
  std::vector<double> mean(d, 0.0), scale(d, 0.0);
  for (std::size_t i = 0; i < train_x.rows(); ++i)
    for (std::size_t k = 0; k < d; ++k) mean[k] += train_x(i, k) / static_cast<double>(train_x.rows());
  for (std::size_t i = 0; i < train_x.rows(); ++i)
    for (std::size_t k = 0; k < d; ++k)
      scale[k] += std::pow(train_x(i, k) - mean[k], 2) / static_cast<double>(train_x.rows());
  for (double& s : scale) s = std::max(std::sqrt(s), 1e-12);
  auto standardize = [&](const Matrix& x) {
    Matrix z = x;
    for (std::size_t i = 0; i < z.rows(); ++i)
      for (std::size_t k = 0; k < d; ++k) z(i, k) = (x(i, k) - mean[k]) / scale[k];
    return z;
  };
  const Matrix ztr = standardize(train_x);
  const Matrix zte = standardize(test_x);

  Matrix w(num_labels, d);
  std::vector<double> b(num_labels, 0.0);
  auto logits_of = [&](const Matrix& z) {
    Matrix lg = matmul_transposed(z, w);
    for (std::size_t i = 0; i < lg.rows(); ++i)
      for (std::size_t c = 0; c < num_labels; ++c) lg(i, c) += b[c];
    return lg;
  };
  for (std::size_t it = 0; it < iterations; ++it) {
    const LossOutput ce = softmax_cross_entropy(logits_of(ztr), train_y);
    for (std::size_t i = 0; i < ztr.rows(); ++i) {
      for (std::size_t c = 0; c < num_labels; ++c) {
        const double g = ce.grad(i, c);
        b[c] -= lr * g;
        for (std::size_t k = 0; k < d; ++k) w(c, k) -= lr * g * ztr(i, k);
      }
    }
  }
  const Matrix lg = logits_of(zte);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < lg.rows(); ++i) {
    const auto row = lg.row(i);
    const auto pred = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    if (pred == test_y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(lg.rows());
}

}  // namespace hardbatch
