#include "hardbatch/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace hardbatch {

namespace {

using nlohmann::json;

std::vector<double> random_unit(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  double n = 0.0;
  while (n == 0.0) {
    for (double& x : v) x = rng.next_normal();
    n = norm(v);
  }
  for (double& x : v) x /= n;
  return v;
}

[[noreturn]] void line_error(const std::filesystem::path& path, std::size_t line,
                             const std::string& what) {
  throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Query: return "query";
    case Split::Gallery: return "gallery";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "query") return Split::Query;
  if (text == "gallery") return Split::Gallery;
  throw std::invalid_argument("unknown split tag '" + std::string(text) + "'");
}

std::vector<std::size_t> Dataset::indices_with(Split split) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == split) idx.push_back(i);
  return idx;
}

bool Dataset::has_eval_split() const {
  bool q = false, g = false;
  for (const auto& s : samples) {
    q |= s.split == Split::Query;
    g |= s.split == Split::Gallery;
  }
  return q && g;
}

void SynthSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("synth: need >= 2 classes");
  if (num_scenes < 1) throw std::invalid_argument("synth: need >= 1 scene");
  if (dim < 1) throw std::invalid_argument("synth: dim must be >= 1");
  if (samples_per_class < 2) throw std::invalid_argument("synth: samples_per_class must be >= 2");
  if (!(pair_sep > 0.0)) throw std::invalid_argument("synth: pair_sep must be > 0");
  if (!(cluster_sigma > 0.0)) throw std::invalid_argument("synth: cluster_sigma must be > 0");
  if (!(pair_fraction >= 0.0 && pair_fraction <= 1.0)) {
    throw std::invalid_argument("synth: pair_fraction must be in [0,1]");
  }
  if (!(center_radius > 0.0)) throw std::invalid_argument("synth: center_radius must be > 0");
  if (scene_shift_magnitude < 0.0) throw std::invalid_argument("synth: negative scene shift");
}

SynthGeometry synth_geometry(const SynthSpec& spec) {
  spec.validate();
  SynthGeometry g;
  g.centers = Matrix(spec.num_classes, spec.dim);
  g.partner.assign(spec.num_classes, -1);

  Rng center_rng(derive_seed(spec.seed, stream::kSynthCenters));
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    const auto u = random_unit(spec.dim, center_rng);
    for (std::size_t k = 0; k < spec.dim; ++k) g.centers(c, k) = spec.center_radius * u[k];
  }

  Rng pair_rng(derive_seed(spec.seed, stream::kSynthPairs));
  std::vector<int> perm(spec.num_classes);
  for (std::size_t c = 0; c < perm.size(); ++c) perm[c] = static_cast<int>(c);
  pair_rng.shuffle(perm);
  const auto pairs = static_cast<std::size_t>(spec.pair_fraction * spec.num_classes / 2.0);
  for (std::size_t p = 0; p < pairs; ++p) {
    const auto a = static_cast<std::size_t>(perm[2 * p]);
    const auto b = static_cast<std::size_t>(perm[2 * p + 1]);
    const auto dir = random_unit(spec.dim, pair_rng);
    for (std::size_t k = 0; k < spec.dim; ++k) {
      g.centers(b, k) = g.centers(a, k) + spec.pair_sep * dir[k];
    }
    g.partner[a] = static_cast<int>(b);
    g.partner[b] = static_cast<int>(a);
  }

  Rng scene_rng(derive_seed(spec.seed, stream::kSynthScenes));
  g.scene_offsets = Matrix(spec.num_scenes, spec.dim);
  for (std::size_t t = 0; t < spec.num_scenes; ++t) {
    const auto u = random_unit(spec.dim, scene_rng);
    for (std::size_t k = 0; k < spec.dim; ++k) {
      g.scene_offsets(t, k) = spec.scene_shift_magnitude * u[k];
    }
  }
  return g;
}

Dataset synth_generate(const SynthSpec& spec) {
  const SynthGeometry g = synth_geometry(spec);
  Dataset ds;
  ds.num_classes = spec.num_classes;
  ds.num_scenes = spec.num_scenes;
  ds.dim = spec.dim;
  Rng noise_rng(derive_seed(spec.seed, stream::kSynthNoise));
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t j = 0; j < spec.samples_per_class; ++j) {
      Sample s;
      s.class_id = static_cast<int>(c);
      s.scene_id = static_cast<int>(j % spec.num_scenes);
      s.features.resize(spec.dim);
      for (std::size_t k = 0; k < spec.dim; ++k) {
        s.features[k] = g.centers(c, k) + spec.cluster_sigma * noise_rng.next_normal() +
                        g.scene_offsets(static_cast<std::size_t>(s.scene_id), k);
      }
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

Dataset load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  Dataset ds;
  ds.base_dir = path.parent_path();
  int max_id = -1, max_scene = -1;
  bool saw_vector = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      line_error(path, lineno, std::string("malformed JSON: ") + e.what());
    }
    if (!rec.is_object()) line_error(path, lineno, "record is not a JSON object");
    for (const char* field : {"id", "scene"}) {
      if (!rec.contains(field)) line_error(path, lineno, std::string("missing field \"") + field + "\"");
      if (!rec[field].is_number_integer() || rec[field].get<long long>() < 0) {
        line_error(path, lineno, std::string("field \"") + field + "\" must be a non-negative integer");
      }
    }
    Sample s;
    s.class_id = rec["id"].get<int>();
    s.scene_id = rec["scene"].get<int>();
    const bool has_features = rec.contains("features");
    const bool has_image = rec.contains("image");
    if (has_features == has_image) {
      line_error(path, lineno, "record needs exactly one of \"features\" or \"image\"");
    }
    if (has_features) {
      if (!rec["features"].is_array()) line_error(path, lineno, "\"features\" must be an array");
      for (const auto& v : rec["features"]) {
        if (!v.is_number()) line_error(path, lineno, "\"features\" must contain numbers");
        s.features.push_back(v.get<double>());
      }
      if (s.features.empty()) line_error(path, lineno, "\"features\" is empty");
      if (!all_finite(s.features)) line_error(path, lineno, "non-finite feature value");
      if (!saw_vector) {
        ds.dim = s.features.size();
      } else if (s.features.size() != ds.dim) {
        line_error(path, lineno, "inconsistent feature dimension " +
                                     std::to_string(s.features.size()) + " (expected " +
                                     std::to_string(ds.dim) + ")");
      }
    } else {
      if (!rec["image"].is_string()) line_error(path, lineno, "\"image\" must be a string");
      s.image = rec["image"].get<std::string>();
    }
    if (!ds.samples.empty() && has_image != ds.image_backed) {
      line_error(path, lineno, "mixed vector and image records");
    }
    ds.image_backed = has_image;
    saw_vector = saw_vector || has_features;
    if (rec.contains("split")) {
      if (!rec["split"].is_string()) line_error(path, lineno, "\"split\" must be a string");
      try {
        s.split = parse_split(rec["split"].get<std::string>());
      } catch (const std::invalid_argument& e) {
        line_error(path, lineno, e.what());
      }
    }
    max_id = std::max(max_id, s.class_id);
    max_scene = std::max(max_scene, s.scene_id);
    ds.samples.push_back(std::move(s));
  }
  ds.num_classes = static_cast<std::size_t>(max_id + 1);
  ds.num_scenes = static_cast<std::size_t>(max_scene + 1);
  return ds;
}

void save_jsonl(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  for (const auto& s : dataset.samples) {
    json rec;
    rec["id"] = s.class_id;
    rec["scene"] = s.scene_id;
    if (dataset.image_backed) {
      rec["image"] = s.image;
    } else {
      rec["features"] = s.features;
    }
    rec["split"] = std::string(to_string(s.split));
    out << rec.dump() << '\n';
  }
}

Dataset split_query_gallery(const Dataset& dataset, std::span<const int> holdout_classes, Rng& rng) {
  Dataset out = dataset;
  for (auto& s : out.samples) s.split = Split::Train;
  const std::set<int> holdout(holdout_classes.begin(), holdout_classes.end());
  for (int cls : holdout) {
    std::map<int, std::vector<std::size_t>> by_scene;
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
      if (out.samples[i].class_id == cls) by_scene[out.samples[i].scene_id].push_back(i);
    }
    if (by_scene.size() < 2) {
      throw std::invalid_argument("split_query_gallery: holdout class " + std::to_string(cls) +
                                  " has samples in fewer than 2 scenes");
    }
    for (auto& [scene, idx] : by_scene) {
      for (std::size_t i : idx) out.samples[i].split = Split::Gallery;
      out.samples[idx[rng.next_int(idx.size())]].split = Split::Query;
    }
    for (const auto& [scene, idx] : by_scene) {
      for (std::size_t qi : idx) {
        if (out.samples[qi].split != Split::Query) continue;
        const bool matched = std::any_of(by_scene.begin(), by_scene.end(), [&](const auto& kv) {
          return kv.first != scene &&
                 std::any_of(kv.second.begin(), kv.second.end(), [&](std::size_t gi) {
                   return out.samples[gi].split == Split::Gallery;
                 });
        });
        if (!matched) {
          throw std::invalid_argument("split_query_gallery: holdout class " + std::to_string(cls) +
                                      " leaves a query without a cross-scene gallery match");
        }
      }
    }
  }
  return out;
}

std::vector<int> choose_holdout_classes(const Dataset& dataset, std::size_t count, Rng& rng) {
  std::map<int, std::set<int>> scenes;
  for (const auto& s : dataset.samples) scenes[s.class_id].insert(s.scene_id);
  std::vector<int> eligible;
  for (const auto& [cls, sc] : scenes)
    if (sc.size() >= 2) eligible.push_back(cls);
  if (count > eligible.size()) {
    throw std::invalid_argument("choose_holdout_classes: asked for " + std::to_string(count) +
                                " classes, only " + std::to_string(eligible.size()) +
                                " span >= 2 scenes");
  }
  rng.shuffle(eligible);
  eligible.resize(count);
  std::sort(eligible.begin(), eligible.end());
  return eligible;
}

Matrix feature_matrix(const Dataset& dataset, std::span<const std::size_t> indices) {
  if (dataset.image_backed) {
    throw std::invalid_argument("feature_matrix: dataset is image-backed");
  }
  Matrix m(indices.size(), dataset.dim);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto& f = dataset.samples.at(indices[r]).features;
    std::copy(f.begin(), f.end(), m.row(r).begin());
  }
  return m;
}

std::vector<int> class_labels(const Dataset& dataset, std::span<const std::size_t> indices) {
  std::vector<int> y;
  for (std::size_t i : indices) y.push_back(dataset.samples.at(i).class_id);
  return y;
}

std::vector<int> scene_labels(const Dataset& dataset, std::span<const std::size_t> indices) {
  std::vector<int> y;
  for (std::size_t i : indices) y.push_back(dataset.samples.at(i).scene_id);
  return y;
}

}  // namespace hardbatch
