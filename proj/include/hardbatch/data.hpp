#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hardbatch/common.hpp"

namespace hardbatch {

enum class Split { Train, Query, Gallery };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct Sample {
  std::vector<double> features;  // vector-backed
  std::string image;             // image-backed: path relative to the dataset file
  int class_id = 0;
  int scene_id = 0;
  Split split = Split::Train;

  bool operator==(const Sample&) const = default;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t num_classes = 0;
  std::size_t num_scenes = 0;
  std::size_t dim = 0;  // feature length; 0 for image-backed sets until images are loaded
  bool image_backed = false;
  std::filesystem::path base_dir;  // where relative image paths resolve

  std::vector<std::size_t> indices_with(Split split) const;
  bool has_eval_split() const;
};

struct SynthSpec {
  std::size_t num_classes = 40;
  std::size_t num_scenes = 2;
  std::size_t dim = 16;
  std::size_t samples_per_class = 8;
  double center_radius = 3.0;
  double pair_fraction = 0.5;
  double pair_sep = 0.5;
  double cluster_sigma = 0.35;
  double scene_shift_magnitude = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Class centers on a sphere of radius center_radius; floor(pair_fraction*C/2)
/// random disjoint class pairs get their second member re-placed at distance
/// pair_sep from the first. Sample j of class c sits at
///   center_c + N(0, sigma^2 I) + scene_offset[j mod T]
/// where each scene offset is a fixed random vector of norm
/// scene_shift_magnitude.
Dataset synth_generate(const SynthSpec& spec);

/// Centers produced by synth_generate for `spec` (C x D), plus the planted
/// partner of each class (-1 when unpaired).
struct SynthGeometry {
  Matrix centers;
  Matrix scene_offsets;
  std::vector<int> partner;
};
SynthGeometry synth_geometry(const SynthSpec& spec);

/// JSON Lines, one record per sample:
///   {"id": int, "scene": int, "features": [float, ...]}
///   {"id": int, "scene": int, "image": "relative/path.ppm"}
/// with an optional "split": "train" | "query" | "gallery" (default train).
Dataset load_jsonl(const std::filesystem::path& path);
void save_jsonl(const std::filesystem::path& path, const Dataset& dataset);

/// Moves `holdout_classes` out of Train: in each, one uniformly chosen sample
/// per scene becomes Query, the rest Gallery. All other samples are Train.
Dataset split_query_gallery(const Dataset& dataset, std::span<const int> holdout_classes, Rng& rng);

/// `count` distinct classes (among those with samples in >= 2 scenes) chosen
/// uniformly, returned in ascending order.
std::vector<int> choose_holdout_classes(const Dataset& dataset, std::size_t count, Rng& rng);

/// Features of the selected samples as rows (vector-backed sets only).
Matrix feature_matrix(const Dataset& dataset, std::span<const std::size_t> indices);
std::vector<int> class_labels(const Dataset& dataset, std::span<const std::size_t> indices);
std::vector<int> scene_labels(const Dataset& dataset, std::span<const std::size_t> indices);

}  // namespace hardbatch
